///////////////////////////////////////////////////////////////////////////////
// geometry.hpp: bounding boxes, class labels, detections and IoU
//
// Boxes are continuous corner-form [x1, y1, x2, y2] in pixels. The tracker
// observes boxes in center/area/aspect form (x, y, s, r) with r = w / h.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attentrack/error.hpp"

namespace attentrack {

struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return width() * height(); }
    double center_x() const noexcept { return 0.5 * (x1 + x2); }
    double center_y() const noexcept { return 0.5 * (y1 + y2); }
    double diagonal() const noexcept { return std::hypot(width(), height()); }

    bool valid() const noexcept
    {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
               x2 > x1 && y2 > y1;
    }

    BoundingBox translated(double dx, double dy) const noexcept
    {
        return {x1 + dx, y1 + dy, x2 + dx, y2 + dy};
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Throws InvalidArgument unless the box has finite corners and positive extent.
inline BoundingBox make_box(double x1, double y1, double x2, double y2)
{
    BoundingBox b{x1, y1, x2, y2};
    if (!b.valid())
        throw InvalidArgument("bounding box must be finite with x2 > x1 and y2 > y1");
    return b;
}

enum class ClassLabel : std::uint8_t { Face, Phone, SleepAwake, SleepDrowsy, SleepAsleep };

inline constexpr std::array<ClassLabel, 5> kAllLabels = {
    ClassLabel::Face, ClassLabel::Phone, ClassLabel::SleepAwake, ClassLabel::SleepDrowsy,
    ClassLabel::SleepAsleep};

inline constexpr std::string_view to_string(ClassLabel label) noexcept
{
    switch (label) {
    case ClassLabel::Face: return "face";
    case ClassLabel::Phone: return "phone";
    case ClassLabel::SleepAwake: return "sleep_awake";
    case ClassLabel::SleepDrowsy: return "sleep_drowsy";
    case ClassLabel::SleepAsleep: return "sleep_asleep";
    }
    return "unknown";
}

inline std::optional<ClassLabel> parse_label(std::string_view text) noexcept
{
    for (ClassLabel label : kAllLabels)
        if (to_string(label) == text) return label;
    return std::nullopt;
}

inline constexpr bool is_sleep_label(ClassLabel label) noexcept
{
    return label == ClassLabel::SleepAwake || label == ClassLabel::SleepDrowsy ||
           label == ClassLabel::SleepAsleep;
}

/// One detector output. The only unit of input to the engine.
struct Detection {
    std::uint64_t frame_index = 0;
    double timestamp = 0.0;
    ClassLabel label = ClassLabel::Face;
    BoundingBox bbox;
    double confidence = 1.0;
    std::optional<std::vector<double>> embedding;  // faces only, unit norm
    std::optional<std::vector<double>> logits;     // sleep labels only
};

/// Box in the tracker's observation space.
struct ObsVector {
    double x = 0.0;  // center
    double y = 0.0;
    double s = 0.0;  // area
    double r = 0.0;  // width / height
};

/// Intersection over union. Exactly 0 for disjoint or edge-touching boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept
{
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

inline ObsVector bbox_to_obs(const BoundingBox& b) noexcept
{
    const double w = b.width();
    const double h = b.height();
    return {b.x1 + 0.5 * w, b.y1 + 0.5 * h, w * h, w / h};
}

/// Inverse of bbox_to_obs. A non-positive area or aspect ratio means the
/// caller holds a degenerate state and is reported as InvalidArgument.
inline BoundingBox obs_to_bbox(const ObsVector& o)
{
    if (!(o.s > 0.0) || !(o.r > 0.0) || !std::isfinite(o.s) || !std::isfinite(o.r))
        throw InvalidArgument("observation needs s > 0 and r > 0");
    const double w = std::sqrt(o.s * o.r);
    const double h = o.s / w;
    return {o.x - 0.5 * w, o.y - 0.5 * h, o.x + 0.5 * w, o.y + 0.5 * h};
}

}  // namespace attentrack
