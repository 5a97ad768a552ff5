///////////////////////////////////////////////////////////////////////////////
// scene.hpp: seeded synthetic scenes for replay and tracking tests
//
// A script describes objects moving along piecewise-linear waypoints. The
// generator emits exact ground truth for every visible object and a detection
// stream perturbed by center jitter and random drops.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"

namespace attentrack {

struct Waypoint {
    double t = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    double w = 1.0;
    double h = 1.0;
};

struct LabelChange {
    double t = 0.0;
    ClassLabel label = ClassLabel::SleepAwake;
};

struct SceneObject {
    std::uint64_t id = 0;
    ClassLabel label = ClassLabel::Face;
    std::vector<Waypoint> waypoints;               // sorted by t
    std::vector<std::pair<double, double>> visible;  // inclusive [t0, t1]; empty = always
    std::vector<LabelChange> label_changes;        // sleep objects, sorted by t
    std::optional<std::string> identity;
    std::optional<std::vector<double>> embedding;
    double confidence = 0.9;
};

struct SceneScript {
    double fps = 10.0;
    double duration = 10.0;
    double center_sigma = 0.0;
    double drop_probability = 0.0;
    std::uint64_t seed = 0;
    std::vector<SceneObject> objects;

    std::uint64_t frame_count() const { return static_cast<std::uint64_t>(std::llround(duration * fps)); }

    void validate() const
    {
        if (!(fps > 0.0) || !std::isfinite(fps)) throw ConfigError("scene fps must be positive");
        if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("scene duration must be non-negative");
        if (!(center_sigma >= 0.0)) throw ConfigError("center jitter sigma must be non-negative");
        if (!(drop_probability >= 0.0 && drop_probability <= 1.0))
            throw ConfigError("drop probability must lie in [0, 1]");
        for (const SceneObject& o : objects) {
            if (o.waypoints.empty()) throw ConfigError(fmt::format("object {} has no waypoints", o.id));
            for (std::size_t i = 0; i < o.waypoints.size(); ++i) {
                const Waypoint& w = o.waypoints[i];
                if (!(w.w > 0.0) || !(w.h > 0.0))
                    throw ConfigError(fmt::format("object {} waypoint has non-positive size", o.id));
                if (i > 0 && !(w.t > o.waypoints[i - 1].t))
                    throw ConfigError(fmt::format("object {} waypoints must have increasing t", o.id));
            }
            for (const auto& [a, b] : o.visible)
                if (!(a <= b)) throw ConfigError(fmt::format("object {} has an empty visibility interval", o.id));
        }
    }
};

inline SceneScript scene_from_json(const nlohmann::json& j)
{
    SceneScript s;
    try {
        s.fps = j.value("fps", s.fps);
        s.duration = j.value("duration", s.duration);
        s.seed = j.value("seed", s.seed);
        if (j.contains("noise")) {
            s.center_sigma = j["noise"].value("center_sigma", 0.0);
            s.drop_probability = j["noise"].value("drop_probability", 0.0);
        }
        std::uint64_t next_id = 1;
        for (const auto& jo : j.at("objects")) {
            SceneObject o;
            o.id = jo.value("id", next_id);
            next_id = std::max(next_id, o.id) + 1;
            const auto label = parse_label(jo.at("label").get<std::string>());
            if (!label) throw ConfigError("unknown object label " + jo.at("label").dump());
            o.label = *label;
            for (const auto& jw : jo.at("waypoints"))
                o.waypoints.push_back({jw.at("t").get<double>(), jw.at("cx").get<double>(),
                                       jw.at("cy").get<double>(), jw.at("w").get<double>(),
                                       jw.at("h").get<double>()});
            if (jo.contains("visible"))
                for (const auto& iv : jo["visible"])
                    o.visible.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
            if (jo.contains("states"))
                for (const auto& js : jo["states"]) {
                    const auto l = parse_label(js.at("label").get<std::string>());
                    if (!l || !is_sleep_label(*l)) throw ConfigError("state labels must be sleep labels");
                    o.label_changes.push_back({js.at("t").get<double>(), *l});
                }
            if (jo.contains("identity")) o.identity = jo["identity"].get<std::string>();
            if (jo.contains("embedding")) o.embedding = jo["embedding"].get<std::vector<double>>();
            o.confidence = jo.value("confidence", o.confidence);
            s.objects.push_back(std::move(o));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scene script: ") + e.what());
    }
    s.validate();
    return s;
}

namespace scene_detail {

inline Waypoint interpolate(const std::vector<Waypoint>& path, double t)
{
    if (t <= path.front().t) return path.front();
    if (t >= path.back().t) return path.back();
    auto hi = std::upper_bound(path.begin(), path.end(), t,
                               [](double v, const Waypoint& w) { return v < w.t; });
    const Waypoint& b = *hi;
    const Waypoint& a = *(hi - 1);
    const double u = (t - a.t) / (b.t - a.t);
    auto lerp = [u](double p, double q) { return p + u * (q - p); };
    return {t, lerp(a.cx, b.cx), lerp(a.cy, b.cy), lerp(a.w, b.w), lerp(a.h, b.h)};
}

inline bool is_visible(const SceneObject& o, double t)
{
    if (o.visible.empty()) return true;
    return std::any_of(o.visible.begin(), o.visible.end(), [t](const auto& iv) {
        return t >= iv.first - 1e-9 && t <= iv.second + 1e-9;
    });
}

inline ClassLabel label_at(const SceneObject& o, double t)
{
    ClassLabel label = o.label;
    for (const LabelChange& c : o.label_changes)
        if (t >= c.t - 1e-9) label = c.label;
    return label;
}

inline std::string number_list(const std::vector<double>& v)
{
    return fmt::format("[{}]", fmt::join(v, ","));
}

}  // namespace scene_detail

/// Exact box of an object at time t.
inline BoundingBox object_box_at(const SceneObject& o, double t)
{
    const Waypoint w = scene_detail::interpolate(o.waypoints, t);
    return {w.cx - 0.5 * w.w, w.cy - 0.5 * w.h, w.cx + 0.5 * w.w, w.cy + 0.5 * w.h};
}

/// Writes the ground-truth file and detection stream. The same script and
/// seed always produce the same bytes.
inline void generate_scene(const SceneScript& script, std::ostream& truth, std::ostream& detections)
{
    script.validate();
    std::mt19937_64 rng(script.seed);
    std::bernoulli_distribution drop(script.drop_probability);
    std::normal_distribution<double> jitter(0.0, script.center_sigma > 0.0 ? script.center_sigma : 1.0);

    const std::uint64_t frames = script.frame_count();
    for (std::uint64_t k = 0; k < frames; ++k) {
        const double t = static_cast<double>(k) / script.fps;
        for (const SceneObject& o : script.objects) {
            if (!scene_detail::is_visible(o, t)) continue;
            const BoundingBox box = object_box_at(o, t);
            const ClassLabel label = scene_detail::label_at(o, t);
            truth << fmt::format(R"({{"frame":{},"ts":{:.3f},"object_id":{},"label":"{}","bbox":[{},{},{},{}]}})",
                                 k, t, o.id, to_string(label), box.x1, box.y1, box.x2, box.y2)
                  << '\n';

            const bool dropped = drop(rng);
            double dx = 0.0;
            double dy = 0.0;
            if (script.center_sigma > 0.0) {
                dx = jitter(rng);
                dy = jitter(rng);
            }
            if (dropped) continue;
            const BoundingBox seen = box.translated(dx, dy);
            std::string extra;
            if (label == ClassLabel::Face && o.embedding)
                extra = fmt::format(R"(,"embedding":{})", scene_detail::number_list(*o.embedding));
            detections << fmt::format(R"({{"frame":{},"ts":{:.3f},"label":"{}","bbox":[{},{},{},{}],"conf":{}{}}})",
                                      k, t, to_string(label), seen.x1, seen.y1, seen.x2, seen.y2,
                                      o.confidence, extra)
                       << '\n';
        }
    }
}

}  // namespace attentrack
