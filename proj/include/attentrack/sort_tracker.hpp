///////////////////////////////////////////////////////////////////////////////
// sort_tracker.hpp: SORT track lifecycle, one independent tracker per channel
//
// Per frame and channel: predict every live track, associate detections to
// the predicted boxes, correct matched tracks, spawn tracks for unmatched
// detections, retire tracks unmatched for more than max_age frames.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "attentrack/assignment.hpp"
#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"
#include "attentrack/kalman.hpp"

namespace attentrack {

enum class Channel : std::uint8_t { Face = 0, Phone = 1, Sleep = 2 };

inline constexpr std::array<Channel, 3> kAllChannels = {Channel::Face, Channel::Phone,
                                                        Channel::Sleep};

inline constexpr Channel channel_of(ClassLabel label) noexcept
{
    switch (label) {
    case ClassLabel::Face: return Channel::Face;
    case ClassLabel::Phone: return Channel::Phone;
    default: return Channel::Sleep;
    }
}

inline constexpr std::string_view to_string(Channel c) noexcept
{
    switch (c) {
    case Channel::Face: return "face";
    case Channel::Phone: return "phone";
    case Channel::Sleep: return "sleep";
    }
    return "unknown";
}

struct TrackerConfig {
    double iou_threshold = 0.3;
    int max_age = 3;
    int min_hits = 3;
    KalmanConfig kalman = KalmanConfig::defaults();

    void validate() const
    {
        if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
            throw ConfigError("iou_threshold must lie in [0, 1]");
        if (max_age < 1) throw ConfigError("max_age must be at least 1");
        if (min_hits < 1) throw ConfigError("min_hits must be at least 1");
    }
};

struct Track {
    std::uint64_t id = 0;
    ClassLabel label = ClassLabel::Face;
    KalmanState state;
    int hits = 0;
    int hit_streak = 0;
    int age = 0;
    int time_since_update = 0;
    double last_confidence = 0.0;
    double last_timestamp = 0.0;
    bool confirmed = false;  // emitted at least once

    /// Current box estimate, or nullopt when the state has s <= 0 or r <= 0.
    std::optional<BoundingBox> box() const
    {
        const ObsVector o = state.observation();
        if (!(o.s > 0.0) || !(o.r > 0.0) || !std::isfinite(o.x) || !std::isfinite(o.y) ||
            !std::isfinite(o.s) || !std::isfinite(o.r))
            return std::nullopt;
        return obs_to_bbox(o);
    }
};

/// A track that was corrected this frame.
struct TrackOutput {
    Channel channel = Channel::Face;
    std::uint64_t id = 0;
    ClassLabel label = ClassLabel::Face;
    BoundingBox bbox;
    double confidence = 0.0;
    std::size_t detection_index = 0;  // into the frame's detection list
    bool confirmed = false;
};

struct RetiredTrack {
    Channel channel = Channel::Face;
    std::uint64_t id = 0;
    double last_timestamp = 0.0;
};

/// Single-channel SORT tracker.
class SortTracker {
public:
    SortTracker(Channel channel, TrackerConfig cfg) : channel_(channel), cfg_(std::move(cfg))
    {
        cfg_.validate();
    }

    /// `detections` holds indices into `frame` that belong to this channel.
    /// Corrected tracks are appended to `updated`, removed ones to `retired`.
    void step(std::span<const Detection> frame, std::span<const std::size_t> detections,
              std::vector<TrackOutput>& updated, std::vector<RetiredTrack>& retired)
    {
        // Predict. Degenerate predicted states cannot match anything this frame.
        std::vector<BoundingBox> predicted(tracks_.size());
        std::vector<char> predicted_ok(tracks_.size(), 0);
        for (std::size_t t = 0; t < tracks_.size(); ++t) {
            Track& trk = tracks_[t];
            trk.state = predict(trk.state, cfg_.kalman);
            ++trk.age;
            if (trk.time_since_update > 0) trk.hit_streak = 0;
            ++trk.time_since_update;
            if (auto b = trk.box()) {
                predicted[t] = *b;
                predicted_ok[t] = 1;
            }
        }

        CostMatrix overlap(detections.size(), tracks_.size());
        for (std::size_t d = 0; d < detections.size(); ++d)
            for (std::size_t t = 0; t < tracks_.size(); ++t)
                overlap(d, t) = predicted_ok[t] ? iou(frame[detections[d]].bbox, predicted[t]) : 0.0;
        const AssociationResult assoc = associate_iou(overlap, cfg_.iou_threshold);

        std::vector<std::size_t> det_of_track(tracks_.size(), detections.size());
        for (const Match& m : assoc.matches) {
            const Detection& det = frame[detections[m.detection]];
            Track& trk = tracks_[m.track];
            trk.state = update(trk.state, bbox_to_obs(det.bbox), cfg_.kalman);
            trk.time_since_update = 0;
            ++trk.hits;
            ++trk.hit_streak;
            trk.label = det.label;
            trk.last_confidence = det.confidence;
            trk.last_timestamp = det.timestamp;
            det_of_track[m.track] = detections[m.detection];
        }

        for (std::size_t d : assoc.unmatched_detections) {
            const Detection& det = frame[detections[d]];
            Track trk;
            trk.id = next_id_++;
            trk.label = det.label;
            trk.state = init_state(bbox_to_obs(det.bbox), cfg_.kalman);
            trk.hits = 1;
            trk.hit_streak = 1;
            trk.last_confidence = det.confidence;
            trk.last_timestamp = det.timestamp;
            tracks_.push_back(trk);
            det_of_track.push_back(detections[d]);
        }

        const bool warming_up = frames_seen_ < cfg_.min_hits;
        ++frames_seen_;

        std::vector<Track> survivors;
        survivors.reserve(tracks_.size());
        for (std::size_t t = 0; t < tracks_.size(); ++t) {
            Track& trk = tracks_[t];
            if (trk.time_since_update > cfg_.max_age) {
                retired.push_back({channel_, trk.id, trk.last_timestamp});
                continue;
            }
            if (trk.time_since_update == 0) {
                if (auto b = trk.box()) {
                    TrackOutput out;
                    out.channel = channel_;
                    out.id = trk.id;
                    out.label = trk.label;
                    out.bbox = *b;
                    out.confidence = trk.last_confidence;
                    out.detection_index = det_of_track[t];
                    out.confirmed = trk.hit_streak >= cfg_.min_hits || warming_up;
                    trk.confirmed = trk.confirmed || out.confirmed;
                    updated.push_back(out);
                }
            }
            survivors.push_back(std::move(trk));
        }
        tracks_ = std::move(survivors);
    }

    /// Retires every live track (end of session).
    void flush(std::vector<RetiredTrack>& retired)
    {
        for (const Track& trk : tracks_) retired.push_back({channel_, trk.id, trk.last_timestamp});
        tracks_.clear();
    }

    std::span<const Track> tracks() const noexcept { return tracks_; }

    /// Live tracks that have been emitted at least once, at their current
    /// estimate (predicted when missed this frame). detection_index is unset.
    std::vector<TrackOutput> established() const
    {
        std::vector<TrackOutput> out;
        for (const Track& trk : tracks_) {
            if (!trk.confirmed) continue;
            auto b = trk.box();
            if (!b) continue;
            TrackOutput o;
            o.channel = channel_;
            o.id = trk.id;
            o.label = trk.label;
            o.bbox = *b;
            o.confidence = trk.last_confidence;
            o.detection_index = std::numeric_limits<std::size_t>::max();
            o.confirmed = true;
            out.push_back(o);
        }
        return out;
    }

    Channel channel() const noexcept { return channel_; }
    const TrackerConfig& config() const noexcept { return cfg_; }

private:
    Channel channel_;
    TrackerConfig cfg_;
    std::vector<Track> tracks_;
    std::uint64_t next_id_ = 1;
    int frames_seen_ = 0;
};

struct FrameTracks {
    std::uint64_t frame_index = 0;
    std::vector<TrackOutput> updated;  // every track corrected this frame
    std::vector<RetiredTrack> retired;

    /// Tracks emitted this frame: corrected and past the min_hits rule.
    std::vector<TrackOutput> confirmed() const
    {
        std::vector<TrackOutput> out;
        for (const TrackOutput& t : updated)
            if (t.confirmed) out.push_back(t);
        return out;
    }
};

/// One SortTracker per channel; channels never exchange tracks or ids.
class TrackerBank {
public:
    explicit TrackerBank(const TrackerConfig& cfg = {})
        : trackers_{SortTracker(Channel::Face, cfg), SortTracker(Channel::Phone, cfg),
                    SortTracker(Channel::Sleep, cfg)}
    {
    }

    /// Advances every channel by one frame. `frame_index` must exceed the
    /// previous call's and match every detection's frame index.
    FrameTracks step(std::span<const Detection> detections, std::uint64_t frame_index)
    {
        if (last_frame_ && frame_index <= *last_frame_)
            throw InvalidArgument("frame index " + std::to_string(frame_index) +
                                  " does not advance past " + std::to_string(*last_frame_));
        std::array<std::vector<std::size_t>, 3> per_channel;
        for (std::size_t i = 0; i < detections.size(); ++i) {
            const Detection& d = detections[i];
            if (d.frame_index != frame_index)
                throw InvalidArgument("detection frame index differs from the batch frame index");
            if (!d.bbox.valid()) throw InvalidArgument("detection has an invalid bounding box");
            per_channel[static_cast<std::size_t>(channel_of(d.label))].push_back(i);
        }
        last_frame_ = frame_index;

        FrameTracks out;
        out.frame_index = frame_index;
        for (std::size_t c = 0; c < trackers_.size(); ++c)
            trackers_[c].step(detections, per_channel[c], out.updated, out.retired);
        return out;
    }

    std::vector<RetiredTrack> flush()
    {
        std::vector<RetiredTrack> retired;
        for (SortTracker& t : trackers_) t.flush(retired);
        return retired;
    }

    const SortTracker& channel(Channel c) const { return trackers_[static_cast<std::size_t>(c)]; }
    std::optional<std::uint64_t> last_frame() const noexcept { return last_frame_; }

private:
    std::array<SortTracker, 3> trackers_;
    std::optional<std::uint64_t> last_frame_;
};

}  // namespace attentrack
