///////////////////////////////////////////////////////////////////////////////
// events.hpp: debounced sleep and phone-usage events plus the session log
//
// Sleep: a frame counts as asleep when classified SleepAsleep or when the
// softmax probability of the asleep class reaches a floor. An episode begins
// at an asleep frame and survives while the asleep fraction of its frames in
// the trailing window stays at or above asleep_fraction. The event opens on
// an asleep frame once the episode spans a full window, and closes when the
// trailing-window fraction drops below asleep_fraction.
//
// Phone: a confirmed phone track is attributed to the nearest confirmed face
// (center distance, within radius_factor face diagonals). It opens an event
// after debounce_seconds of unchanged attribution and closes on retirement.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"
#include "attentrack/model_math.hpp"
#include "attentrack/sort_tracker.hpp"

namespace attentrack {

/// Slack for comparing timestamps that went through decimal serialization.
inline constexpr double kTimeEpsilon = 1e-9;

struct SleepRuleConfig {
    double window_seconds = 5.0;
    double asleep_fraction = 0.7;
    double asleep_probability_floor = 0.5;
    std::size_t asleep_class_index = 2;  // logits ordered awake, drowsy, asleep

    void validate() const
    {
        if (!(window_seconds > 0.0)) throw ConfigError("sleep window must be positive");
        if (!(asleep_fraction > 0.0 && asleep_fraction <= 1.0))
            throw ConfigError("sleep fraction must lie in (0, 1]");
        if (!(asleep_probability_floor >= 0.0 && asleep_probability_floor <= 1.0))
            throw ConfigError("asleep probability floor must lie in [0, 1]");
    }
};

struct PhoneRuleConfig {
    double debounce_seconds = 2.0;
    double radius_factor = 2.0;  // attribution radius in face-box diagonals

    void validate() const
    {
        if (!(debounce_seconds >= 0.0)) throw ConfigError("phone debounce must be non-negative");
        if (!(radius_factor >= 0.0)) throw ConfigError("attribution radius factor must be non-negative");
    }
};

enum class EventKind { Sleep, PhoneUsage };

inline constexpr std::string_view to_string(EventKind k) noexcept
{
    return k == EventKind::Sleep ? "sleep" : "phone_usage";
}

struct Event {
    EventKind kind = EventKind::Sleep;
    std::uint64_t track_id = 0;
    std::optional<std::string> student_id;
    double start_ts = 0.0;
    double end_ts = 0.0;
    double peak_confidence = 0.0;
};

enum class TransitionKind { Opened, Closed };

struct EventTransition {
    TransitionKind kind = TransitionKind::Opened;
    Event event;  // end_ts is meaningful only for Closed
};

/// Per-frame sleep classification of one sleep-channel track.
struct SleepObservation {
    ClassLabel label = ClassLabel::SleepAwake;
    std::optional<std::vector<double>> logits;
    double confidence = 0.0;
};

/// Sliding-window sleep rule, one state machine per track.
class SleepMonitor {
public:
    explicit SleepMonitor(SleepRuleConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    std::optional<EventTransition> update(std::uint64_t track_id, const SleepObservation& obs,
                                          double timestamp,
                                          const std::optional<std::string>& student = std::nullopt)
    {
        TrackState& st = tracks_[track_id];
        if (st.seen && timestamp < st.last_ts)
            throw InvalidArgument(fmt::format("sleep track {} timestamp {:.3f} precedes {:.3f}",
                                              track_id, timestamp, st.last_ts));
        const auto [asleep, score] = classify(obs);
        st.seen = true;
        st.last_ts = timestamp;
        st.frames.push_back({timestamp, asleep, score});
        while (!st.frames.empty() && timestamp - st.frames.front().ts >= cfg_.window_seconds - kTimeEpsilon)
            st.frames.pop_front();

        if (st.open) {
            if (asleep) st.open->peak_confidence = std::max(st.open->peak_confidence, score);
            if (!st.open->student_id && student) st.open->student_id = student;
            if (fraction(st, std::nullopt) >= cfg_.asleep_fraction) return std::nullopt;
            Event done = *st.open;
            done.end_ts = timestamp;
            st.open.reset();
            st.onset = asleep ? std::optional<double>(timestamp) : std::nullopt;
            return EventTransition{TransitionKind::Closed, done};
        }

        if (st.onset && fraction(st, st.onset) < cfg_.asleep_fraction) st.onset.reset();
        if (!st.onset) {
            if (asleep) st.onset = timestamp;
            return std::nullopt;
        }
        if (asleep && timestamp - *st.onset >= cfg_.window_seconds - kTimeEpsilon) {
            Event e;
            e.kind = EventKind::Sleep;
            e.track_id = track_id;
            e.student_id = student;
            e.start_ts = timestamp;
            e.end_ts = timestamp;
            e.peak_confidence = peak(st, *st.onset);
            st.open = e;
            return EventTransition{TransitionKind::Opened, e};
        }
        return std::nullopt;
    }

    /// Closes any open event of a track that left the scene; end_ts is the
    /// track's last observed timestamp.
    std::optional<EventTransition> retire(std::uint64_t track_id)
    {
        auto it = tracks_.find(track_id);
        if (it == tracks_.end()) return std::nullopt;
        std::optional<EventTransition> out;
        if (it->second.open) {
            Event done = *it->second.open;
            done.end_ts = it->second.last_ts;
            out = EventTransition{TransitionKind::Closed, done};
        }
        tracks_.erase(it);
        return out;
    }

    bool is_open(std::uint64_t track_id) const
    {
        auto it = tracks_.find(track_id);
        return it != tracks_.end() && it->second.open.has_value();
    }

    std::vector<Event> open_events() const
    {
        std::vector<Event> out;
        for (const auto& [id, st] : tracks_)
            if (st.open) out.push_back(*st.open);
        return out;
    }

    std::vector<std::uint64_t> track_ids() const
    {
        std::vector<std::uint64_t> ids;
        for (const auto& [id, st] : tracks_) ids.push_back(id);
        return ids;
    }

    const SleepRuleConfig& config() const noexcept { return cfg_; }

private:
    struct Frame {
        double ts;
        bool asleep;
        double score;
    };

    struct TrackState {
        std::deque<Frame> frames;  // trailing window
        std::optional<double> onset;
        std::optional<Event> open;
        double last_ts = 0.0;
        bool seen = false;
    };

    std::pair<bool, double> classify(const SleepObservation& obs) const
    {
        if (obs.logits && cfg_.asleep_class_index < obs.logits->size()) {
            const double p = softmax_probability(*obs.logits, cfg_.asleep_class_index);
            const bool asleep = obs.label == ClassLabel::SleepAsleep || p >= cfg_.asleep_probability_floor;
            return {asleep, p};
        }
        const bool asleep = obs.label == ClassLabel::SleepAsleep;
        return {asleep, asleep ? obs.confidence : 0.0};
    }

    static double fraction(const TrackState& st, std::optional<double> since)
    {
        std::size_t total = 0;
        std::size_t asleep = 0;
        for (const Frame& f : st.frames) {
            if (since && f.ts < *since) continue;
            ++total;
            asleep += f.asleep ? 1 : 0;
        }
        return total ? static_cast<double>(asleep) / static_cast<double>(total) : 0.0;
    }

    static double peak(const TrackState& st, double since)
    {
        double best = 0.0;
        for (const Frame& f : st.frames)
            if (f.ts >= since && f.asleep) best = std::max(best, f.score);
        return best;
    }

    SleepRuleConfig cfg_;
    std::map<std::uint64_t, TrackState> tracks_;
};

/// Nearest face (by box-center distance) within radius_factor face diagonals.
inline std::optional<std::uint64_t> attribute_to_face(const BoundingBox& box,
                                                      std::span<const TrackOutput> faces,
                                                      double radius_factor)
{
    std::optional<std::uint64_t> best;
    double best_dist = 0.0;
    for (const TrackOutput& f : faces) {
        const double d = std::hypot(box.center_x() - f.bbox.center_x(), box.center_y() - f.bbox.center_y());
        if (d > radius_factor * f.bbox.diagonal()) continue;
        if (!best || d < best_dist || (d == best_dist && f.id < *best)) {
            best = f.id;
            best_dist = d;
        }
    }
    return best;
}

using StudentLookup = std::function<std::optional<std::string>(std::uint64_t face_track_id)>;

/// Debounced phone-usage events, one state machine per phone track.
class PhoneMonitor {
public:
    explicit PhoneMonitor(PhoneRuleConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    /// `phones` and `faces` are the confirmed outputs of one frame.
    std::vector<EventTransition> update(std::span<const TrackOutput> phones,
                                        std::span<const TrackOutput> faces,
                                        const StudentLookup& student_of, double timestamp)
    {
        std::vector<EventTransition> out;
        for (const TrackOutput& p : phones) {
            const std::optional<std::uint64_t> face = attribute_to_face(p.bbox, faces, cfg_.radius_factor);
            auto [it, fresh] = tracks_.try_emplace(p.id);
            TrackState& st = it->second;
            if (fresh || st.face != face) {
                if (st.open) {
                    Event done = *st.open;
                    done.end_ts = st.last_ts;
                    out.push_back({TransitionKind::Closed, done});
                    st.open.reset();
                }
                st.face = face;
                st.since = timestamp;
                st.peak = p.confidence;
            } else {
                st.peak = std::max(st.peak, p.confidence);
            }
            st.last_ts = timestamp;

            std::optional<std::string> student;
            if (face && student_of) student = student_of(*face);

            if (st.open) {
                st.open->peak_confidence = st.peak;
                if (!st.open->student_id && student) st.open->student_id = student;
            } else if (timestamp - st.since >= cfg_.debounce_seconds - kTimeEpsilon) {
                Event e;
                e.kind = EventKind::PhoneUsage;
                e.track_id = p.id;
                e.student_id = student;
                e.start_ts = st.since;
                e.end_ts = timestamp;
                e.peak_confidence = st.peak;
                st.open = e;
                out.push_back({TransitionKind::Opened, e});
            }
        }
        return out;
    }

    /// Closes the track's open event. `last_seen` is the track's last detection
    /// time; without it the last frame the monitor saw is used.
    std::optional<EventTransition> retire(std::uint64_t phone_track_id,
                                          std::optional<double> last_seen = std::nullopt)
    {
        auto it = tracks_.find(phone_track_id);
        if (it == tracks_.end()) return std::nullopt;
        std::optional<EventTransition> out;
        if (it->second.open) {
            Event done = *it->second.open;
            done.end_ts = std::max(done.start_ts, last_seen.value_or(it->second.last_ts));
            out = EventTransition{TransitionKind::Closed, done};
        }
        tracks_.erase(it);
        return out;
    }

    std::vector<Event> open_events() const
    {
        std::vector<Event> out;
        for (const auto& [id, st] : tracks_)
            if (st.open) out.push_back(*st.open);
        return out;
    }

    std::vector<std::uint64_t> track_ids() const
    {
        std::vector<std::uint64_t> ids;
        for (const auto& [id, st] : tracks_) ids.push_back(id);
        return ids;
    }

    const PhoneRuleConfig& config() const noexcept { return cfg_; }

private:
    struct TrackState {
        std::optional<std::uint64_t> face;
        double since = 0.0;
        double last_ts = 0.0;
        double peak = 0.0;
        std::optional<Event> open;
    };

    PhoneRuleConfig cfg_;
    std::map<std::uint64_t, TrackState> tracks_;
};

/// Serializes one event as a JSON Lines record (no trailing newline).
inline std::string event_to_json_line(const Event& e)
{
    const std::string student = e.student_id ? nlohmann::json(*e.student_id).dump() : "null";
    return fmt::format(
        R"({{"kind":"{}","track_id":{},"student_id":{},"start_ts":{:.3f},"end_ts":{:.3f},"peak_confidence":{:.6f}}})",
        to_string(e.kind), e.track_id, student, e.start_ts, e.end_ts, e.peak_confidence);
}

/// Append-only event ledger ordered by start_ts. Events with equal start_ts
/// keep their insertion order.
class SessionLog {
public:
    SessionLog() = default;
    SessionLog(std::string session_id, nlohmann::json config_snapshot)
        : session_id_(std::move(session_id)), config_(std::move(config_snapshot))
    {
    }

    void append(const Event& e)
    {
        if (e.start_ts > e.end_ts)
            throw InvalidArgument(fmt::format("event starts at {:.3f} after it ends at {:.3f}",
                                              e.start_ts, e.end_ts));
        auto pos = std::upper_bound(events_.begin(), events_.end(), e.start_ts,
                                    [](double ts, const Event& other) { return ts < other.start_ts; });
        events_.insert(pos, e);
    }

    void set_time_span(double start_ts, double end_ts)
    {
        start_ts_ = start_ts;
        end_ts_ = end_ts;
    }

    std::span<const Event> events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    const std::string& session_id() const noexcept { return session_id_; }
    const nlohmann::json& config() const noexcept { return config_; }
    double start_ts() const noexcept { return start_ts_; }
    double end_ts() const noexcept { return end_ts_; }

    void write_jsonl(std::ostream& out) const
    {
        for (const Event& e : events_) out << event_to_json_line(e) << '\n';
    }

private:
    std::string session_id_;
    nlohmann::json config_;
    double start_ts_ = 0.0;
    double end_ts_ = 0.0;
    std::vector<Event> events_;
};

inline SessionLog append_event(SessionLog log, const Event& e)
{
    log.append(e);
    return log;
}

}  // namespace attentrack
