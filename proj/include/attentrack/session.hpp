///////////////////////////////////////////////////////////////////////////////
// session.hpp: stream -> tracker -> recognition -> events pipeline
//
// SessionRunner consumes frame batches in order and owns every piece of
// session state. Skipped frame indices are replayed as empty frames so that
// Kalman prediction and track ageing advance one step per frame.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "attentrack/events.hpp"
#include "attentrack/recognition.hpp"
#include "attentrack/sort_tracker.hpp"
#include "attentrack/stream.hpp"

namespace attentrack {

struct SessionConfig {
    TrackerConfig tracker;
    double similarity_threshold = 0.7;
    SleepRuleConfig sleep;
    PhoneRuleConfig phone;
    std::uint64_t seed = 0;

    void validate() const
    {
        tracker.validate();
        sleep.validate();
        phone.validate();
        if (!(similarity_threshold >= -1.0 && similarity_threshold <= 1.0))
            throw ConfigError("similarity threshold must lie in [-1, 1]");
    }

    nlohmann::json to_json() const
    {
        return {{"iou_threshold", tracker.iou_threshold},
                {"max_age", tracker.max_age},
                {"min_hits", tracker.min_hits},
                {"sim_threshold", similarity_threshold},
                {"sleep_window", sleep.window_seconds},
                {"sleep_fraction", sleep.asleep_fraction},
                {"sleep_probability_floor", sleep.asleep_probability_floor},
                {"phone_debounce", phone.debounce_seconds},
                {"attribution_radius_factor", phone.radius_factor},
                {"seed", seed}};
    }

    /// Overlays keys present in a JSON object (same names as to_json()).
    void merge_json(const nlohmann::json& j)
    {
        if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
        static const std::set<std::string> known = {
            "iou_threshold", "max_age",        "min_hits",       "sim_threshold",
            "sleep_window",  "sleep_fraction", "sleep_probability_floor",
            "phone_debounce", "attribution_radius_factor", "seed"};
        for (const auto& [key, value] : j.items())
            if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
        try {
            tracker.iou_threshold = j.value("iou_threshold", tracker.iou_threshold);
            tracker.max_age = j.value("max_age", tracker.max_age);
            tracker.min_hits = j.value("min_hits", tracker.min_hits);
            similarity_threshold = j.value("sim_threshold", similarity_threshold);
            sleep.window_seconds = j.value("sleep_window", sleep.window_seconds);
            sleep.asleep_fraction = j.value("sleep_fraction", sleep.asleep_fraction);
            sleep.asleep_probability_floor = j.value("sleep_probability_floor", sleep.asleep_probability_floor);
            phone.debounce_seconds = j.value("phone_debounce", phone.debounce_seconds);
            phone.radius_factor = j.value("attribution_radius_factor", phone.radius_factor);
            seed = j.value("seed", seed);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("mistyped config value: ") + e.what());
        }
    }
};

inline std::string format_bbox(const BoundingBox& b)
{
    return fmt::format("[{:.3f},{:.3f},{:.3f},{:.3f}]", b.x1, b.y1, b.x2, b.y2);
}

class SessionRunner {
public:
    using StatusSink = std::function<void(const std::string& status_json)>;

    SessionRunner(const Gallery& gallery, SessionConfig cfg, std::ostream* track_log = nullptr)
        : cfg_((cfg.validate(), std::move(cfg))),
          session_id_(fmt::format("session-{:016x}", cfg_.seed)),
          bank_(cfg_.tracker),
          recognition_(gallery, cfg_.similarity_threshold),
          sleep_(cfg_.sleep),
          phone_(cfg_.phone),
          log_(session_id_, cfg_.to_json()),
          track_log_(track_log)
    {
    }

    void set_status_sink(StatusSink sink) { status_sink_ = std::move(sink); }

    void process(const FrameBatch& batch)
    {
        if (finished_) throw InvalidArgument("session already finished");
        if (last_frame_ && batch.frame_index <= *last_frame_)
            throw InvalidArgument(fmt::format("frame {} does not advance past {}", batch.frame_index, *last_frame_));
        if (last_frame_)
            for (std::uint64_t f = *last_frame_ + 1; f < batch.frame_index; ++f) run_frame({f, last_ts_, {}});
        if (!first_ts_) first_ts_ = batch.timestamp;
        run_frame(batch);
        ++batches_;
        detections_ += batch.detections.size();
        publish_status();
    }

    /// Retires every track, closing open events at their last observation.
    void finish()
    {
        if (finished_) return;
        handle_retired(bank_.flush());
        log_.set_time_span(first_ts_.value_or(0.0), last_ts_);
        finished_ = true;
        publish_status();
    }

    const SessionLog& log() const noexcept { return log_; }
    const AttendanceBook& attendance() const noexcept { return recognition_.attendance(); }
    const RecognitionEngine& recognition() const noexcept { return recognition_; }
    const SessionConfig& config() const noexcept { return cfg_; }
    const std::string& session_id() const noexcept { return session_id_; }
    std::size_t open_event_count() const { return sleep_.open_events().size() + phone_.open_events().size(); }

    nlohmann::json status_json() const
    {
        nlohmann::json students = nlohmann::json::object();
        const auto sleeping = sleep_.open_events();
        const auto phoning = phone_.open_events();
        auto involved = [](const std::vector<Event>& events, const std::string& id) {
            for (const Event& e : events)
                if (e.student_id && *e.student_id == id) return true;
            return false;
        };
        for (const AttendanceRecord& r : attendance().records())
            students[r.student_id] = {{"present", r.status == AttendanceStatus::Present},
                                      {"sleeping_now", involved(sleeping, r.student_id)},
                                      {"phone_now", involved(phoning, r.student_id)}};
        return {{"session_id", session_id_},
                {"ts", std::round(last_ts_ * 1000.0) / 1000.0},
                {"students", students},
                {"open_event_count", sleeping.size() + phoning.size()}};
    }

    nlohmann::json summary_json() const
    {
        std::size_t present = 0;
        for (const AttendanceRecord& r : attendance().records())
            present += r.status == AttendanceStatus::Present ? 1 : 0;
        std::size_t sleep_events = 0;
        for (const Event& e : log_.events()) sleep_events += e.kind == EventKind::Sleep ? 1 : 0;
        return {{"session_id", session_id_},
                {"start_ts", std::round(log_.start_ts() * 1000.0) / 1000.0},
                {"end_ts", std::round(log_.end_ts() * 1000.0) / 1000.0},
                {"frames", frames_},
                {"frame_batches", batches_},
                {"detections", detections_},
                {"students", attendance().records().size()},
                {"present", present},
                {"sleep_events", sleep_events},
                {"phone_events", log_.size() - sleep_events},
                {"warnings", recognition_.warnings()},
                {"config", cfg_.to_json()}};
    }

private:
    void run_frame(const FrameBatch& batch)
    {
        const double ts = batch.timestamp;
        last_ts_ = ts;
        last_frame_ = batch.frame_index;
        ++frames_;

        FrameTracks out = bank_.step(batch.detections, batch.frame_index);

        std::vector<TrackOutput> faces_updated, sleepers;
        for (const TrackOutput& t : out.updated) {
            if (t.channel == Channel::Face)
                faces_updated.push_back(t);
            else if (t.channel == Channel::Sleep)
                sleepers.push_back(t);
        }
        // Attribution looks at every established track, so one missed
        // detection does not break a phone-to-face pairing.
        const std::vector<TrackOutput> faces = bank_.channel(Channel::Face).established();
        const std::vector<TrackOutput> phones = bank_.channel(Channel::Phone).established();

        recognition_.observe(faces_updated, batch.detections, ts);
        const StudentLookup student_of = [this](std::uint64_t face) { return recognition_.student_of(face); };

        for (const TrackOutput& s : sleepers) {
            const Detection& det = batch.detections[s.detection_index];
            std::optional<std::string> student;
            if (auto face = attribute_to_face(s.bbox, faces, cfg_.phone.radius_factor))
                student = recognition_.student_of(*face);
            if (auto tr = sleep_.update(s.id, {det.label, det.logits, det.confidence}, ts, student))
                record(*tr);
        }
        for (const EventTransition& tr : phone_.update(phones, faces, student_of, ts)) record(tr);

        handle_retired(out.retired);
        write_tracks(batch, out);
    }

    void handle_retired(const std::vector<RetiredTrack>& retired)
    {
        for (const RetiredTrack& r : retired) {
            switch (r.channel) {
            case Channel::Face: recognition_.retire(r.id); break;
            case Channel::Phone:
                if (auto tr = phone_.retire(r.id, r.last_timestamp)) record(*tr);
                break;
            case Channel::Sleep:
                if (auto tr = sleep_.retire(r.id)) record(*tr);
                break;
            }
        }
    }

    void record(const EventTransition& tr)
    {
        if (tr.kind == TransitionKind::Closed) log_.append(tr.event);
    }

    void write_tracks(const FrameBatch& batch, const FrameTracks& out)
    {
        if (!track_log_) return;
        for (const TrackOutput& t : out.updated) {
            if (!t.confirmed) continue;
            std::string student = "null";
            if (t.channel == Channel::Face)
                if (auto s = recognition_.student_of(t.id)) student = nlohmann::json(*s).dump();
            *track_log_ << fmt::format(
                R"({{"frame":{},"ts":{:.3f},"channel":"{}","track_id":{},"label":"{}","bbox":{},"student_id":{}}})",
                batch.frame_index, batch.timestamp, to_string(t.channel), t.id, to_string(t.label),
                format_bbox(t.bbox), student)
                        << '\n';
        }
    }

    void publish_status()
    {
        if (status_sink_) status_sink_(status_json().dump());
    }

    SessionConfig cfg_;
    std::string session_id_;
    TrackerBank bank_;
    RecognitionEngine recognition_;
    SleepMonitor sleep_;
    PhoneMonitor phone_;
    SessionLog log_;
    std::ostream* track_log_;
    StatusSink status_sink_;

    std::optional<std::uint64_t> last_frame_;
    std::optional<double> first_ts_;
    double last_ts_ = 0.0;
    std::size_t frames_ = 0;
    std::size_t batches_ = 0;
    std::size_t detections_ = 0;
    bool finished_ = false;
};

}  // namespace attentrack
