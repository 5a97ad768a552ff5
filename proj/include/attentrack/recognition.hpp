#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "attentrack/error.hpp"
#include "attentrack/model_math.hpp"
#include "attentrack/sort_tracker.hpp"

namespace attentrack {

/// Embeddings whose norm is within this of 1 are taken as-is.
inline constexpr double kUnitNormTolerance = 1e-6;
/// Embeddings off by more than this relative amount are rejected as corrupt.
inline constexpr double kMaxNormDeviation = 0.10;

/// Returns a unit-norm copy, rescaling small deviations and rejecting large ones.
inline std::vector<double> normalize_embedding(std::span<const double> v)
{
    if (v.empty()) throw InvalidArgument("embedding is empty");
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument("embedding has a non-finite component");
    const double n = l2_norm(v);
    const double deviation = std::abs(n - 1.0);
    std::vector<double> out(v.begin(), v.end());
    if (deviation <= kUnitNormTolerance) return out;
    if (deviation >= kMaxNormDeviation)
        throw InvalidArgument(fmt::format("embedding norm {:.6f} is too far from 1", n));
    for (double& x : out) x /= n;
    return out;
}

struct GalleryEntry {
    std::string student_id;
    std::string display_name;
    std::vector<double> embedding;
};

/// Registered students. Immutable once constructed.
class Gallery {
public:
    Gallery() = default;

    explicit Gallery(std::vector<GalleryEntry> entries) : entries_(std::move(entries))
    {
        std::set<std::string> seen;
        for (GalleryEntry& e : entries_) {
            if (e.student_id.empty()) throw InvalidArgument("gallery entry has an empty student_id");
            if (!seen.insert(e.student_id).second)
                throw InvalidArgument("duplicate student_id '" + e.student_id + "' in gallery");
            e.embedding = normalize_embedding(e.embedding);
            if (dimension_ == 0) dimension_ = e.embedding.size();
            if (e.embedding.size() != dimension_)
                throw InvalidArgument("gallery embeddings differ in dimension");
        }
    }

    std::span<const GalleryEntry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t dimension() const noexcept { return dimension_; }

    const GalleryEntry* find(const std::string& student_id) const
    {
        for (const GalleryEntry& e : entries_)
            if (e.student_id == student_id) return &e;
        return nullptr;
    }

private:
    std::vector<GalleryEntry> entries_;
    std::size_t dimension_ = 0;
};

/// Parses the gallery file: a JSON array of {student_id, display_name, embedding}.
inline Gallery load_gallery(std::istream& in)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("gallery is not valid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError(0, "gallery must be a JSON array");
    std::vector<GalleryEntry> entries;
    try {
        for (const auto& item : doc) {
            GalleryEntry e;
            e.student_id = item.at("student_id").get<std::string>();
            e.display_name = item.value("display_name", e.student_id);
            e.embedding = item.at("embedding").get<std::vector<double>>();
            entries.push_back(std::move(e));
        }
        return Gallery(std::move(entries));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, std::string("malformed gallery entry: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw ParseError(0, e.what());
    }
}

struct IdentityMatch {
    std::string student_id;
    double similarity = 0.0;
};

/// Best gallery match for a probe, if it clears the threshold. Ties go to the
/// lexicographically smallest student_id.
inline std::optional<IdentityMatch> match_identity(std::span<const double> embedding,
                                                   const Gallery& gallery, double threshold = 0.7)
{
    if (gallery.empty()) return std::nullopt;
    if (embedding.size() != gallery.dimension())
        throw InvalidArgument(fmt::format("probe dimension {} does not match gallery dimension {}",
                                          embedding.size(), gallery.dimension()));
    const GalleryEntry* best = nullptr;
    double best_sim = 0.0;
    for (const GalleryEntry& e : gallery.entries()) {
        const double sim = cosine_similarity(embedding, e.embedding);
        if (!best || sim > best_sim || (sim == best_sim && e.student_id < best->student_id)) {
            best = &e;
            best_sim = sim;
        }
    }
    if (best_sim < threshold) return std::nullopt;
    return IdentityMatch{best->student_id, best_sim};
}

/// Per-track identity, stabilized by plurality vote over frame matches.
struct IdentityBinding {
    std::uint64_t track_id = 0;
    std::optional<std::string> student_id;
    double best_similarity = -1.0;
    std::map<std::string, int> votes;
};

inline IdentityBinding bind_track(IdentityBinding binding, const std::optional<IdentityMatch>& frame_match)
{
    if (!frame_match) return binding;
    ++binding.votes[frame_match->student_id];
    binding.best_similarity = std::max(binding.best_similarity, frame_match->similarity);
    int top = 0;
    for (const auto& [student, count] : binding.votes) {  // ascending id, so ties keep the smallest
        if (count > top) {
            top = count;
            binding.student_id = student;
        }
    }
    return binding;
}

enum class AttendanceStatus { Absent, Present };

struct AttendanceRecord {
    std::string student_id;
    std::string display_name;
    AttendanceStatus status = AttendanceStatus::Absent;
    std::optional<double> first_seen;
    std::optional<double> last_seen;
};

/// Attendance for every gallery student, in gallery order.
class AttendanceBook {
public:
    explicit AttendanceBook(const Gallery& gallery)
    {
        for (const GalleryEntry& e : gallery.entries())
            records_.push_back({e.student_id, e.display_name, AttendanceStatus::Absent, {}, {}});
    }

    void mark(const IdentityBinding& binding, double timestamp)
    {
        if (!binding.student_id) throw InvalidArgument("cannot mark attendance for an unbound track");
        mark(*binding.student_id, timestamp);
    }

    void mark(const std::string& student_id, double timestamp)
    {
        AttendanceRecord* rec = find_mutable(student_id);
        if (!rec) throw InvalidArgument("student '" + student_id + "' is not in the gallery");
        rec->status = AttendanceStatus::Present;
        if (!rec->first_seen) rec->first_seen = timestamp;
        rec->last_seen = rec->last_seen ? std::max(*rec->last_seen, timestamp) : timestamp;
    }

    std::span<const AttendanceRecord> records() const noexcept { return records_; }

    const AttendanceRecord* find(const std::string& student_id) const
    {
        for (const AttendanceRecord& r : records_)
            if (r.student_id == student_id) return &r;
        return nullptr;
    }

private:
    AttendanceRecord* find_mutable(const std::string& student_id)
    {
        for (AttendanceRecord& r : records_)
            if (r.student_id == student_id) return &r;
        return nullptr;
    }

    std::vector<AttendanceRecord> records_;
};

inline AttendanceBook mark_attendance(AttendanceBook records, const IdentityBinding& binding,
                                      double timestamp)
{
    records.mark(binding, timestamp);
    return records;
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline void write_attendance_csv(std::ostream& out, const AttendanceBook& book)
{
    out << "student_id,display_name,status,first_seen,last_seen\n";
    for (const AttendanceRecord& r : book.records()) {
        out << csv_field(r.student_id) << ',' << csv_field(r.display_name) << ','
            << (r.status == AttendanceStatus::Present ? "present" : "absent") << ',';
        if (r.first_seen) out << fmt::format("{:.3f}", *r.first_seen);
        out << ',';
        if (r.last_seen) out << fmt::format("{:.3f}", *r.last_seen);
        out << '\n';
    }
}

/// Face-track bookkeeping for one session: per-frame matching, voting and
/// attendance marking.
class RecognitionEngine {
public:
    RecognitionEngine(const Gallery& gallery, double threshold)
        : gallery_(&gallery), threshold_(threshold), attendance_(gallery)
    {
        if (!(threshold >= -1.0 && threshold <= 1.0))
            throw ConfigError("similarity threshold must lie in [-1, 1]");
    }

    /// Processes one frame's corrected face tracks. `frame` is the detection
    /// batch the outputs index into.
    void observe(std::span<const TrackOutput> face_tracks, std::span<const Detection> frame,
                 double timestamp)
    {
        for (const TrackOutput& t : face_tracks) {
            if (t.channel != Channel::Face) continue;
            IdentityBinding& binding = bindings_[t.id];
            binding.track_id = t.id;
            const Detection& det = frame[t.detection_index];
            if (det.embedding && !gallery_->empty())
                binding = bind_track(std::move(binding),
                                     match_identity(*det.embedding, *gallery_, threshold_));
            if (binding.student_id) attendance_.mark(binding, timestamp);
        }
        check_duplicates();
    }

    void retire(std::uint64_t face_track_id) { bindings_.erase(face_track_id); }

    std::optional<std::string> student_of(std::uint64_t face_track_id) const
    {
        auto it = bindings_.find(face_track_id);
        if (it == bindings_.end()) return std::nullopt;
        return it->second.student_id;
    }

    const IdentityBinding* binding(std::uint64_t face_track_id) const
    {
        auto it = bindings_.find(face_track_id);
        return it == bindings_.end() ? nullptr : &it->second;
    }

    const AttendanceBook& attendance() const noexcept { return attendance_; }
    std::span<const std::string> warnings() const noexcept { return warnings_; }

private:
    void check_duplicates()
    {
        std::map<std::string, std::vector<std::uint64_t>> by_student;
        for (const auto& [id, b] : bindings_)
            if (b.student_id) by_student[*b.student_id].push_back(id);
        for (const auto& [student, ids] : by_student) {
            if (ids.size() < 2) continue;
            if (!reported_.insert(student + fmt::format("{}", fmt::join(ids, ","))).second) continue;
            warnings_.push_back(fmt::format("student '{}' bound to concurrent face tracks {}",
                                            student, fmt::join(ids, ", ")));
        }
    }

    const Gallery* gallery_;
    double threshold_;
    AttendanceBook attendance_;
    std::map<std::uint64_t, IdentityBinding> bindings_;
    std::vector<std::string> warnings_;
    std::set<std::string> reported_;
};

}  // namespace attentrack
