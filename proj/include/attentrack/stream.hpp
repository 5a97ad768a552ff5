///////////////////////////////////////////////////////////////////////////////
// stream.hpp: JSON Lines detection stream reader
//
// One record per line:
//   {"frame":0,"ts":0.000,"label":"face","bbox":[x1,y1,x2,y2],"conf":0.9,
//    "embedding":[...],"logits":[...]}
// Frames are non-decreasing and each frame's records are contiguous.
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"
#include "attentrack/recognition.hpp"

namespace attentrack {

struct FrameBatch {
    std::uint64_t frame_index = 0;
    double timestamp = 0.0;
    std::vector<Detection> detections;
};

struct StreamOptions {
    bool skip_bad = false;  // count and drop invalid lines instead of aborting
};

namespace stream_detail {

inline double finite_number(const nlohmann::json& j, const char* field)
{
    if (!j.is_number()) throw InvalidArgument(std::string("field '") + field + "' must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw InvalidArgument(std::string("field '") + field + "' must be finite");
    return v;
}

inline std::vector<double> number_array(const nlohmann::json& j, const char* field)
{
    if (!j.is_array()) throw InvalidArgument(std::string("field '") + field + "' must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(finite_number(v, field));
    return out;
}

}  // namespace stream_detail

/// Validates one stream record. Throws InvalidArgument describing the defect.
inline Detection parse_detection(const nlohmann::json& rec)
{
    using namespace stream_detail;
    if (!rec.is_object()) throw InvalidArgument("record must be a JSON object");

    Detection d;
    const auto& frame = rec.at("frame");
    if (!frame.is_number_unsigned())  // the parser stores non-negative integers as unsigned
        throw InvalidArgument("field 'frame' must be a non-negative integer");
    d.frame_index = frame.get<std::uint64_t>();
    d.timestamp = finite_number(rec.at("ts"), "ts");

    const auto& label = rec.at("label");
    if (!label.is_string()) throw InvalidArgument("field 'label' must be a string");
    const auto parsed = parse_label(label.get<std::string>());
    if (!parsed) throw InvalidArgument("unknown label '" + label.get<std::string>() + "'");
    d.label = *parsed;

    const auto box = number_array(rec.at("bbox"), "bbox");
    if (box.size() != 4) throw InvalidArgument("field 'bbox' must hold 4 numbers");
    d.bbox = make_box(box[0], box[1], box[2], box[3]);

    d.confidence = rec.contains("conf") ? finite_number(rec["conf"], "conf") : 1.0;
    if (d.confidence < 0.0 || d.confidence > 1.0)
        throw InvalidArgument("field 'conf' must lie in [0, 1]");

    if (rec.contains("embedding") && !rec["embedding"].is_null()) {
        if (d.label != ClassLabel::Face) throw InvalidArgument("embedding is only allowed on face records");
        d.embedding = normalize_embedding(number_array(rec["embedding"], "embedding"));
    }
    if (rec.contains("logits") && !rec["logits"].is_null()) {
        if (!is_sleep_label(d.label)) throw InvalidArgument("logits are only allowed on sleep records");
        d.logits = number_array(rec["logits"], "logits");
        if (d.logits->empty()) throw InvalidArgument("field 'logits' must not be empty");
    }
    return d;
}

/// Pulls frame batches from a line-oriented source one at a time, so a live
/// producer can be consumed through a pipe.
class StreamReader {
public:
    explicit StreamReader(std::istream& in, StreamOptions opts = {}) : in_(&in), opts_(opts) {}

    std::optional<FrameBatch> next()
    {
        while (!done_) {
            auto det = read_record();
            if (!det) {
                done_ = true;
                break;
            }
            if (pending_ && det->frame_index != pending_->frame_index) {
                FrameBatch ready = std::move(*pending_);
                start_batch(std::move(*det));
                return ready;
            }
            if (!pending_) {
                start_batch(std::move(*det));
            } else {
                pending_->detections.push_back(std::move(*det));
            }
        }
        if (pending_) {
            FrameBatch ready = std::move(*pending_);
            pending_.reset();
            return ready;
        }
        return std::nullopt;
    }

    std::size_t skipped_lines() const noexcept { return skipped_; }
    std::span<const std::string> warnings() const noexcept { return warnings_; }

private:
    void start_batch(Detection det)
    {
        pending_ = FrameBatch{};
        pending_->frame_index = det.frame_index;
        pending_->timestamp = det.timestamp;
        pending_->detections.push_back(std::move(det));
    }

    std::optional<Detection> read_record()
    {
        std::string line;
        while (std::getline(*in_, line)) {
            ++line_no_;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                Detection det = parse_line(line);
                if (last_frame_ && det.frame_index < *last_frame_)
                    throw InvalidArgument("frame index " + std::to_string(det.frame_index) +
                                          " is lower than the preceding " + std::to_string(*last_frame_));
                if (last_ts_ && det.timestamp < *last_ts_)
                    throw InvalidArgument("timestamp decreases");
                last_frame_ = det.frame_index;
                last_ts_ = det.timestamp;
                return det;
            } catch (const InvalidArgument& e) {
                reject(e.what());
            }
        }
        if (in_->bad()) throw ParseError(line_no_, "read failure");
        return std::nullopt;
    }

    Detection parse_line(const std::string& line) const
    {
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw InvalidArgument("malformed JSON");
        }
        try {
            return parse_detection(rec);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(std::string("missing or mistyped field: ") + e.what());
        }
    }

    void reject(const std::string& why)
    {
        if (!opts_.skip_bad) throw ParseError(line_no_, why);
        ++skipped_;
        warnings_.push_back("line " + std::to_string(line_no_) + ": " + why);
    }

    std::istream* in_;
    StreamOptions opts_;
    std::size_t line_no_ = 0;
    std::size_t skipped_ = 0;
    std::vector<std::string> warnings_;
    std::optional<std::uint64_t> last_frame_;
    std::optional<double> last_ts_;
    std::optional<FrameBatch> pending_;
    bool done_ = false;
};

inline std::vector<FrameBatch> parse_stream(std::istream& in, StreamOptions opts = {})
{
    StreamReader reader(in, opts);
    std::vector<FrameBatch> frames;
    while (auto batch = reader.next()) frames.push_back(std::move(*batch));
    return frames;
}

}  // namespace attentrack
