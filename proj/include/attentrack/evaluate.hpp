///////////////////////////////////////////////////////////////////////////////
// evaluate.hpp: id-switch / purity scoring of a track log against ground truth
//
// Per frame and channel, emitted tracks and truth objects are paired greedily
// by descending IoU (pairs below 0.5 never match).
///////////////////////////////////////////////////////////////////////////////

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "attentrack/error.hpp"
#include "attentrack/geometry.hpp"
#include "attentrack/sort_tracker.hpp"

namespace attentrack {

inline constexpr double kEvalIouThreshold = 0.5;

struct TrackLogEntry {
    std::uint64_t frame = 0;
    Channel channel = Channel::Face;
    std::uint64_t track_id = 0;
    BoundingBox bbox;
};

struct TruthEntry {
    std::uint64_t frame = 0;
    std::uint64_t object_id = 0;
    Channel channel = Channel::Face;
    BoundingBox bbox;
};

struct EvalReport {
    std::size_t id_switches = 0;
    double track_purity = 1.0;  // 1.0 when no track was emitted
    double miss_rate = 0.0;
    std::size_t false_track_count = 0;
    std::size_t truth_instances = 0;
    std::size_t matched_instances = 0;
    std::size_t track_count = 0;

    nlohmann::json to_json() const
    {
        return {{"id_switches", id_switches},   {"track_purity", track_purity},
                {"miss_rate", miss_rate},       {"false_track_count", false_track_count},
                {"truth_instances", truth_instances}, {"matched_instances", matched_instances},
                {"track_count", track_count}};
    }
};

namespace eval_detail {

inline BoundingBox box_field(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 4) throw InvalidArgument("bbox must hold 4 numbers");
    return make_box(v[0], v[1], v[2], v[3]);
}

inline Channel channel_field(const std::string& s)
{
    for (Channel c : kAllChannels)
        if (to_string(c) == s) return c;
    throw InvalidArgument("unknown channel '" + s + "'");
}

template <typename Entry, typename Fn>
std::vector<Entry> read_jsonl(std::istream& in, Fn&& parse)
{
    std::vector<Entry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        } catch (const InvalidArgument& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return out;
}

}  // namespace eval_detail

/// Reads the run's track log (JSON Lines with frame, channel, track_id, bbox).
inline std::vector<TrackLogEntry> read_track_log(std::istream& in)
{
    return eval_detail::read_jsonl<TrackLogEntry>(in, [](const nlohmann::json& j) {
        return TrackLogEntry{j.at("frame").get<std::uint64_t>(),
                             eval_detail::channel_field(j.at("channel").get<std::string>()),
                             j.at("track_id").get<std::uint64_t>(), eval_detail::box_field(j.at("bbox"))};
    });
}

/// Reads a ground-truth file (JSON Lines with frame, object_id, label, bbox).
inline std::vector<TruthEntry> read_truth(std::istream& in)
{
    return eval_detail::read_jsonl<TruthEntry>(in, [](const nlohmann::json& j) {
        const auto label = parse_label(j.at("label").get<std::string>());
        if (!label) throw InvalidArgument("unknown label " + j.at("label").dump());
        return TruthEntry{j.at("frame").get<std::uint64_t>(), j.at("object_id").get<std::uint64_t>(),
                          channel_of(*label), eval_detail::box_field(j.at("bbox"))};
    });
}

/// Scores a track log. Frames below `warmup_frames` are ignored.
inline EvalReport evaluate(const std::vector<TrackLogEntry>& tracks, const std::vector<TruthEntry>& truth,
                           std::uint64_t warmup_frames = 0)
{
    using TrackKey = std::pair<Channel, std::uint64_t>;
    using TruthKey = std::pair<Channel, std::uint64_t>;

    std::map<std::uint64_t, std::vector<const TrackLogEntry*>> tracks_by_frame;
    std::map<std::uint64_t, std::vector<const TruthEntry*>> truth_by_frame;
    for (const auto& t : tracks)
        if (t.frame >= warmup_frames) tracks_by_frame[t.frame].push_back(&t);
    for (const auto& g : truth)
        if (g.frame >= warmup_frames) truth_by_frame[g.frame].push_back(&g);

    EvalReport report;
    std::map<TruthKey, TrackKey> last_match;
    std::map<TrackKey, std::size_t> track_frames;
    std::map<TrackKey, std::map<TruthKey, std::size_t>> track_hits;

    for (const auto& [frame, ts] : tracks_by_frame)
        for (const TrackLogEntry* t : ts) {
            ++track_frames[{t->channel, t->track_id}];
            track_hits[{t->channel, t->track_id}];
        }

    for (const auto& [frame, gts] : truth_by_frame) {
        report.truth_instances += gts.size();
        auto tit = tracks_by_frame.find(frame);
        if (tit == tracks_by_frame.end()) continue;
        const auto& ts = tit->second;

        // (iou, truth index, track index), best first with index tie-breaks.
        std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
        for (std::size_t g = 0; g < gts.size(); ++g)
            for (std::size_t t = 0; t < ts.size(); ++t) {
                if (gts[g]->channel != ts[t]->channel) continue;
                const double v = iou(gts[g]->bbox, ts[t]->bbox);
                if (v >= kEvalIouThreshold) pairs.emplace_back(v, g, t);
            }
        std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
            if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
            if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
            return std::get<2>(a) < std::get<2>(b);
        });
        std::vector<char> g_used(gts.size(), 0), t_used(ts.size(), 0);
        for (const auto& [v, g, t] : pairs) {
            if (g_used[g] || t_used[t]) continue;
            g_used[g] = t_used[t] = 1;
            ++report.matched_instances;
            const TruthKey gk{gts[g]->channel, gts[g]->object_id};
            const TrackKey tk{ts[t]->channel, ts[t]->track_id};
            auto [it, fresh] = last_match.try_emplace(gk, tk);
            if (!fresh && it->second != tk) {
                ++report.id_switches;
                it->second = tk;
            }
            ++track_hits[tk][gk];
        }
    }

    report.miss_rate = report.truth_instances
                           ? 1.0 - static_cast<double>(report.matched_instances) /
                                       static_cast<double>(report.truth_instances)
                           : 0.0;
    report.track_count = track_frames.size();
    if (!track_frames.empty()) {
        double purity_sum = 0.0;
        for (const auto& [key, frames] : track_frames) {
            std::size_t modal = 0;
            for (const auto& [gk, n] : track_hits[key]) modal = std::max(modal, n);
            if (modal == 0) ++report.false_track_count;
            purity_sum += static_cast<double>(modal) / static_cast<double>(frames);
        }
        report.track_purity = purity_sum / static_cast<double>(track_frames.size());
    }
    return report;
}

}  // namespace attentrack
