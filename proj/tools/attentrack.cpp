// attentrack: command-line front end.
//
//   attentrack run --input <path|-> --gallery <path> --out-dir <dir> [options]
//   attentrack simulate --script <path> --out <dir>
//   attentrack evaluate --tracks <path> --truth <path> [--warmup <frames>]

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "attentrack/attentrack.hpp"

#include <CLI11.hpp>
#include <httplib.h>

namespace {

using namespace attentrack;

/// Latest status document, swapped whole so readers never see a partial one.
class StatusSnapshot {
public:
    void store(std::string doc)
    {
        auto next = std::make_shared<const std::string>(std::move(doc));
        std::lock_guard lock(mutex_);
        current_ = std::move(next);
    }

    std::shared_ptr<const std::string> load() const
    {
        std::lock_guard lock(mutex_);
        return current_;
    }

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const std::string> current_ = std::make_shared<const std::string>("{}");
};

class StatusServer {
public:
    StatusServer(int port, std::shared_ptr<StatusSnapshot> snapshot) : snapshot_(std::move(snapshot))
    {
        server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(*snapshot_->load(), "application/json");
        });
        if (!server_.bind_to_port("127.0.0.1", port))
            throw Error("cannot bind status server to port " + std::to_string(port));
        thread_ = std::thread([this] { server_.listen_after_bind(); });
    }

    ~StatusServer()
    {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

private:
    std::shared_ptr<StatusSnapshot> snapshot_;
    httplib::Server server_;
    std::thread thread_;
};

nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(0, path + " is not valid JSON: " + e.what());
    }
}

int cmd_simulate(const std::string& script_path, const std::string& out_dir)
{
    namespace fs = std::filesystem;
    SceneScript script;
    try {
        script = scene_from_json(read_json_file(script_path));
    } catch (const ConfigError& e) {
        std::cerr << "invalid scene script " << script_path << ": " << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return kExitIo;
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ofstream truth(fs::path(out_dir) / "truth.jsonl", std::ios::binary | std::ios::trunc);
    std::ofstream dets(fs::path(out_dir) / "detections.jsonl", std::ios::binary | std::ios::trunc);
    if (ec || !truth || !dets) {
        std::cerr << "cannot write scene outputs to " << out_dir << '\n';
        return kExitIo;
    }
    generate_scene(script, truth, dets);
    return (truth && dets) ? kExitOk : kExitIo;
}

int cmd_evaluate(const std::string& tracks_path, const std::string& truth_path, std::uint64_t warmup)
{
    std::ifstream tracks_in(tracks_path);
    if (!tracks_in) {
        std::cerr << "cannot open track log: " << tracks_path << '\n';
        return kExitIo;
    }
    std::ifstream truth_in(truth_path);
    if (!truth_in) {
        std::cerr << "cannot open ground truth: " << truth_path << '\n';
        return kExitIo;
    }
    try {
        const auto tracks = read_track_log(tracks_in);
        const auto truth = read_truth(truth_in);
        std::cout << evaluate(tracks, truth, warmup).to_json().dump(2) << '\n';
        return kExitOk;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kExitIo;
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Classroom attentiveness tracking engine"};
    app.require_subcommand(1);

    // run
    RunOptions run;
    std::optional<std::string> config_path;
    std::optional<int> serve_port;
    SessionConfig flags;
    auto* run_cmd = app.add_subcommand("run", "Track a detection stream and log attendance and events");
    run_cmd->add_option("--input", run.input, "Detection stream (JSON Lines), or - for stdin")->required();
    run_cmd->add_option("--gallery", run.gallery, "Student gallery (JSON array)")->required();
    run_cmd->add_option("--out-dir", run.out_dir, "Output directory")->required();
    run_cmd->add_option("--config", config_path, "JSON config file; flags override it");
    auto* o_iou = run_cmd->add_option("--iou-threshold", flags.tracker.iou_threshold, "IoU gate")->capture_default_str();
    auto* o_sim = run_cmd->add_option("--sim-threshold", flags.similarity_threshold, "Face match threshold")->capture_default_str();
    auto* o_age = run_cmd->add_option("--max-age", flags.tracker.max_age, "Frames a track survives unmatched")->capture_default_str();
    auto* o_hits = run_cmd->add_option("--min-hits", flags.tracker.min_hits, "Updates before a track is emitted")->capture_default_str();
    auto* o_win = run_cmd->add_option("--sleep-window", flags.sleep.window_seconds, "Sleep window (s)")->capture_default_str();
    auto* o_frac = run_cmd->add_option("--sleep-fraction", flags.sleep.asleep_fraction, "Asleep fraction")->capture_default_str();
    auto* o_deb = run_cmd->add_option("--phone-debounce", flags.phone.debounce_seconds, "Phone debounce (s)")->capture_default_str();
    auto* o_seed = run_cmd->add_option("--seed", flags.seed, "Session seed")->capture_default_str();
    run_cmd->add_option("--status-file", run.status_file, "Status document rewritten each frame");
    run_cmd->add_option("--serve", serve_port, "Serve the status document on 127.0.0.1:<port>/status");
    run_cmd->add_flag("--skip-bad", run.skip_bad, "Skip invalid stream lines instead of aborting");

    // simulate
    std::string script_path, sim_out;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic detection stream and ground truth");
    sim_cmd->add_option("--script", script_path, "Scene script (JSON)")->required();
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();

    // evaluate
    std::string tracks_path, truth_path;
    std::uint64_t warmup = 0;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a track log against ground truth");
    eval_cmd->add_option("--tracks", tracks_path, "Track log from run")->required();
    eval_cmd->add_option("--truth", truth_path, "Ground truth from simulate")->required();
    eval_cmd->add_option("--warmup", warmup, "Ignore frames below this index")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    if (*sim_cmd) return cmd_simulate(script_path, sim_out);
    if (*eval_cmd) return cmd_evaluate(tracks_path, truth_path, warmup);

    // Precedence: flag > config file > default.
    SessionConfig cfg;
    if (config_path) {
        try {
            cfg.merge_json(read_json_file(*config_path));
        } catch (const ConfigError& e) {
            std::cerr << "invalid configuration in " << *config_path << ": " << e.what() << '\n';
            return kExitConfig;
        } catch (const Error& e) {
            std::cerr << e.what() << '\n';
            return kExitIo;
        }
    }
    if (o_iou->count()) cfg.tracker.iou_threshold = flags.tracker.iou_threshold;
    if (o_sim->count()) cfg.similarity_threshold = flags.similarity_threshold;
    if (o_age->count()) cfg.tracker.max_age = flags.tracker.max_age;
    if (o_hits->count()) cfg.tracker.min_hits = flags.tracker.min_hits;
    if (o_win->count()) cfg.sleep.window_seconds = flags.sleep.window_seconds;
    if (o_frac->count()) cfg.sleep.asleep_fraction = flags.sleep.asleep_fraction;
    if (o_deb->count()) cfg.phone.debounce_seconds = flags.phone.debounce_seconds;
    if (o_seed->count()) cfg.seed = flags.seed;
    run.config = cfg;

    std::unique_ptr<StatusServer> server;
    if (serve_port) {
        if (*serve_port < 1 || *serve_port > 65535) {
            std::cerr << "invalid --serve port " << *serve_port << '\n';
            return kExitConfig;
        }
        auto snapshot = std::make_shared<StatusSnapshot>();
        try {
            server = std::make_unique<StatusServer>(*serve_port, snapshot);
        } catch (const Error& e) {
            std::cerr << e.what() << '\n';
            return kExitIo;
        }
        run.on_status = [snapshot](const std::string& doc) { snapshot->store(doc); };
    }
    return run_session(run, std::cerr);
}
