#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "attentrack/error.hpp"
#include "attentrack/session.hpp"
#include "attentrack/stream.hpp"

namespace attentrack {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitConfig = 2 };

/// Replaces `path` with `contents` via a sibling temporary and rename, so a
/// concurrent reader sees either the old or the new document, never a mix.
inline void write_file_atomically(const std::filesystem::path& path, const std::string& contents)
{
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw Error("cannot write " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot replace " + path.string() + ": " + ec.message());
}

struct RunOptions {
    std::string input;  // path or "-" for stdin
    std::string gallery;
    std::string out_dir;
    SessionConfig config;
    std::optional<std::string> status_file;
    bool skip_bad = false;
    std::function<void(const std::string&)> on_status;  // e.g. an HTTP snapshot holder
};

/// Runs one session end to end and writes tracks.jsonl, events.jsonl,
/// attendance.csv and summary.json into out_dir. Diagnostics go to `err`.
inline int run_session(const RunOptions& opts, std::ostream& err = std::cerr)
{
    namespace fs = std::filesystem;
    try {
        opts.config.validate();
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        std::ifstream gallery_in(opts.gallery);
        if (!gallery_in) {
            err << "cannot open gallery file: " << opts.gallery << '\n';
            return kExitIo;
        }
        Gallery gallery;
        try {
            gallery = load_gallery(gallery_in);
        } catch (const ParseError& e) {
            err << "parse error in " << opts.gallery << ": " << e.what() << '\n';
            return kExitIo;
        }

        std::ifstream file_in;
        std::istream* in = &std::cin;
        if (opts.input != "-") {
            file_in.open(opts.input);
            if (!file_in) {
                err << "cannot open input file: " << opts.input << '\n';
                return kExitIo;
            }
            in = &file_in;
        }

        std::error_code ec;
        fs::create_directories(opts.out_dir, ec);
        if (ec) {
            err << "cannot create output directory " << opts.out_dir << ": " << ec.message() << '\n';
            return kExitIo;
        }
        const fs::path dir(opts.out_dir);
        std::ofstream tracks(dir / "tracks.jsonl", std::ios::binary | std::ios::trunc);
        if (!tracks) {
            err << "cannot write " << (dir / "tracks.jsonl").string() << '\n';
            return kExitIo;
        }

        SessionRunner session(gallery, opts.config, &tracks);
        session.set_status_sink([&opts](const std::string& doc) {
            if (opts.status_file) write_file_atomically(*opts.status_file, doc);
            if (opts.on_status) opts.on_status(doc);
        });

        StreamReader reader(*in, StreamOptions{opts.skip_bad});
        while (auto batch = reader.next()) session.process(*batch);
        session.finish();

        for (const std::string& w : reader.warnings()) err << "warning: " << w << '\n';
        for (const std::string& w : session.recognition().warnings()) err << "warning: " << w << '\n';

        std::ofstream events(dir / "events.jsonl", std::ios::binary | std::ios::trunc);
        session.log().write_jsonl(events);
        std::ofstream attendance(dir / "attendance.csv", std::ios::binary | std::ios::trunc);
        write_attendance_csv(attendance, session.attendance());
        nlohmann::json summary = session.summary_json();
        summary["skipped_lines"] = reader.skipped_lines();
        std::ofstream summary_out(dir / "summary.json", std::ios::binary | std::ios::trunc);
        summary_out << summary.dump(2) << '\n';

        if (!tracks || !events || !attendance || !summary_out) {
            err << "failed writing outputs to " << opts.out_dir << '\n';
            return kExitIo;
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "parse error in " << (opts.input == "-" ? std::string("<stdin>") : opts.input) << ": "
            << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
}

}  // namespace attentrack
