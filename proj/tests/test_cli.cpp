#include <cstdio>
#include <cstdlib>
#include <string>
#include <thread>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support.hpp"

#include <httplib.h>

using nlohmann::json;
namespace test = attentrack::test;

namespace {

const std::string kCli = ATTENTRACK_CLI_PATH;
const std::string kData = ATTENTRACK_DATA_DIR;

int run(const std::string& args, const std::string& redirect = "")
{
    const std::string cmd = "'" + kCli + "' " + args + (redirect.empty() ? " >/dev/null 2>&1" : " " + redirect);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
protected:
    test::TempDir dir{"cli"};

    void simulate()
    {
        ASSERT_EQ(run("simulate --script " + kData + "/scene.json --out " + (dir / "sim")), 0);
    }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo)
{
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("run --input x"), 2);
    EXPECT_EQ(run("run --input x --gallery y --out-dir z --max-age abc"), 2);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, InvalidConfigExitsWithTwo)
{
    simulate();
    const std::string base = "run --input " + (dir / "sim/detections.jsonl") + " --gallery " + kData +
                             "/gallery.json --out-dir " + (dir / "out");
    EXPECT_EQ(run(base + " --iou-threshold 1.5"), 2);
    EXPECT_EQ(run(base + " --min-hits 0"), 2);
    EXPECT_EQ(run(base + " --sleep-fraction 0"), 2);
    EXPECT_EQ(run(base + " --serve 70000"), 2);
    test::write_file(dir / "bad.json", R"({"no_such_key":1})");
    EXPECT_EQ(run(base + " --config " + (dir / "bad.json")), 2);
}

TEST_F(Cli, IoFailuresExitWithOne)
{
    simulate();
    EXPECT_EQ(run("run --input " + (dir / "missing.jsonl") + " --gallery " + kData + "/gallery.json --out-dir " +
                  (dir / "out")),
              1);
    EXPECT_EQ(run("run --input " + (dir / "sim/detections.jsonl") + " --gallery " + (dir / "nope.json") +
                  " --out-dir " + (dir / "out")),
              1);
    test::write_file(dir / "broken.jsonl", "{\"frame\":0}\n");
    EXPECT_EQ(run("run --input " + (dir / "broken.jsonl") + " --gallery " + kData + "/gallery.json --out-dir " +
                  (dir / "out")),
              1);
    EXPECT_EQ(run("run --input " + (dir / "broken.jsonl") + " --gallery " + kData + "/gallery.json --out-dir " +
                  (dir / "out") + " --skip-bad"),
              0);
    EXPECT_EQ(run("evaluate --tracks " + (dir / "none.jsonl") + " --truth " + (dir / "sim/truth.jsonl")), 1);
    EXPECT_EQ(run("simulate --script " + (dir / "none.json") + " --out " + (dir / "x")), 1);
}

TEST_F(Cli, SimulateRunEvaluate)
{
    simulate();
    ASSERT_EQ(run("run --input - --gallery " + kData + "/gallery.json --out-dir " + (dir / "out") +
                      " --seed 42 --status-file " + (dir / "status.json"),
                  "< " + (dir / "sim/detections.jsonl") + " >/dev/null 2>&1"),
              0);
    for (const char* f : {"tracks.jsonl", "events.jsonl", "attendance.csv", "summary.json"})
        EXPECT_TRUE(std::filesystem::exists(dir / ("out/" + std::string(f)))) << f;
    const json status = json::parse(test::read_file(dir / "status.json"));
    EXPECT_EQ(status["session_id"], "session-000000000000002a");

    ASSERT_EQ(run("evaluate --tracks " + (dir / "out/tracks.jsonl") + " --truth " + (dir / "sim/truth.jsonl"),
                  "> " + (dir / "report.json") + " 2>/dev/null"),
              0);
    const json report = json::parse(test::read_file(dir / "report.json"));
    EXPECT_EQ(report["id_switches"], 0);
    EXPECT_EQ(report["track_purity"], 1.0);
    EXPECT_EQ(report["false_track_count"], 0);

    const auto events = test::lines_of(test::read_file(dir / "out/events.jsonl"));
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(json::parse(events[0])["kind"], "phone_usage");
    EXPECT_EQ(json::parse(events[0])["student_id"], "s002");
    EXPECT_EQ(json::parse(events[1])["kind"], "sleep");
    EXPECT_EQ(json::parse(events[1])["student_id"], "s003");
}

TEST_F(Cli, FlagOverridesConfigFile)
{
    simulate();
    const std::string base = "run --input " + (dir / "sim/detections.jsonl") + " --gallery " + kData +
                             "/gallery.json --out-dir " + (dir / "out");
    test::write_file(dir / "strict.json", R"({"sim_threshold":0.95})");
    ASSERT_EQ(run(base + " --config " + (dir / "strict.json")), 0);
    EXPECT_NE(test::read_file(dir / "out/attendance.csv").find("s001,Ada Lovelace,absent"), std::string::npos);
    ASSERT_EQ(run(base + " --config " + (dir / "strict.json") + " --sim-threshold 0.7"), 0);
    EXPECT_NE(test::read_file(dir / "out/attendance.csv").find("s001,Ada Lovelace,present"), std::string::npos);
}

TEST_F(Cli, RepeatedRunsAreByteIdentical)
{
    simulate();
    std::string outputs[2];
    for (int k = 0; k < 2; ++k) {
        const std::string out = dir / ("out" + std::to_string(k));
        ASSERT_EQ(run("run --input " + (dir / "sim/detections.jsonl") + " --gallery " + kData +
                      "/gallery.json --out-dir " + out),
                  0);
        for (const char* f : {"/tracks.jsonl", "/events.jsonl", "/attendance.csv", "/summary.json"})
            outputs[k] += test::read_file(out + f);
    }
    EXPECT_EQ(outputs[0], outputs[1]);
}

TEST_F(Cli, ServesStatusOverHttp)
{
    simulate();
    const int port = 20000 + static_cast<int>(::getpid() % 20000);
    const std::string cmd = "'" + kCli + "' run --input - --gallery " + kData + "/gallery.json --out-dir " +
                            (dir / "out") + " --serve " + std::to_string(port) + " >/dev/null 2>&1";
    FILE* child = ::popen(cmd.c_str(), "w");
    ASSERT_NE(child, nullptr);
    const auto lines = test::lines_of(test::read_file(dir / "sim/detections.jsonl"));
    for (std::size_t i = 0; i < 60; ++i) std::fprintf(child, "%s\n", lines[i].c_str());
    std::fflush(child);

    httplib::Client client("127.0.0.1", port);
    json status;
    for (int attempt = 0; attempt < 100; ++attempt) {
        if (auto res = client.Get("/status"); res && res->status == 200) {
            status = json::parse(res->body);
            if (status.contains("students") && status["students"]["s001"]["present"] == true) break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    for (std::size_t i = 60; i < lines.size(); ++i) std::fprintf(child, "%s\n", lines[i].c_str());
    const int rc = ::pclose(child);
    ASSERT_TRUE(status.contains("session_id")) << "no status document served";
    EXPECT_EQ(status["students"]["s001"]["present"], true);
    EXPECT_EQ(status["students"]["s004"]["present"], false);
    EXPECT_TRUE(status.contains("open_event_count"));
    EXPECT_EQ(WEXITSTATUS(rc), 0);
}
