#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(METASLICING_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string config(const std::string& name) { return std::string(METASLICING_CONFIGS) + "/" + name; }

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("metaslicing_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string write_temp(const std::string& name, const std::string& text) {
    const auto p = fs::temp_directory_path() / name;
    std::ofstream(p) << text;
    return p.string();
}

}  // namespace

TEST(Cli, TrainSmokeRunCurveRows) {
    const auto dir = fresh_dir("train");
    const auto r = cli("train --config " + config("tiny_agent.json") + " --policy imsac --iterations 10 --out " +
                       dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_TRUE(fs::exists(dir / "checkpoint.txt"));
    const auto curve = slurp(dir / "learning_curve.csv");
    EXPECT_EQ(curve.rfind("# metaslicing-curve v1\nstep,eval_average_reward,epsilon\n", 0), 0u);
    // eval_interval 5000 > 10 iterations: only the step-0 snapshot.
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 3);
}

TEST(Cli, TrainIsReproducible) {
    const auto a = fresh_dir("repro_a"), b = fresh_dir("repro_b");
    const std::string common = "train --config " + config("tiny_agent.json") + " --policy imsac --iterations 600 --seed 3 --out ";
    ASSERT_EQ(cli(common + a.string()).code, 0);
    ASSERT_EQ(cli(common + b.string()).code, 0);
    EXPECT_EQ(slurp(a / "learning_curve.csv"), slurp(b / "learning_curve.csv"));
    EXPECT_EQ(slurp(a / "checkpoint.txt"), slurp(b / "checkpoint.txt"));
}

TEST(Cli, EvaluateWithCheckpoint) {
    const auto dir = fresh_dir("eval");
    ASSERT_EQ(cli("train --config " + config("tiny_agent.json") + " --policy imsac --iterations 50 --out " + dir.string()).code, 0);
    const auto r = cli("evaluate --config " + config("tiny_agent.json") + " --policy imsac --arrivals 2000 --checkpoint " +
                       (dir / "checkpoint.txt").string() + " --snapshot " + (dir / "snap.json").string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("policy,seed,arrivals"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "snap.json"));
    const auto missing = cli("evaluate --config " + config("tiny_agent.json") + " --policy imsac");
    EXPECT_NE(missing.code, 0);
    EXPECT_NE(missing.output.find("error:"), std::string::npos);
}

TEST(Cli, OracleRows) {
    auto r = cli("oracle --config " + config("tiny_oracle.json"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("# metaslicing-oracle v1"), std::string::npos);
    EXPECT_NE(r.output.find("\n1,1,1,0.5,0.5,0.5,"), std::string::npos);
    r = cli("oracle --config " + config("erlang_no_sharing.json"));
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("\n3,10,62.5,0.842918839557,"), std::string::npos);
}

TEST(Cli, OracleRefusesSharing) {
    const auto r = cli("oracle --config " + config("default.json"));
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("error: oracle requires sharing_enabled = false"), std::string::npos);
}

TEST(Cli, OracleRefusesLargeScenario) {
    const auto path = write_temp("metaslicing_large.json", R"({"sharing_enabled": false, "capacity_functions": 600})");
    const auto r = cli("oracle --config " + path);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("chain states"), std::string::npos);
}

TEST(Cli, ConfigErrorNamesField) {
    const auto path = write_temp("metaslicing_bad.json", R"({"arrival_rates": [60, -1, 25]})");
    const auto r = cli("evaluate --policy greedy --config " + path);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("error: config field 'arrival_rates'"), std::string::npos);
}

TEST(Cli, BadArgumentsFail) {
    EXPECT_NE(cli("").code, 0);
    EXPECT_NE(cli("evaluate --config /nonexistent.json --policy greedy").code, 0);
    EXPECT_NE(cli("evaluate --config " + config("default.json") + " --policy nope").code, 0);
}

TEST(Cli, SweepWritesCsvs) {
    const auto dir = fresh_dir("sweep");
    const auto spec = write_temp("metaslicing_sweep.json", R"({
        "scenario": {"arrival_rates": [60, 50, 40]},
        "training": {"iterations": 100, "hidden_layers": [8], "eval_interval": 0},
        "parameter": "r3", "values": [1, 10], "seeds": 2,
        "policies": ["greedy+mit", "imsac+mit"], "eval_arrivals": 300})");
    const auto r = cli("sweep --sweep " + spec + " --workers 2 --out " + dir.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const auto csv = slurp(dir / "sweep.csv");
    EXPECT_EQ(csv.rfind("# metaslicing-metrics v1\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2 + 2 * 2 * 2);
    EXPECT_EQ(csv.find("nan"), std::string::npos);
    EXPECT_EQ(csv.find("inf"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "summary.csv"));
    // Second run reuses the cached checkpoints and reproduces the file.
    ASSERT_EQ(cli("sweep --sweep " + spec + " --workers 1 --out " + dir.string()).code, 0);
    EXPECT_EQ(slurp(dir / "sweep.csv"), csv);
}
