#include "support.hpp"

#include <json.hpp>
#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string cli = OTFED_CLI;
const std::string fixtures = OTFED_FIXTURES;

struct Result {
    int code = 0;
    std::string output;
};

// Runs the CLI with stdout and stderr captured into one file.
Result run(const std::string& args, const fs::path& dir, const std::string& env = "")
{
    const auto log = dir / "cli.log";
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" + cli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = testing_support::read_text(log);
    return r;
}

std::string small_config(const fs::path& dir, int rounds = 3)
{
    std::ostringstream s;
    s << R"({"sources": {"synth": {"num_domains": 3, "classes": 2, "dim": 4, "samples_per_domain": 120,
            "shift_scale": 3.0, "noise_sigma": 0.5, "class_separation": 3.0}},
            "validation_fraction": 0.25, "epsilon": 0.05, "eta": 5, "normalize_cost": true, "knn": 5,
            "rounds": )"
      << rounds << R"(, "selection_epochs": 5, "seed": 2})";
    return testing_support::write_text(dir / "cfg.json", s.str());
}

// Copies a labelled CSV without its trailing label column.
std::string strip_labels(const fs::path& in, const fs::path& out)
{
    std::istringstream src(testing_support::read_text(in));
    std::ostringstream dst;
    std::string line;
    while (std::getline(src, line)) {
        dst << line.substr(0, line.rfind(',')) << '\n';
    }
    return testing_support::write_text(out, dst.str());
}

} // namespace

TEST(Cli, RunWritesReportWithFullHistory)
{
    const auto dir = testing_support::scratch_dir("cli_run");
    const auto r = run("run -c \"" + small_config(dir, 4) + "\" -o \"" + (dir / "out").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto report = json::parse(testing_support::read_text(dir / "out" / "report.json"));
    EXPECT_EQ(report["history"].size(), 4u);
    EXPECT_TRUE(fs::exists(dir / "out" / "accuracy.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "model.bin"));
}

TEST(Cli, FlagsOverrideConfig)
{
    const auto dir = testing_support::scratch_dir("cli_override");
    const auto r = run("run -c \"" + small_config(dir, 4) + "\" --rounds 2 --aggregation samples -o \"" +
                           (dir / "out").string() + "\"",
                       dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto report = json::parse(testing_support::read_text(dir / "out" / "report.json"));
    EXPECT_EQ(report["history"].size(), 2u);
    EXPECT_EQ(report["config"]["aggregation"], "samples");
}

TEST(Cli, ByteIdenticalAcrossRunsAndThreadCounts)
{
    const auto dir = testing_support::scratch_dir("cli_determinism");
    const auto cfg = small_config(dir);
    ASSERT_EQ(run("run -c \"" + cfg + "\" --threads 1 -o \"" + (dir / "a").string() + "\"", dir).code, 0);
    ASSERT_EQ(run("run -c \"" + cfg + "\" --threads 1 -o \"" + (dir / "b").string() + "\"", dir).code, 0);
    ASSERT_EQ(run("run -c \"" + cfg + "\" --threads 8 -o \"" + (dir / "c").string() + "\"", dir).code, 0);
    ASSERT_EQ(run("run -c \"" + cfg + "\" -o \"" + (dir / "d").string() + "\"", dir, "OTFED_THREADS=3").code, 0);
    const auto a = testing_support::read_text(dir / "a" / "report.json");
    EXPECT_FALSE(a.empty());
    for (const char* other : {"b", "c", "d"}) {
        EXPECT_EQ(a, testing_support::read_text(dir / other / "report.json")) << other;
        EXPECT_EQ(testing_support::read_text(dir / "a" / "model.bin"), testing_support::read_text(dir / other / "model.bin"));
    }
}

TEST(Cli, MissingInputNamesThePath)
{
    const auto dir = testing_support::scratch_dir("cli_missing");
    const auto cfg = testing_support::write_text(
        dir / "cfg.json", R"({"sources": ["nowhere/source.csv"], "target": "nowhere/target.csv"})");
    const auto r = run("run -c \"" + cfg + "\" -o \"" + (dir / "out").string() + "\"", dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("nowhere/source.csv"), std::string::npos) << r.output;
}

TEST(Cli, BadFlagPrintsUsage)
{
    const auto dir = testing_support::scratch_dir("cli_badflag");
    const auto r = run("run --no-such-flag 3", dir);
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("no-such-flag"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("--config"), std::string::npos) << r.output;

    const auto unknown_key = testing_support::write_text(dir / "cfg.json", R"({"roundz": 3})");
    const auto k = run("run -c \"" + unknown_key + "\"", dir);
    EXPECT_NE(k.code, 0);
    EXPECT_NE(k.output.find("roundz"), std::string::npos) << k.output;

    EXPECT_NE(run("", dir).code, 0);
}

TEST(Cli, StatsOnFixtureTables)
{
    const auto dir = testing_support::scratch_dir("cli_stats");
    const auto r = run("stats --table \"" + fixtures + "/vlsc_table.csv\" --cd_csv \"" + (dir / "cd.csv").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto j = json::parse(r.output);
    const std::vector<double> vlsc_mr = {6.8, 6.2, 4.6, 4.0, 3.0, 2.4, 1.0};
    for (std::size_t i = 0; i < vlsc_mr.size(); ++i) {
        EXPECT_NEAR(j["methods"][i]["mean_rank"].get<double>(), vlsc_mr[i], 1e-9);
    }
    EXPECT_TRUE(fs::exists(dir / "cd.csv"));

    ASSERT_EQ(run("stats --table \"" + fixtures + "/office_table.csv\" -o \"" + (dir / "office.json").string() + "\"", dir).code, 0);
    const auto o = json::parse(testing_support::read_text(dir / "office.json"));
    const std::vector<double> office_mr = {6.0, 4.1, 4.1, 3.1, 1.7, 2.0};
    for (std::size_t i = 0; i < office_mr.size(); ++i) {
        EXPECT_NEAR(o["methods"][i]["mean_rank"].get<double>(), office_mr[i], 1e-9);
    }

    const auto two = run("stats --table \"" + fixtures + "/two_methods.csv\"", dir);
    ASSERT_EQ(two.code, 0) << two.output;
    EXPECT_EQ(json::parse(two.output)["methods"].size(), 2u);
}

TEST(Cli, SynthClusterTransportPseudolabel)
{
    const auto dir = testing_support::scratch_dir("cli_tools");
    const auto data = dir / "data";
    ASSERT_EQ(run("synth --num_domains 3 --classes 2 --dim 3 --samples_per_domain 80 --noise_sigma 0.5 --seed 4 -o \"" +
                      data.string() + "\"",
                  dir)
                  .code,
              0);
    for (const char* f : {"domain0.csv", "domain1.csv", "domain2.csv"}) {
        ASSERT_TRUE(fs::exists(data / f)) << f;
    }
    const auto target = strip_labels(data / "domain2.csv", dir / "target.csv");

    const auto c = run("cluster --input \"" + target + "\" -k 2 --knn 5 -o \"" + (dir / "clusters.csv").string() + "\"", dir);
    ASSERT_EQ(c.code, 0) << c.output;
    EXPECT_EQ(testing_support::read_text(dir / "clusters.csv").rfind("index,cluster\n", 0), 0u);

    const auto t = run("transport --source \"" + (data / "domain0.csv").string() + "\" --target \"" + target +
                           "\" --epsilon 0.05 --eta 5 --normalize_cost -o \"" + (dir / "ot").string() + "\"",
                       dir);
    ASSERT_EQ(t.code, 0) << t.output;
    for (const char* f : {"coupling.csv", "coupling.json", "transported.csv"}) {
        EXPECT_TRUE(fs::exists(dir / "ot" / f)) << f;
    }

    const auto p = run("pseudolabel --sources \"" + (data / "domain0.csv").string() + "\" \"" +
                           (data / "domain1.csv").string() + "\" --validation \"" + target + "\" --knn 5 -o \"" +
                           (dir / "pl").string() + "\"",
                       dir);
    ASSERT_EQ(p.code, 0) << p.output;
    EXPECT_TRUE(fs::exists(dir / "pl" / "pseudo_labels.csv"));
    const auto votes = json::parse(testing_support::read_text(dir / "pl" / "votes.json"));
    EXPECT_EQ(votes["final"].size(), 2u);
}

TEST(Cli, RunFromCsvPaths)
{
    const auto dir = testing_support::scratch_dir("cli_csv_run");
    ASSERT_EQ(run("synth --num_domains 3 --classes 2 --dim 3 --samples_per_domain 100 --noise_sigma 0.5 --seed 5 -o \"" +
                      dir.string() + "\"",
                  dir)
                  .code,
              0);
    const auto cfg = testing_support::write_text(dir / "cfg.json", R"({
        "sources": ["domain0.csv", "domain1.csv"], "target": "domain2.csv", "target_label_column": "label",
        "validation_fraction": 0.25, "epsilon": 0.05, "eta": 5, "normalize_cost": true, "knn": 5, "rounds": 2})");
    const auto r = run("run -c \"" + cfg + "\" -o \"" + (dir / "out").string() + "\"", dir);
    ASSERT_EQ(r.code, 0) << r.output;
    const auto report = json::parse(testing_support::read_text(dir / "out" / "report.json"));
    EXPECT_TRUE(report["final"]["target_accuracy"].is_number());
}
