#include "otfed/report.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace otfed;
using otfed::report::json;

namespace {

const std::string fixtures = OTFED_FIXTURES;

json small_synth_config()
{
    return json::parse(R"({
        "sources": {"synth": {"num_domains": 3, "classes": 2, "dim": 4, "samples_per_domain": 120,
                              "shift_scale": 3.0, "noise_sigma": 0.5, "class_separation": 3.0}},
        "validation_fraction": 0.25, "epsilon": 0.05, "eta": 5, "normalize_cost": true, "knn": 5,
        "rounds": 4, "selection_epochs": 5, "baselines": true, "seed": 3
    })");
}

pipeline::ExperimentConfig small_config(std::size_t threads = 1)
{
    pipeline::ExperimentConfig cfg;
    report::apply_config(small_synth_config(), cfg);
    cfg.threads = threads;
    return cfg;
}

} // namespace

TEST(Config, DefaultsAndOverrides)
{
    const auto cfg = small_config();
    ASSERT_TRUE(cfg.synth.has_value());
    EXPECT_EQ(cfg.synth->num_domains, 3);
    EXPECT_EQ(cfg.rounds, 4);
    EXPECT_EQ(cfg.patience, 3);  // untouched default
    EXPECT_EQ(cfg.aggregation, federation::Aggregation::accuracy);

    auto over = cfg;
    report::apply_config(json::parse(R"({"rounds": 9, "aggregation": "samples", "representation": "original"})"), over);
    EXPECT_EQ(over.rounds, 9);
    EXPECT_EQ(over.aggregation, federation::Aggregation::samples);
    EXPECT_EQ(over.representation, pipeline::RepresentationPolicy::original);
    EXPECT_EQ(over.knn, 5);

    report::apply_config(json::parse(R"({"sources": ["a.csv", "b.csv"], "target": "t.csv"})"), over);
    EXPECT_FALSE(over.synth.has_value());
    EXPECT_EQ(over.source_paths.size(), 2u);
}

TEST(Config, RejectsUnknownAndMistypedKeys)
{
    pipeline::ExperimentConfig cfg;
    EXPECT_THROW(report::apply_config(json::parse(R"({"epsilonn": 1})"), cfg), Error);
    EXPECT_THROW(report::apply_config(json::parse(R"({"rounds": "many"})"), cfg), Error);
    EXPECT_THROW(report::apply_config(json::parse(R"({"aggregation": "median"})"), cfg), Error);
    EXPECT_THROW(report::apply_config(json::parse(R"({"sources": {"synth": {"dims": 3}}})"), cfg), Error);
    EXPECT_THROW(report::apply_config(json::parse("[1, 2]"), cfg), Error);

    const auto dir = testing_support::scratch_dir("report_config");
    EXPECT_THROW(report::load_config(testing_support::write_text(dir / "bad.json", "{ nope")), Error);
    EXPECT_THROW(report::load_config((dir / "missing.json").string()), Error);
}

TEST(Config, EchoRoundTripsAndOmitsMachineSpecifics)
{
    auto cfg = small_config(7);
    cfg.output_dir = "/somewhere";
    const json echo = report::config_to_json(cfg);
    EXPECT_FALSE(echo.contains("threads"));
    EXPECT_FALSE(echo.contains("output_dir"));
    pipeline::ExperimentConfig back;
    report::apply_config(echo, back);
    EXPECT_EQ(report::config_to_json(back), echo);
}

TEST(Config, SynthSpecRoundTrip)
{
    SynthSpec s;
    s.classes = 5;
    s.rotation = true;
    const auto back = report::synth_from_json(report::synth_to_json(s));
    EXPECT_EQ(report::synth_to_json(back), report::synth_to_json(s));
}

TEST(Pipeline, ReportIsDeterministicAndComplete)
{
    const auto a = pipeline::run_cmda_ot(small_config(1));
    const auto b = pipeline::run_cmda_ot(small_config(4));
    const json ja = report::report_to_json(a);
    EXPECT_EQ(ja.dump(), report::report_to_json(b).dump());
    EXPECT_EQ(ja["history"].size(), 4u);
    EXPECT_EQ(ja["clients"].size(), 2u);
    EXPECT_EQ(a.num_classes, 2);
    EXPECT_EQ(a.validation_size + a.target_main_size, 120u);
    ASSERT_TRUE(a.final_target_accuracy.has_value());
    ASSERT_TRUE(a.baselines.has_value());
    EXPECT_EQ(a.baselines->source_only.size(), 2u);
    for (const auto& key : {"config", "num_classes", "clustering", "pseudo_labels", "clients", "history", "final", "baselines"}) {
        EXPECT_TRUE(ja.contains(key)) << key;
    }

    const auto dir = testing_support::scratch_dir("report_csv");
    report::write_accuracy_csv(a, (dir / "acc.csv").string());
    const auto text = testing_support::read_text(dir / "acc.csv");
    EXPECT_EQ(text.rfind("method,target\nCMDA-OT,", 0), 0u);
    EXPECT_NE(text.find("FedAvg-samples,"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(StatsOutput, JsonAndCdDiagram)
{
    const auto rep = stats::analyze(stats::load_accuracy_table(fixtures + "/vlsc_table.csv"));
    const json j = report::stat_report_to_json(rep);
    EXPECT_EQ(j["methods"].size(), 7u);
    EXPECT_EQ(j["methods"][6]["method"], "CMDA-OT");
    EXPECT_DOUBLE_EQ(j["methods"][6]["mean_rank"].get<double>(), 1.0);
    EXPECT_EQ(j["friedman"]["df"], 6);
    EXPECT_TRUE(j["reject_null"].get<bool>());
    EXPECT_EQ(j["groups"].size(), 3u);

    const auto dir = testing_support::scratch_dir("report_cd");
    report::write_cd_diagram_csv(rep, (dir / "cd.csv").string());
    const auto text = testing_support::read_text(dir / "cd.csv");
    EXPECT_EQ(text.rfind("kind,label,start,end\nrank,\"CMSD\",6.8,6.8\n", 0), 0u);
    EXPECT_NE(text.find("group,"), std::string::npos);
    EXPECT_NE(text.find("cd,critical_difference,0,"), std::string::npos);
}
