#include "otfed/pipeline.hpp"
#include "otfed/report.hpp"
#include "otfed/stats.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace otfed;
using report::json;

namespace {

void write_json(const json& j, const fs::path& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write file: " + path.string());
    out << j.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir)
{
    if (!dir.empty()) {
        fs::create_directories(dir);
    }
}

// Both spellings: --validation_fraction (config key) and --validation-fraction.
std::string names(const std::string& key)
{
    std::string dashed = key;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    return dashed == key ? "--" + key : "--" + key + ",--" + dashed;
}

struct RunArgs {
    std::string config_path;
    pipeline::ExperimentConfig flags;
    std::string aggregation;
    std::string representation;
    std::size_t threads = 0;
    std::vector<CLI::Option*> overrides;
};

void add_run(CLI::App& app, RunArgs& a)
{
    auto* run = app.add_subcommand("run", "Run the full adaptation + federation pipeline");
    run->add_option("-c,--config", a.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    auto& f = a.flags;
    auto& o = a.overrides;
    o.push_back(run->add_option(names("sources"), f.source_paths, "Labelled source CSVs"));
    o.push_back(run->add_option(names("target"), f.target_path, "Target CSV"));
    o.push_back(run->add_option(names("validation_fraction"), f.validation_fraction, "Target share used for validation"));
    o.push_back(run->add_option(names("epsilon"), f.epsilon, "Entropic regularisation"));
    o.push_back(run->add_option(names("eta"), f.eta, "Class regularisation weight"));
    o.push_back(run->add_option(names("outer_iters"), f.outer_iters, "Class-regularised outer iterations"));
    o.push_back(run->add_flag(names("normalize_cost"), f.normalize_cost, "Divide transport costs by their maximum"));
    o.push_back(run->add_flag(names("standardize"), f.standardize, "z-score all domains with target statistics"));
    o.push_back(run->add_option(names("knn"), f.knn, "Neighbours in the clustering graph"));
    o.push_back(run->add_option(names("rounds"), f.rounds, "Federated rounds"));
    o.push_back(run->add_option(names("local_epochs"), f.local_epochs, "Local epochs per round"));
    o.push_back(run->add_option(names("learning_rate"), f.learning_rate, "SGD step size"));
    o.push_back(run->add_option(names("batch_size"), f.batch_size, "SGD minibatch size"));
    o.push_back(run->add_option(names("l2_penalty"), f.l2_penalty, "Weight decay"));
    o.push_back(run->add_option(names("selection_epochs"), f.selection_epochs, "Epochs for the representation test"));
    o.push_back(run->add_option(names("patience"), f.patience, "Declining rounds before a client stops (0 = never)"));
    o.push_back(run->add_flag(names("baselines"), f.baselines, "Also run source-only and FedAvg baselines"));
    o.push_back(run->add_option(names("seed"), f.seed, "Top-level seed"));
    o.push_back(run->add_option("-o," + names("output_dir"), f.output_dir, "Directory for report.json etc."));
    o.push_back(run->add_option(names("target_label_column"), f.target_label_column,
                                "Hidden-truth column of the target CSV (scoring only)"));
    run->add_option(names("aggregation"), a.aggregation, "accuracy | samples")
        ->check(CLI::IsMember({"accuracy", "samples"}));
    run->add_option(names("representation"), a.representation, "auto | original | transported")
        ->check(CLI::IsMember({"auto", "original", "transported"}));
    run->add_option("--threads", a.threads, "Worker threads (capped by OTFED_THREADS)")->check(CLI::PositiveNumber);
}

int cmd_run(const RunArgs& a)
{
    pipeline::ExperimentConfig cfg;
    fs::path base_dir;
    if (!a.config_path.empty()) {
        cfg = report::load_config(a.config_path);
        base_dir = fs::path(a.config_path).parent_path();
    }
    // Flags beat the file: re-apply every option that was given.
    json over = json::object();
    const json flag_json = report::config_to_json(a.flags);
    for (const auto* opt : a.overrides) {
        if (opt->count() == 0) {
            continue;
        }
        std::string key = opt->get_name();
        key = key.substr(key.rfind("--") + 2);
        std::replace(key.begin(), key.end(), '-', '_');
        if (key == "output_dir") {
            cfg.output_dir = a.flags.output_dir;
        } else {
            over[key] = flag_json.at(key);
        }
    }
    if (!a.aggregation.empty()) {
        over["aggregation"] = a.aggregation;
    }
    if (!a.representation.empty()) {
        over["representation"] = a.representation;
    }
    report::apply_config(over, cfg);
    cfg.threads = a.threads > 0 ? capped_threads(a.threads) : thread_limit();

    const auto rep = pipeline::run_cmda_ot(cfg, base_dir);
    const fs::path out(cfg.output_dir);
    ensure_dir(out);
    write_json(report::report_to_json(rep), out / "report.json");
    report::write_accuracy_csv(rep, (out / "accuracy.csv").string());
    model::save_params(rep.final_params, (out / "model.bin").string());
    std::cout << "rounds: " << rep.history.size() << "\n"
              << "validation accuracy (pseudo-labels): " << rep.final_validation_accuracy << '\n';
    if (rep.final_target_accuracy) {
        std::cout << "target accuracy: " << *rep.final_target_accuracy << '\n';
    }
    std::cout << "wrote " << (out / "report.json").string() << '\n';
    return 0;
}

struct TransportArgs {
    std::string source, target, label_column = "label", output_dir = ".";
    double epsilon = 50.0, eta = 5000.0;
    int outer_iters = 10;
    bool normalize_cost = false;
};

int cmd_transport(const TransportArgs& a)
{
    const Dataset src = load_dataset(a.source, a.label_column);
    const Dataset tgt = load_dataset(a.target);
    ot::ClassRegConfig cfg;
    cfg.epsilon = a.epsilon;
    cfg.eta = a.eta;
    cfg.outer_iters = a.outer_iters;
    cfg.normalize_cost = a.normalize_cost;
    const auto res = ot::class_regularized_transport(src, tgt.features, cfg);
    const fs::path out(a.output_dir);
    ensure_dir(out);
    ot::export_coupling(res.coupling, (out / "coupling.csv").string(), (out / "coupling.json").string());
    Dataset moved(ot::barycentric_map(res.coupling, tgt.features), src.labels, src.domain_id + "_transported");
    save_dataset(moved, (out / "transported.csv").string());
    std::cout << "outer iterations: " << res.outer_iterations
              << ", marginal violation: " << res.coupling.marginal_violation
              << ", column purity: " << ot::column_class_purity(res.coupling.plan, *src.labels) << '\n';
    return 0;
}

struct ClusterArgs {
    std::string input, output = "clusters.csv";
    int k = 2, knn = 12;
    std::uint64_t seed = 0;
};

int cmd_cluster(const ClusterArgs& a)
{
    const Dataset ds = load_dataset(a.input);
    require(a.knn < static_cast<int>(ds.size()), "cluster: --knn must be smaller than the number of rows");
    clustering::SpectralOptions opt;
    opt.neighbors = a.knn;
    const auto res = clustering::spectral_cluster(ds.features, a.k, a.seed, opt);
    std::ofstream out(a.output);
    require(static_cast<bool>(out), "cannot write file: " + a.output);
    out << "index,cluster\n";
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
        out << i << ',' << res.labels[i] << '\n';
    }
    std::cout << "silhouette: " << clustering::silhouette(ds.features, res.labels) << '\n';
    return 0;
}

struct PseudoArgs {
    std::vector<std::string> sources;
    std::string validation, label_column = "label", output_dir = ".";
    int knn = 12;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

int cmd_pseudolabel(const PseudoArgs& a)
{
    std::vector<Dataset> sources;
    for (const auto& p : a.sources) {
        sources.push_back(load_dataset(p, a.label_column));
    }
    const Dataset val = load_dataset(a.validation);
    int k = 0;
    for (const auto& s : sources) {
        k = std::max(k, num_classes(*s.labels));
    }
    const auto ids = pipeline::detail::unique_client_ids(sources);
    const std::size_t threads = a.threads > 0 ? capped_threads(a.threads) : thread_limit();
    const auto st = pipeline::pseudo_label_validation(sources, ids, val.features, k, a.knn, a.seed, threads);

    const fs::path out(a.output_dir);
    ensure_dir(out);
    save_dataset(Dataset(val.features, st.validation.pseudo_labels, val.domain_id), (out / "pseudo_labels.csv").string());
    json corr = json::array();
    for (const auto& c : st.correspondences) {
        corr.push_back({{"client", c.client_id},
                        {"mapping", c.mapping},
                        {"target_distance", st.target_distances.at(c.client_id)}});
    }
    json votes = json::array();
    for (std::size_t t = 0; t < st.validation.vote_record.size(); ++t) {
        json v = json::object();
        for (const auto& vote : st.validation.vote_record[t]) {
            v[vote.client_id] = vote.class_id;
        }
        votes.push_back({{"cluster", t}, {"class", st.final_map.mapping[t]}, {"votes", v}});
    }
    write_json({{"clusters", st.clusters.labels}, {"correspondences", corr}, {"final", votes}}, out / "votes.json");
    std::cout << "wrote " << (out / "pseudo_labels.csv").string() << '\n';
    return 0;
}

struct StatsArgs {
    std::string table, output, cd_csv;
    double alpha = 0.05;
};

int cmd_stats(const StatsArgs& a)
{
    const auto table = stats::load_accuracy_table(a.table);
    const auto rep = stats::analyze(table, a.alpha);
    const json j = report::stat_report_to_json(rep);
    if (a.output.empty()) {
        std::cout << j.dump(2) << '\n';
    } else {
        write_json(j, a.output);
    }
    if (!a.cd_csv.empty()) {
        report::write_cd_diagram_csv(rep, a.cd_csv);
    }
    return 0;
}

struct SynthArgs {
    SynthSpec spec;
    std::uint64_t seed = 0;
    std::string output_dir = ".";
};

int cmd_synth(const SynthArgs& a)
{
    a.spec.validate();
    const auto domains = synth_multidomain(a.spec, a.seed);
    const fs::path out(a.output_dir);
    ensure_dir(out);
    for (const auto& d : domains) {
        save_dataset(d, (out / (d.domain_id + ".csv")).string());
    }
    std::cout << "wrote " << domains.size() << " domains to " << out.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-source domain adaptation with optimal transport and federated aggregation"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    RunArgs run;
    add_run(app, run);

    TransportArgs tr;
    auto* transport = app.add_subcommand("transport", "Class-regularised transport of one source onto a target");
    transport->add_option("--source", tr.source, "Labelled source CSV")->required()->check(CLI::ExistingFile);
    transport->add_option("--target", tr.target, "Target CSV")->required()->check(CLI::ExistingFile);
    transport->add_option("--label_column,--label-column", tr.label_column, "Source label column");
    transport->add_option("--epsilon", tr.epsilon, "Entropic regularisation")->capture_default_str();
    transport->add_option("--eta", tr.eta, "Class regularisation weight")->capture_default_str();
    transport->add_option("--outer_iters,--outer-iters", tr.outer_iters, "Outer iterations")->capture_default_str();
    transport->add_flag("--normalize_cost,--normalize-cost", tr.normalize_cost, "Divide costs by their maximum");
    transport->add_option("-o,--output_dir,--output-dir", tr.output_dir, "Output directory");

    ClusterArgs cl;
    auto* cluster = app.add_subcommand("cluster", "Spectral clustering of a feature CSV");
    cluster->add_option("--input", cl.input, "Feature CSV")->required()->check(CLI::ExistingFile);
    cluster->add_option("-k,--k", cl.k, "Number of clusters")->required()->check(CLI::PositiveNumber);
    cluster->add_option("--knn", cl.knn, "Graph neighbours")->capture_default_str()->check(CLI::PositiveNumber);
    cluster->add_option("--seed", cl.seed, "Seed");
    cluster->add_option("-o,--output", cl.output, "Assignment CSV (index,cluster)");

    PseudoArgs pl;
    auto* pseudo = app.add_subcommand("pseudolabel", "Pseudo-label a validation CSV from labelled sources");
    pseudo->add_option("--sources", pl.sources, "Labelled source CSVs")->required()->check(CLI::ExistingFile);
    pseudo->add_option("--validation", pl.validation, "Unlabelled validation CSV")->required()->check(CLI::ExistingFile);
    pseudo->add_option("--label_column,--label-column", pl.label_column, "Source label column");
    pseudo->add_option("--knn", pl.knn, "Graph neighbours")->capture_default_str()->check(CLI::PositiveNumber);
    pseudo->add_option("--seed", pl.seed, "Seed");
    pseudo->add_option("--threads", pl.threads, "Worker threads (capped by OTFED_THREADS)")->check(CLI::PositiveNumber);
    pseudo->add_option("-o,--output_dir,--output-dir", pl.output_dir, "Output directory");

    StatsArgs st;
    auto* stat = app.add_subcommand("stats", "Friedman / Nemenyi analysis of an accuracy table");
    stat->add_option("--table", st.table, "CSV: method,<sample>,...")->required()->check(CLI::ExistingFile);
    stat->add_option("--alpha", st.alpha, "Significance level (0.05 only)")->capture_default_str();
    stat->add_option("-o,--output", st.output, "Report JSON (stdout when omitted)");
    stat->add_option("--cd_csv,--cd-csv", st.cd_csv, "Critical-difference diagram data CSV");

    SynthArgs sy;
    auto* synth = app.add_subcommand("synth", "Generate shifted multi-domain Gaussian data");
    synth->add_option("--num_domains,--num-domains", sy.spec.num_domains)->capture_default_str();
    synth->add_option("--classes", sy.spec.classes)->capture_default_str();
    synth->add_option("--dim", sy.spec.dim)->capture_default_str();
    synth->add_option("--samples_per_domain,--samples-per-domain", sy.spec.samples_per_domain)->capture_default_str();
    synth->add_option("--shift_scale,--shift-scale", sy.spec.shift_scale)->capture_default_str();
    synth->add_flag("--rotation", sy.spec.rotation, "Random rotation per domain");
    synth->add_option("--noise_sigma,--noise-sigma", sy.spec.noise_sigma)->capture_default_str();
    synth->add_option("--class_separation,--class-separation", sy.spec.class_separation)->capture_default_str();
    synth->add_option("--seed", sy.seed, "Seed");
    synth->add_option("-o,--output_dir,--output-dir", sy.output_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand("run")) {
            return cmd_run(run);
        }
        if (app.got_subcommand(transport)) {
            return cmd_transport(tr);
        }
        if (app.got_subcommand(cluster)) {
            return cmd_cluster(cl);
        }
        if (app.got_subcommand(pseudo)) {
            return cmd_pseudolabel(pl);
        }
        if (app.got_subcommand(stat)) {
            return cmd_stats(st);
        }
        if (app.got_subcommand(synth)) {
            return cmd_synth(sy);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
