#pragma once

#include "otfed/clustering.hpp"
#include "otfed/data.hpp"
#include "otfed/federation.hpp"
#include "otfed/model.hpp"
#include "otfed/ot/classreg.hpp"
#include "otfed/ot/wasserstein.hpp"
#include "otfed/parallel.hpp"
#include "otfed/pseudolabel.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace otfed::pipeline {

enum class RepresentationPolicy { automatic, original, transported };

/// Everything a run needs. Transport and clustering defaults: entropy 50,
/// class regularisation 5000, 12 neighbours. The federation knobs are local
/// choices.
struct ExperimentConfig {
    std::vector<std::string> source_paths;
    std::optional<SynthSpec> synth;  // when set: domains 0..D-2 are sources, D-1 the target
    std::string target_path;
    std::optional<std::string> target_label_column;  // hidden truth, scoring only
    std::string source_label_column = "label";

    double validation_fraction = 0.10;
    double epsilon = 50.0;
    double eta = 5000.0;
    int outer_iters = 10;
    bool normalize_cost = false;
    bool standardize = false;
    int knn = 12;

    int rounds = 50;
    int local_epochs = 1;
    double learning_rate = 0.1;
    int batch_size = 32;
    double l2_penalty = 1e-4;
    int selection_epochs = 20;
    int patience = 3;
    federation::Aggregation aggregation = federation::Aggregation::accuracy;
    RepresentationPolicy representation = RepresentationPolicy::automatic;
    bool baselines = false;

    std::uint64_t seed = 0;
    std::size_t threads = thread_limit();
    std::string output_dir = ".";

    void validate() const
    {
        require(synth.has_value() || !source_paths.empty(), "config: need at least one source (paths or synth)");
        require(synth.has_value() || !target_path.empty(), "config: need a target path");
        if (synth) {
            synth->validate();
        }
        require(validation_fraction > 0.0 && validation_fraction < 1.0, "config: validation_fraction must lie in (0, 1)");
        require(epsilon > 0.0, "config: epsilon must be > 0");
        require(eta >= 0.0, "config: eta must be >= 0");
        require(outer_iters >= 1, "config: outer_iters must be >= 1");
        require(knn >= 1, "config: knn must be >= 1");
        require(rounds >= 1, "config: rounds must be >= 1");
        require(local_epochs >= 1 && selection_epochs >= 1, "config: epochs must be >= 1");
        require(learning_rate > 0.0, "config: learning_rate must be > 0");
        require(batch_size >= 1, "config: batch_size must be >= 1");
        require(l2_penalty >= 0.0, "config: l2_penalty must be >= 0");
        require(patience >= 0, "config: patience must be >= 0 (0 disables early stopping)");
        require(threads >= 1, "config: threads must be >= 1");
    }
};

/// Loaded (or generated) domains. The target's labels, if any, live only in
/// `target_truth` and are used for scoring, never for adaptation.
struct Inputs {
    std::vector<Dataset> sources;
    Dataset target;
    std::optional<Labels> target_truth;
};

inline Inputs load_inputs(const ExperimentConfig& cfg, const std::filesystem::path& base_dir = {})
{
    cfg.validate();
    Inputs in;
    if (cfg.synth) {
        auto domains = synth_multidomain(*cfg.synth, derive_seed(cfg.seed, "pipeline/synth"));
        Dataset target = std::move(domains.back());
        domains.pop_back();
        in.sources = std::move(domains);
        in.target_truth = target.labels;
        target.labels.reset();
        target.domain_id = "target";
        in.target = std::move(target);
        return in;
    }
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        const auto full = path.is_absolute() || base_dir.empty() ? path : base_dir / path;
        require(std::filesystem::exists(full), "input file not found: " + full.string());
        return full.string();
    };
    for (const auto& p : cfg.source_paths) {
        in.sources.push_back(load_dataset(resolve(p), cfg.source_label_column));
    }
    Dataset target = load_dataset(resolve(cfg.target_path), cfg.target_label_column);
    in.target_truth = target.labels;
    target.labels.reset();
    in.target = std::move(target);
    return in;
}

struct ClientSummary {
    std::string client_id;
    std::size_t samples = 0;
    double target_distance = 0.0;
    std::vector<int> correspondence;
    Matrix inner_costs;
    int transport_iterations = 0;
    int transport_outer_iterations = 0;
    double transport_marginal_violation = 0.0;
    double transport_purity = 0.0;
    std::optional<double> original_score;
    std::optional<double> transported_score;
    federation::DataChoice choice = federation::DataChoice::original;
    bool active_at_end = true;
};

struct Baselines {
    std::vector<std::pair<std::string, double>> source_only;  // target accuracy per source
    double fedavg_samples_original = 0.0;
};

struct ExperimentReport {
    ExperimentConfig config;
    int num_classes = 0;
    std::size_t target_main_size = 0;
    std::size_t validation_size = 0;
    double cluster_silhouette = 0.0;
    clustering::ClusterAssignment clusters;
    std::vector<int> final_mapping;
    std::vector<std::vector<pseudolabel::Vote>> vote_record;
    std::optional<double> pseudo_label_accuracy;
    std::vector<ClientSummary> clients;
    std::vector<federation::RoundRecord> history;
    double final_validation_accuracy = 0.0;       // against pseudo-labels
    std::optional<double> final_target_accuracy;  // against hidden truth (main split)
    std::optional<Baselines> baselines;
    model::ModelParams final_params;
};

namespace detail {

inline std::vector<std::string> unique_client_ids(const std::vector<Dataset>& sources)
{
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        std::string id = sources[i].domain_id.empty() ? "source" + std::to_string(i) : sources[i].domain_id;
        if (seen.contains(id)) {
            id += "#" + std::to_string(i);
        }
        seen.insert(id);
        ids.push_back(id);
    }
    return ids;
}

inline model::TrainConfig train_config(const ExperimentConfig& cfg, int epochs, std::uint64_t seed)
{
    model::TrainConfig t;
    t.learning_rate = cfg.learning_rate;
    t.epochs = epochs;
    t.batch_size = cfg.batch_size;
    t.l2_penalty = cfg.l2_penalty;
    t.seed = seed;
    return t;
}

} // namespace detail

/// Pseudo-labelling stage on its own: spectral clustering of the validation
/// subset, per-source HOT correspondence, vote, labelling.
struct PseudoLabelStage {
    clustering::ClusterAssignment clusters;
    std::vector<pseudolabel::Correspondence> correspondences;
    std::map<std::string, double> target_distances;
    pseudolabel::Correspondence final_map;
    pseudolabel::PseudoLabeledValidation validation;
};

inline PseudoLabelStage pseudo_label_validation(const std::vector<Dataset>& sources, const std::vector<std::string>& ids,
                                                const Matrix& validation_features, int k, int knn, std::uint64_t seed,
                                                std::size_t threads)
{
    require(!sources.empty() && sources.size() == ids.size(), "pseudo_label_validation: one id per source required");
    require(validation_features.rows() >= k, "pseudo_label_validation: fewer validation rows than classes");
    PseudoLabelStage st;
    clustering::SpectralOptions sopt;
    sopt.neighbors = std::min<int>(knn, static_cast<int>(validation_features.rows()) - 1);
    st.clusters = clustering::spectral_cluster(validation_features, k, derive_seed(seed, "pipeline/cluster"), sopt);

    const Vector cluster_masses = pseudolabel::label_masses(st.clusters.labels, k);
    const Dataset validation_set(validation_features, std::nullopt, "validation");
    st.correspondences.resize(sources.size());
    std::vector<double> distances(sources.size());
    parallel_for(
        sources.size(),
        [&](std::size_t i) {
            const Dataset& src = sources[i];
            const Matrix inner = pseudolabel::class_cluster_cost(src, validation_features, st.clusters,
                                                                 derive_seed(seed, "pipeline/hot", i));
            const Vector class_masses = pseudolabel::label_masses(*src.labels, k);
            st.correspondences[i] = pseudolabel::hot_correspondence(inner, class_masses, cluster_masses, ids[i]);
            distances[i] = ot::wasserstein_distance(src, validation_set, ot::WassersteinMode::exact(),
                                                    derive_seed(seed, "pipeline/distance", i));
        },
        threads);
    for (std::size_t i = 0; i < sources.size(); ++i) {
        st.target_distances[ids[i]] = distances[i];
    }
    st.final_map = pseudolabel::majority_vote(st.correspondences, st.target_distances);
    st.validation = pseudolabel::apply_pseudo_labels(st.clusters, st.final_map, validation_features, st.correspondences);
    return st;
}

/// Full two-phase adaptation: pseudo-label a target validation subset, adapt
/// each source by class-regularised OT, choose each client's representation,
/// then federate with validation-accuracy-weighted aggregation.
inline ExperimentReport run_cmda_ot(Inputs inputs, const ExperimentConfig& cfg)
{
    cfg.validate();
    require(!inputs.sources.empty(), "run_cmda_ot: no sources");
    for (const auto& s : inputs.sources) {
        s.require_labels("run_cmda_ot");
        require(s.dim() == inputs.target.dim(), "run_cmda_ot: source '" + s.domain_id + "' dimension differs from target");
    }
    if (cfg.standardize) {
        std::vector<Dataset> all = inputs.sources;
        all.push_back(inputs.target);
        all = standardize(inputs.target, all);
        inputs.target = std::move(all.back());
        all.pop_back();
        inputs.sources = std::move(all);
    }

    ExperimentReport report;
    report.config = cfg;
    int k = 0;
    for (const auto& s : inputs.sources) {
        k = std::max(k, num_classes(*s.labels));
    }
    report.num_classes = k;
    const auto ids = detail::unique_client_ids(inputs.sources);

    // Phase 0: target split and pseudo-labels.
    const auto split = split_target(inputs.target, cfg.validation_fraction, derive_seed(cfg.seed, "pipeline/split"));
    report.target_main_size = split.main.size();
    report.validation_size = split.validation.size();
    auto stage = pseudo_label_validation(inputs.sources, ids, split.validation.features, k, cfg.knn, cfg.seed, cfg.threads);
    report.clusters = stage.clusters;
    report.cluster_silhouette = clustering::silhouette(split.validation.features, stage.clusters.labels);
    report.final_mapping = stage.final_map.mapping;
    report.vote_record = stage.validation.vote_record;
    std::optional<Labels> main_truth;
    if (inputs.target_truth) {
        Labels val_truth;
        for (auto i : split.validation_index) {
            val_truth.push_back((*inputs.target_truth)[i]);
        }
        report.pseudo_label_accuracy = model::accuracy(stage.validation.pseudo_labels, val_truth);
        main_truth.emplace();
        for (auto i : split.main_index) {
            main_truth->push_back((*inputs.target_truth)[i]);
        }
    }

    // Phase 1: per-source class-regularised transport into the target space.
    ot::ClassRegConfig tcfg;
    tcfg.epsilon = cfg.epsilon;
    tcfg.eta = cfg.eta;
    tcfg.outer_iters = cfg.outer_iters;
    tcfg.normalize_cost = cfg.normalize_cost;
    report.clients.resize(inputs.sources.size());
    std::vector<std::optional<Dataset>> transported(inputs.sources.size());
    const bool need_transport = cfg.representation != RepresentationPolicy::original;
    parallel_for(
        inputs.sources.size(),
        [&](std::size_t i) {
            const Dataset& src = inputs.sources[i];
            auto& summary = report.clients[i];
            summary.client_id = ids[i];
            summary.samples = src.size();
            summary.target_distance = stage.target_distances.at(ids[i]);
            summary.correspondence = stage.correspondences[i].mapping;
            summary.inner_costs = stage.correspondences[i].inner_costs;
            if (!need_transport) {
                return;
            }
            const auto res = ot::class_regularized_transport(src, inputs.target.features, tcfg);
            summary.transport_iterations = res.coupling.iterations;
            summary.transport_outer_iterations = res.outer_iterations;
            summary.transport_marginal_violation = res.coupling.marginal_violation;
            summary.transport_purity = ot::column_class_purity(res.coupling.plan, *src.labels);
            transported[i] = Dataset(ot::barycentric_map(res.coupling, inputs.target.features), src.labels,
                                     src.domain_id + "/transported");
        },
        cfg.threads);

    std::vector<federation::ClientState> clients;
    for (std::size_t i = 0; i < inputs.sources.size(); ++i) {
        clients.emplace_back(ids[i], inputs.sources[i], std::move(transported[i]));
    }
    const auto select_cfg = detail::train_config(cfg, cfg.selection_epochs, derive_seed(cfg.seed, "pipeline/selection"));
    parallel_for(
        clients.size(),
        [&](std::size_t i) {
            auto& c = clients[i];
            switch (cfg.representation) {
            case RepresentationPolicy::automatic:
                federation::select_representation(c, stage.validation, select_cfg);
                break;
            case RepresentationPolicy::transported:
                c.choice = federation::DataChoice::transported;
                break;
            case RepresentationPolicy::original:
                c.choice = federation::DataChoice::original;
                break;
            }
        },
        cfg.threads);

    // Phase 2: federation.
    federation::ServerState server;
    server.global_params = model::init_params(static_cast<Eigen::Index>(inputs.target.dim()), k);
    server.validation = stage.validation;
    federation::FederationConfig fcfg;
    fcfg.rounds = cfg.rounds;
    fcfg.local = detail::train_config(cfg, cfg.local_epochs, derive_seed(cfg.seed, "pipeline/federation"));
    fcfg.patience = cfg.patience;
    fcfg.aggregation = cfg.aggregation;
    fcfg.threads = cfg.threads;
    federation::run_federation(server, clients, fcfg);

    for (std::size_t i = 0; i < clients.size(); ++i) {
        auto& s = report.clients[i];
        s.original_score = clients[i].original_score;
        s.transported_score = clients[i].transported_score;
        s.choice = clients[i].choice;
        s.active_at_end = clients[i].active;
    }
    report.history = server.history;
    report.final_params = server.global_params;
    report.final_validation_accuracy =
        model::accuracy(server.global_params, stage.validation.features, stage.validation.pseudo_labels);
    if (main_truth) {
        report.final_target_accuracy = model::accuracy(server.global_params, split.main.features, *main_truth);
    }

    if (cfg.baselines && main_truth) {
        Baselines b;
        const int total_epochs = cfg.rounds * cfg.local_epochs;
        const auto solo_cfg = detail::train_config(cfg, total_epochs, derive_seed(cfg.seed, "pipeline/source-only"));
        std::vector<double> solo(inputs.sources.size());
        parallel_for(
            inputs.sources.size(),
            [&](std::size_t i) {
                const auto p = model::train_sgd(model::init_params(static_cast<Eigen::Index>(inputs.target.dim()), k),
                                                inputs.sources[i], solo_cfg);
                solo[i] = model::accuracy(p, split.main.features, *main_truth);
            },
            cfg.threads);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            b.source_only.emplace_back(ids[i], solo[i]);
        }
        std::vector<federation::ClientState> plain;
        for (std::size_t i = 0; i < inputs.sources.size(); ++i) {
            plain.emplace_back(ids[i], inputs.sources[i]);
        }
        federation::ServerState fedavg;
        fedavg.global_params = model::init_params(static_cast<Eigen::Index>(inputs.target.dim()), k);
        fedavg.validation = stage.validation;
        auto fedavg_cfg = fcfg;
        fedavg_cfg.aggregation = federation::Aggregation::samples;
        fedavg_cfg.patience = 0;
        federation::run_federation(fedavg, plain, fedavg_cfg);
        b.fedavg_samples_original = model::accuracy(fedavg.global_params, split.main.features, *main_truth);
        report.baselines = std::move(b);
    }
    return report;
}

inline ExperimentReport run_cmda_ot(const ExperimentConfig& cfg, const std::filesystem::path& base_dir = {})
{
    return run_cmda_ot(load_inputs(cfg, base_dir), cfg);
}

} // namespace otfed::pipeline
