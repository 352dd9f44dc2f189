#pragma once

// JSON/CSV front matter for configs and reports. Needs nlohmann/json.

#include "otfed/pipeline.hpp"
#include "otfed/stats.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>

namespace otfed::report {

using nlohmann::json;
using otfed::detail::format_double;

namespace detail {

inline federation::Aggregation parse_aggregation(const std::string& s)
{
    if (s == "accuracy") {
        return federation::Aggregation::accuracy;
    }
    if (s == "samples") {
        return federation::Aggregation::samples;
    }
    throw Error("config: aggregation must be \"accuracy\" or \"samples\", got \"" + s + "\"");
}

inline pipeline::RepresentationPolicy parse_representation(const std::string& s)
{
    if (s == "auto") {
        return pipeline::RepresentationPolicy::automatic;
    }
    if (s == "original") {
        return pipeline::RepresentationPolicy::original;
    }
    if (s == "transported") {
        return pipeline::RepresentationPolicy::transported;
    }
    throw Error("config: representation must be \"auto\", \"original\" or \"transported\", got \"" + s + "\"");
}

inline const char* representation_name(pipeline::RepresentationPolicy p)
{
    switch (p) {
    case pipeline::RepresentationPolicy::automatic:
        return "auto";
    case pipeline::RepresentationPolicy::original:
        return "original";
    case pipeline::RepresentationPolicy::transported:
        return "transported";
    }
    return "auto";
}

template <typename T>
void read(const json& j, const char* key, T& out)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

inline json matrix_json(const Matrix& m)
{
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace detail

inline SynthSpec synth_from_json(const json& j)
{
    static const std::set<std::string> known = {"num_domains", "classes",     "dim",          "samples_per_domain",
                                                "shift_scale", "rotation",    "noise_sigma",  "class_separation"};
    require(j.is_object(), "config: synth spec must be an object");
    for (const auto& [key, _] : j.items()) {
        require(known.contains(key), "config: unknown synth key '" + key + "'");
    }
    SynthSpec s;
    detail::read(j, "num_domains", s.num_domains);
    detail::read(j, "classes", s.classes);
    detail::read(j, "dim", s.dim);
    detail::read(j, "samples_per_domain", s.samples_per_domain);
    detail::read(j, "shift_scale", s.shift_scale);
    detail::read(j, "rotation", s.rotation);
    detail::read(j, "noise_sigma", s.noise_sigma);
    detail::read(j, "class_separation", s.class_separation);
    s.validate();
    return s;
}

inline json synth_to_json(const SynthSpec& s)
{
    return {{"num_domains", s.num_domains}, {"classes", s.classes},         {"dim", s.dim},
            {"samples_per_domain", s.samples_per_domain}, {"shift_scale", s.shift_scale},
            {"rotation", s.rotation},       {"noise_sigma", s.noise_sigma}, {"class_separation", s.class_separation}};
}

/// Applies the keys present in `j` on top of `cfg`. Unknown keys are rejected.
inline void apply_config(const json& j, pipeline::ExperimentConfig& cfg)
{
    static const std::set<std::string> known = {
        "sources",        "target",      "target_label_column", "source_label_column", "validation_fraction",
        "epsilon",        "eta",         "outer_iters",         "normalize_cost",      "standardize",
        "knn",            "rounds",      "local_epochs",        "learning_rate",       "batch_size",
        "l2_penalty",     "selection_epochs", "patience",       "aggregation",         "representation",
        "baselines",      "seed",        "output_dir"};
    require(j.is_object(), "config: top level must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        require(known.contains(key), "config: unknown key '" + key + "'");
    }
    if (j.contains("sources")) {
        const auto& s = j.at("sources");
        if (s.is_object()) {
            require(s.contains("synth") && s.size() == 1, "config: sources object must be {\"synth\": {...}}");
            cfg.synth = synth_from_json(s.at("synth"));
            cfg.source_paths.clear();
        } else {
            require(s.is_array(), "config: sources must be a list of CSV paths or {\"synth\": {...}}");
            cfg.source_paths.clear();
            for (const auto& p : s) {
                require(p.is_string(), "config: source paths must be strings");
                cfg.source_paths.push_back(p.get<std::string>());
            }
            cfg.synth.reset();
        }
    }
    detail::read(j, "target", cfg.target_path);
    if (j.contains("target_label_column")) {
        const auto& t = j.at("target_label_column");
        if (t.is_null()) {
            cfg.target_label_column.reset();
        } else {
            require(t.is_string(), "config: target_label_column must be a string or null");
            cfg.target_label_column = t.get<std::string>();
        }
    }
    detail::read(j, "source_label_column", cfg.source_label_column);
    detail::read(j, "validation_fraction", cfg.validation_fraction);
    detail::read(j, "epsilon", cfg.epsilon);
    detail::read(j, "eta", cfg.eta);
    detail::read(j, "outer_iters", cfg.outer_iters);
    detail::read(j, "normalize_cost", cfg.normalize_cost);
    detail::read(j, "standardize", cfg.standardize);
    detail::read(j, "knn", cfg.knn);
    detail::read(j, "rounds", cfg.rounds);
    detail::read(j, "local_epochs", cfg.local_epochs);
    detail::read(j, "learning_rate", cfg.learning_rate);
    detail::read(j, "batch_size", cfg.batch_size);
    detail::read(j, "l2_penalty", cfg.l2_penalty);
    detail::read(j, "selection_epochs", cfg.selection_epochs);
    detail::read(j, "patience", cfg.patience);
    detail::read(j, "baselines", cfg.baselines);
    detail::read(j, "seed", cfg.seed);
    detail::read(j, "output_dir", cfg.output_dir);
    if (j.contains("aggregation")) {
        std::string a;
        detail::read(j, "aggregation", a);
        cfg.aggregation = detail::parse_aggregation(a);
    }
    if (j.contains("representation")) {
        std::string r;
        detail::read(j, "representation", r);
        cfg.representation = detail::parse_representation(r);
    }
}

inline pipeline::ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(path + ": invalid JSON: " + e.what());
    }
    pipeline::ExperimentConfig cfg;
    apply_config(j, cfg);
    return cfg;
}

/// Config echo. Thread count and output location are deliberately left out so
/// reports compare equal across machines and runs.
inline json config_to_json(const pipeline::ExperimentConfig& c)
{
    json j;
    if (c.synth) {
        j["sources"] = {{"synth", synth_to_json(*c.synth)}};
    } else {
        j["sources"] = c.source_paths;
        j["target"] = c.target_path;
    }
    j["target_label_column"] = c.target_label_column ? json(*c.target_label_column) : json(nullptr);
    j["source_label_column"] = c.source_label_column;
    j["validation_fraction"] = c.validation_fraction;
    j["epsilon"] = c.epsilon;
    j["eta"] = c.eta;
    j["outer_iters"] = c.outer_iters;
    j["normalize_cost"] = c.normalize_cost;
    j["standardize"] = c.standardize;
    j["knn"] = c.knn;
    j["rounds"] = c.rounds;
    j["local_epochs"] = c.local_epochs;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["l2_penalty"] = c.l2_penalty;
    j["selection_epochs"] = c.selection_epochs;
    j["patience"] = c.patience;
    j["aggregation"] = c.aggregation == federation::Aggregation::accuracy ? "accuracy" : "samples";
    j["representation"] = detail::representation_name(c.representation);
    j["baselines"] = c.baselines;
    j["seed"] = c.seed;
    return j;
}

inline json report_to_json(const pipeline::ExperimentReport& r)
{
    json j;
    j["config"] = config_to_json(r.config);
    j["num_classes"] = r.num_classes;
    j["target_main_size"] = r.target_main_size;
    j["validation_size"] = r.validation_size;
    j["clustering"] = {{"silhouette", r.cluster_silhouette}, {"inertia", r.clusters.inertia}, {"labels", r.clusters.labels}};
    json votes = json::array();
    for (std::size_t t = 0; t < r.vote_record.size(); ++t) {
        json entry = json::object();
        for (const auto& v : r.vote_record[t]) {
            entry[v.client_id] = v.class_id;
        }
        votes.push_back({{"cluster", t}, {"class", r.final_mapping[t]}, {"votes", entry}});
    }
    j["pseudo_labels"] = {{"mapping", votes},
                          {"accuracy_vs_truth", r.pseudo_label_accuracy ? json(*r.pseudo_label_accuracy) : json(nullptr)}};
    json clients = json::array();
    for (const auto& c : r.clients) {
        clients.push_back({{"id", c.client_id},
                           {"samples", c.samples},
                           {"target_distance", c.target_distance},
                           {"correspondence", c.correspondence},
                           {"inner_costs", detail::matrix_json(c.inner_costs)},
                           {"transport",
                            {{"sinkhorn_iterations", c.transport_iterations},
                             {"outer_iterations", c.transport_outer_iterations},
                             {"marginal_violation", c.transport_marginal_violation},
                             {"column_class_purity", c.transport_purity}}},
                           {"original_score", c.original_score ? json(*c.original_score) : json(nullptr)},
                           {"transported_score", c.transported_score ? json(*c.transported_score) : json(nullptr)},
                           {"representation", federation::choice_name(c.choice)},
                           {"active_at_end", c.active_at_end}});
    }
    j["clients"] = clients;
    json history = json::array();
    for (const auto& h : r.history) {
        json entries = json::array();
        for (const auto& e : h.clients) {
            entries.push_back({{"id", e.client_id},
                               {"validation_accuracy", e.validation_accuracy},
                               {"coefficient", e.coefficient},
                               {"active_after", e.active_after}});
        }
        history.push_back({{"round", h.round},
                           {"halted", h.halted},
                           {"fallback_to_samples", h.fallback_to_samples},
                           {"global_validation_accuracy", h.global_validation_accuracy},
                           {"clients", entries}});
    }
    j["history"] = history;
    j["final"] = {{"validation_accuracy_pseudo", r.final_validation_accuracy},
                  {"target_accuracy", r.final_target_accuracy ? json(*r.final_target_accuracy) : json(nullptr)}};
    if (r.baselines) {
        json solo = json::object();
        for (const auto& [id, acc] : r.baselines->source_only) {
            solo[id] = acc;
        }
        j["baselines"] = {{"source_only", solo}, {"fedavg_samples_original", r.baselines->fedavg_samples_original}};
    }
    return j;
}

/// Methods as rows, the target as the single sample column (percent).
inline void write_accuracy_csv(const pipeline::ExperimentReport& r, const std::string& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write file: " + path);
    out << "method,target\n";
    const double scale = 100.0;
    if (r.final_target_accuracy) {
        out << "CMDA-OT," << format_double(scale * *r.final_target_accuracy) << '\n';
    } else {
        out << "CMDA-OT (pseudo-labels)," << format_double(scale * r.final_validation_accuracy) << '\n';
    }
    if (r.baselines) {
        for (const auto& [id, acc] : r.baselines->source_only) {
            out << "source-only:" << id << ',' << format_double(scale * acc) << '\n';
        }
        out << "FedAvg-samples," << format_double(scale * r.baselines->fedavg_samples_original) << '\n';
    }
}

inline json stat_report_to_json(const stats::StatReport& s)
{
    json methods = json::array();
    for (std::size_t m = 0; m < s.methods.size(); ++m) {
        methods.push_back({{"method", s.methods[m]},
                           {"mean_rank", s.mean_ranks(static_cast<Eigen::Index>(m))},
                           {"median", s.summaries[m].median},
                           {"mad", s.summaries[m].mad}});
    }
    json groups = json::array();
    for (const auto& g : s.groups) {
        json names = json::array();
        for (auto m : g) {
            names.push_back(s.methods[m]);
        }
        groups.push_back(names);
    }
    return {{"methods", methods},
            {"friedman", {{"statistic", s.friedman.statistic}, {"p_value", s.friedman.p_value}, {"df", s.friedman.df}}},
            {"alpha", s.alpha},
            {"reject_null", s.reject_null},
            {"critical_difference", s.cd},
            {"groups", groups}};
}

/// Critical-difference diagram data: one `rank` row per method, one `group`
/// row per non-singleton group (span of mean ranks it covers).
inline void write_cd_diagram_csv(const stats::StatReport& s, const std::string& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write file: " + path);
    out << "kind,label,start,end\n";
    for (std::size_t m = 0; m < s.methods.size(); ++m) {
        const double r = s.mean_ranks(static_cast<Eigen::Index>(m));
        out << "rank,\"" << s.methods[m] << "\"," << format_double(r) << ',' << format_double(r) << '\n';
    }
    for (std::size_t g = 0; g < s.groups.size(); ++g) {
        if (s.groups[g].size() < 2) {
            continue;
        }
        double lo = s.mean_ranks(static_cast<Eigen::Index>(s.groups[g].front()));
        double hi = lo;
        for (auto m : s.groups[g]) {
            lo = std::min(lo, s.mean_ranks(static_cast<Eigen::Index>(m)));
            hi = std::max(hi, s.mean_ranks(static_cast<Eigen::Index>(m)));
        }
        out << "group,g" << g << ',' << format_double(lo) << ',' << format_double(hi) << '\n';
    }
    out << "cd,critical_difference,0," << format_double(s.cd) << '\n';
}

} // namespace otfed::report
