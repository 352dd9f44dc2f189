#pragma once

#include "otfed/clustering.hpp"
#include "otfed/data.hpp"
#include "otfed/ot/assignment.hpp"
#include "otfed/ot/sinkhorn.hpp"
#include "otfed/ot/wasserstein.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace otfed::pseudolabel {

/// Cluster -> class mapping obtained by one client, with the class x cluster
/// inner Wasserstein costs it was derived from.
struct Correspondence {
    std::vector<int> mapping;  // mapping[cluster] = class
    Matrix inner_costs;        // rows: source classes, cols: clusters
    std::string client_id;
};

struct Vote {
    std::string client_id;
    int class_id = 0;
};

struct PseudoLabeledValidation {
    Matrix features;
    Labels pseudo_labels;
    std::vector<std::vector<Vote>> vote_record;  // indexed by cluster id
};

/// Inner HOT costs: exact W2^2 between every source class and every cluster.
/// Uneven sizes are equalised by seeded subsampling of the larger set.
inline Matrix class_cluster_cost(const Dataset& source, const Matrix& validation_features,
                                 const clustering::ClusterAssignment& clusters, std::uint64_t seed = 0)
{
    const Labels& labels = source.require_labels("class_cluster_cost");
    require(clusters.labels.size() == static_cast<std::size_t>(validation_features.rows()),
            "class_cluster_cost: clusters do not cover the validation rows");
    const int ks = num_classes(labels);
    const int kt = clusters.k;
    std::vector<std::vector<std::size_t>> class_rows(static_cast<std::size_t>(ks));
    std::vector<std::vector<std::size_t>> cluster_rows(static_cast<std::size_t>(kt));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        class_rows[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (std::size_t i = 0; i < clusters.labels.size(); ++i) {
        cluster_rows[static_cast<std::size_t>(clusters.labels[i])].push_back(i);
    }
    Matrix cost(ks, kt);
    for (int c = 0; c < ks; ++c) {
        require(!class_rows[static_cast<std::size_t>(c)].empty(), "class_cluster_cost: class " + std::to_string(c) + " is empty");
        const Matrix xc = select_rows(source.features, class_rows[static_cast<std::size_t>(c)]);
        for (int t = 0; t < kt; ++t) {
            require(!cluster_rows[static_cast<std::size_t>(t)].empty(),
                    "class_cluster_cost: cluster " + std::to_string(t) + " is empty");
            const Matrix xt = select_rows(validation_features, cluster_rows[static_cast<std::size_t>(t)]);
            cost(c, t) = ot::wasserstein_exact(xc, xt, derive_seed(seed, "hot/inner", static_cast<std::uint64_t>(c * kt + t)));
        }
    }
    return cost;
}

/// Outer HOT problem over the inner cost matrix. Square problems with uniform
/// masses are solved as an assignment (a bijection); otherwise Sinkhorn with
/// epsilon = 1e-2 * max(inner_costs) and each cluster takes the class holding
/// the largest share of its column.
inline Correspondence hot_correspondence(const Matrix& inner_costs, const Vector& class_masses, const Vector& cluster_masses,
                                         std::string client_id = {})
{
    require(inner_costs.rows() == class_masses.size() && inner_costs.cols() == cluster_masses.size(),
            "hot_correspondence: mass vectors do not match cost shape");
    for (const Vector* m : {&class_masses, &cluster_masses}) {
        require(m->size() >= 1 && (m->array() > 0.0).all() && std::abs(m->sum() - 1.0) <= 1e-9,
                "hot_correspondence: masses must be positive and sum to 1");
    }
    Correspondence out;
    out.inner_costs = inner_costs;
    out.client_id = std::move(client_id);
    const Eigen::Index ks = inner_costs.rows();
    const Eigen::Index kt = inner_costs.cols();
    out.mapping.assign(static_cast<std::size_t>(kt), 0);

    if (ks == kt && ot::detail::is_uniform(class_masses) && ot::detail::is_uniform(cluster_masses)) {
        // Rows are classes; transpose so each cluster row picks a class.
        const auto a = ot::solve_assignment(inner_costs.transpose());
        for (Eigen::Index t = 0; t < kt; ++t) {
            out.mapping[static_cast<std::size_t>(t)] = a.col_of_row[static_cast<std::size_t>(t)];
        }
        return out;
    }
    const double scale = inner_costs.maxCoeff();
    const double eps = scale > 0.0 ? 1e-2 * scale : 1.0;
    const auto plan = ot::sinkhorn({inner_costs, ot::Metric::squared_euclidean}, class_masses, cluster_masses,
                                   {eps, 1e-6, 100000})
                          .plan;
    for (Eigen::Index t = 0; t < kt; ++t) {
        Eigen::Index best = 0;
        plan.col(t).maxCoeff(&best);
        out.mapping[static_cast<std::size_t>(t)] = static_cast<int>(best);
    }
    return out;
}

/// Per-cluster reconciliation of client correspondences.
///   1 client  -> its mapping;
///   2 clients -> the whole mapping of the client closest to the target;
///   3+        -> modal class per cluster, ties settled by the closest client
///                among those voting for a tied class.
/// "Closest" is the smallest entry of `client_target_distances` (earliest in
/// input order on equal distances).
inline Correspondence majority_vote(const std::vector<Correspondence>& correspondences,
                                    const std::map<std::string, double>& client_target_distances)
{
    require(!correspondences.empty(), "majority_vote: no correspondences");
    const std::size_t kt = correspondences.front().mapping.size();
    std::vector<double> dist;
    for (const auto& c : correspondences) {
        require(c.mapping.size() == kt, "majority_vote: correspondences disagree on cluster count");
        const auto it = client_target_distances.find(c.client_id);
        require(it != client_target_distances.end(), "majority_vote: no target distance for client '" + c.client_id + "'");
        dist.push_back(it->second);
    }
    std::vector<std::size_t> by_distance(correspondences.size());
    std::iota(by_distance.begin(), by_distance.end(), std::size_t{0});
    std::stable_sort(by_distance.begin(), by_distance.end(), [&](auto a, auto b) { return dist[a] < dist[b]; });
    const auto& closest = correspondences[by_distance.front()];

    if (correspondences.size() <= 2) {
        Correspondence out = closest;
        out.client_id = "vote";
        return out;
    }
    Correspondence out;
    out.client_id = "vote";
    out.mapping.assign(kt, 0);
    for (std::size_t t = 0; t < kt; ++t) {
        std::map<int, int> tally;
        for (const auto& c : correspondences) {
            ++tally[c.mapping[t]];
        }
        int top = 0;
        for (const auto& [cls, n] : tally) {
            top = std::max(top, n);
        }
        for (auto idx : by_distance) {
            const int cls = correspondences[idx].mapping[t];
            if (tally[cls] == top) {
                out.mapping[t] = cls;
                break;
            }
        }
    }
    return out;
}

/// Labels every validation row with final.mapping[cluster]; the vote record
/// keeps each client's choice per cluster.
inline PseudoLabeledValidation apply_pseudo_labels(const clustering::ClusterAssignment& clusters, const Correspondence& final_map,
                                                   const Matrix& validation_features,
                                                   const std::vector<Correspondence>& client_votes = {})
{
    require(clusters.labels.size() == static_cast<std::size_t>(validation_features.rows()),
            "apply_pseudo_labels: cluster labels do not cover the validation rows");
    PseudoLabeledValidation out;
    out.features = validation_features;
    out.pseudo_labels.reserve(clusters.labels.size());
    for (int c : clusters.labels) {
        require(c >= 0 && static_cast<std::size_t>(c) < final_map.mapping.size(),
                "apply_pseudo_labels: cluster " + std::to_string(c) + " has no mapping");
        out.pseudo_labels.push_back(final_map.mapping[static_cast<std::size_t>(c)]);
    }
    out.vote_record.resize(final_map.mapping.size());
    for (const auto& corr : client_votes) {
        for (std::size_t t = 0; t < out.vote_record.size() && t < corr.mapping.size(); ++t) {
            out.vote_record[t].push_back({corr.client_id, corr.mapping[t]});
        }
    }
    return out;
}

/// Inner cost matrix as CSV (rows: classes, columns: clusters), for heat maps.
inline void export_correspondence(const Correspondence& c, const std::string& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write file: " + path);
    out.precision(17);
    out << "class";
    for (Eigen::Index t = 0; t < c.inner_costs.cols(); ++t) {
        out << ",cluster" << t;
    }
    out << '\n';
    for (Eigen::Index r = 0; r < c.inner_costs.rows(); ++r) {
        out << r;
        for (Eigen::Index t = 0; t < c.inner_costs.cols(); ++t) {
            out << ',' << c.inner_costs(r, t);
        }
        out << '\n';
    }
}

/// Cluster (or class) proportions as a mass vector of length k.
inline Vector label_masses(const Labels& labels, int k)
{
    Vector m = Vector::Zero(k);
    for (int y : labels) {
        m(y) += 1.0;
    }
    return m / static_cast<double>(labels.size());
}

} // namespace otfed::pseudolabel
