#pragma once

#include "otfed/data.hpp"
#include "otfed/ot/cost.hpp"
#include "otfed/ot/sinkhorn.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace otfed::ot {

struct ClassRegConfig {
    double epsilon = 50.0;
    double eta = 5000.0;
    int outer_iters = 10;
    double inner_tol = 1e-9;
    int inner_max_iter = 10000;
    double outer_tol = 1e-6;
    /// Divide the ground cost by its maximum before solving.
    bool normalize_cost = false;

    void validate() const
    {
        require(epsilon > 0.0, "class-regularized transport: epsilon must be > 0");
        require(eta >= 0.0, "class-regularized transport: eta must be >= 0");
        require(outer_iters >= 1, "class-regularized transport: outer_iters must be >= 1");
        require(inner_tol > 0.0 && outer_tol > 0.0, "class-regularized transport: tolerances must be > 0");
    }
};

/// Smoothing floor on group norms.
inline constexpr double group_norm_floor = 1e-12;

namespace detail {

/// Per (class, column) l2 norms of the plan restricted to the class rows.
inline Matrix class_column_norms(const Matrix& plan, const Labels& labels, int k)
{
    Matrix sq = Matrix::Zero(k, plan.cols());
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        sq.row(labels[static_cast<std::size_t>(i)]) += plan.row(i).cwiseAbs2();
    }
    return sq.cwiseSqrt();
}

} // namespace detail

/// Sum over target columns and source classes of ||plan(I_c, j)||_2.
inline double group_lasso_penalty(const Matrix& plan, const Labels& labels)
{
    return detail::class_column_norms(plan, labels, num_classes(labels)).sum();
}

/// Gradient of the l1-l2 penalty at `plan`:
///   G_ij = plan_ij / (||plan(I_c(i), j)||_2 + delta)
/// with c(i) the class of source row i and delta = group_norm_floor. Linearising
/// the penalty with G turns each outer step into a plain Sinkhorn problem on
/// the cost C + eta * G.
inline Matrix group_norm_majorizer(const Matrix& plan, const Labels& labels)
{
    require(static_cast<std::size_t>(plan.rows()) == labels.size(), "group_norm_majorizer: label count mismatch");
    const Matrix norms = detail::class_column_norms(plan, labels, num_classes(labels));
    Matrix g(plan.rows(), plan.cols());
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        const auto c = labels[static_cast<std::size_t>(i)];
        g.row(i) = plan.row(i).array() / (norms.row(c).array() + group_norm_floor);
    }
    return g;
}

/// <C, plan> + epsilon * sum plan log plan + eta * penalty.
inline double class_reg_objective(const Matrix& plan, const Matrix& cost, const Labels& labels, double epsilon, double eta)
{
    double neg_entropy = 0.0;
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        for (Eigen::Index i = 0; i < plan.rows(); ++i) {
            const double p = plan(i, j);
            if (p > 0.0) {
                neg_entropy += p * std::log(p);
            }
        }
    }
    return (plan.array() * cost.array()).sum() + epsilon * neg_entropy + eta * group_lasso_penalty(plan, labels);
}

/// Mean over target columns of the largest single-class share of that column's mass.
inline double column_class_purity(const Matrix& plan, const Labels& labels)
{
    const int k = num_classes(labels);
    Matrix mass = Matrix::Zero(k, plan.cols());
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
        mass.row(labels[static_cast<std::size_t>(i)]) += plan.row(i);
    }
    double total = 0.0;
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
        const double col = mass.col(j).sum();
        total += col > 0.0 ? mass.col(j).maxCoeff() / col : 0.0;
    }
    return total / static_cast<double>(plan.cols());
}

struct ClassRegResult {
    Coupling coupling;
    std::vector<double> objective_history;  // entry 0 is the plain Sinkhorn start
    int outer_iterations = 0;
};

/// Entropic OT with l1-l2 class (group-lasso) regularisation:
///   min <C, plan> - epsilon * H(plan) + eta * sum_j sum_c ||plan(I_c, j)||_2
///
/// Majorise-minimise over Sinkhorn. Each outer step replaces the penalty by
/// its linearisation G at the current plan plus a KL proximity term
/// lambda * KL(plan || current), which is again an entropic OT problem:
///   cost C + eta * G - lambda * log(current), regularisation epsilon + lambda.
/// A step is accepted only if the true objective does not increase; otherwise
/// lambda is doubled and the step retried. Accepted steps halve lambda.
inline ClassRegResult class_regularized_transport(const Dataset& source, const Matrix& target_features,
                                                   const ClassRegConfig& cfg)
{
    cfg.validate();
    const Labels& labels = source.require_labels("class_regularized_transport");
    require(source.dim() == static_cast<std::size_t>(target_features.cols()),
            "class_regularized_transport: dimension mismatch");
    require(target_features.rows() >= 1, "class_regularized_transport: empty target");

    auto cost = cost_matrix(source.features, target_features);
    if (cfg.normalize_cost) {
        cost = normalized(std::move(cost));
    }
    const Vector b = uniform_weights(target_features.rows());
    const SinkhornOptions inner{cfg.epsilon, cfg.inner_tol, cfg.inner_max_iter};

    ClassRegResult result;
    result.coupling = sinkhorn(cost, source.weights, b, inner);
    Matrix plan = result.coupling.plan;
    double objective = class_reg_objective(plan, cost.values, labels, cfg.epsilon, cfg.eta);
    result.objective_history.push_back(objective);
    if (cfg.eta == 0.0) {
        return result;
    }

    constexpr int max_backtracks = 30;
    int total_inner = result.coupling.iterations;
    double lambda = std::max(cfg.eta, cfg.epsilon);
    for (int outer = 0; outer < cfg.outer_iters; ++outer) {
        const Matrix gradient = group_norm_majorizer(plan, labels);
        const Matrix log_plan = plan.array().max(std::numeric_limits<double>::min()).log().matrix();
        bool accepted = false;
        double change = 0.0;
        for (int attempt = 0; attempt < max_backtracks && !accepted; ++attempt) {
            CostMatrix surrogate{cost.values + cfg.eta * gradient - lambda * log_plan, cost.metric};
            surrogate.values.array() -= surrogate.values.minCoeff();
            const Coupling step = sinkhorn(surrogate, source.weights, b, {cfg.epsilon + lambda, cfg.inner_tol, cfg.inner_max_iter});
            total_inner += step.iterations;
            const double step_objective = class_reg_objective(step.plan, cost.values, labels, cfg.epsilon, cfg.eta);
            if (step_objective <= objective) {
                change = (step.plan - plan).lpNorm<1>();
                plan = step.plan;
                objective = step_objective;
                lambda *= 0.5;
                accepted = true;
            } else {
                lambda *= 2.0;
            }
        }
        result.objective_history.push_back(objective);
        result.outer_iterations = outer + 1;
        if (!accepted || change < cfg.outer_tol) {
            break;
        }
    }

    result.coupling.plan = plan;
    result.coupling.iterations = total_inner;
    result.coupling.marginal_violation = std::max(result.coupling.row_violation(), result.coupling.col_violation());
    return result;
}

} // namespace otfed::ot
