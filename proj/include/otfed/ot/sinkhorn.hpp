#pragma once

#include "otfed/ot/coupling.hpp"

#include <cmath>
#include <limits>

namespace otfed::ot {

struct SinkhornOptions {
    double epsilon = 1.0;
    double tol = 1e-9;  // L1 marginal violation
    int max_iter = 10000;
};

namespace detail {

inline void check_marginal(const Vector& w, const char* name)
{
    require(w.size() >= 1, std::string("sinkhorn: empty marginal ") + name);
    require((w.array() > 0.0).all(), std::string("sinkhorn: marginal ") + name + " must be strictly positive");
    require(std::abs(w.sum() - 1.0) <= 1e-9, std::string("sinkhorn: marginal ") + name + " must sum to 1");
}

/// log(sum(exp(v))) for a dense expression, stable for very negative inputs.
template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) {
        return m;
    }
    return m + std::log((v.derived().array() - m).exp().sum());
}

} // namespace detail

/// Entropic OT via Sinkhorn-Knopp scaling, run on the dual potentials in the
/// log domain so that small epsilon does not overflow. The returned plan is
/// diag(u) K diag(v) with K = exp(-C/epsilon); column sums are exact after the
/// final half-step and the row violation is the reported residual.
inline Coupling sinkhorn(const CostMatrix& cost, const Vector& a, const Vector& b, const SinkhornOptions& opt = {})
{
    require(opt.epsilon > 0.0 && std::isfinite(opt.epsilon), "sinkhorn: epsilon must be positive");
    require(opt.tol > 0.0, "sinkhorn: tol must be positive");
    require(opt.max_iter >= 1, "sinkhorn: max_iter must be >= 1");
    detail::check_marginal(a, "a");
    detail::check_marginal(b, "b");
    require(cost.rows() == a.size() && cost.cols() == b.size(), "sinkhorn: cost shape does not match marginals");
    require(cost.values.allFinite(), "sinkhorn: cost has non-finite entries");

    const Eigen::Index n = a.size();
    const Eigen::Index m = b.size();
    const Eigen::ArrayXXd kernel_log = -cost.values.array() / opt.epsilon;
    const Eigen::ArrayXd log_a = a.array().log();
    const Eigen::ArrayXd log_b = b.array().log();

    // Potentials divided by epsilon.
    Eigen::ArrayXd f = Eigen::ArrayXd::Zero(n);
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(m);
    Eigen::ArrayXd row_lse(n);

    auto update_g = [&] {
        for (Eigen::Index j = 0; j < m; ++j) {
            g(j) = log_b(j) - detail::log_sum_exp(kernel_log.col(j) + f);
        }
    };

    update_g();
    int iter = 1;
    double violation = std::numeric_limits<double>::infinity();
    for (;; ++iter) {
        const Eigen::ArrayXXd shifted = kernel_log.rowwise() + g.transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            row_lse(i) = detail::log_sum_exp(shifted.row(i));
        }
        violation = ((f + row_lse).exp() - a.array()).abs().sum();
        if (violation <= opt.tol || iter >= opt.max_iter) {
            break;
        }
        f = log_a - row_lse;
        update_g();
    }

    if (violation > 100.0 * opt.tol) {
        throw Error("sinkhorn: no convergence after " + std::to_string(iter) +
                    " iterations (marginal violation " + std::to_string(violation) + ")");
    }

    Coupling out;
    out.plan = ((kernel_log.colwise() + f).rowwise() + g.transpose()).exp().matrix();
    out.row_marginal = a;
    out.col_marginal = b;
    out.epsilon = opt.epsilon;
    out.iterations = iter;
    out.marginal_violation = std::max(out.row_violation(), out.col_violation());
    out.converged = violation <= opt.tol;
    return out;
}

} // namespace otfed::ot
