#pragma once

#include "otfed/data.hpp"
#include "otfed/ot/assignment.hpp"
#include "otfed/ot/cost.hpp"
#include "otfed/ot/sinkhorn.hpp"
#include "otfed/random.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>

namespace otfed::ot {

struct WassersteinMode {
    enum class Kind { exact_assignment, entropic } kind = Kind::exact_assignment;
    double epsilon = 1.0;  // entropic only

    static WassersteinMode exact() { return {}; }
    static WassersteinMode entropic(double eps) { return {Kind::entropic, eps}; }
};

namespace detail {

/// `count` distinct rows drawn uniformly, returned in ascending order.
inline std::vector<std::size_t> subsample_rows(std::size_t n, std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "wasserstein/subsample"));
    rng.shuffle(idx);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline bool is_uniform(const Vector& w)
{
    return ((w.array() - 1.0 / static_cast<double>(w.size())).abs() <= 1e-12).all();
}

} // namespace detail

/// Squared-Euclidean W2^2 between two uniform point clouds solved as an
/// assignment problem. The larger cloud is subsampled (seeded) to the size of
/// the smaller one.
inline double wasserstein_exact(const Matrix& x, const Matrix& y, std::uint64_t seed = 0)
{
    require(x.rows() >= 1 && y.rows() >= 1, "wasserstein_distance: empty point set");
    require(x.cols() == y.cols(), "wasserstein_distance: dimension mismatch");
    const auto nx = static_cast<std::size_t>(x.rows());
    const auto ny = static_cast<std::size_t>(y.rows());
    if (nx == ny) {
        return transport_cost(exact_ot_assignment(cost_matrix(x, y)), cost_matrix(x, y));
    }
    if (nx > ny) {
        const Matrix xs = select_rows(x, detail::subsample_rows(nx, ny, seed));
        return wasserstein_exact(xs, y, seed);
    }
    const Matrix ys = select_rows(y, detail::subsample_rows(ny, nx, seed));
    return wasserstein_exact(x, ys, seed);
}

/// Transport cost of the optimal (exact mode) or entropic plan under the
/// squared-Euclidean ground cost. The entropic value is biased upward by the
/// blur of the plan and is not zero for identical inputs.
inline double wasserstein_distance(const Dataset& a, const Dataset& b, WassersteinMode mode = WassersteinMode::exact(),
                                   std::uint64_t seed = 0)
{
    require(a.size() >= 1 && b.size() >= 1, "wasserstein_distance: empty dataset");
    require(a.dim() == b.dim(), "wasserstein_distance: dimension mismatch");
    if (mode.kind == WassersteinMode::Kind::exact_assignment) {
        require(detail::is_uniform(a.weights) && detail::is_uniform(b.weights),
                "wasserstein_distance: exact mode needs uniform weights");
        return wasserstein_exact(a.features, b.features, seed);
    }
    const auto cost = cost_matrix(a.features, b.features);
    SinkhornOptions opt;
    opt.epsilon = mode.epsilon;
    return transport_cost(sinkhorn(cost, a.weights, b.weights, opt), cost);
}

/// Maps each source row to the plan-weighted average of the target rows.
inline Matrix barycentric_map(const Coupling& coupling, const Matrix& target)
{
    require(coupling.plan.cols() == target.rows(), "barycentric_map: plan columns do not match target rows");
    const Vector mass = coupling.plan.rowwise().sum();
    for (Eigen::Index i = 0; i < mass.size(); ++i) {
        require(mass(i) > 0.0, "barycentric_map: zero mass in plan row " + std::to_string(i));
    }
    return mass.cwiseInverse().asDiagonal() * (coupling.plan * target);
}

} // namespace otfed::ot
