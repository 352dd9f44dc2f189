#pragma once

#include "otfed/ot/coupling.hpp"

namespace otfed::ot {

inline CostMatrix cost_matrix(const Matrix& x, const Matrix& y, Metric metric = Metric::squared_euclidean)
{
    require(x.cols() == y.cols(), "cost_matrix: dimension mismatch (" + std::to_string(x.cols()) + " vs " +
                                      std::to_string(y.cols()) + ")");
    Matrix c(x.rows(), y.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < y.rows(); ++j) {
            const double sq = (x.row(i) - y.row(j)).squaredNorm();
            c(i, j) = metric == Metric::squared_euclidean ? sq : std::sqrt(sq);
        }
    }
    return {std::move(c), metric};
}

/// Divides by the largest entry (no-op for an all-zero matrix).
inline CostMatrix normalized(CostMatrix cost)
{
    const double m = cost.values.size() ? cost.values.maxCoeff() : 0.0;
    if (m > 0.0) {
        cost.values /= m;
    }
    return cost;
}

} // namespace otfed::ot
