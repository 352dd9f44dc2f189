#pragma once

#include "otfed/ot/coupling.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace otfed::ot {

struct Assignment {
    std::vector<int> col_of_row;
    double cost = 0.0;
};

namespace detail {

struct HungarianResult {
    std::vector<int> col_of_row;
    std::vector<double> u;  // row potentials
    std::vector<double> v;  // column potentials
};

/// O(n^3) shortest-augmenting-path Hungarian method (Kuhn-Munkres with
/// potentials). Reduced costs c_ij - u_i - v_j are >= 0 and vanish on the
/// returned matching.
inline HungarianResult hungarian(const Matrix& c)
{
    const auto n = static_cast<int>(c.rows());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    HungarianResult r;
    r.col_of_row.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        r.col_of_row[p[j] - 1] = j - 1;
    }
    r.u.assign(u.begin() + 1, u.end());
    r.v.assign(v.begin() + 1, v.end());
    return r;
}

/// Moves a perfect matching of the tight-edge graph to the lexicographically
/// smallest one. Every perfect matching on tight edges is optimal, so this
/// only breaks ties between optima.
class LexMinMatcher {
public:
    LexMinMatcher(std::vector<std::vector<int>> tight, std::vector<int> col_of_row)
        : tight_(std::move(tight)), col_of_row_(std::move(col_of_row))
    {
        const auto n = col_of_row_.size();
        row_of_col_.assign(n, -1);
        for (std::size_t i = 0; i < n; ++i) {
            row_of_col_[static_cast<std::size_t>(col_of_row_[i])] = static_cast<int>(i);
        }
        fixed_row_.assign(n, 0);
        fixed_col_.assign(n, 0);
    }

    std::vector<int> run()
    {
        const auto n = col_of_row_.size();
        for (std::size_t i = 0; i < n; ++i) {
            for (int j : tight_[i]) {
                if (fixed_col_[static_cast<std::size_t>(j)]) {
                    continue;
                }
                if (j == col_of_row_[i]) {
                    break;
                }
                if (try_take(static_cast<int>(i), j)) {
                    break;
                }
            }
            fixed_row_[i] = 1;
            fixed_col_[static_cast<std::size_t>(col_of_row_[i])] = 1;
        }
        return col_of_row_;
    }

private:
    bool try_take(int row, int col)
    {
        const int displaced = row_of_col_[static_cast<std::size_t>(col)];
        const int freed = col_of_row_[static_cast<std::size_t>(row)];
        visited_.assign(col_of_row_.size(), 0);
        visited_[static_cast<std::size_t>(col)] = 1;
        blocked_row_ = row;
        if (!reroute(displaced, freed)) {
            return false;
        }
        col_of_row_[static_cast<std::size_t>(row)] = col;
        row_of_col_[static_cast<std::size_t>(col)] = row;
        return true;
    }

    // Finds an alternating path moving `r` onto tight columns and ending at `target`.
    bool reroute(int r, int target)
    {
        for (int c : tight_[static_cast<std::size_t>(r)]) {
            const auto cu = static_cast<std::size_t>(c);
            if (fixed_col_[cu] || visited_[cu]) {
                continue;
            }
            visited_[cu] = 1;
            if (c == target) {
                col_of_row_[static_cast<std::size_t>(r)] = c;
                row_of_col_[cu] = r;
                return true;
            }
            const int owner = row_of_col_[cu];
            if (owner == blocked_row_ || fixed_row_[static_cast<std::size_t>(owner)]) {
                continue;
            }
            if (reroute(owner, target)) {
                col_of_row_[static_cast<std::size_t>(r)] = c;
                row_of_col_[cu] = r;
                return true;
            }
        }
        return false;
    }

    std::vector<std::vector<int>> tight_;
    std::vector<int> col_of_row_;
    std::vector<int> row_of_col_;
    std::vector<char> fixed_row_;
    std::vector<char> fixed_col_;
    std::vector<char> visited_;
    int blocked_row_ = -1;
};

} // namespace detail

/// Minimum-cost perfect assignment of a square cost matrix. Among optimal
/// permutations the lexicographically smallest (by col_of_row) is returned.
inline Assignment solve_assignment(const Matrix& cost)
{
    require(cost.rows() == cost.cols(), "exact_ot_assignment: cost must be square, got " + std::to_string(cost.rows()) +
                                            "x" + std::to_string(cost.cols()));
    require(cost.rows() >= 1, "exact_ot_assignment: empty cost");
    require(cost.allFinite(), "exact_ot_assignment: cost has non-finite entries");
    const auto n = static_cast<std::size_t>(cost.rows());
    auto h = detail::hungarian(cost);

    const double tol = 1e-9 * std::max(1.0, cost.cwiseAbs().maxCoeff());
    std::vector<std::vector<int>> tight(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double reduced = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - h.u[i] - h.v[j];
            if (reduced <= tol || static_cast<int>(j) == h.col_of_row[i]) {
                tight[i].push_back(static_cast<int>(j));
            }
        }
    }
    Assignment a;
    a.col_of_row = detail::LexMinMatcher(std::move(tight), std::move(h.col_of_row)).run();
    for (std::size_t i = 0; i < n; ++i) {
        a.cost += cost(static_cast<Eigen::Index>(i), a.col_of_row[i]);
    }
    return a;
}

/// Exact OT between uniform measures of equal size: a permutation coupling
/// with mass 1/n on each matched pair.
inline Coupling exact_ot_assignment(const CostMatrix& cost)
{
    const auto a = solve_assignment(cost.values);
    const Eigen::Index n = cost.rows();
    Coupling out;
    out.plan = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.plan(i, a.col_of_row[static_cast<std::size_t>(i)]) = 1.0 / static_cast<double>(n);
    }
    out.row_marginal = uniform_weights(n);
    out.col_marginal = uniform_weights(n);
    out.marginal_violation = std::max(out.row_violation(), out.col_violation());
    return out;
}

} // namespace otfed::ot
