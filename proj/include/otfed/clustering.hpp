#pragma once

#include "otfed/common.hpp"
#include "otfed/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace otfed::clustering {

struct ClusterAssignment {
    Labels labels;
    int k = 0;
    double inertia = 0.0;
    std::vector<double> inertia_trace;  // per Lloyd iteration of the winning restart
};

// ---------------------------------------------------------------------------
// Graph construction
// ---------------------------------------------------------------------------

/// Binary kNN adjacency (ties broken by lower index), symmetrised by OR.
inline Matrix knn_graph(const Matrix& x, int neighbors)
{
    const Eigen::Index n = x.rows();
    require(neighbors >= 1, "knn_graph: neighbors must be >= 1");
    require(neighbors < n, "knn_graph: neighbors (" + std::to_string(neighbors) + ") must be < number of points (" +
                               std::to_string(n) + ")");
    Matrix adj = Matrix::Zero(n, n);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            dist[static_cast<std::size_t>(j)] = (x.row(i) - x.row(j)).squaredNorm();
        }
        order.resize(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::erase(order, i);
        std::partial_sort(order.begin(), order.begin() + neighbors, order.end(), [&](Eigen::Index a, Eigen::Index b) {
            const double da = dist[static_cast<std::size_t>(a)];
            const double db = dist[static_cast<std::size_t>(b)];
            return da < db || (da == db && a < b);
        });
        for (int t = 0; t < neighbors; ++t) {
            const auto j = order[static_cast<std::size_t>(t)];
            adj(i, j) = 1.0;
            adj(j, i) = 1.0;
        }
    }
    return adj;
}

/// L = D - A, or L_sym = I - D^-1/2 A D^-1/2 with D^-1/2 = 0 on isolated vertices.
inline Matrix laplacian(const Matrix& adjacency, bool normalized)
{
    require(adjacency.rows() == adjacency.cols(), "laplacian: adjacency must be square");
    require((adjacency - adjacency.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "laplacian: adjacency must be symmetric");
    const Vector degree = adjacency.rowwise().sum();
    if (!normalized) {
        Matrix l = -adjacency;
        l.diagonal() += degree;
        return l;
    }
    const Vector inv_sqrt = degree.unaryExpr([](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; });
    Matrix l = -(inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal());
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        l(i, i) += degree(i) > 0.0 ? 1.0 : 0.0;
    }
    return l;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigensolver
// ---------------------------------------------------------------------------

struct EigenDecomposition {
    Vector values;   // ascending
    Matrix vectors;  // column i pairs with values(i)
};

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations,
/// sweeping until the off-diagonal Frobenius norm drops below
/// 1e-10 * max(1, ||A||_F). Columns are sorted by ascending eigenvalue
/// (stable on ties) and signed so the first nonzero component is positive.
inline EigenDecomposition jacobi_eigen(const Matrix& sym)
{
    require(sym.rows() == sym.cols(), "jacobi_eigen: matrix must be square");
    require((sym - sym.transpose()).cwiseAbs().maxCoeff() <= 1e-9, "jacobi_eigen: matrix must be symmetric");
    const Eigen::Index n = sym.rows();
    Matrix a = 0.5 * (sym + sym.transpose());
    Matrix v = Matrix::Identity(n, n);
    const double threshold = 1e-10 * std::max(1.0, a.norm());

    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                s += 2.0 * a(p, q) * a(p, q);
            }
        }
        return std::sqrt(s);
    };

    constexpr int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps && off_norm() >= threshold; ++sweep) {
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < std::numeric_limits<double>::min()) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double arp = a(r, p);
                    const double arq = a(r, q);
                    a(r, p) = c * arp - s * arq;
                    a(r, q) = s * arp + c * arq;
                }
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double apr = a(p, r);
                    const double aqr = a(q, r);
                    a(p, r) = c * apr - s * aqr;
                    a(q, r) = s * apr + c * aqr;
                }
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double vrp = v(r, p);
                    const double vrq = v(r, q);
                    v(r, p) = c * vrp - s * vrq;
                    v(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }
    if (off_norm() >= threshold) {
        throw Error("jacobi_eigen: no convergence");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
    EigenDecomposition out{Vector(n), Matrix(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto src = order[static_cast<std::size_t>(i)];
        out.values(i) = a(src, src);
        Vector col = v.col(src);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(col(r)) > 1e-12) {
                if (col(r) < 0.0) {
                    col = -col;
                }
                break;
            }
        }
        out.vectors.col(i) = col;
    }
    return out;
}

/// Eigenvectors of the k smallest eigenvalues.
inline EigenDecomposition smallest_eigenvectors(const Matrix& sym, int k)
{
    require(k >= 1 && k <= sym.rows(), "smallest_eigenvectors: k must lie in [1, n]");
    auto full = jacobi_eigen(sym);
    return {full.values.head(k), full.vectors.leftCols(k)};
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansOptions {
    int restarts = 10;
    int max_iter = 300;
};

namespace detail {

inline double inertia_of(const Matrix& x, const Labels& labels, const Matrix& centres)
{
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        s += (x.row(i) - centres.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return s;
}

inline Matrix kmeanspp_seed(const Matrix& x, int k, Rng& rng)
{
    const Eigen::Index n = x.rows();
    Matrix centres(k, x.cols());
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    auto first = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
    centres.row(0) = x.row(first);
    chosen[static_cast<std::size_t>(first)] = 1;
    Vector d2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d2(i) = (x.row(i) - centres.row(0)).squaredNorm();
    }
    for (int c = 1; c < k; ++c) {
        Eigen::Index pick = -1;
        const double total = d2.sum();
        if (total > 0.0) {
            double r = rng.uniform() * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (d2(i) <= 0.0) {
                    continue;
                }
                pick = i;
                r -= d2(i);
                if (r < 0.0) {
                    break;
                }
            }
        }
        if (pick < 0) {
            // All remaining mass is zero (duplicates): take any unused point.
            std::vector<Eigen::Index> free;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!chosen[static_cast<std::size_t>(i)]) {
                    free.push_back(i);
                }
            }
            pick = free[rng.below(free.size())];
        }
        chosen[static_cast<std::size_t>(pick)] = 1;
        centres.row(c) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            d2(i) = std::min(d2(i), (x.row(i) - centres.row(c)).squaredNorm());
        }
    }
    return centres;
}

inline ClusterAssignment lloyd(const Matrix& x, int k, Rng& rng, int max_iter)
{
    const Eigen::Index n = x.rows();
    Matrix centres = kmeanspp_seed(x, k, rng);
    Labels labels(static_cast<std::size_t>(n), -1);
    ClusterAssignment out;
    out.k = k;
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = (x.row(i) - centres.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (labels[static_cast<std::size_t>(i)] != best) {
                labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        // Empty-cluster repair: move the point farthest from its centre.
        for (int c = 0; c < k; ++c) {
            if (std::find(labels.begin(), labels.end(), c) != labels.end()) {
                continue;
            }
            std::vector<int> counts(static_cast<std::size_t>(k), 0);
            for (int y : labels) {
                ++counts[static_cast<std::size_t>(y)];
            }
            Eigen::Index far = -1;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int y = labels[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(y)] <= 1) {
                    continue;
                }
                const double d = (x.row(i) - centres.row(y)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            labels[static_cast<std::size_t>(far)] = c;
            centres.row(c) = x.row(far);
            changed = true;
        }
        Matrix sums = Matrix::Zero(k, x.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
            ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
        }
        for (int c = 0; c < k; ++c) {
            centres.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
        out.inertia_trace.push_back(inertia_of(x, labels, centres));
        if (!changed) {
            break;
        }
    }
    out.labels = std::move(labels);
    out.inertia = out.inertia_trace.back();
    return out;
}

/// Renumbers clusters by first appearance so equal partitions compare equal.
inline void canonicalize(Labels& labels, int k)
{
    std::vector<int> remap(static_cast<std::size_t>(k), -1);
    int next = 0;
    for (int& y : labels) {
        auto& r = remap[static_cast<std::size_t>(y)];
        if (r < 0) {
            r = next++;
        }
        y = r;
    }
}

} // namespace detail

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// inertia wins (earliest restart on ties). Cluster ids are numbered by first
/// appearance.
inline ClusterAssignment kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& opt = {})
{
    require(k >= 1, "kmeans: k must be >= 1");
    require(k <= points.rows(), "kmeans: k (" + std::to_string(k) + ") exceeds number of points (" +
                                    std::to_string(points.rows()) + ")");
    require(opt.restarts >= 1 && opt.max_iter >= 1, "kmeans: restarts and max_iter must be >= 1");
    ClusterAssignment best;
    for (int r = 0; r < opt.restarts; ++r) {
        Rng rng(derive_seed(seed, "kmeans/restart", static_cast<std::uint64_t>(r)));
        auto run = detail::lloyd(points, k, rng, opt.max_iter);
        if (r == 0 || run.inertia < best.inertia) {
            best = std::move(run);
        }
    }
    detail::canonicalize(best.labels, k);
    return best;
}

// ---------------------------------------------------------------------------
// Spectral clustering
// ---------------------------------------------------------------------------

struct SpectralOptions {
    int neighbors = 12;
    KMeansOptions kmeans;
};

/// kNN graph -> normalised Laplacian -> k smallest eigenvectors, rows
/// rescaled to unit length -> k-means.
inline ClusterAssignment spectral_cluster(const Matrix& x, int k, std::uint64_t seed, const SpectralOptions& opt = {})
{
    require(k >= 1 && k <= x.rows(), "spectral_cluster: k must lie in [1, n]");
    if (k == 1) {
        ClusterAssignment one;
        one.k = 1;
        one.labels.assign(static_cast<std::size_t>(x.rows()), 0);
        one.inertia = (x.rowwise() - x.colwise().mean()).squaredNorm();
        return one;
    }
    const Matrix adj = knn_graph(x, opt.neighbors);
    const auto eig = smallest_eigenvectors(laplacian(adj, true), k);
    Matrix embedding = eig.vectors;
    for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
        const double norm = embedding.row(i).norm();
        if (norm > 0.0) {
            embedding.row(i) /= norm;
        }
    }
    return kmeans(embedding, k, derive_seed(seed, "spectral"), opt.kmeans);
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Mean silhouette coefficient; singleton clusters contribute 0.
inline double silhouette(const Matrix& x, const Labels& labels)
{
    const int k = num_classes(labels);
    const Eigen::Index n = x.rows();
    if (k < 2) {
        return 0.0;
    }
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int y : labels) {
        ++sizes[static_cast<std::size_t>(y)];
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) {
                sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (x.row(i) - x.row(j)).norm();
            }
        }
        const auto own = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
        if (sizes[own] <= 1) {
            continue;
        }
        const double a = sum[own] / (sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < sum.size(); ++c) {
            if (c != own && sizes[c] > 0) {
                b = std::min(b, sum[c] / sizes[c]);
            }
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

/// Adjusted Rand index between two partitions of the same points.
inline double adjusted_rand_index(const Labels& a, const Labels& b)
{
    require(a.size() == b.size(), "adjusted_rand_index: size mismatch");
    const int ka = num_classes(a);
    const int kb = num_classes(b);
    Matrix table = Matrix::Zero(ka, kb);
    for (std::size_t i = 0; i < a.size(); ++i) {
        table(a[i], b[i]) += 1.0;
    }
    auto comb2 = [](double m) { return m * (m - 1.0) / 2.0; };
    double index = 0.0;
    for (Eigen::Index i = 0; i < table.size(); ++i) {
        index += comb2(table.data()[i]);
    }
    double sa = 0.0;
    double sb = 0.0;
    for (Eigen::Index i = 0; i < ka; ++i) {
        sa += comb2(table.row(i).sum());
    }
    for (Eigen::Index j = 0; j < kb; ++j) {
        sb += comb2(table.col(j).sum());
    }
    const double expected = sa * sb / comb2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sa + sb);
    if (max_index == expected) {
        return 1.0;
    }
    return (index - expected) / (max_index - expected);
}

} // namespace otfed::clustering
