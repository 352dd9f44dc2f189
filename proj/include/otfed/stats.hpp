#pragma once

#include "otfed/common.hpp"
#include "otfed/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace otfed::stats {

/// Methods as rows, samples (targets, AVG, ...) as columns.
struct AccuracyTable {
    std::vector<std::string> methods;
    std::vector<std::string> samples;
    Matrix values;  // methods x samples

    void validate() const
    {
        require(methods.size() >= 2, "accuracy table: need at least 2 methods");
        require(samples.size() >= 2, "accuracy table: need at least 2 samples");
        require(values.rows() == static_cast<Eigen::Index>(methods.size()) &&
                    values.cols() == static_cast<Eigen::Index>(samples.size()),
                "accuracy table: value matrix shape mismatch");
        require(values.allFinite(), "accuracy table: missing or non-finite cell");
    }
};

/// CSV with header `method,<sample>,...` and one row per method.
inline AccuracyTable load_accuracy_table(const std::string& path)
{
    std::vector<std::string> header;
    const auto rows = otfed::detail::read_csv_rows(path, header);
    require(header.size() >= 2, path + ": need a method column and at least one sample column");
    AccuracyTable t;
    t.samples.assign(header.begin() + 1, header.end());
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.samples.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == header.size(), path + ": row " + std::to_string(r + 1) + ": ragged row");
        t.methods.push_back(rows[r][0]);
        for (std::size_t c = 1; c < header.size(); ++c) {
            double v = 0.0;
            require(otfed::detail::parse_double(rows[r][c], v),
                    path + ": row " + std::to_string(r + 1) + ", column " + header[c] + ": non-numeric value '" + rows[r][c] + "'");
            t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = v;
        }
    }
    t.validate();
    return t;
}

/// Per column, rank 1 = highest accuracy; ties share the mean of their positions.
inline Matrix rank_matrix(const AccuracyTable& table)
{
    table.validate();
    const Eigen::Index k = table.values.rows();
    Matrix ranks(k, table.values.cols());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
    for (Eigen::Index col = 0; col < table.values.cols(); ++col) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return table.values(a, col) > table.values(b, col); });
        std::size_t start = 0;
        while (start < order.size()) {
            std::size_t stop = start + 1;
            while (stop < order.size() && table.values(order[stop], col) == table.values(order[start], col)) {
                ++stop;
            }
            const double shared = 0.5 * static_cast<double>(start + 1 + stop);
            for (std::size_t t = start; t < stop; ++t) {
                ranks(order[t], col) = shared;
            }
            start = stop;
        }
    }
    return ranks;
}

inline Vector mean_ranks(const Matrix& ranks)
{
    return ranks.rowwise().mean();
}

// ---------------------------------------------------------------------------
// Chi-square tail via the regularised incomplete gamma function
// ---------------------------------------------------------------------------

namespace detail {

inline double gamma_p_series(double a, double x)
{
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) {
            break;
        }
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x).
inline double gamma_q_fraction(double a, double x)
{
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = b + an / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) {
            break;
        }
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace detail

/// Upper regularised incomplete gamma Q(a, x).
inline double gamma_q(double a, double x)
{
    require(a > 0.0 && x >= 0.0, "gamma_q: need a > 0 and x >= 0");
    if (x == 0.0) {
        return 1.0;
    }
    if (x < a + 1.0) {
        return 1.0 - detail::gamma_p_series(a, x);
    }
    return detail::gamma_q_fraction(a, x);
}

inline double chi_square_sf(double statistic, double df)
{
    require(df > 0.0, "chi_square_sf: df must be > 0");
    return statistic <= 0.0 ? 1.0 : std::clamp(gamma_q(0.5 * df, 0.5 * statistic), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Friedman / Nemenyi
// ---------------------------------------------------------------------------

struct FriedmanResult {
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 0;
};

/// Chi-square Friedman statistic 12N/(k(k+1)) * (sum_j R_j^2 - k(k+1)^2/4)
/// over the mean ranks R_j of a k x N rank matrix.
inline FriedmanResult friedman(const Matrix& ranks)
{
    const auto k = static_cast<double>(ranks.rows());
    const auto n = static_cast<double>(ranks.cols());
    require(ranks.rows() >= 2 && ranks.cols() >= 2, "friedman: need k >= 2 methods and N >= 2 samples");
    const Vector r = mean_ranks(ranks);
    double stat = 12.0 * n / (k * (k + 1.0)) * (r.squaredNorm() - k * (k + 1.0) * (k + 1.0) / 4.0);
    if (std::abs(stat) < 1e-12) {
        stat = 0.0;
    }
    return {stat, chi_square_sf(stat, k - 1.0), static_cast<int>(k) - 1};
}

/// Two-tailed Nemenyi critical values q_0.05(k) = studentized range
/// q(0.95; k, inf) / sqrt(2), for k = 2..20 (Demsar 2006; extended
/// with the same construction).
inline constexpr std::array<double, 21> nemenyi_q05 = {
    0.0,         0.0,         1.959963985, 2.343700476, 2.569032073, 2.727774717, 2.849705382,
    2.948319908, 3.030878867, 3.101730259, 3.163683420, 3.218653901, 3.268003591, 3.312738701,
    3.353617959, 3.391230382, 3.426041249, 3.458424619, 3.488684546, 3.517072762, 3.543799277,
};

/// CD = q_alpha(k) * sqrt(k (k + 1) / (6 N)); only alpha = 0.05 is tabulated.
inline double nemenyi_cd(int k, int n, double alpha = 0.05)
{
    require(std::abs(alpha - 0.05) < 1e-12, "nemenyi_cd: only alpha = 0.05 is supported");
    require(k >= 2 && k <= 20, "nemenyi_cd: k must lie in [2, 20]");
    require(n >= 1, "nemenyi_cd: N must be >= 1");
    return nemenyi_q05[static_cast<std::size_t>(k)] * std::sqrt(k * (k + 1.0) / (6.0 * n));
}

// ---------------------------------------------------------------------------
// Robust summaries
// ---------------------------------------------------------------------------

inline double median(std::vector<double> v)
{
    require(!v.empty(), "median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

struct MedianMad {
    double median = 0.0;
    double mad = 0.0;  // unscaled
};

inline MedianMad median_mad(const std::vector<double>& values)
{
    const double med = median(values);
    std::vector<double> dev;
    dev.reserve(values.size());
    for (double x : values) {
        dev.push_back(std::abs(x - med));
    }
    return {med, median(dev)};
}

/// Maximal sets of methods whose pairwise mean-rank gaps are all below cd,
/// listed from best mean rank to worst. Singleton sets are included.
inline std::vector<std::vector<std::size_t>> significance_groups(const Vector& mean_ranks, double cd)
{
    const auto k = static_cast<std::size_t>(mean_ranks.size());
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return mean_ranks(static_cast<Eigen::Index>(a)) <
                                                                               mean_ranks(static_cast<Eigen::Index>(b)); });
    // On sorted ranks every maximal clique is a contiguous window.
    std::vector<std::vector<std::size_t>> groups;
    std::size_t last_stop = 0;
    for (std::size_t start = 0; start < k; ++start) {
        std::size_t stop = start + 1;
        while (stop < k && mean_ranks(static_cast<Eigen::Index>(order[stop])) -
                                   mean_ranks(static_cast<Eigen::Index>(order[start])) < cd) {
            ++stop;
        }
        if (stop > last_stop) {
            groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                order.begin() + static_cast<std::ptrdiff_t>(stop));
            last_stop = stop;
        }
    }
    return groups;
}

struct StatReport {
    std::vector<std::string> methods;
    Matrix ranks;
    Vector mean_ranks;
    std::vector<MedianMad> summaries;
    FriedmanResult friedman;
    double alpha = 0.05;
    double cd = 0.0;
    bool reject_null = false;
    std::vector<std::vector<std::size_t>> groups;
};

inline StatReport analyze(const AccuracyTable& table, double alpha = 0.05)
{
    StatReport r;
    r.methods = table.methods;
    r.ranks = rank_matrix(table);
    r.mean_ranks = mean_ranks(r.ranks);
    for (Eigen::Index m = 0; m < table.values.rows(); ++m) {
        std::vector<double> row;
        for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
            row.push_back(table.values(m, c));
        }
        r.summaries.push_back(median_mad(row));
    }
    r.friedman = friedman(r.ranks);
    r.alpha = alpha;
    r.cd = nemenyi_cd(static_cast<int>(table.methods.size()), static_cast<int>(table.samples.size()), alpha);
    r.reject_null = r.friedman.p_value < alpha;
    r.groups = significance_groups(r.mean_ranks, r.cd);
    return r;
}

} // namespace otfed::stats
