#pragma once

#include "otfed/common.hpp"
#include "otfed/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace otfed {

/// Empirical measure: n points in R^d with nonnegative weights summing to one,
/// optionally labelled with class ids in [0, k).
struct Dataset {
    Matrix features;
    std::optional<Labels> labels;
    std::string domain_id;
    Vector weights;

    Dataset() = default;

    Dataset(Matrix x, std::optional<Labels> y, std::string domain)
        : features(std::move(x)), labels(std::move(y)), domain_id(std::move(domain))
    {
        weights = Vector::Constant(features.rows(), features.rows() > 0 ? 1.0 / features.rows() : 0.0);
        validate();
    }

    [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
    [[nodiscard]] bool labeled() const { return labels.has_value(); }

    const Labels& require_labels(const char* what) const
    {
        require(labels.has_value(), std::string(what) + ": dataset '" + domain_id + "' is unlabeled");
        return *labels;
    }

    void validate() const
    {
        require(features.rows() >= 1 && features.cols() >= 1, "dataset '" + domain_id + "' is empty");
        require(features.allFinite(), "dataset '" + domain_id + "' has non-finite features");
        require(weights.size() == features.rows(), "dataset weights length mismatch");
        require((weights.array() >= 0.0).all(), "dataset weights must be nonnegative");
        require(std::abs(weights.sum() - 1.0) <= 1e-12, "dataset weights must sum to 1");
        if (labels) {
            require(labels->size() == size(), "dataset labels length mismatch");
            for (int y : *labels) {
                require(y >= 0, "dataset labels must be nonnegative");
            }
        }
    }

    /// Rows `idx` with uniform weights.
    [[nodiscard]] Dataset subset(const std::vector<std::size_t>& idx, std::string domain) const
    {
        std::optional<Labels> y;
        if (labels) {
            Labels sub;
            sub.reserve(idx.size());
            for (auto i : idx) {
                sub.push_back((*labels)[i]);
            }
            y = std::move(sub);
        }
        return Dataset(select_rows(features, idx), std::move(y), std::move(domain));
    }
};

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) {
        throw Error("unterminated quoted field");
    }
    cells.push_back(cur);
    for (auto& cell : cells) {
        const auto b = cell.find_first_not_of(" \t");
        const auto e = cell.find_last_not_of(" \t");
        cell = b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1);
    }
    return cells;
}

inline bool parse_double(const std::string& s, double& out)
{
    if (s.empty()) {
        return false;
    }
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

/// Reads a header + rows file; strips CR and skips blank trailing lines.
inline std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, std::vector<std::string>& header)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open file: " + path);
    }
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        try {
            auto cells = split_csv_line(line);
            if (!have_header) {
                header = std::move(cells);
                have_header = true;
            } else {
                rows.push_back(std::move(cells));
            }
        } catch (const Error& e) {
            throw Error(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_header) {
        throw Error(path + ": missing header row");
    }
    return rows;
}

inline std::string format_double(double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

} // namespace detail

/// Loads a dataset CSV. Feature columns are those named f0..f{d-1}; other
/// columns are ignored unless named by `label_column`. Row numbers in errors
/// are 1-based data rows (the header is not counted).
inline Dataset load_dataset(const std::string& path, const std::optional<std::string>& label_column = std::nullopt)
{
    std::vector<std::string> header;
    const auto rows = detail::read_csv_rows(path, header);

    std::map<int, std::size_t> feature_cols;
    std::optional<std::size_t> label_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& name = header[c];
        if (label_column && name == *label_column) {
            label_col = c;
            continue;
        }
        if (name.size() >= 2 && name[0] == 'f') {
            int idx = -1;
            auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
            if (ec == std::errc{} && ptr == name.data() + name.size() && idx >= 0) {
                require(!feature_cols.contains(idx), path + ": duplicate feature column " + name);
                feature_cols[idx] = c;
            }
        }
    }
    require(!feature_cols.empty(), path + ": no feature columns (expected f0..f{d-1})");
    const int d = static_cast<int>(feature_cols.size());
    require(feature_cols.rbegin()->first == d - 1, path + ": feature columns must be f0..f" + std::to_string(d - 1));
    if (label_column) {
        require(label_col.has_value(), path + ": label column '" + *label_column + "' not found");
    }
    require(!rows.empty(), path + ": no data rows");

    Matrix x(static_cast<Eigen::Index>(rows.size()), d);
    std::optional<Labels> labels;
    if (label_col) {
        labels.emplace();
        labels->reserve(rows.size());
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::string where = path + ": row " + std::to_string(r + 1);
        require(row.size() == header.size(),
                where + ": expected " + std::to_string(header.size()) + " cells, got " + std::to_string(row.size()));
        for (const auto& [j, c] : feature_cols) {
            double v = 0.0;
            require(detail::parse_double(row[c], v) && std::isfinite(v),
                    where + ", column " + header[c] + ": non-numeric value '" + row[c] + "'");
            x(static_cast<Eigen::Index>(r), j) = v;
        }
        if (label_col) {
            const auto& cell = row[*label_col];
            double v = 0.0;
            require(detail::parse_double(cell, v), where + ", column " + header[*label_col] + ": non-numeric label '" + cell + "'");
            require(v >= 0.0, where + ", column " + header[*label_col] + ": negative label '" + cell + "'");
            require(v == std::floor(v) && v < 2147483647.0,
                    where + ", column " + header[*label_col] + ": fractional label '" + cell + "'");
            labels->push_back(static_cast<int>(v));
        }
    }
    auto stem = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
    if (auto dot = stem.rfind('.'); dot != std::string::npos) {
        stem = stem.substr(0, dot);
    }
    return Dataset(std::move(x), std::move(labels), stem);
}

/// Writes f0..f{d-1}[,label] with shortest round-trip formatting.
inline void save_dataset(const Dataset& ds, const std::string& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot write file: " + path);
    for (std::size_t j = 0; j < ds.dim(); ++j) {
        out << (j ? "," : "") << 'f' << j;
    }
    if (ds.labels) {
        out << ",label";
    }
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            out << (j ? "," : "") << detail::format_double(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        }
        if (ds.labels) {
            out << ',' << (*ds.labels)[i];
        }
        out << '\n';
    }
    require(static_cast<bool>(out), "write failed: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic multi-domain generator
// ---------------------------------------------------------------------------

struct SynthSpec {
    int num_domains = 4;
    int classes = 3;
    int dim = 10;
    int samples_per_domain = 300;
    double shift_scale = 4.0;
    bool rotation = false;
    double noise_sigma = 1.0;
    /// Distance of each class centre from the origin.
    double class_separation = 4.0;

    void validate() const
    {
        require(num_domains >= 2, "synth: num_domains must be >= 2");
        require(classes >= 2, "synth: classes must be >= 2");
        require(dim >= 1, "synth: dim must be >= 1");
        require(samples_per_domain >= classes, "synth: samples_per_domain must be >= classes");
        require(shift_scale >= 0.0, "synth: shift_scale must be >= 0");
        require(noise_sigma > 0.0, "synth: noise_sigma must be > 0");
        require(class_separation >= 0.0, "synth: class_separation must be >= 0");
    }
};

namespace detail {

inline Vector random_unit(Rng& rng, int dim)
{
    Vector v(dim);
    double norm = 0.0;
    while (norm < 1e-12) {
        for (int j = 0; j < dim; ++j) {
            v(j) = rng.normal();
        }
        norm = v.norm();
    }
    return v / norm;
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian with sign correction).
inline Matrix random_rotation(Rng& rng, int dim)
{
    Matrix g(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            g(i, j) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < dim; ++j) {
        if (r(j, j) < 0.0) {
            q.col(j) *= -1.0;
        }
    }
    return q;
}

} // namespace detail

/// Gaussian class blobs shared by every domain, each domain moved by its own
/// translation (and rotation when enabled). Labels cycle 0..k-1 over rows.
inline std::vector<Dataset> synth_multidomain(const SynthSpec& spec, std::uint64_t seed)
{
    spec.validate();
    Rng shared(derive_seed(seed, "synth/centres"));
    std::vector<Vector> centres;
    for (int c = 0; c < spec.classes; ++c) {
        centres.push_back(spec.class_separation * detail::random_unit(shared, spec.dim));
    }
    std::vector<Dataset> out;
    for (int dom = 0; dom < spec.num_domains; ++dom) {
        Rng rng(derive_seed(seed, "synth/domain", static_cast<std::uint64_t>(dom)));
        const Vector shift = spec.shift_scale * detail::random_unit(rng, spec.dim);
        const Matrix rot = spec.rotation ? detail::random_rotation(rng, spec.dim) : Matrix::Identity(spec.dim, spec.dim);
        Matrix x(spec.samples_per_domain, spec.dim);
        Labels y(static_cast<std::size_t>(spec.samples_per_domain));
        for (int i = 0; i < spec.samples_per_domain; ++i) {
            const int c = i % spec.classes;
            Vector p = centres[static_cast<std::size_t>(c)];
            for (int j = 0; j < spec.dim; ++j) {
                p(j) += spec.noise_sigma * rng.normal();
            }
            x.row(i) = (rot * p + shift).transpose();
            y[static_cast<std::size_t>(i)] = c;
        }
        out.emplace_back(std::move(x), std::move(y), "domain" + std::to_string(dom));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Target split and standardisation
// ---------------------------------------------------------------------------

struct TargetSplit {
    Dataset main;
    Dataset validation;
    std::vector<std::size_t> main_index;
    std::vector<std::size_t> validation_index;
};

/// Uniform random split; validation gets round(fraction * n) rows, at least 1
/// and at most n - 1. Index lists are ascending.
inline TargetSplit split_target(const Dataset& target, double fraction, std::uint64_t seed)
{
    require(fraction > 0.0 && fraction < 1.0, "split_target: fraction must lie in (0, 1)");
    const std::size_t n = target.size();
    require(n >= 2, "split_target: target needs at least 2 rows");
    auto v = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    v = std::clamp<std::size_t>(v, 1, n - 1);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = i;
    }
    Rng rng(derive_seed(seed, "split_target"));
    rng.shuffle(perm);
    std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(v));
    std::vector<std::size_t> main(perm.begin() + static_cast<std::ptrdiff_t>(v), perm.end());
    std::sort(val.begin(), val.end());
    std::sort(main.begin(), main.end());
    TargetSplit split{target.subset(main, target.domain_id + "/main"), target.subset(val, target.domain_id + "/validation"),
                      main, val};
    return split;
}

/// Z-scores every dataset with the per-feature mean and population standard
/// deviation of `reference`. Features that are constant in `reference` are
/// passed through untouched.
inline std::vector<Dataset> standardize(const Dataset& reference, const std::vector<Dataset>& others)
{
    const Eigen::Index d = reference.features.cols();
    const Vector mean = reference.features.colwise().mean().transpose();
    Vector scale(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double var = (reference.features.col(j).array() - mean(j)).square().mean();
        scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    std::vector<Dataset> out;
    out.reserve(others.size());
    for (const auto& ds : others) {
        require(ds.features.cols() == d, "standardize: dimension mismatch for '" + ds.domain_id + "'");
        Dataset z = ds;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (reference.features.col(j).maxCoeff() == reference.features.col(j).minCoeff()) {
                continue;
            }
            z.features.col(j) = (z.features.col(j).array() - mean(j)) / scale(j);
        }
        out.push_back(std::move(z));
    }
    return out;
}

} // namespace otfed
