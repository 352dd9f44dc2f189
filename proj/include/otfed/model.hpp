#pragma once

#include "otfed/data.hpp"
#include "otfed/random.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

namespace otfed::model {

/// Linear softmax classifier. Flat layout: weights row-major (d x k), then bias.
struct ModelParams {
    Matrix weights;  // d x k
    Vector bias;     // k

    [[nodiscard]] Eigen::Index dim() const { return weights.rows(); }
    [[nodiscard]] Eigen::Index classes() const { return weights.cols(); }
    [[nodiscard]] Eigen::Index flat_size() const { return weights.size() + bias.size(); }

    friend bool operator==(const ModelParams& a, const ModelParams& b)
    {
        return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() && a.weights == b.weights &&
               a.bias == b.bias;
    }
};

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 1;
    int batch_size = 32;
    double l2_penalty = 1e-4;
    std::uint64_t seed = 0;

    void validate() const
    {
        require(learning_rate >= 0.0, "train: learning_rate must be >= 0");
        require(epochs >= 1, "train: epochs must be >= 1");
        require(batch_size >= 1, "train: batch_size must be >= 1");
        require(l2_penalty >= 0.0, "train: l2_penalty must be >= 0");
    }
};

inline ModelParams init_params(Eigen::Index d, Eigen::Index k)
{
    require(d >= 1 && k >= 1, "init_params: d and k must be >= 1");
    return {Matrix::Zero(d, k), Vector::Zero(k)};
}

inline Vector flatten(const ModelParams& p)
{
    Vector flat(p.flat_size());
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < p.weights.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.weights.cols(); ++j) {
            flat(pos++) = p.weights(i, j);
        }
    }
    flat.tail(p.bias.size()) = p.bias;
    return flat;
}

inline ModelParams unflatten(const Vector& flat, Eigen::Index d, Eigen::Index k)
{
    require(flat.size() == d * k + k, "unflatten: expected length " + std::to_string(d * k + k) + ", got " +
                                          std::to_string(flat.size()));
    ModelParams p = init_params(d, k);
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            p.weights(i, j) = flat(pos++);
        }
    }
    p.bias = flat.tail(k);
    return p;
}

/// Row-wise softmax of the logits X W + b.
inline Matrix predict_proba(const ModelParams& p, const Matrix& x)
{
    require(x.cols() == p.dim(), "predict: feature dimension mismatch");
    Matrix logits = (x * p.weights).rowwise() + p.bias.transpose();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

/// argmax of the logits, lowest class index on ties.
inline Labels predict(const ModelParams& p, const Matrix& x)
{
    require(x.cols() == p.dim(), "predict: feature dimension mismatch");
    const Matrix logits = (x * p.weights).rowwise() + p.bias.transpose();
    Labels out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > logits(i, best)) {
                best = static_cast<int>(j);
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

inline double accuracy(const Labels& predicted, const Labels& truth)
{
    require(predicted.size() == truth.size() && !truth.empty(), "accuracy: label vectors must be equal-length and non-empty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        hits += predicted[i] == truth[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Fraction of correctly classified rows (1 - empirical risk).
inline double accuracy(const ModelParams& p, const Matrix& x, const Labels& y)
{
    return accuracy(predict(p, x), y);
}

inline double accuracy(const ModelParams& p, const Dataset& data)
{
    return accuracy(p, data.features, data.require_labels("accuracy"));
}

struct LossGradient {
    double loss = 0.0;
    ModelParams gradient;
};

/// Mean cross-entropy over rows plus l2 * ||W||^2 / 2 (bias unpenalised), and
/// its exact gradient.
inline LossGradient loss_and_gradient(const ModelParams& p, const Matrix& x, const Labels& y, double l2)
{
    require(static_cast<std::size_t>(x.rows()) == y.size() && x.rows() >= 1, "loss_and_gradient: bad batch");
    Matrix prob = predict_proba(p, x);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int yi = y[static_cast<std::size_t>(i)];
        require(yi >= 0 && yi < p.classes(), "loss_and_gradient: label out of range");
        loss -= std::log(std::max(prob(i, yi), std::numeric_limits<double>::min()));
        prob(i, yi) -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    LossGradient out;
    out.loss = loss * inv_n + 0.5 * l2 * p.weights.squaredNorm();
    out.gradient.weights = inv_n * (x.transpose() * prob) + l2 * p.weights;
    out.gradient.bias = inv_n * prob.colwise().sum().transpose();
    return out;
}

/// Minibatch SGD with a fresh shuffle per (seed, epoch).
inline ModelParams train_sgd(ModelParams params, const Dataset& data, const TrainConfig& cfg)
{
    cfg.validate();
    const Labels& labels = data.require_labels("train_sgd");
    require(static_cast<Eigen::Index>(data.dim()) == params.dim(), "train_sgd: feature dimension mismatch");
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, "sgd/epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
            Labels yb;
            yb.reserve(batch.size());
            for (auto i : batch) {
                yb.push_back(labels[i]);
            }
            const auto lg = loss_and_gradient(params, select_rows(data.features, batch), yb, cfg.l2_penalty);
            params.weights -= cfg.learning_rate * lg.gradient.weights;
            params.bias -= cfg.learning_rate * lg.gradient.bias;
        }
    }
    return params;
}

// ---------------------------------------------------------------------------
// Binary serialisation: u64 d, u64 k, u64 length, then length f64 values, all
// little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v)
{
    for (int b = 0; b < 8; ++b) {
        out.push_back(static_cast<unsigned char>(v >> (8 * b)));
    }
}

inline std::uint64_t get_u64(const std::vector<unsigned char>& in, std::size_t& pos)
{
    require(pos + 8 <= in.size(), "params: truncated input");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) {
        v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(b)]) << (8 * b);
    }
    pos += 8;
    return v;
}

} // namespace detail

inline std::vector<unsigned char> serialize(const ModelParams& p)
{
    const Vector flat = flatten(p);
    std::vector<unsigned char> out;
    out.reserve(24 + 8 * static_cast<std::size_t>(flat.size()));
    detail::put_u64(out, static_cast<std::uint64_t>(p.dim()));
    detail::put_u64(out, static_cast<std::uint64_t>(p.classes()));
    detail::put_u64(out, static_cast<std::uint64_t>(flat.size()));
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
        detail::put_u64(out, std::bit_cast<std::uint64_t>(flat(i)));
    }
    return out;
}

inline ModelParams deserialize(const std::vector<unsigned char>& bytes)
{
    std::size_t pos = 0;
    const auto d = detail::get_u64(bytes, pos);
    const auto k = detail::get_u64(bytes, pos);
    const auto len = detail::get_u64(bytes, pos);
    require(d >= 1 && k >= 1 && len == d * k + k, "params: inconsistent header");
    require(bytes.size() == 24 + 8 * len, "params: payload length mismatch");
    Vector flat(static_cast<Eigen::Index>(len));
    for (std::uint64_t i = 0; i < len; ++i) {
        flat(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(detail::get_u64(bytes, pos));
    }
    return unflatten(flat, static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
}

inline void save_params(const ModelParams& p, const std::string& path)
{
    const auto bytes = serialize(p);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline ModelParams load_params(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

} // namespace otfed::model
