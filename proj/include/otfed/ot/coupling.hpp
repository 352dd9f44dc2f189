#pragma once

#include "otfed/common.hpp"

#include <fstream>
#include <optional>
#include <string>

namespace otfed::ot {

enum class Metric { squared_euclidean, euclidean };

inline const char* metric_name(Metric m)
{
    return m == Metric::squared_euclidean ? "squared_euclidean" : "euclidean";
}

struct CostMatrix {
    Matrix values;
    Metric metric = Metric::squared_euclidean;

    [[nodiscard]] Eigen::Index rows() const { return values.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return values.cols(); }
};

/// Transport plan together with the marginals it was solved for.
struct Coupling {
    Matrix plan;
    Vector row_marginal;
    Vector col_marginal;
    std::optional<double> epsilon;  // absent for exact solutions
    int iterations = 0;
    double marginal_violation = 0.0;  // max of the row/column L1 violations
    bool converged = true;

    [[nodiscard]] double row_violation() const { return (plan.rowwise().sum() - row_marginal).lpNorm<1>(); }
    [[nodiscard]] double col_violation() const { return (plan.colwise().sum().transpose() - col_marginal).lpNorm<1>(); }
};

inline Vector uniform_weights(Eigen::Index n)
{
    return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

/// <plan, cost> (Frobenius inner product).
inline double transport_cost(const Coupling& coupling, const CostMatrix& cost)
{
    require(coupling.plan.rows() == cost.rows() && coupling.plan.cols() == cost.cols(),
            "transport_cost: plan is " + std::to_string(coupling.plan.rows()) + "x" + std::to_string(coupling.plan.cols()) +
                " but cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()));
    return (coupling.plan.array() * cost.values.array()).sum();
}

/// Plan as a headerless CSV matrix plus a small JSON sidecar with solver metadata.
inline void export_coupling(const Coupling& c, const std::string& csv_path, const std::string& meta_path)
{
    {
        std::ofstream out(csv_path);
        require(static_cast<bool>(out), "cannot write file: " + csv_path);
        out.precision(17);
        for (Eigen::Index i = 0; i < c.plan.rows(); ++i) {
            for (Eigen::Index j = 0; j < c.plan.cols(); ++j) {
                out << (j ? "," : "") << c.plan(i, j);
            }
            out << '\n';
        }
    }
    std::ofstream meta(meta_path);
    require(static_cast<bool>(meta), "cannot write file: " + meta_path);
    meta.precision(17);
    meta << "{\n  \"rows\": " << c.plan.rows() << ",\n  \"cols\": " << c.plan.cols() << ",\n  \"epsilon\": ";
    if (c.epsilon) {
        meta << *c.epsilon;
    } else {
        meta << "null";
    }
    meta << ",\n  \"iterations\": " << c.iterations << ",\n  \"marginal_violation\": " << c.marginal_violation
         << ",\n  \"converged\": " << (c.converged ? "true" : "false") << "\n}\n";
}

} // namespace otfed::ot
