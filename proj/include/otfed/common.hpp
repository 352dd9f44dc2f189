#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace otfed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;

/// Single exception type for contract violations and solver failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& message)
{
    if (!cond) {
        throw Error(message);
    }
}

inline bool all_finite(const Matrix& m)
{
    return m.allFinite();
}

/// Number of distinct classes implied by labels (max + 1).
inline int num_classes(const Labels& labels)
{
    int k = 0;
    for (int y : labels) {
        k = std::max(k, y + 1);
    }
    return k;
}

inline Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& rows)
{
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    }
    return out;
}

} // namespace otfed
