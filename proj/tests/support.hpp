#pragma once

#include "otfed/common.hpp"
#include "otfed/random.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace testing_support {

inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("otfed_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string write_text(const std::filesystem::path& path, const std::string& body)
{
    std::ofstream(path) << body;
    return path.string();
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline otfed::Matrix random_matrix(otfed::Rng& rng, Eigen::Index r, Eigen::Index c, double lo = 0.0, double hi = 1.0)
{
    otfed::Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            m(i, j) = lo + (hi - lo) * rng.uniform();
        }
    }
    return m;
}

inline otfed::Vector random_simplex(otfed::Rng& rng, Eigen::Index n)
{
    otfed::Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = 0.2 + 0.8 * rng.uniform();
    }
    return v / v.sum();
}

} // namespace testing_support
