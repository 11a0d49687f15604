#pragma once

#include "gdastream/common.hpp"

#include <doctest.h>

#include <filesystem>
#include <random>
#include <string>

namespace testing {

using gdastream::Matrix;
using gdastream::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0)
{
    std::normal_distribution<double> normal(0.0, sd);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = normal(rng);
    return m;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double sd = 1.0)
{
    return random_matrix(rng, n, 1, sd).col(0);
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, Eigen::Index d, double ridge = 0.5)
{
    const Matrix a = random_matrix(rng, d, d);
    return a.transpose() * a / static_cast<double>(d) + ridge * Eigen::MatrixXd::Identity(d, d);
}

/// Rows on the simplex.
inline Matrix random_simplex_rows(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols)
{
    std::gamma_distribution<double> g(1.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = g(rng) + 1e-3;
        m.row(i) /= m.row(i).sum();
    }
    return m;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    REQUIRE(a.rows() == b.rows());
    REQUIRE(a.cols() == b.cols());
    return (a - b).cwiseAbs().maxCoeff();
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("gdastream_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
