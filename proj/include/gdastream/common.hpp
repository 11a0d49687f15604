#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace gdastream {

// Sample matrices are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Malformed or inconsistent input data (bad files, shape mismatches, non-finite values).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad flag values, infeasible simulator specs).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical precondition failed (non-PD covariance, asymmetric input, zero mass).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class CovarianceMode : unsigned char {
    Homogeneous = 0,
    Heterogeneous = 1,
};

inline const char* to_string(CovarianceMode mode)
{
    return mode == CovarianceMode::Homogeneous ? "homogeneous" : "heterogeneous";
}

}  // namespace gdastream
