#pragma once

#include "gdastream/common.hpp"

#include <string>
#include <vector>

namespace gdastream::homogeneity {

inline constexpr double kDefaultKappa = 0.05;
inline constexpr Eigen::Index kDefaultPcaDim = 10;
inline constexpr double kDfEpsilon = 1e-12;

/// Raised when fewer than two classes carry enough soft mass for the test.
class InfeasibleTest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ClassMoments {
    Vector counts;                       // soft counts n_k for every class
    Matrix means;                        // K x d
    std::vector<Eigen::MatrixXd> covs;   // K matrices, 1/n_k normalization
    Eigen::MatrixXd pooled;              // (n_k - 1)-weighted average of included covs
    std::vector<bool> included;

    Eigen::Index dim() const { return means.cols(); }
    std::size_t included_count() const;
};

/// Soft class moments from sketch probabilities. A class is included when
/// n_k > max(min_count, d + 1). Throws InfeasibleTest when fewer than two
/// classes are included.
ClassMoments class_moments(const Matrix& projected, const Matrix& sketch_probs, double min_count = 0.0);

struct HomogeneityReport {
    double m_statistic = 0.0;
    double scaling_c = 1.0;
    double m_corrected = 0.0;  // M / c
    double lambda = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double f_statistic = 0.0;
    double critical_value = 0.0;
    double kappa = kDefaultKappa;
    std::size_t classes_tested = 0;
    Eigen::Index dim = 0;
    bool feasible = true;
    CovarianceMode decision = CovarianceMode::Homogeneous;

    /// key=value lines for the run log.
    std::string to_key_value() const;
};

/// Box's M with the F-distribution correction over the included classes.
HomogeneityReport box_m_test(const ClassMoments& moments, double kappa = kDefaultKappa);

/// PCA to `pca_dim` components, soft class moments from `sketch_probs`, Box's M.
/// Falls back to Homogeneous (feasible = false) when the test cannot run.
HomogeneityReport select_covariance_mode(const Matrix& features, const Matrix& sketch_probs,
                                         Eigen::Index pca_dim = kDefaultPcaDim, double kappa = kDefaultKappa);

}  // namespace gdastream::homogeneity
