#pragma once

#include "gdastream/common.hpp"

namespace gdastream::stats {

/// Default eigenvalue floor, relative to the largest eigenvalue.
inline constexpr double kDefaultRelativeFloor = 1e-6;

struct WeightedMoments {
    double mass = 0.0;
    Vector mean;
    Eigen::MatrixXd cov;  // normalized by mass (1/n, not 1/(n-1))
};

/// Weighted mean and covariance of the rows of `x`. Throws NumericError when
/// the total weight is not positive.
WeightedMoments weighted_moments(const Matrix& x, const Vector& w);

struct PcaProjection {
    Matrix basis;  // d x D, orthonormal rows, descending eigenvalue order
    Vector data_mean;
    Vector eigenvalues;  // the retained d eigenvalues of the sample covariance

    Eigen::Index retained_dim() const { return basis.rows(); }
    Matrix project(const Matrix& x) const;
};

PcaProjection fit_pca(const Matrix& x, Eigen::Index d);

/// Symmetric positive-definite summary with a clamped spectrum.
///
/// Eigenvalues below `floor` are lifted to `floor`; the pseudo-inverse and
/// log-determinant are computed from the clamped spectrum, so the summary is
/// always positive definite and `log_det` is always finite.
struct SpdSummary {
    Eigen::MatrixXd matrix;   // symmetrized input
    Eigen::MatrixXd inverse;  // V diag(1/max(l, floor)) V^T
    double floor = 0.0;       // absolute floor actually applied
    double log_det = 0.0;
    bool clamped = false;     // true when at least one eigenvalue was lifted

    Eigen::Index dim() const { return matrix.rows(); }
};

/// `relative_floor` is scaled by the largest eigenvalue (or by 1 when the
/// matrix has no positive eigenvalue). Throws NumericError on asymmetric input.
SpdSummary regularized_spd(const Eigen::MatrixXd& m, double relative_floor = kDefaultRelativeFloor);

double gaussian_logpdf(const Vector& z, const Vector& mean, const SpdSummary& cov);

/// KL(N(mean0, cov0) || N(mean1, cov1)). Throws NumericError when a covariance
/// is not positive definite.
double gaussian_kl(const Vector& mean0, const Eigen::MatrixXd& cov0, const Vector& mean1,
                   const Eigen::MatrixXd& cov1);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

double f_cdf(double x, double d1, double d2);

/// Inverse of f_cdf by bisection. Throws ConfigError when p is outside (0, 1).
double f_quantile(double p, double d1, double d2);

}  // namespace gdastream::stats
