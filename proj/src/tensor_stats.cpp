#include "gdastream/tensor_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gdastream::stats {

WeightedMoments weighted_moments(const Matrix& x, const Vector& w)
{
    if (w.size() != x.rows())
        throw DataError("weighted_moments: weight count does not match row count");
    if (!x.allFinite() || !w.allFinite())
        throw DataError("weighted_moments: non-finite input");
    if ((w.array() < 0.0).any())
        throw NumericError("weighted_moments: negative weight");

    WeightedMoments out;
    out.mass = w.sum();
    if (!(out.mass > 0.0))
        throw NumericError("weighted_moments: zero total weight");

    out.mean = (x.transpose() * w) / out.mass;
    const Matrix centered = x.rowwise() - out.mean.transpose();
    out.cov = (centered.transpose() * w.asDiagonal() * centered) / out.mass;
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    return out;
}

Matrix PcaProjection::project(const Matrix& x) const
{
    if (x.cols() != data_mean.size())
        throw DataError("pca project: dimension mismatch");
    return (x.rowwise() - data_mean.transpose()) * basis.transpose();
}

PcaProjection fit_pca(const Matrix& x, Eigen::Index d)
{
    const auto n = x.rows();
    const auto dim = x.cols();
    if (n < 2)
        throw DataError("fit_pca: need at least 2 samples");
    if (d < 1 || d > std::min(n, dim))
        throw DataError("fit_pca: d exceeds rank bound (d=" + std::to_string(d) + ", N=" + std::to_string(n) +
                        ", D=" + std::to_string(dim) + ")");

    const Vector mean = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
    cov = 0.5 * (cov + cov.transpose());
    if (!(cov.trace() > 0.0))
        throw NumericError("fit_pca: zero variance");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
        throw NumericError("fit_pca: eigendecomposition failed");

    PcaProjection pca;
    pca.data_mean = mean;
    pca.basis.resize(d, dim);
    pca.eigenvalues.resize(d);
    for (Eigen::Index r = 0; r < d; ++r) {
        // Eigen returns ascending eigenvalues.
        const Eigen::Index col = dim - 1 - r;
        Vector v = solver.eigenvectors().col(col);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v(pivot) < 0.0)
            v = -v;
        pca.basis.row(r) = v.transpose();
        pca.eigenvalues(r) = solver.eigenvalues()(col);
    }
    return pca;
}

SpdSummary regularized_spd(const Eigen::MatrixXd& m, double relative_floor)
{
    if (m.rows() != m.cols() || m.rows() == 0)
        throw DataError("regularized_spd: matrix must be square and non-empty");
    if (!m.allFinite())
        throw NumericError("regularized_spd: non-finite entry");
    if (!(relative_floor > 0.0))
        throw ConfigError("regularized_spd: floor must be positive");

    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw NumericError("regularized_spd: asymmetric input");

    SpdSummary out;
    out.matrix = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(out.matrix);
    if (solver.info() != Eigen::Success)
        throw NumericError("regularized_spd: eigendecomposition failed");

    const Vector& lambda = solver.eigenvalues();
    const double top = lambda.maxCoeff();
    out.floor = relative_floor * (top > 0.0 ? top : 1.0);

    Vector clamped = lambda;
    for (Eigen::Index i = 0; i < clamped.size(); ++i) {
        if (clamped(i) < out.floor) {
            clamped(i) = out.floor;
            out.clamped = true;
        }
    }
    const Eigen::MatrixXd& v = solver.eigenvectors();
    out.inverse = v * clamped.cwiseInverse().asDiagonal() * v.transpose();
    out.inverse = 0.5 * (out.inverse + out.inverse.transpose());
    out.log_det = clamped.array().log().sum();
    if (out.clamped) {
        out.matrix = v * clamped.asDiagonal() * v.transpose();
        out.matrix = 0.5 * (out.matrix + out.matrix.transpose());
    }
    return out;
}

double gaussian_logpdf(const Vector& z, const Vector& mean, const SpdSummary& cov)
{
    const auto d = z.size();
    if (mean.size() != d || cov.dim() != d)
        throw DataError("gaussian_logpdf: dimension mismatch");
    const Vector diff = z - mean;
    const double maha = diff.dot(cov.inverse * diff);
    return -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - 0.5 * cov.log_det - 0.5 * maha;
}

namespace {

Eigen::LLT<Eigen::MatrixXd> checked_cholesky(const Eigen::MatrixXd& cov, const char* which)
{
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().array() > 0.0).all())
        throw NumericError(std::string("gaussian_kl: ") + which + " covariance is not positive definite");
    return llt;
}

double cholesky_log_det(const Eigen::LLT<Eigen::MatrixXd>& llt)
{
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

double gaussian_kl(const Vector& mean0, const Eigen::MatrixXd& cov0, const Vector& mean1,
                   const Eigen::MatrixXd& cov1)
{
    const auto d = mean0.size();
    if (mean1.size() != d || cov0.rows() != d || cov0.cols() != d || cov1.rows() != d || cov1.cols() != d)
        throw DataError("gaussian_kl: dimension mismatch");

    const auto llt0 = checked_cholesky(cov0, "first");
    const auto llt1 = checked_cholesky(cov1, "second");

    const Vector diff = mean1 - mean0;
    const double trace_term = llt1.solve(cov0).trace();
    const double maha = diff.dot(llt1.solve(diff));
    const double kl =
        0.5 * (trace_term + maha - static_cast<double>(d) + cholesky_log_det(llt1) - cholesky_log_det(llt0));
    return std::max(0.0, kl);
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz evaluation.
double beta_continued_fraction(double a, double b, double x)
{
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny)
        d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny)
            d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny)
            c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps)
            return h;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x)
{
    if (!(a > 0.0) || !(b > 0.0))
        throw ConfigError("incomplete_beta: shape parameters must be positive");
    if (x <= 0.0)
        return 0.0;
    if (x >= 1.0)
        return 1.0;

    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_cdf(double x, double d1, double d2)
{
    if (!(d1 > 0.0) || !(d2 > 0.0))
        throw ConfigError("f_cdf: degrees of freedom must be positive");
    if (x <= 0.0)
        return 0.0;
    if (std::isinf(x))
        return 1.0;
    const double u = d1 * x / (d1 * x + d2);
    return incomplete_beta(0.5 * d1, 0.5 * d2, u);
}

double f_quantile(double p, double d1, double d2)
{
    if (!(p > 0.0 && p < 1.0))
        throw ConfigError("f_quantile: p must lie in (0, 1)");
    if (!(d1 > 0.0) || !(d2 > 0.0) || !std::isfinite(d1) || !std::isfinite(d2))
        throw ConfigError("f_quantile: degrees of freedom must be positive and finite");

    double lo = 0.0;
    double hi = 1.0;
    while (f_cdf(hi, d1, d2) < p) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300)
            throw NumericError("f_quantile: failed to bracket");
    }
    for (int iter = 0; iter < 400 && hi - lo > 1e-12 * std::max(1.0, hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (f_cdf(mid, d1, d2) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace gdastream::stats
