#pragma once

// Per-row / per-class bodies shared by the serial and OpenMP kernels.

#include "gdastream/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace gdastream::kernels::detail {

inline void check_shapes_affine(const Matrix& x, const Vector& scale, const Vector& shift)
{
    if (scale.size() != x.cols() || shift.size() != x.cols())
        throw DataError("affine_normalize: parameter dimension mismatch");
}

// Returns false when the transformed row has zero (or non-finite) norm.
inline bool affine_normalize_row(const Matrix& x, const Vector& scale, const Vector& shift, Matrix& out,
                                 Eigen::Index i)
{
    const Eigen::Index d = x.cols();
    double sq = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double v = scale(j) * x(i, j) + shift(j);
        out(i, j) = v;
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm))
        return false;
    for (Eigen::Index j = 0; j < d; ++j)
        out(i, j) /= norm;
    return true;
}

inline Vector inverse_row_norms(const Matrix& m, const char* what)
{
    Vector inv(m.rows());
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
        const double n = m.row(k).norm();
        if (!(n > 0.0))
            throw DataError(std::string(what) + ": zero-norm row " + std::to_string(k));
        inv(k) = 1.0 / n;
    }
    return inv;
}

inline void cosine_row(const Matrix& z, const Matrix& w, const Vector& w_inv_norm, double z_inv_norm, Matrix& out,
                       Eigen::Index i)
{
    const Eigen::Index d = z.cols();
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
        double dot = 0.0;
        for (Eigen::Index j = 0; j < d; ++j)
            dot += z(i, j) * w(k, j);
        out(i, k) = std::clamp(dot * z_inv_norm * w_inv_norm(k), -1.0, 1.0);
    }
}

inline void softmax_row(const Matrix& logits, double inv_temperature, Matrix& out, Eigen::Index i)
{
    const Eigen::Index k = logits.cols();
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c)
        top = std::max(top, logits(i, c) * inv_temperature);
    double total = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
        const double e = std::exp(logits(i, c) * inv_temperature - top);
        out(i, c) = e;
        total += e;
    }
    for (Eigen::Index c = 0; c < k; ++c)
        out(i, c) /= total;
}

inline void normalize_log_row(const Matrix& a, Matrix& out, Eigen::Index i)
{
    const Eigen::Index k = a.cols();
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < k; ++c)
        top = std::max(top, a(i, c));
    if (!std::isfinite(top)) {
        // Every entry is -inf (or NaN): no component can explain the row.
        for (Eigen::Index c = 0; c < k; ++c)
            out(i, c) = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < k; ++c)
        total += std::exp(a(i, c) - top);
    const double lse = top + std::log(total);
    for (Eigen::Index c = 0; c < k; ++c)
        out(i, c) = std::exp(a(i, c) - lse);
}

inline void quadratic_row(const Matrix& z, const Matrix& means, const std::vector<Eigen::MatrixXd>& precisions,
                          Matrix& out, Eigen::Index i, Vector& diff)
{
    const Eigen::Index d = z.cols();
    const bool shared = precisions.size() == 1;
    for (Eigen::Index k = 0; k < means.rows(); ++k) {
        const Eigen::MatrixXd& p = shared ? precisions[0] : precisions[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < d; ++j)
            diff(j) = z(i, j) - means(k, j);
        double q = 0.0;
        for (Eigen::Index a = 0; a < d; ++a) {
            double row = 0.0;
            for (Eigen::Index b = 0; b < d; ++b)
                row += p(a, b) * diff(b);
            q += diff(a) * row;
        }
        out(i, k) = q;
    }
}

inline void check_quadratic(const Matrix& z, const Matrix& means, const std::vector<Eigen::MatrixXd>& precisions)
{
    if (means.cols() != z.cols())
        throw DataError("quadratic_forms: dimension mismatch");
    if (precisions.size() != 1 && precisions.size() != static_cast<std::size_t>(means.rows()))
        throw DataError("quadratic_forms: need one shared or K precision matrices");
    for (const auto& p : precisions)
        if (p.rows() != z.cols() || p.cols() != z.cols())
            throw DataError("quadratic_forms: precision shape mismatch");
}

inline Eigen::MatrixXd scatter_class(const Matrix& z, const Matrix& weights, const Matrix& means, Eigen::Index k)
{
    const Eigen::Index d = z.cols();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(d, d);
    Vector diff(d);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double w = weights(i, k);
        if (w == 0.0)
            continue;
        for (Eigen::Index j = 0; j < d; ++j)
            diff(j) = z(i, j) - means(k, j);
        for (Eigen::Index a = 0; a < d; ++a) {
            const double wa = w * diff(a);
            for (Eigen::Index b = a; b < d; ++b)
                s(a, b) += wa * diff(b);
        }
    }
    for (Eigen::Index a = 0; a < d; ++a)
        for (Eigen::Index b = 0; b < a; ++b)
            s(a, b) = s(b, a);
    return s;
}

inline void check_scatter(const Matrix& z, const Matrix& weights, const Matrix& means)
{
    if (weights.rows() != z.rows() || weights.cols() != means.rows() || means.cols() != z.cols())
        throw DataError("class_scatter: shape mismatch");
}

}  // namespace gdastream::kernels::detail
