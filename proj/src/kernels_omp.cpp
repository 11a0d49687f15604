#include "gdastream/kernels.hpp"

#include "kernel_rows.hpp"

#include <atomic>

namespace gdastream::kernels::omp {

namespace {

// Signed loop counters for OpenMP worksharing.
using Index = std::ptrdiff_t;

}  // namespace

Matrix affine_normalize(const Matrix& x, const Vector& scale, const Vector& shift)
{
    detail::check_shapes_affine(x, scale, shift);
    Matrix out(x.rows(), x.cols());
    const Index n = x.rows();
    std::atomic<Index> bad{-1};
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i) {
        if (!detail::affine_normalize_row(x, scale, shift, out, i))
            bad.store(i);
    }
    if (bad.load() >= 0)
        throw DataError("affine_normalize: zero-norm output row " + std::to_string(bad.load()));
    return out;
}

Matrix cosine_logits(const Matrix& z, const Matrix& prototypes)
{
    if (z.cols() != prototypes.cols())
        throw DataError("cosine_logits: dimension mismatch");
    const Vector w_inv = detail::inverse_row_norms(prototypes, "cosine_logits prototypes");
    const Vector z_inv = detail::inverse_row_norms(z, "cosine_logits features");
    Matrix out(z.rows(), prototypes.rows());
    const Index n = z.rows();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i)
        detail::cosine_row(z, prototypes, w_inv, z_inv(i), out, i);
    return out;
}

Matrix row_softmax(const Matrix& logits, double inv_temperature)
{
    Matrix out(logits.rows(), logits.cols());
    const Index n = logits.rows();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i)
        detail::softmax_row(logits, inv_temperature, out, i);
    return out;
}

Matrix normalize_log_rows(const Matrix& log_weights)
{
    Matrix out(log_weights.rows(), log_weights.cols());
    const Index n = log_weights.rows();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i)
        detail::normalize_log_row(log_weights, out, i);
    return out;
}

Matrix quadratic_forms(const Matrix& z, const Matrix& means, const std::vector<Eigen::MatrixXd>& precisions)
{
    detail::check_quadratic(z, means, precisions);
    Matrix out(z.rows(), means.rows());
    const Index n = z.rows();
#pragma omp parallel
    {
        Vector diff(z.cols());
#pragma omp for schedule(static)
        for (Index i = 0; i < n; ++i)
            detail::quadratic_row(z, means, precisions, out, i, diff);
    }
    return out;
}

std::vector<Eigen::MatrixXd> class_scatter(const Matrix& z, const Matrix& weights, const Matrix& means)
{
    detail::check_scatter(z, weights, means);
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(means.rows()));
    const Index k = means.rows();
    // One class per iteration keeps each reduction in row order.
#pragma omp parallel for schedule(dynamic)
    for (Index c = 0; c < k; ++c)
        out[static_cast<std::size_t>(c)] = detail::scatter_class(z, weights, means, c);
    return out;
}

}  // namespace gdastream::kernels::omp
