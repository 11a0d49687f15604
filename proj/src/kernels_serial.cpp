#include "gdastream/kernels.hpp"

#include "kernel_rows.hpp"

namespace gdastream::kernels::serial {

Matrix affine_normalize(const Matrix& x, const Vector& scale, const Vector& shift)
{
    detail::check_shapes_affine(x, scale, shift);
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (!detail::affine_normalize_row(x, scale, shift, out, i))
            throw DataError("affine_normalize: zero-norm output row " + std::to_string(i));
    }
    return out;
}

Matrix cosine_logits(const Matrix& z, const Matrix& prototypes)
{
    if (z.cols() != prototypes.cols())
        throw DataError("cosine_logits: dimension mismatch");
    const Vector w_inv = detail::inverse_row_norms(prototypes, "cosine_logits prototypes");
    const Vector z_inv = detail::inverse_row_norms(z, "cosine_logits features");
    Matrix out(z.rows(), prototypes.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        detail::cosine_row(z, prototypes, w_inv, z_inv(i), out, i);
    return out;
}

Matrix row_softmax(const Matrix& logits, double inv_temperature)
{
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        detail::softmax_row(logits, inv_temperature, out, i);
    return out;
}

Matrix normalize_log_rows(const Matrix& log_weights)
{
    Matrix out(log_weights.rows(), log_weights.cols());
    for (Eigen::Index i = 0; i < log_weights.rows(); ++i)
        detail::normalize_log_row(log_weights, out, i);
    return out;
}

Matrix quadratic_forms(const Matrix& z, const Matrix& means, const std::vector<Eigen::MatrixXd>& precisions)
{
    detail::check_quadratic(z, means, precisions);
    Matrix out(z.rows(), means.rows());
    Vector diff(z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        detail::quadratic_row(z, means, precisions, out, i, diff);
    return out;
}

std::vector<Eigen::MatrixXd> class_scatter(const Matrix& z, const Matrix& weights, const Matrix& means)
{
    detail::check_scatter(z, weights, means);
    std::vector<Eigen::MatrixXd> out(static_cast<std::size_t>(means.rows()));
    for (Eigen::Index k = 0; k < means.rows(); ++k)
        out[static_cast<std::size_t>(k)] = detail::scatter_class(z, weights, means, k);
    return out;
}

}  // namespace gdastream::kernels::serial
