#pragma once

// Data-parallel inner loops of the pipeline.
//
// Every kernel exists twice: `serial::` is the plain reference and `omp::` is
// the OpenMP version used by the library. Both evaluate each output row (or
// each class block) through the same row routine, so their results are
// bit-identical and tests assert exact equality.

#include "gdastream/common.hpp"

#include <vector>

namespace gdastream::kernels {

namespace serial {

/// out_i = (scale .* x_i + shift) / ||scale .* x_i + shift||. Throws DataError on a zero row.
Matrix affine_normalize(const Matrix& x, const Vector& scale, const Vector& shift);

/// cos(z_i, w_k) for every row/prototype pair.
Matrix cosine_logits(const Matrix& z, const Matrix& prototypes);

/// Row-wise softmax of logits * inv_temperature (max-shifted).
Matrix row_softmax(const Matrix& logits, double inv_temperature);

/// Row-wise exp(a_ik - logsumexp_k a_ik).
Matrix normalize_log_rows(const Matrix& log_weights);

/// (z_i - mu_k)^T P_k (z_i - mu_k). `precisions` holds one shared matrix or one per class.
Matrix quadratic_forms(const Matrix& z, const Matrix& means, const std::vector<Eigen::MatrixXd>& precisions);

/// S_k = sum_i w_ik (z_i - mu_k)(z_i - mu_k)^T for every class k.
std::vector<Eigen::MatrixXd> class_scatter(const Matrix& z, const Matrix& weights, const Matrix& means);

}  // namespace serial

namespace omp {

Matrix affine_normalize(const Matrix& x, const Vector& scale, const Vector& shift);
Matrix cosine_logits(const Matrix& z, const Matrix& prototypes);
Matrix row_softmax(const Matrix& logits, double inv_temperature);
Matrix normalize_log_rows(const Matrix& log_weights);
Matrix quadratic_forms(const Matrix& z, const Matrix& means, const std::vector<Eigen::MatrixXd>& precisions);
std::vector<Eigen::MatrixXd> class_scatter(const Matrix& z, const Matrix& weights, const Matrix& means);

}  // namespace omp

}  // namespace gdastream::kernels
