#pragma once

#include "gdastream/common.hpp"
#include "gdastream/embedding_io.hpp"
#include "gdastream/temporal_gmm.hpp"

#include <vector>

namespace gdastream::gda {

inline constexpr double kDefaultFusionWeight = 1.0;

struct SketchOutput {
    Matrix logits;  // cosine similarities, N x K
    Matrix probs;   // softmax(logits / tau), N x K
};

struct LogitBundle {
    Matrix sketch_logits;
    Matrix sketch_probs;
    Matrix discriminant_scores;
    Matrix adapted_logits;  // sketch_logits + alpha * discriminant_scores
    std::vector<std::uint32_t> predictions;
    double fusion_weight = kDefaultFusionWeight;
};

/// Cosine logits against the class prototypes and their temperature softmax.
SketchOutput sketch(const Matrix& features, const ClassPrototypes& prototypes);

/// log pi_k - 1/2 (z - mu_k)^T Sigma_k^+ (z - mu_k) - 1/2 log|Sigma_k| for
/// every row and class. In Homogeneous mode the shared covariance is used for
/// every class, so the log-determinant term is class-constant.
Matrix discriminant_scores(const gmm::GmmState& state, const Matrix& features);

/// Row-wise argmax, lowest index wins ties.
std::vector<std::uint32_t> argmax_rows(const Matrix& scores);

struct Fused {
    Matrix adapted_logits;
    std::vector<std::uint32_t> predictions;
};

Fused fuse_and_predict(const Matrix& sketch_logits, const Matrix& discriminant_scores, double alpha);

}  // namespace gdastream::gda
