#include "gdastream/gda_head.hpp"

#include "gdastream/kernels.hpp"
#include "gdastream/tensor_stats.hpp"

#include <cmath>

namespace gdastream::gda {

SketchOutput sketch(const Matrix& features, const ClassPrototypes& prototypes)
{
    if (!features.allFinite())
        throw DataError("sketch: non-finite feature");
    SketchOutput out;
    out.logits = kernels::omp::cosine_logits(features, prototypes.prototypes.cast<double>());
    out.probs = kernels::omp::row_softmax(out.logits, 1.0 / prototypes.temperature);
    return out;
}

Matrix discriminant_scores(const gmm::GmmState& state, const Matrix& features)
{
    if (features.cols() != state.dim())
        throw DataError("discriminant_scores: dimension mismatch");

    std::vector<Eigen::MatrixXd> precisions;
    std::vector<double> log_dets;
    for (const auto& cov : state.covariances) {
        auto spd = stats::regularized_spd(cov);
        log_dets.push_back(spd.log_det);
        precisions.push_back(std::move(spd.inverse));
    }

    Matrix scores = kernels::omp::quadratic_forms(features, state.means, precisions);
    for (Eigen::Index k = 0; k < state.num_classes(); ++k) {
        const double ld = log_dets.size() == 1 ? log_dets.front() : log_dets[static_cast<std::size_t>(k)];
        const double offset = std::log(state.priors(k)) - 0.5 * ld;
        scores.col(k) = (-0.5 * scores.col(k)).array() + offset;
    }
    return scores;
}

std::vector<std::uint32_t> argmax_rows(const Matrix& scores)
{
    std::vector<std::uint32_t> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < scores.cols(); ++k) {
            if (scores(i, k) > scores(i, best))
                best = k;
        }
        out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
    }
    return out;
}

Fused fuse_and_predict(const Matrix& sketch_logits, const Matrix& discriminant_scores, double alpha)
{
    if (sketch_logits.rows() != discriminant_scores.rows() || sketch_logits.cols() != discriminant_scores.cols())
        throw DataError("fuse_and_predict: shape mismatch");
    if (!(alpha >= 0.0))
        throw ConfigError("fuse_and_predict: alpha must be non-negative");

    Fused out;
    out.adapted_logits = sketch_logits + alpha * discriminant_scores;
    out.predictions = argmax_rows(out.adapted_logits);
    return out;
}

}  // namespace gdastream::gda
