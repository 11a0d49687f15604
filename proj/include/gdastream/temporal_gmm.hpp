#pragma once

#include "gdastream/common.hpp"
#include "gdastream/embedding_io.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace gdastream::gmm {

inline constexpr double kDefaultRegStrength = 0.01;
inline constexpr double kDefaultPriorVariance = 0.1;

/// Persistent class-conditional mixture estimated by incremental EM.
///
/// `covariances` holds one shared matrix in Homogeneous mode and one matrix
/// per class in Heterogeneous mode. Soft counts start at 1 and only grow, so
/// priors (counts normalized) never reach zero.
struct GmmState {
    CovarianceMode mode = CovarianceMode::Homogeneous;
    Matrix means;                              // K x D
    std::vector<Eigen::MatrixXd> covariances;  // 1 or K matrices, D x D
    Vector priors;                             // K, on the simplex
    Vector counts;                             // K soft counts s_k
    std::uint64_t step = 0;
    double reg_strength = kDefaultRegStrength;
    double prior_variance = kDefaultPriorVariance;

    Eigen::Index num_classes() const { return means.rows(); }
    Eigen::Index dim() const { return means.cols(); }
    double total_count() const { return counts.sum(); }

    /// Covariance that applies to class k in either mode.
    const Eigen::MatrixXd& covariance(Eigen::Index k) const
    {
        return covariances.size() == 1 ? covariances.front() : covariances[static_cast<std::size_t>(k)];
    }
};

/// Means start at the L2-normalized prototypes, covariances at identity,
/// priors uniform and soft counts at 1.
GmmState init_state(const ClassPrototypes& prototypes, CovarianceMode mode,
                    double reg_strength = kDefaultRegStrength, double prior_variance = kDefaultPriorVariance);

/// Per-class log(pi_k) + log N(z_i | mu_k, Sigma_k), N x K.
Matrix log_joint(const GmmState& state, const Matrix& features);

/// Posterior responsibilities under `state`, row-normalized in log space.
Matrix e_step(const GmmState& state, const Matrix& features);

/// One incremental M-step: counts, means (weighted average with the running
/// statistics), covariance recursion with deviations taken against the updated
/// means, ridge shrinkage toward prior_variance * I, then priors from counts.
GmmState m_step(const GmmState& state, const Matrix& features, const Matrix& resp);

/// Mean over rows of log sum_k pi_k N(z_i | mu_k, Sigma_k).
double marginal_loglik(const GmmState& state, const Matrix& features);

// Checkpoint: "GDAS", mode byte, u32 K, u32 D, u64 t, then means, the
// covariance block (1 or K matrices), priors and counts as little-endian f64.
void write_checkpoint(const GmmState& state, std::ostream& out);
GmmState read_checkpoint(std::istream& in, double reg_strength = kDefaultRegStrength,
                         double prior_variance = kDefaultPriorVariance);

}  // namespace gdastream::gmm
