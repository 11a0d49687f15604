#pragma once

// Synthetic temporally drifting embedding streams with known ground truth.
//
// Each class is Gaussian in raw embedding space. Class parameters move across
// domains along one trajectory (a rigid rotation of every class mean in a fixed
// coordinate plane, a common mean translation, or an isotropic covariance
// inflation). Batches inside a domain share one distribution, so the only
// non-zero consecutive-step divergences sit at domain boundaries.

#include "gdastream/common.hpp"
#include "gdastream/embedding_io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gdastream::drift {

enum class TrajectoryKind { Rotation, MeanTranslation, CovarianceInflation };

const char* to_string(TrajectoryKind kind);

struct DriftSpec {
    std::uint32_t classes = 10;
    std::uint32_t dim = 32;
    Matrix base_means;             // K x D, unit rows; built by make_base_means when empty
    double plane_energy = 0.6;     // squared norm of each base mean inside the rotation plane
    double cov_scale = 0.02;       // isotropic class variance
    Vector class_priors;           // uniform when empty

    TrajectoryKind kind = TrajectoryKind::Rotation;
    std::uint32_t plane_a = 0;
    std::uint32_t plane_b = 1;
    double total_angle_deg = 80.0;
    Vector direction;              // translation direction (normalized); e_0 when empty
    double magnitude = 0.0;
    double scale_start = 1.0;      // covariance inflation multipliers
    double scale_end = 1.0;

    std::uint32_t domains = 9;
    std::uint32_t batches_per_domain = 5;
    std::uint32_t batch_size = 128;
    double delta = 0.5;
    std::uint64_t seed = 1;
};

/// Unit class means whose plane component sits at evenly spaced angles with
/// squared norm `plane_energy`; the remainder is a seeded random direction
/// orthogonal to the plane.
Matrix make_base_means(std::uint32_t classes, std::uint32_t dim, std::uint32_t plane_a, std::uint32_t plane_b,
                       double plane_energy, std::uint64_t seed);

/// Fills derived fields (base means, priors, direction) and validates ranges.
/// Throws ConfigError on invalid values.
DriftSpec resolve(DriftSpec spec);

DriftSpec parse_spec(const std::string& key_value_text);
std::string to_key_value(const DriftSpec& spec);

struct DomainParams {
    Matrix means;                        // K x D
    std::vector<Eigen::MatrixXd> covs;   // K
    Vector priors;
};

struct GroundTruth {
    std::vector<DomainParams> domains;
    std::vector<std::uint32_t> step_domain;  // domain position of every batch, in stream order
    std::vector<std::uint32_t> step_index;   // batch step index, in stream order
};

/// Parameters of domain `j` (0-based) along the resolved spec's trajectory.
DomainParams domain_params(const DriftSpec& resolved, std::uint32_t j);

struct Generated {
    std::vector<EmbeddingBatch> batches;  // labelled, step indices 1..T
    ClassPrototypes prototypes;            // frozen at the domain-0 class means
    GroundTruth truth;
};

/// Deterministic in the spec (including its seed). Throws ConfigError when the
/// trajectory violates the KL budget; the message names the smallest domain
/// count that would satisfy it.
Generated generate(const DriftSpec& spec);

/// Ground truth alone (no sampling); used to re-verify a stream from its spec.
GroundTruth ground_truth(const DriftSpec& spec);

/// Smallest domain count for which the trajectory meets `delta`, if any.
std::optional<std::uint32_t> minimal_domain_count(const DriftSpec& spec);

struct StepDivergence {
    std::uint32_t from_step = 0;
    std::uint32_t to_step = 0;
    double max_class_kl = 0.0;
};

struct DriftReport {
    std::vector<StepDivergence> steps;
    double max_kl = 0.0;
    std::optional<std::uint32_t> first_violation;  // from_step of the first step above delta
    bool pass = true;
};

DriftReport verify_drift_bound(const GroundTruth& truth, double delta);

/// Bayes-optimal class decisions for raw features under the true parameters
/// of domain position `domain`.
std::vector<std::uint32_t> bayes_predictions(const GroundTruth& truth, std::uint32_t domain, const FloatMatrix& raw);

}  // namespace gdastream::drift
