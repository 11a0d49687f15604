#pragma once

#include "gdastream/common.hpp"
#include "gdastream/embedding_io.hpp"

#include <cstdint>
#include <iosfwd>

namespace gdastream::adapter {

inline constexpr double kDefaultLearningRate = 0.005;
inline constexpr double kDefaultEmaDecay = 0.99;

/// Per-dimension affine feature transform x -> scale .* x + shift, followed by
/// row L2 normalization. The live parameters are trained; the EMA shadow is
/// what inference reads.
struct AdapterState {
    Vector scale;
    Vector shift;
    Vector ema_scale;
    Vector ema_shift;
    double lr = kDefaultLearningRate;
    double ema_decay = kDefaultEmaDecay;
    std::uint64_t steps = 0;

    Eigen::Index dim() const { return scale.size(); }
};

AdapterState init_adapter(Eigen::Index dim, double lr = kDefaultLearningRate, double ema_decay = kDefaultEmaDecay);

Matrix forward(const AdapterState& adapter, const Matrix& raw_features, bool use_ema);

/// Same transform with explicit parameters (used by finite-difference checks).
Matrix forward_with(const Vector& scale, const Vector& shift, const Matrix& raw_features);

struct RefineLoss {
    double value = 0.0;
    Vector grad_scale;  // empty unless produced by refine_gradient
    Vector grad_shift;
};

/// Soft cross-entropy -(1/N) sum_i sum_k softmax(adapted_i)_k log softmax(sketch_i / tau)_k.
/// The adapted distribution is a constant target.
RefineLoss refine_loss(const Matrix& sketch_logits, const Matrix& adapted_logits, double tau);

/// Loss and analytic gradients with respect to the live scale/shift, given a
/// fixed target distribution (rows on the simplex).
RefineLoss refine_gradient(const AdapterState& adapter, const Matrix& raw_features, const ClassPrototypes& prototypes,
                           const Matrix& target_distribution);

struct StepResult {
    AdapterState adapter;
    RefineLoss loss;
    bool skipped = false;  // non-finite gradient: parameters left untouched
};

/// One gradient-descent step on the live parameters, then the EMA update
/// ema <- decay * ema + (1 - decay) * live.
StepResult backward_and_step(const AdapterState& adapter, const Matrix& raw_features,
                             const ClassPrototypes& prototypes, const Matrix& target_distribution);

struct Snapshot {
    Vector scale;
    Vector shift;
};

inline Snapshot ema_snapshot(const AdapterState& adapter) { return {adapter.ema_scale, adapter.ema_shift}; }

// Checkpoint block: "GDAA", then scale, shift, ema_scale, ema_shift as
// little-endian f64 (D values each; D comes from the preceding state block).
void write_checkpoint(const AdapterState& adapter, std::ostream& out);
AdapterState read_checkpoint(std::istream& in, Eigen::Index dim, double lr = kDefaultLearningRate,
                             double ema_decay = kDefaultEmaDecay);

}  // namespace gdastream::adapter
