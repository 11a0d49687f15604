#pragma once

// Per-batch orchestration and CT-TTA metrics.
//
// Batch order: EMA adapter forward + L2 normalize, zero-shot sketch, (first
// batch only) covariance homogeneity test, E-step with the previous state,
// M-step, discriminant scores with the new state, fusion + argmax, then one
// self-paced adapter step. Labels never enter this path; they are joined to
// the predictions afterwards for scoring.

#include "gdastream/adapter.hpp"
#include "gdastream/common.hpp"
#include "gdastream/embedding_io.hpp"
#include "gdastream/homogeneity.hpp"
#include "gdastream/temporal_gmm.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gdastream::pipeline {

enum class ModeOverride { Auto, ForceLda, ForceQda };

const char* to_string(ModeOverride mode);

/// Component switches, one per ablation row. All enabled by default.
struct Components {
    bool hypothesis_test = true;  // off: no pooling, class-specific covariances
    bool em = true;               // off: mixture frozen at its initial state
    bool fusion = true;           // off: predictions from discriminant scores alone
    bool self_paced = true;       // off: adapter frozen at identity
    bool continual = true;        // off: mixture and adapter reset before every batch
};

struct PipelineConfig {
    double alpha = 1.0;
    double lr = adapter::kDefaultLearningRate;
    double ema = adapter::kDefaultEmaDecay;
    double eps = gmm::kDefaultRegStrength;
    double prior_variance = gmm::kDefaultPriorVariance;
    double tau = 0.01;
    double kappa = homogeneity::kDefaultKappa;
    Eigen::Index pca_dim = homogeneity::kDefaultPcaDim;
    std::size_t batch_size = 0;  // 0 accepts any stored batch size
    std::uint32_t rounds = 1;
    ModeOverride mode = ModeOverride::Auto;
    Components enabled;
    std::uint64_t seed = 0;  // recorded only; the pipeline itself draws no random numbers

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Applies a component name as used by `--disable`: hypothesis-test, em,
/// fusion, self-paced, continual. Throws ConfigError on unknown names.
void disable_component(PipelineConfig& config, const std::string& name);

struct StepOutput {
    std::vector<std::uint32_t> predictions;
    Matrix adapted_logits;
    double refine_loss = 0.0;
    bool adapter_skipped = false;
};

/// Streaming engine. `step` is label-blind: it only ever receives features.
class Pipeline {
public:
    Pipeline(ClassPrototypes prototypes, PipelineConfig config);

    StepOutput step(const FloatMatrix& raw_features);

    const PipelineConfig& config() const { return config_; }
    const ClassPrototypes& prototypes() const { return prototypes_; }
    bool mode_decided() const { return mode_.has_value(); }
    CovarianceMode mode() const;
    const std::optional<homogeneity::HomogeneityReport>& report() const { return report_; }
    const gmm::GmmState& state() const { return state_; }
    const adapter::AdapterState& adapter() const { return adapter_; }
    std::uint64_t steps_taken() const { return steps_; }

    // Checkpoint file: mixture block ("GDAS...") followed by adapter block ("GDAA...").
    void save_checkpoint(const std::filesystem::path& file) const;
    void load_checkpoint(const std::filesystem::path& file);

private:
    void decide_mode(const Matrix& z, const Matrix& sketch_probs);
    void reset_components();

    ClassPrototypes prototypes_;
    PipelineConfig config_;
    std::optional<CovarianceMode> mode_;
    std::optional<homogeneity::HomogeneityReport> report_;
    gmm::GmmState state_;
    adapter::AdapterState adapter_;
    std::uint64_t steps_ = 0;
};

struct PredictionRecord {
    std::uint32_t step = 0;
    std::uint32_t domain = 0;
    std::uint32_t prediction = 0;
    std::optional<std::uint32_t> label;
};

using PredictionLog = std::vector<PredictionRecord>;

struct DomainAccuracy {
    std::uint32_t domain = 0;
    std::size_t samples = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct EvalSummary {
    std::vector<DomainAccuracy> domains;  // manifest order when a manifest is given, else by domain id
    double weighted_accuracy = 0.0;
    std::vector<double> round_averages;
    std::optional<homogeneity::HomogeneityReport> report;
    std::optional<CovarianceMode> mode;
    double runtime_seconds = 0.0;
};

/// Per-domain top-1 accuracy and the sample-weighted mean. Order of the log
/// does not matter. Throws DataError when a record has no label or the log
/// disagrees with the manifest's domain sizes.
EvalSummary summarize(const PredictionLog& log, const StreamManifest* manifest = nullptr);

struct RoundResult {
    PredictionLog log;
    EvalSummary summary;
};

struct RunResult {
    std::vector<RoundResult> rounds;
    EvalSummary summary;  // final round, with round_averages over all rounds
};

/// One pass over `source`. Equivalent to run_longterm with one round.
RunResult run_stream(BatchSource& source, const ClassPrototypes& prototypes, const PipelineConfig& config);

/// Replays `source` config.rounds times with the pipeline carried across rounds.
RunResult run_longterm(BatchSource& source, const ClassPrototypes& prototypes, const PipelineConfig& config);

/// Same driver with a caller-owned pipeline (e.g. restored from a checkpoint).
RunResult run_with(Pipeline& pipeline, BatchSource& source, std::uint32_t rounds);

/// Frozen zero-shot baseline: argmax of the cosine sketch on normalized raw features.
RunResult run_zero_shot(BatchSource& source, const ClassPrototypes& prototypes);

// Output helpers.
void write_prediction_csv(const PredictionLog& log, const std::filesystem::path& file);
std::string run_log_text(const PipelineConfig& config, const RunResult& result);
void write_accuracy_table(const RunResult& result, const std::filesystem::path& file);

}  // namespace gdastream::pipeline
