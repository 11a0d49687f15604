#include "gdastream/pipeline.hpp"

#include "gdastream/gda_head.hpp"
#include "gdastream/kernels.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

namespace gdastream::pipeline {

namespace {

template <typename E>
[[noreturn]] void rethrow_with_step(const E& e, std::uint32_t step)
{
    throw E("batch " + std::to_string(step) + ": " + e.what());
}

}  // namespace

const char* to_string(ModeOverride mode)
{
    switch (mode) {
    case ModeOverride::Auto:
        return "auto";
    case ModeOverride::ForceLda:
        return "lda";
    case ModeOverride::ForceQda:
        return "qda";
    }
    return "unknown";
}

void PipelineConfig::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ConfigError(std::string(name) + " must be a positive finite number");
    };
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
        throw ConfigError("alpha must be a non-negative finite number");
    positive(lr, "lr");
    positive(tau, "tau");
    positive(prior_variance, "prior-var");
    if (!(ema >= 0.0 && ema <= 1.0))
        throw ConfigError("ema must lie in [0, 1]");
    if (!(eps >= 0.0 && eps <= 1.0))
        throw ConfigError("eps must lie in [0, 1]");
    if (!(kappa > 0.0 && kappa < 1.0))
        throw ConfigError("kappa must lie in (0, 1)");
    if (pca_dim < 1)
        throw ConfigError("pca-dim must be positive");
    if (rounds < 1)
        throw ConfigError("rounds must be at least 1");
}

void disable_component(PipelineConfig& config, const std::string& name)
{
    if (name == "hypothesis-test")
        config.enabled.hypothesis_test = false;
    else if (name == "em")
        config.enabled.em = false;
    else if (name == "fusion")
        config.enabled.fusion = false;
    else if (name == "self-paced")
        config.enabled.self_paced = false;
    else if (name == "continual")
        config.enabled.continual = false;
    else
        throw ConfigError("unknown component '" + name +
                          "' (expected hypothesis-test, em, fusion, self-paced or continual)");
}

Pipeline::Pipeline(ClassPrototypes prototypes, PipelineConfig config)
    : prototypes_(std::move(prototypes)), config_(config)
{
    config_.validate();
    validate_prototypes(prototypes_);
    prototypes_.temperature = config_.tau;
    adapter_ = adapter::init_adapter(static_cast<Eigen::Index>(prototypes_.dim()), config_.lr, config_.ema);
}

CovarianceMode Pipeline::mode() const
{
    if (!mode_)
        throw ConfigError("covariance mode not decided before the first batch");
    return *mode_;
}

void Pipeline::decide_mode(const Matrix& z, const Matrix& sketch_probs)
{
    switch (config_.mode) {
    case ModeOverride::ForceLda:
        mode_ = CovarianceMode::Homogeneous;
        break;
    case ModeOverride::ForceQda:
        mode_ = CovarianceMode::Heterogeneous;
        break;
    case ModeOverride::Auto:
        if (config_.enabled.hypothesis_test) {
            report_ = homogeneity::select_covariance_mode(z, sketch_probs, config_.pca_dim, config_.kappa);
            mode_ = report_->decision;
        } else {
            mode_ = CovarianceMode::Heterogeneous;
        }
        break;
    }
    state_ = gmm::init_state(prototypes_, *mode_, config_.eps, config_.prior_variance);
}

void Pipeline::reset_components()
{
    state_ = gmm::init_state(prototypes_, *mode_, config_.eps, config_.prior_variance);
    adapter_ = adapter::init_adapter(adapter_.dim(), config_.lr, config_.ema);
}

StepOutput Pipeline::step(const FloatMatrix& raw_features)
{
    if (raw_features.cols() != static_cast<Eigen::Index>(prototypes_.dim()))
        throw DataError("feature dimension does not match prototypes");
    if (raw_features.rows() < 1)
        throw DataError("empty batch");
    if (config_.batch_size != 0 && static_cast<std::size_t>(raw_features.rows()) != config_.batch_size)
        throw ConfigError("batch size " + std::to_string(raw_features.rows()) + " differs from configured " +
                          std::to_string(config_.batch_size));

    if (mode_ && !config_.enabled.continual)
        reset_components();

    const Matrix x = raw_features.cast<double>();
    const Matrix z = adapter::forward(adapter_, x, true);
    const gda::SketchOutput sk = gda::sketch(z, prototypes_);

    if (!mode_)
        decide_mode(z, sk.probs);

    if (config_.enabled.em) {
        const Matrix resp = gmm::e_step(state_, z);
        state_ = gmm::m_step(state_, z, resp);
    }

    const Matrix scores = gda::discriminant_scores(state_, z);
    StepOutput out;
    if (config_.enabled.fusion) {
        auto fused = gda::fuse_and_predict(sk.logits, scores, config_.alpha);
        out.adapted_logits = std::move(fused.adapted_logits);
        out.predictions = std::move(fused.predictions);
    } else {
        out.adapted_logits = scores;
        out.predictions = gda::argmax_rows(scores);
    }

    if (config_.enabled.self_paced) {
        const Matrix target = kernels::omp::row_softmax(out.adapted_logits, 1.0);
        auto result = adapter::backward_and_step(adapter_, x, prototypes_, target);
        out.refine_loss = result.loss.value;
        out.adapter_skipped = result.skipped;
        adapter_ = std::move(result.adapter);
    }
    ++steps_;
    return out;
}

void Pipeline::save_checkpoint(const std::filesystem::path& file) const
{
    if (!mode_)
        throw ConfigError("nothing to checkpoint before the first batch");
    std::ofstream out(file, std::ios::binary);
    if (!out)
        throw DataError("cannot open checkpoint for writing: " + file.string());
    gmm::write_checkpoint(state_, out);
    adapter::write_checkpoint(adapter_, out);
}

void Pipeline::load_checkpoint(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw DataError("cannot open checkpoint: " + file.string());
    gmm::GmmState state = gmm::read_checkpoint(in, config_.eps, config_.prior_variance);
    if (state.num_classes() != static_cast<Eigen::Index>(prototypes_.num_classes()) ||
        state.dim() != static_cast<Eigen::Index>(prototypes_.dim()))
        throw DataError("checkpoint shape does not match prototypes");
    adapter::AdapterState a = adapter::read_checkpoint(in, state.dim(), config_.lr, config_.ema);
    in.peek();
    if (!in.eof())
        throw DataError("checkpoint: trailing bytes");
    mode_ = state.mode;
    state_ = std::move(state);
    adapter_ = std::move(a);
}

EvalSummary summarize(const PredictionLog& log, const StreamManifest* manifest)
{
    std::map<std::uint32_t, DomainAccuracy> by_domain;
    for (const auto& rec : log) {
        if (!rec.label)
            throw DataError("summarize: missing labels for step " + std::to_string(rec.step));
        auto& d = by_domain[rec.domain];
        d.domain = rec.domain;
        ++d.samples;
        if (*rec.label == rec.prediction)
            ++d.correct;
    }

    EvalSummary summary;
    if (manifest) {
        std::map<std::uint32_t, std::size_t> expected;
        for (const auto& entry : manifest->domains)
            expected[entry.domain_id] += entry.sample_count;
        for (const auto& [id, n] : expected) {
            const auto it = by_domain.find(id);
            if (it == by_domain.end() || it->second.samples != n)
                throw DataError("summarize: log does not match manifest for domain " + std::to_string(id));
        }
        if (expected.size() != by_domain.size())
            throw DataError("summarize: log contains domains missing from the manifest");
        for (const auto& entry : manifest->domains) {
            const auto it = by_domain.find(entry.domain_id);
            if (it != by_domain.end()) {
                summary.domains.push_back(it->second);
                by_domain.erase(it);
            }
        }
    } else {
        for (const auto& [id, d] : by_domain)
            summary.domains.push_back(d);
    }

    double weighted = 0.0;
    double total = 0.0;
    for (auto& d : summary.domains) {
        d.accuracy = static_cast<double>(d.correct) / static_cast<double>(d.samples);
        weighted += d.accuracy * static_cast<double>(d.samples);
        total += static_cast<double>(d.samples);
    }
    summary.weighted_accuracy = total > 0.0 ? weighted / total : 0.0;
    summary.round_averages = {summary.weighted_accuracy};
    return summary;
}

RunResult run_with(Pipeline& pipeline, BatchSource& source, std::uint32_t rounds)
{
    if (rounds < 1)
        throw ConfigError("rounds must be at least 1");
    RunResult result;
    const auto start = std::chrono::steady_clock::now();
    for (std::uint32_t r = 0; r < rounds; ++r) {
        source.rewind();
        RoundResult round;
        while (auto batch = source.next()) {
            StepOutput out;
            try {
                out = pipeline.step(batch->features);
            } catch (const DataError& e) {
                rethrow_with_step(e, batch->step_index);
            } catch (const ConfigError& e) {
                rethrow_with_step(e, batch->step_index);
            } catch (const NumericError& e) {
                rethrow_with_step(e, batch->step_index);
            }
            // Labels are joined only after the predictions exist.
            for (std::size_t i = 0; i < out.predictions.size(); ++i) {
                PredictionRecord rec{batch->step_index, batch->domain_id, out.predictions[i], std::nullopt};
                if (batch->labels)
                    rec.label = (*batch->labels)[i];
                round.log.push_back(rec);
            }
        }
        if (round.log.empty())
            throw DataError("empty stream");
        const bool labelled = round.log.front().label.has_value();
        if (labelled)
            round.summary = summarize(round.log);
        round.summary.report = pipeline.report();
        if (pipeline.mode_decided())
            round.summary.mode = pipeline.mode();
        result.rounds.push_back(std::move(round));
    }
    const auto stop = std::chrono::steady_clock::now();

    result.summary = result.rounds.back().summary;
    result.summary.round_averages.clear();
    for (const auto& round : result.rounds)
        result.summary.round_averages.push_back(round.summary.weighted_accuracy);
    result.summary.runtime_seconds = std::chrono::duration<double>(stop - start).count();
    return result;
}

RunResult run_longterm(BatchSource& source, const ClassPrototypes& prototypes, const PipelineConfig& config)
{
    Pipeline pipeline(prototypes, config);
    return run_with(pipeline, source, config.rounds);
}

RunResult run_stream(BatchSource& source, const ClassPrototypes& prototypes, const PipelineConfig& config)
{
    PipelineConfig single = config;
    single.rounds = 1;
    return run_longterm(source, prototypes, single);
}

RunResult run_zero_shot(BatchSource& source, const ClassPrototypes& prototypes)
{
    validate_prototypes(prototypes);
    RunResult result;
    RoundResult round;
    const auto start = std::chrono::steady_clock::now();
    source.rewind();
    while (auto batch = source.next()) {
        const Matrix z = kernels::omp::affine_normalize(batch->features.cast<double>(),
                                                        Vector::Ones(batch->features.cols()),
                                                        Vector::Zero(batch->features.cols()));
        const auto predictions = gda::argmax_rows(gda::sketch(z, prototypes).logits);
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            PredictionRecord rec{batch->step_index, batch->domain_id, predictions[i], std::nullopt};
            if (batch->labels)
                rec.label = (*batch->labels)[i];
            round.log.push_back(rec);
        }
    }
    if (round.log.empty())
        throw DataError("empty stream");
    if (round.log.front().label)
        round.summary = summarize(round.log);
    result.rounds.push_back(std::move(round));
    result.summary = result.rounds.back().summary;
    result.summary.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

void write_prediction_csv(const PredictionLog& log, const std::filesystem::path& file)
{
    std::ofstream out(file);
    if (!out)
        throw DataError("cannot write " + file.string());
    out << "step,domain,prediction,label\n";
    for (const auto& rec : log) {
        out << rec.step << ',' << rec.domain << ',' << rec.prediction << ',';
        if (rec.label)
            out << *rec.label;
        out << '\n';
    }
    if (!out)
        throw DataError("write failed: " + file.string());
}

std::string run_log_text(const PipelineConfig& config, const RunResult& result)
{
    std::ostringstream out;
    out.precision(10);
    out << "config.alpha=" << config.alpha << '\n'
        << "config.lr=" << config.lr << '\n'
        << "config.ema=" << config.ema << '\n'
        << "config.eps=" << config.eps << '\n'
        << "config.prior_var=" << config.prior_variance << '\n'
        << "config.tau=" << config.tau << '\n'
        << "config.kappa=" << config.kappa << '\n'
        << "config.pca_dim=" << config.pca_dim << '\n'
        << "config.rounds=" << config.rounds << '\n'
        << "config.mode=" << to_string(config.mode) << '\n'
        << "config.seed=" << config.seed << '\n'
        << "config.hypothesis_test=" << config.enabled.hypothesis_test << '\n'
        << "config.em=" << config.enabled.em << '\n'
        << "config.fusion=" << config.enabled.fusion << '\n'
        << "config.self_paced=" << config.enabled.self_paced << '\n'
        << "config.continual=" << config.enabled.continual << '\n';
    const EvalSummary& s = result.summary;
    if (s.mode)
        out << "mode=" << to_string(*s.mode) << '\n';
    if (s.report)
        out << s.report->to_key_value();
    for (const auto& d : s.domains)
        out << "domain." << d.domain << ".accuracy=" << d.accuracy << '\n'
            << "domain." << d.domain << ".samples=" << d.samples << '\n';
    out << "weighted_accuracy=" << s.weighted_accuracy << '\n';
    for (std::size_t r = 0; r < s.round_averages.size(); ++r)
        out << "round." << (r + 1) << ".weighted_accuracy=" << s.round_averages[r] << '\n';
    out << "runtime_seconds=" << s.runtime_seconds << '\n';
    return out.str();
}

void write_accuracy_table(const RunResult& result, const std::filesystem::path& file)
{
    std::ofstream out(file);
    if (!out)
        throw DataError("cannot write " + file.string());
    out << "# domain";
    for (std::size_t r = 0; r < result.rounds.size(); ++r)
        out << " round" << (r + 1);
    out << '\n';
    const auto& domains = result.rounds.front().summary.domains;
    for (std::size_t j = 0; j < domains.size(); ++j) {
        out << domains[j].domain;
        for (const auto& round : result.rounds)
            out << ' ' << round.summary.domains.at(j).accuracy;
        out << '\n';
    }
}

}  // namespace gdastream::pipeline
