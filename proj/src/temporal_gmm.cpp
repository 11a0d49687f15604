#include "gdastream/temporal_gmm.hpp"

#include "binary_io.hpp"
#include "gdastream/kernels.hpp"
#include "gdastream/tensor_stats.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

namespace gdastream::gmm {

namespace {

constexpr std::array<char, 4> kStateMagic{'G', 'D', 'A', 'S'};

void check_features(const GmmState& state, const Matrix& features, const char* op)
{
    if (features.cols() != state.dim())
        throw DataError(std::string(op) + ": feature dimension " + std::to_string(features.cols()) +
                        " does not match state dimension " + std::to_string(state.dim()));
    if (!features.allFinite())
        throw DataError(std::string(op) + ": non-finite feature");
}

Eigen::MatrixXd regularize(const Eigen::MatrixXd& cov, double eps, double prior_variance)
{
    Eigen::MatrixXd out = (1.0 - eps) * cov;
    out.diagonal().array() += eps * prior_variance;
    return 0.5 * (out + out.transpose());
}

}  // namespace

GmmState init_state(const ClassPrototypes& prototypes, CovarianceMode mode, double reg_strength,
                    double prior_variance)
{
    validate_prototypes(prototypes);
    if (!(reg_strength >= 0.0 && reg_strength <= 1.0))
        throw ConfigError("init_state: reg_strength must lie in [0, 1]");
    if (!(prior_variance > 0.0))
        throw ConfigError("init_state: prior_variance must be positive");

    const auto k = static_cast<Eigen::Index>(prototypes.num_classes());
    const auto d = static_cast<Eigen::Index>(prototypes.dim());

    GmmState state;
    state.mode = mode;
    state.means = prototypes.prototypes.cast<double>();
    for (Eigen::Index c = 0; c < k; ++c)
        state.means.row(c).normalize();
    const std::size_t blocks = mode == CovarianceMode::Homogeneous ? 1 : static_cast<std::size_t>(k);
    state.covariances.assign(blocks, Eigen::MatrixXd::Identity(d, d));
    state.priors = Vector::Constant(k, 1.0 / static_cast<double>(k));
    state.counts = Vector::Ones(k);
    state.step = 0;
    state.reg_strength = reg_strength;
    state.prior_variance = prior_variance;
    return state;
}

Matrix log_joint(const GmmState& state, const Matrix& features)
{
    check_features(state, features, "log_joint");
    const Eigen::Index k = state.num_classes();
    const double d = static_cast<double>(state.dim());

    std::vector<Eigen::MatrixXd> precisions;
    Vector log_dets(static_cast<Eigen::Index>(state.covariances.size()));
    precisions.reserve(state.covariances.size());
    for (std::size_t b = 0; b < state.covariances.size(); ++b) {
        auto spd = stats::regularized_spd(state.covariances[b]);
        log_dets(static_cast<Eigen::Index>(b)) = spd.log_det;
        precisions.push_back(std::move(spd.inverse));
    }

    Matrix out = kernels::omp::quadratic_forms(features, state.means, precisions);
    const double norm_const = -0.5 * d * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index c = 0; c < k; ++c) {
        const double ld = log_dets(precisions.size() == 1 ? 0 : c);
        const double offset = std::log(state.priors(c)) + norm_const - 0.5 * ld;
        out.col(c) = (-0.5 * out.col(c)).array() + offset;
    }
    return out;
}

Matrix e_step(const GmmState& state, const Matrix& features)
{
    Matrix resp = kernels::omp::normalize_log_rows(log_joint(state, features));
    if (!resp.allFinite())
        throw NumericError("e_step: responsibilities are not finite");
    return resp;
}

GmmState m_step(const GmmState& state, const Matrix& features, const Matrix& resp)
{
    check_features(state, features, "m_step");
    const Eigen::Index n = features.rows();
    const Eigen::Index k = state.num_classes();
    if (resp.rows() != n || resp.cols() != k)
        throw DataError("m_step: responsibility shape does not match features/classes");
    if (!resp.allFinite() || (resp.array() < 0.0).any())
        throw NumericError("m_step: responsibilities must be finite and non-negative");

    GmmState next = state;
    const Vector gamma_mass = resp.colwise().sum().transpose();
    next.counts = state.counts + gamma_mass;

    const Matrix weighted_sum = resp.transpose() * features;  // K x D
    for (Eigen::Index c = 0; c < k; ++c)
        next.means.row(c) = (state.counts(c) * state.means.row(c) + weighted_sum.row(c)) / next.counts(c);

    // Deviations are measured against the updated means.
    const auto scatters = kernels::omp::class_scatter(features, resp, next.means);

    if (state.mode == CovarianceMode::Homogeneous) {
        const double prev_total = state.total_count();
        Eigen::MatrixXd acc = prev_total * state.covariances.front();
        for (const auto& s : scatters)
            acc += s;
        next.covariances.assign(1, acc / (prev_total + static_cast<double>(n)));
    } else {
        next.covariances.resize(static_cast<std::size_t>(k));
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto idx = static_cast<std::size_t>(c);
            next.covariances[idx] = (state.counts(c) * state.covariances[idx] + scatters[idx]) / next.counts(c);
        }
    }
    for (auto& cov : next.covariances)
        cov = regularize(cov, state.reg_strength, state.prior_variance);

    next.priors = next.counts / next.counts.sum();
    next.step = state.step + 1;
    return next;
}

double marginal_loglik(const GmmState& state, const Matrix& features)
{
    const Matrix joint = log_joint(state, features);
    double total = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i) {
        const double top = joint.row(i).maxCoeff();
        total += top + std::log((joint.row(i).array() - top).exp().sum());
    }
    return total / static_cast<double>(joint.rows());
}

void write_checkpoint(const GmmState& state, std::ostream& out)
{
    out.write(kStateMagic.data(), 4);
    const char mode = static_cast<char>(state.mode);
    out.write(&mode, 1);
    binary::put_u32(out, static_cast<std::uint32_t>(state.num_classes()));
    binary::put_u32(out, static_cast<std::uint32_t>(state.dim()));
    binary::put_u64(out, state.step);
    for (Eigen::Index c = 0; c < state.means.rows(); ++c)
        for (Eigen::Index j = 0; j < state.means.cols(); ++j)
            binary::put_f64(out, state.means(c, j));
    for (const auto& cov : state.covariances)
        for (Eigen::Index a = 0; a < cov.rows(); ++a)
            for (Eigen::Index b = 0; b < cov.cols(); ++b)
                binary::put_f64(out, cov(a, b));
    for (Eigen::Index c = 0; c < state.priors.size(); ++c)
        binary::put_f64(out, state.priors(c));
    for (Eigen::Index c = 0; c < state.counts.size(); ++c)
        binary::put_f64(out, state.counts(c));
    if (!out)
        throw DataError("write_checkpoint: write failed");
}

GmmState read_checkpoint(std::istream& in, double reg_strength, double prior_variance)
{
    binary::Reader reader(in, "state checkpoint");
    reader.expect_magic(kStateMagic);
    const auto mode_byte = reader.u8();
    if (mode_byte > 1)
        throw DataError("state checkpoint: invalid covariance mode byte");

    GmmState state;
    state.mode = static_cast<CovarianceMode>(mode_byte);
    const auto k = static_cast<Eigen::Index>(reader.u32());
    const auto d = static_cast<Eigen::Index>(reader.u32());
    state.step = reader.u64();
    state.reg_strength = reg_strength;
    state.prior_variance = prior_variance;

    state.means.resize(k, d);
    for (Eigen::Index c = 0; c < k; ++c)
        for (Eigen::Index j = 0; j < d; ++j)
            state.means(c, j) = reader.f64();
    const std::size_t blocks = state.mode == CovarianceMode::Homogeneous ? 1 : static_cast<std::size_t>(k);
    state.covariances.assign(blocks, Eigen::MatrixXd(d, d));
    for (auto& cov : state.covariances)
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b)
                cov(a, b) = reader.f64();
    state.priors.resize(k);
    for (Eigen::Index c = 0; c < k; ++c)
        state.priors(c) = reader.f64();
    state.counts.resize(k);
    for (Eigen::Index c = 0; c < k; ++c)
        state.counts(c) = reader.f64();
    return state;
}

}  // namespace gdastream::gmm
