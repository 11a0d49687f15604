#include "gdastream/adapter.hpp"

#include "binary_io.hpp"
#include "gdastream/kernels.hpp"

#include <cmath>
#include <istream>
#include <ostream>

namespace gdastream::adapter {

namespace {

constexpr std::array<char, 4> kAdapterMagic{'G', 'D', 'A', 'A'};

// log softmax(logits * inv_temperature) row-wise.
Matrix log_softmax_rows(const Matrix& logits, double inv_temperature)
{
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const auto scaled = (logits.row(i) * inv_temperature).eval();
        const double top = scaled.maxCoeff();
        const double lse = top + std::log((scaled.array() - top).exp().sum());
        out.row(i) = scaled.array() - lse;
    }
    return out;
}

void check_target(const Matrix& target, Eigen::Index n, Eigen::Index k)
{
    if (target.rows() != n || target.cols() != k)
        throw DataError("adapter: target distribution shape mismatch");
}

}  // namespace

AdapterState init_adapter(Eigen::Index dim, double lr, double ema_decay)
{
    if (dim < 1)
        throw ConfigError("adapter: dimension must be positive");
    if (!(lr > 0.0))
        throw ConfigError("adapter: learning rate must be positive");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0))
        throw ConfigError("adapter: EMA decay must lie in [0, 1]");
    AdapterState a;
    a.scale = Vector::Ones(dim);
    a.shift = Vector::Zero(dim);
    a.ema_scale = a.scale;
    a.ema_shift = a.shift;
    a.lr = lr;
    a.ema_decay = ema_decay;
    return a;
}

Matrix forward_with(const Vector& scale, const Vector& shift, const Matrix& raw_features)
{
    if (!raw_features.allFinite())
        throw DataError("adapter forward: non-finite input");
    return kernels::omp::affine_normalize(raw_features, scale, shift);
}

Matrix forward(const AdapterState& adapter, const Matrix& raw_features, bool use_ema)
{
    return use_ema ? forward_with(adapter.ema_scale, adapter.ema_shift, raw_features)
                   : forward_with(adapter.scale, adapter.shift, raw_features);
}

RefineLoss refine_loss(const Matrix& sketch_logits, const Matrix& adapted_logits, double tau)
{
    if (sketch_logits.rows() != adapted_logits.rows() || sketch_logits.cols() != adapted_logits.cols())
        throw DataError("refine_loss: shape mismatch");
    if (!(tau > 0.0))
        throw ConfigError("refine_loss: temperature must be positive");

    const Matrix target = kernels::omp::row_softmax(adapted_logits, 1.0);
    const Matrix log_q = log_softmax_rows(sketch_logits, 1.0 / tau);
    RefineLoss out;
    out.value = -(target.array() * log_q.array()).sum() / static_cast<double>(sketch_logits.rows());
    return out;
}

RefineLoss refine_gradient(const AdapterState& adapter, const Matrix& raw_features, const ClassPrototypes& prototypes,
                           const Matrix& target_distribution)
{
    const Eigen::Index n = raw_features.rows();
    const Eigen::Index k = static_cast<Eigen::Index>(prototypes.num_classes());
    check_target(target_distribution, n, k);
    if (raw_features.cols() != adapter.dim() || static_cast<Eigen::Index>(prototypes.dim()) != adapter.dim())
        throw DataError("refine_gradient: dimension mismatch");

    const double inv_tau = 1.0 / prototypes.temperature;
    Matrix w = prototypes.prototypes.cast<double>();
    for (Eigen::Index c = 0; c < k; ++c)
        w.row(c).normalize();

    // u = scale .* x + shift, z = u / |u|, logits = z . w_hat
    const Matrix u = (raw_features.array().rowwise() * adapter.scale.transpose().array()).rowwise() +
                     adapter.shift.transpose().array();
    const Vector norms = u.rowwise().norm();
    const Matrix z = norms.cwiseInverse().asDiagonal() * u;
    const Matrix logits = z * w.transpose();
    const Matrix q = kernels::omp::row_softmax(logits, inv_tau);
    const Matrix log_q = log_softmax_rows(logits, inv_tau);

    RefineLoss out;
    out.value = -(target_distribution.array() * log_q.array()).sum() / static_cast<double>(n);

    // dL/dlogits = (q - p) / (N tau); back through the cosine and the row normalization.
    const Matrix d_logits = (q - target_distribution) * (inv_tau / static_cast<double>(n));
    const Matrix d_z = d_logits * w;
    const Vector radial = (z.array() * d_z.array()).rowwise().sum();
    const Matrix d_u = norms.cwiseInverse().asDiagonal() * (d_z - radial.asDiagonal() * z);

    out.grad_scale = (raw_features.array() * d_u.array()).colwise().sum().transpose();
    out.grad_shift = d_u.colwise().sum().transpose();
    return out;
}

StepResult backward_and_step(const AdapterState& adapter, const Matrix& raw_features,
                             const ClassPrototypes& prototypes, const Matrix& target_distribution)
{
    StepResult result{adapter, {}, false};
    result.loss = refine_gradient(adapter, raw_features, prototypes, target_distribution);
    if (!std::isfinite(result.loss.value) || !result.loss.grad_scale.allFinite() ||
        !result.loss.grad_shift.allFinite()) {
        result.skipped = true;
        return result;
    }

    AdapterState& next = result.adapter;
    next.scale -= adapter.lr * result.loss.grad_scale;
    next.shift -= adapter.lr * result.loss.grad_shift;
    next.ema_scale = adapter.ema_decay * adapter.ema_scale + (1.0 - adapter.ema_decay) * next.scale;
    next.ema_shift = adapter.ema_decay * adapter.ema_shift + (1.0 - adapter.ema_decay) * next.shift;
    next.steps = adapter.steps + 1;
    return result;
}

void write_checkpoint(const AdapterState& adapter, std::ostream& out)
{
    out.write(kAdapterMagic.data(), 4);
    for (const Vector* v : {&adapter.scale, &adapter.shift, &adapter.ema_scale, &adapter.ema_shift})
        for (Eigen::Index j = 0; j < v->size(); ++j)
            binary::put_f64(out, (*v)(j));
    if (!out)
        throw DataError("adapter checkpoint: write failed");
}

AdapterState read_checkpoint(std::istream& in, Eigen::Index dim, double lr, double ema_decay)
{
    binary::Reader reader(in, "adapter checkpoint");
    reader.expect_magic(kAdapterMagic);
    AdapterState a = init_adapter(dim, lr, ema_decay);
    for (Vector* v : {&a.scale, &a.shift, &a.ema_scale, &a.ema_shift})
        for (Eigen::Index j = 0; j < dim; ++j)
            (*v)(j) = reader.f64();
    return a;
}

}  // namespace gdastream::adapter
