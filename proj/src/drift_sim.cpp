#include "gdastream/drift_sim.hpp"

#include "gdastream/gda_head.hpp"
#include "gdastream/tensor_stats.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace gdastream::drift {

namespace {

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream & 0xffffffffu), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    return std::mt19937_64(seq);
}

// Stream ids: 0 for the base means, 1 + j for domain j.
constexpr std::uint64_t kBaseMeansStream = 0;

double trajectory_fraction(const DriftSpec& spec, std::uint32_t j)
{
    return spec.domains > 1 ? static_cast<double>(j) / static_cast<double>(spec.domains - 1) : 0.0;
}

double max_step_kl(const DriftSpec& spec)
{
    double worst = 0.0;
    DomainParams prev = domain_params(spec, 0);
    for (std::uint32_t j = 1; j < spec.domains; ++j) {
        DomainParams cur = domain_params(spec, j);
        for (Eigen::Index k = 0; k < prev.means.rows(); ++k) {
            const auto idx = static_cast<std::size_t>(k);
            worst = std::max(worst, stats::gaussian_kl(prev.means.row(k).transpose(), prev.covs[idx],
                                                       cur.means.row(k).transpose(), cur.covs[idx]));
        }
        prev = std::move(cur);
    }
    return worst;
}

std::vector<std::string> split(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep))
        out.push_back(item);
    return out;
}

double parse_double(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size())
            throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("drift spec: bad number for " + key + ": " + value);
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const auto v = std::stoull(value, &used);
        if (used != value.size() || value.find('-') != std::string::npos)
            throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("drift spec: bad integer for " + key + ": " + value);
    }
}

Vector parse_vector(const std::string& key, const std::string& value)
{
    const auto items = split(value, ',');
    Vector v(static_cast<Eigen::Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = parse_double(key, items[i]);
    return v;
}

std::string join(const Vector& v)
{
    std::ostringstream out;
    out.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out << (i ? "," : "") << v(i);
    return out.str();
}

}  // namespace

const char* to_string(TrajectoryKind kind)
{
    switch (kind) {
    case TrajectoryKind::Rotation:
        return "rotation";
    case TrajectoryKind::MeanTranslation:
        return "mean_translation";
    case TrajectoryKind::CovarianceInflation:
        return "covariance_inflation";
    }
    return "unknown";
}

Matrix make_base_means(std::uint32_t classes, std::uint32_t dim, std::uint32_t plane_a, std::uint32_t plane_b,
                       double plane_energy, std::uint64_t seed)
{
    if (plane_a >= dim || plane_b >= dim || plane_a == plane_b)
        throw ConfigError("drift spec: rotation plane indices must be distinct and < dim");
    if (!(plane_energy >= 0.0 && plane_energy <= 1.0))
        throw ConfigError("drift spec: plane_energy must lie in [0, 1]");
    if (plane_energy < 1.0 && dim < 3)
        throw ConfigError("drift spec: need dim >= 3 for an off-plane component");

    auto rng = substream(seed, kBaseMeansStream);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix means(classes, dim);
    const double in_plane = std::sqrt(plane_energy);
    const double off_plane = std::sqrt(1.0 - plane_energy);
    for (std::uint32_t k = 0; k < classes; ++k) {
        Vector u(dim);
        for (std::uint32_t j = 0; j < dim; ++j)
            u(j) = normal(rng);
        u(plane_a) = 0.0;
        u(plane_b) = 0.0;
        u.normalize();
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(classes);
        Vector m = off_plane * u;
        m(plane_a) = in_plane * std::cos(phi);
        m(plane_b) = in_plane * std::sin(phi);
        means.row(k) = m.normalized().transpose();
    }
    return means;
}

DriftSpec resolve(DriftSpec spec)
{
    if (spec.classes < 2)
        throw ConfigError("drift spec: need at least 2 classes");
    if (spec.dim < 2)
        throw ConfigError("drift spec: need dim >= 2");
    if (spec.domains < 1 || spec.batches_per_domain < 1 || spec.batch_size < 1)
        throw ConfigError("drift spec: domains, batches_per_domain and batch_size must be positive");
    if (!(spec.delta > 0.0))
        throw ConfigError("drift spec: delta must be positive");
    if (!(spec.cov_scale > 0.0))
        throw ConfigError("drift spec: cov_scale must be positive");

    if (spec.base_means.size() == 0)
        spec.base_means = make_base_means(spec.classes, spec.dim, spec.plane_a, spec.plane_b, spec.plane_energy,
                                          spec.seed);
    if (spec.base_means.rows() != spec.classes || spec.base_means.cols() != spec.dim)
        throw ConfigError("drift spec: base_means must be classes x dim");
    for (Eigen::Index k = 0; k < spec.base_means.rows(); ++k) {
        if (std::abs(spec.base_means.row(k).norm() - 1.0) > 1e-9)
            throw ConfigError("drift spec: base means must have unit norm");
    }

    if (spec.class_priors.size() == 0)
        spec.class_priors = Vector::Constant(spec.classes, 1.0 / spec.classes);
    if (spec.class_priors.size() != spec.classes || (spec.class_priors.array() <= 0.0).any() ||
        std::abs(spec.class_priors.sum() - 1.0) > 1e-9)
        throw ConfigError("drift spec: class_priors must be positive and sum to 1");

    switch (spec.kind) {
    case TrajectoryKind::Rotation:
        if (spec.plane_a >= spec.dim || spec.plane_b >= spec.dim || spec.plane_a == spec.plane_b)
            throw ConfigError("drift spec: rotation plane indices must be distinct and < dim");
        break;
    case TrajectoryKind::MeanTranslation:
        if (spec.direction.size() == 0) {
            spec.direction = Vector::Zero(spec.dim);
            spec.direction(0) = 1.0;
        }
        if (spec.direction.size() != spec.dim || !(spec.direction.norm() > 0.0))
            throw ConfigError("drift spec: direction must be a non-zero dim-vector");
        spec.direction.normalize();
        break;
    case TrajectoryKind::CovarianceInflation:
        if (!(spec.scale_start > 0.0) || !(spec.scale_end > 0.0))
            throw ConfigError("drift spec: inflation scales must be positive");
        break;
    }
    return spec;
}

DomainParams domain_params(const DriftSpec& spec, std::uint32_t j)
{
    const double f = trajectory_fraction(spec, j);
    DomainParams p;
    p.means = spec.base_means;
    p.priors = spec.class_priors;
    double variance = spec.cov_scale;

    switch (spec.kind) {
    case TrajectoryKind::Rotation: {
        const double theta = f * spec.total_angle_deg * std::numbers::pi / 180.0;
        const double c = std::cos(theta);
        const double s = std::sin(theta);
        for (Eigen::Index k = 0; k < p.means.rows(); ++k) {
            const double a = spec.base_means(k, spec.plane_a);
            const double b = spec.base_means(k, spec.plane_b);
            p.means(k, spec.plane_a) = c * a - s * b;
            p.means(k, spec.plane_b) = s * a + c * b;
        }
        break;
    }
    case TrajectoryKind::MeanTranslation:
        p.means.rowwise() += (f * spec.magnitude) * spec.direction.transpose();
        break;
    case TrajectoryKind::CovarianceInflation:
        variance *= spec.scale_start * std::pow(spec.scale_end / spec.scale_start, f);
        break;
    }
    p.covs.assign(spec.classes, variance * Eigen::MatrixXd::Identity(spec.dim, spec.dim));
    return p;
}

GroundTruth ground_truth(const DriftSpec& spec)
{
    const DriftSpec r = resolve(spec);
    GroundTruth truth;
    for (std::uint32_t j = 0; j < r.domains; ++j)
        truth.domains.push_back(domain_params(r, j));
    std::uint32_t t = 1;
    for (std::uint32_t j = 0; j < r.domains; ++j) {
        for (std::uint32_t b = 0; b < r.batches_per_domain; ++b) {
            truth.step_domain.push_back(j);
            truth.step_index.push_back(t++);
        }
    }
    return truth;
}

std::optional<std::uint32_t> minimal_domain_count(const DriftSpec& spec)
{
    DriftSpec probe = resolve(spec);
    constexpr std::uint32_t kLimit = 1u << 20;
    auto ok = [&](std::uint32_t n) {
        probe.domains = n;
        return max_step_kl(probe) <= spec.delta;
    };
    // A single domain has no transitions but also no trajectory; start at two.
    if (ok(2))
        return 2;
    std::uint32_t hi = 4;
    while (!ok(hi)) {
        if (hi >= kLimit)
            return std::nullopt;
        hi *= 2;
    }
    std::uint32_t lo = hi / 2;  // fails
    while (hi - lo > 1) {
        const std::uint32_t mid = lo + (hi - lo) / 2;
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

Generated generate(const DriftSpec& spec)
{
    const DriftSpec r = resolve(spec);
    if (max_step_kl(r) > r.delta) {
        const auto need = minimal_domain_count(r);
        throw ConfigError("infeasible drift spec: per-step KL exceeds delta=" + std::to_string(r.delta) + " with " +
                          std::to_string(r.domains) + " domains" +
                          (need ? "; minimal compliant domain count is " + std::to_string(*need)
                                : std::string("; no compliant domain count found")));
    }

    Generated out;
    out.truth = ground_truth(r);
    out.prototypes.prototypes = out.truth.domains.front().means.cast<float>();
    for (std::uint32_t k = 0; k < r.classes; ++k)
        out.prototypes.class_names.push_back("class" + std::to_string(k));
    out.prototypes.temperature = 0.01;

    const std::size_t total = static_cast<std::size_t>(r.domains) * r.batches_per_domain;
    out.batches.resize(total);
    const auto domain_count = static_cast<std::ptrdiff_t>(r.domains);

    // Independent RNG substream per domain keeps generation order-free.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < domain_count; ++jj) {
        const auto j = static_cast<std::uint32_t>(jj);
        const DomainParams& p = out.truth.domains[j];
        std::vector<Eigen::MatrixXd> chol;
        for (const auto& cov : p.covs)
            chol.push_back(Eigen::LLT<Eigen::MatrixXd>(cov).matrixL());
        auto rng = substream(r.seed, 1 + static_cast<std::uint64_t>(j));
        std::discrete_distribution<std::uint32_t> pick(p.priors.data(), p.priors.data() + p.priors.size());
        std::normal_distribution<double> normal(0.0, 1.0);
        Vector eps(r.dim);

        for (std::uint32_t b = 0; b < r.batches_per_domain; ++b) {
            const std::size_t pos = static_cast<std::size_t>(j) * r.batches_per_domain + b;
            EmbeddingBatch& batch = out.batches[pos];
            batch.step_index = out.truth.step_index[pos];
            batch.domain_id = j;
            batch.features.resize(r.batch_size, r.dim);
            std::vector<std::uint32_t> labels(r.batch_size);
            for (std::uint32_t i = 0; i < r.batch_size; ++i) {
                const std::uint32_t y = pick(rng);
                labels[i] = y;
                for (std::uint32_t d = 0; d < r.dim; ++d)
                    eps(d) = normal(rng);
                const Vector x = p.means.row(y).transpose() + chol[y] * eps;
                batch.features.row(i) = x.cast<float>().transpose();
            }
            batch.labels = std::move(labels);
        }
    }
    return out;
}

DriftReport verify_drift_bound(const GroundTruth& truth, double delta)
{
    DriftReport report;
    for (std::size_t s = 0; s + 1 < truth.step_domain.size(); ++s) {
        StepDivergence step;
        step.from_step = truth.step_index[s];
        step.to_step = truth.step_index[s + 1];
        const auto a = truth.step_domain[s];
        const auto b = truth.step_domain[s + 1];
        if (a != b) {
            const DomainParams& p = truth.domains[a];
            const DomainParams& q = truth.domains[b];
            for (Eigen::Index k = 0; k < p.means.rows(); ++k) {
                const auto idx = static_cast<std::size_t>(k);
                step.max_class_kl =
                    std::max(step.max_class_kl, stats::gaussian_kl(p.means.row(k).transpose(), p.covs[idx],
                                                                   q.means.row(k).transpose(), q.covs[idx]));
            }
        }
        report.max_kl = std::max(report.max_kl, step.max_class_kl);
        if (step.max_class_kl > delta && !report.first_violation)
            report.first_violation = step.from_step;
        report.steps.push_back(step);
    }
    report.pass = !report.first_violation.has_value();
    return report;
}

std::vector<std::uint32_t> bayes_predictions(const GroundTruth& truth, std::uint32_t domain, const FloatMatrix& raw)
{
    const DomainParams& p = truth.domains.at(domain);
    const Matrix x = raw.cast<double>();
    Matrix scores(x.rows(), p.means.rows());
    for (Eigen::Index k = 0; k < p.means.rows(); ++k) {
        const auto spd = stats::regularized_spd(p.covs[static_cast<std::size_t>(k)]);
        const Vector mu = p.means.row(k).transpose();
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            scores(i, k) = std::log(p.priors(k)) + stats::gaussian_logpdf(x.row(i).transpose(), mu, spd);
    }
    return gda::argmax_rows(scores);
}

DriftSpec parse_spec(const std::string& text)
{
    DriftSpec spec;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("drift spec: expected key=value, got: " + line);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "kind") {
            if (value == "rotation")
                spec.kind = TrajectoryKind::Rotation;
            else if (value == "mean_translation")
                spec.kind = TrajectoryKind::MeanTranslation;
            else if (value == "covariance_inflation")
                spec.kind = TrajectoryKind::CovarianceInflation;
            else
                throw ConfigError("drift spec: unknown kind " + value);
        } else if (key == "classes") {
            spec.classes = static_cast<std::uint32_t>(parse_uint(key, value));
        } else if (key == "dim") {
            spec.dim = static_cast<std::uint32_t>(parse_uint(key, value));
        } else if (key == "plane_energy") {
            spec.plane_energy = parse_double(key, value);
        } else if (key == "cov_scale") {
            spec.cov_scale = parse_double(key, value);
        } else if (key == "class_priors") {
            spec.class_priors = parse_vector(key, value);
        } else if (key == "plane") {
            const auto parts = split(value, ',');
            if (parts.size() != 2)
                throw ConfigError("drift spec: plane needs two indices");
            spec.plane_a = static_cast<std::uint32_t>(parse_uint(key, parts[0]));
            spec.plane_b = static_cast<std::uint32_t>(parse_uint(key, parts[1]));
        } else if (key == "total_angle_deg") {
            spec.total_angle_deg = parse_double(key, value);
        } else if (key == "direction") {
            spec.direction = parse_vector(key, value);
        } else if (key == "magnitude") {
            spec.magnitude = parse_double(key, value);
        } else if (key == "scale_start") {
            spec.scale_start = parse_double(key, value);
        } else if (key == "scale_end") {
            spec.scale_end = parse_double(key, value);
        } else if (key == "domains") {
            spec.domains = static_cast<std::uint32_t>(parse_uint(key, value));
        } else if (key == "batches_per_domain") {
            spec.batches_per_domain = static_cast<std::uint32_t>(parse_uint(key, value));
        } else if (key == "batch_size") {
            spec.batch_size = static_cast<std::uint32_t>(parse_uint(key, value));
        } else if (key == "delta") {
            spec.delta = parse_double(key, value);
        } else if (key == "seed") {
            spec.seed = parse_uint(key, value);
        } else {
            throw ConfigError("drift spec: unknown key " + key);
        }
    }
    return spec;
}

std::string to_key_value(const DriftSpec& spec)
{
    std::ostringstream out;
    out.precision(17);
    out << "kind=" << to_string(spec.kind) << '\n'
        << "classes=" << spec.classes << '\n'
        << "dim=" << spec.dim << '\n'
        << "plane_energy=" << spec.plane_energy << '\n'
        << "cov_scale=" << spec.cov_scale << '\n';
    if (spec.class_priors.size() > 0)
        out << "class_priors=" << join(spec.class_priors) << '\n';
    out << "plane=" << spec.plane_a << ',' << spec.plane_b << '\n'
        << "total_angle_deg=" << spec.total_angle_deg << '\n';
    if (spec.direction.size() > 0)
        out << "direction=" << join(spec.direction) << '\n';
    out << "magnitude=" << spec.magnitude << '\n'
        << "scale_start=" << spec.scale_start << '\n'
        << "scale_end=" << spec.scale_end << '\n'
        << "domains=" << spec.domains << '\n'
        << "batches_per_domain=" << spec.batches_per_domain << '\n'
        << "batch_size=" << spec.batch_size << '\n'
        << "delta=" << spec.delta << '\n'
        << "seed=" << spec.seed << '\n';
    return out.str();
}

}  // namespace gdastream::drift
