#include "gdastream/homogeneity.hpp"

#include "gdastream/tensor_stats.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gdastream::homogeneity {

std::size_t ClassMoments::included_count() const
{
    return static_cast<std::size_t>(std::count(included.begin(), included.end(), true));
}

ClassMoments class_moments(const Matrix& projected, const Matrix& sketch_probs, double min_count)
{
    const Eigen::Index n = projected.rows();
    const Eigen::Index d = projected.cols();
    const Eigen::Index k = sketch_probs.cols();
    if (d < 1)
        throw DataError("class_moments: projected dimension must be positive");
    if (sketch_probs.rows() != n)
        throw DataError("class_moments: probability rows do not match sample rows");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(sketch_probs.row(i).sum() - 1.0) > 1e-6)
            throw DataError("class_moments: probability row " + std::to_string(i) + " does not sum to 1");
    }

    ClassMoments out;
    out.counts = sketch_probs.colwise().sum().transpose();
    out.means = Matrix::Zero(k, d);
    out.covs.assign(static_cast<std::size_t>(k), Eigen::MatrixXd::Zero(d, d));
    out.included.assign(static_cast<std::size_t>(k), false);

    const double threshold = std::max(min_count, static_cast<double>(d + 1));
    Eigen::MatrixXd pooled_sum = Eigen::MatrixXd::Zero(d, d);
    double pooled_weight = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) {
        const auto idx = static_cast<std::size_t>(c);
        if (out.counts(c) > 0.0) {
            auto m = stats::weighted_moments(projected, sketch_probs.col(c));
            out.means.row(c) = m.mean.transpose();
            out.covs[idx] = std::move(m.cov);
        }
        if (out.counts(c) > threshold) {
            out.included[idx] = true;
            pooled_sum += (out.counts(c) - 1.0) * out.covs[idx];
            pooled_weight += out.counts(c) - 1.0;
        }
    }
    if (out.included_count() < 2)
        throw InfeasibleTest("class_moments: fewer than 2 classes have soft count above " +
                             std::to_string(threshold));
    out.pooled = pooled_sum / pooled_weight;
    return out;
}

HomogeneityReport box_m_test(const ClassMoments& moments, double kappa)
{
    if (!(kappa > 0.0 && kappa < 1.0))
        throw ConfigError("box_m_test: kappa must lie in (0, 1)");
    if (moments.included_count() < 2)
        throw InfeasibleTest("box_m_test: fewer than 2 included classes");

    const double d = static_cast<double>(moments.dim());
    const double k = static_cast<double>(moments.included_count());

    double total = 0.0;
    double inv_sum = 0.0;
    double weighted_class_logdet = 0.0;
    double dof_sum = 0.0;
    for (std::size_t c = 0; c < moments.included.size(); ++c) {
        if (!moments.included[c])
            continue;
        const double n = moments.counts(static_cast<Eigen::Index>(c));
        const auto spd = stats::regularized_spd(moments.covs[c]);
        total += n;
        dof_sum += n - 1.0;
        inv_sum += 1.0 / (n - 1.0);
        weighted_class_logdet += (n - 1.0) * spd.log_det;
    }
    const auto pooled = stats::regularized_spd(moments.pooled);

    HomogeneityReport r;
    r.kappa = kappa;
    r.dim = moments.dim();
    r.classes_tested = moments.included_count();
    r.m_statistic = dof_sum * pooled.log_det - weighted_class_logdet;
    r.scaling_c =
        1.0 - (2.0 * d * d + 3.0 * d - 1.0) / (6.0 * (d + 1.0) * (k - 1.0)) * (inv_sum - 1.0 / (total - k));
    if (!(r.scaling_c > 0.0))
        throw InfeasibleTest("box_m_test: non-positive scaling factor c");
    r.m_corrected = r.m_statistic / r.scaling_c;
    r.lambda = d * (d + 1.0) * (k - 1.0) * (k + 1.0) / (6.0 * (total - k - (k - 1.0)));
    r.d1 = d * (d + 1.0) * (k - 1.0) / 2.0;
    r.d2 = (r.d1 + 2.0) / (r.lambda + kDfEpsilon);
    r.f_statistic = r.m_corrected / (r.d1 * (1.0 + r.m_corrected / r.d2));
    r.critical_value = stats::f_quantile(1.0 - kappa, r.d1, r.d2);
    r.decision = r.f_statistic > r.critical_value ? CovarianceMode::Heterogeneous : CovarianceMode::Homogeneous;
    return r;
}

HomogeneityReport select_covariance_mode(const Matrix& features, const Matrix& sketch_probs, Eigen::Index pca_dim,
                                         double kappa)
{
    HomogeneityReport fallback;
    fallback.kappa = kappa;
    fallback.dim = pca_dim;
    fallback.feasible = false;
    fallback.decision = CovarianceMode::Homogeneous;

    if (pca_dim < 1)
        throw ConfigError("select_covariance_mode: PCA dimension must be positive");
    if (pca_dim > std::min(features.rows(), features.cols()))
        return fallback;

    const auto pca = stats::fit_pca(features, pca_dim);
    const Matrix projected = pca.project(features);
    try {
        return box_m_test(class_moments(projected, sketch_probs), kappa);
    } catch (const InfeasibleTest&) {
        return fallback;
    }
}

std::string HomogeneityReport::to_key_value() const
{
    std::ostringstream out;
    out.precision(17);
    out << "homogeneity.feasible=" << (feasible ? 1 : 0) << '\n'
        << "homogeneity.decision=" << to_string(decision) << '\n'
        << "homogeneity.classes_tested=" << classes_tested << '\n'
        << "homogeneity.pca_dim=" << dim << '\n'
        << "homogeneity.M=" << m_statistic << '\n'
        << "homogeneity.c=" << scaling_c << '\n'
        << "homogeneity.M_star=" << m_corrected << '\n'
        << "homogeneity.lambda=" << lambda << '\n'
        << "homogeneity.d1=" << d1 << '\n'
        << "homogeneity.d2=" << d2 << '\n'
        << "homogeneity.F=" << f_statistic << '\n'
        << "homogeneity.critical=" << critical_value << '\n'
        << "homogeneity.kappa=" << kappa << '\n';
    return out.str();
}

}  // namespace gdastream::homogeneity
