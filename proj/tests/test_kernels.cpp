#include "gdastream/kernels.hpp"
#include "support.hpp"

#include <omp.h>

#include <cmath>
#include <cstring>

using namespace gdastream;
namespace serial = gdastream::kernels::serial;
namespace par = gdastream::kernels::omp;

namespace {

bool identical(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool identical(const Matrix& a, const Matrix& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

struct Fixture {
    Matrix x, means, logits, weights;
    Vector scale, shift;
    std::vector<Eigen::MatrixXd> precisions;

    explicit Fixture(std::uint64_t seed, Eigen::Index n = 97, Eigen::Index d = 13, Eigen::Index k = 5)
    {
        std::mt19937_64 rng(seed);
        x = testing::random_matrix(rng, n, d);
        means = testing::random_matrix(rng, k, d);
        logits = testing::random_matrix(rng, n, k, 3.0);
        weights = testing::random_simplex_rows(rng, n, k);
        scale = testing::random_vector(rng, d).array().abs() + 0.1;
        shift = testing::random_vector(rng, d, 0.2);
        for (Eigen::Index c = 0; c < k; ++c)
            precisions.push_back(testing::random_spd(rng, d));
    }
};

}  // namespace

TEST_CASE("OpenMP kernels are bit-identical to the serial reference")
{
    omp_set_num_threads(4);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Fixture f(seed);
        CHECK(identical(serial::affine_normalize(f.x, f.scale, f.shift), par::affine_normalize(f.x, f.scale, f.shift)));
        CHECK(identical(serial::cosine_logits(f.x, f.means), par::cosine_logits(f.x, f.means)));
        CHECK(identical(serial::row_softmax(f.logits, 100.0), par::row_softmax(f.logits, 100.0)));
        CHECK(identical(serial::normalize_log_rows(f.logits), par::normalize_log_rows(f.logits)));
        CHECK(identical(serial::quadratic_forms(f.x, f.means, f.precisions),
                        par::quadratic_forms(f.x, f.means, f.precisions)));
        const std::vector<Eigen::MatrixXd> shared{f.precisions.front()};
        CHECK(identical(serial::quadratic_forms(f.x, f.means, shared), par::quadratic_forms(f.x, f.means, shared)));
        const auto s = serial::class_scatter(f.x, f.weights, f.means);
        const auto p = par::class_scatter(f.x, f.weights, f.means);
        REQUIRE(s.size() == p.size());
        for (std::size_t c = 0; c < s.size(); ++c)
            CHECK(identical(s[c], p[c]));
    }
}

TEST_CASE("kernels match naive formulas")
{
    const Fixture f(9, 20, 6, 4);

    const Matrix a = serial::affine_normalize(f.x, f.scale, f.shift);
    for (Eigen::Index i = 0; i < f.x.rows(); ++i) {
        const Vector u = f.scale.cwiseProduct(f.x.row(i).transpose()) + f.shift;
        CHECK(testing::max_abs_diff(a.row(i).transpose(), u / u.norm()) < 1e-14);
    }

    const Matrix cosines = serial::cosine_logits(f.x, f.means);
    for (Eigen::Index i = 0; i < f.x.rows(); ++i)
        for (Eigen::Index k = 0; k < f.means.rows(); ++k)
            CHECK(cosines(i, k) ==
                  doctest::Approx(f.x.row(i).dot(f.means.row(k)) / (f.x.row(i).norm() * f.means.row(k).norm()))
                      .epsilon(1e-13));

    const Matrix sm = serial::row_softmax(f.logits, 2.5);
    for (Eigen::Index i = 0; i < f.logits.rows(); ++i) {
        const Vector e = (f.logits.row(i).transpose() * 2.5).array().exp();
        CHECK(testing::max_abs_diff(sm.row(i).transpose(), e / e.sum()) < 1e-14);
    }

    const Matrix q = serial::quadratic_forms(f.x, f.means, f.precisions);
    for (Eigen::Index i = 0; i < f.x.rows(); ++i)
        for (Eigen::Index k = 0; k < f.means.rows(); ++k) {
            const Vector dlt = f.x.row(i).transpose() - f.means.row(k).transpose();
            CHECK(q(i, k) == doctest::Approx(dlt.dot(f.precisions[static_cast<std::size_t>(k)] * dlt)).epsilon(1e-12));
        }

    const auto scatter = serial::class_scatter(f.x, f.weights, f.means);
    for (Eigen::Index k = 0; k < f.means.rows(); ++k) {
        Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(f.x.cols(), f.x.cols());
        for (Eigen::Index i = 0; i < f.x.rows(); ++i) {
            const Vector dlt = f.x.row(i).transpose() - f.means.row(k).transpose();
            expected += f.weights(i, k) * dlt * dlt.transpose();
        }
        CHECK(testing::max_abs_diff(scatter[static_cast<std::size_t>(k)], expected) < 1e-12);
    }
}

TEST_CASE("log-space normalization survives extreme inputs")
{
    Matrix logw(2, 3);
    logw << -1000.0, -1001.0, -2000.0, 800.0, 800.0, -800.0;
    const Matrix r = par::normalize_log_rows(logw);
    CHECK(r.allFinite());
    CHECK(r(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(r(1, 0) == doctest::Approx(0.5));
    CHECK(r.rowwise().sum().isApprox(Vector::Ones(2)));
}

TEST_CASE("identity affine parameters reduce to plain L2 normalization bit for bit")
{
    const Fixture f(10);
    const Matrix out = par::affine_normalize(f.x, Vector::Ones(f.x.cols()), Vector::Zero(f.x.cols()));
    Matrix plain(f.x.rows(), f.x.cols());
    for (Eigen::Index i = 0; i < f.x.rows(); ++i) {
        double sq = 0.0;
        for (Eigen::Index j = 0; j < f.x.cols(); ++j)
            sq += f.x(i, j) * f.x(i, j);
        const double norm = std::sqrt(sq);
        for (Eigen::Index j = 0; j < f.x.cols(); ++j)
            plain(i, j) = f.x(i, j) / norm;
    }
    CHECK(identical(out, plain));
}

TEST_CASE("zero rows are reported")
{
    Matrix x = Matrix::Ones(4, 3);
    x.row(2).setZero();
    CHECK_THROWS_AS(serial::affine_normalize(x, Vector::Ones(3), Vector::Zero(3)), DataError);
    CHECK_THROWS_AS(par::affine_normalize(x, Vector::Ones(3), Vector::Zero(3)), DataError);
}
