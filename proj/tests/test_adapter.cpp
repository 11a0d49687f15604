#include "gdastream/adapter.hpp"
#include "gdastream/kernels.hpp"
#include "support.hpp"

#include <cmath>
#include <sstream>

using namespace gdastream;
using namespace gdastream::adapter;

namespace {

ClassPrototypes prototypes_from(const Matrix& m, double tau = 0.01)
{
    ClassPrototypes p;
    p.prototypes = m.cast<float>();
    for (Eigen::Index k = 0; k < m.rows(); ++k)
        p.class_names.push_back("c" + std::to_string(k));
    p.temperature = tau;
    return p;
}

double loss_at(const Vector& scale, const Vector& shift, const Matrix& x, const ClassPrototypes& p, const Matrix& target)
{
    AdapterState a = init_adapter(scale.size());
    a.scale = scale;
    a.shift = shift;
    return refine_gradient(a, x, p, target).value;
}

double rel_err(const Vector& a, const Vector& b)
{
    const double denom = std::max({a.norm(), b.norm(), 1e-8});
    return (a - b).norm() / denom;
}

}  // namespace

TEST_CASE("forward examples")
{
    std::mt19937_64 rng(51);
    const Matrix x = testing::random_matrix(rng, 6, 4);
    const Matrix plain = forward_with(Vector::Ones(4), Vector::Zero(4), x);
    CHECK(testing::max_abs_diff(forward_with(Vector::Constant(4, 3.7), Vector::Zero(4), x), plain) < 1e-15);
    for (Eigen::Index i = 0; i < 6; ++i)
        CHECK(plain.row(i).norm() == doctest::Approx(1.0).epsilon(1e-15));

    Vector e0 = Vector::Zero(4);
    e0(0) = 1.0;
    const Matrix collapsed = forward_with(e0, Vector::Zero(4), x);
    for (Eigen::Index i = 0; i < 6; ++i) {
        CHECK(std::abs(collapsed(i, 0)) == 1.0);
        CHECK(collapsed(i, 0) == (x(i, 0) > 0 ? 1.0 : -1.0));
        CHECK(collapsed.row(i).tail(3).isZero());
    }

    AdapterState a = init_adapter(4);
    a.scale(1) = 2.0;
    CHECK(forward(a, x, true) == plain);
    CHECK(forward(a, x, false) != plain);
}

TEST_CASE("refine loss examples")
{
    Matrix flat = Matrix::Zero(3, 2);
    Matrix adapted(3, 2);
    adapted << 4, -1, 0, 0, -2, 7;
    CHECK(refine_loss(flat, adapted, 0.01).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    Matrix sketch(1, 3);
    sketch << 0.3, 0.1, -0.2;
    Matrix sharp(1, 3);
    sharp << 800.0, 0.0, 0.0;
    const Vector e = (sketch.row(0).transpose() / 0.1).array().exp();
    CHECK(refine_loss(sketch, sharp, 0.1).value == doctest::Approx(-std::log(e(0) / e.sum())).epsilon(1e-12));

    std::mt19937_64 rng(52);
    const Matrix s = testing::random_matrix(rng, 9, 4, 0.3);
    const Matrix a = testing::random_matrix(rng, 9, 4, 2.0);
    double total = 0.0;
    for (Eigen::Index i = 0; i < 9; ++i) {
        const Vector p = a.row(i).transpose().array().exp();
        const Vector q = (s.row(i).transpose() / 0.05).array().exp();
        for (Eigen::Index k = 0; k < 4; ++k)
            total -= p(k) / p.sum() * std::log(q(k) / q.sum());
    }
    CHECK(std::abs(refine_loss(s, a, 0.05).value - total / 9.0) < 1e-12);
}

TEST_CASE("analytic gradients match central differences")
{
    std::mt19937_64 rng(53);
    const double h = 1e-5;
    int configs = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 8);
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 15);
        const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng() % 4);
        const double tau = trial % 2 ? 0.01 : 0.1;
        const auto protos = prototypes_from(testing::random_matrix(rng, k, d), tau);
        const Matrix x = testing::random_matrix(rng, n, d);
        const Matrix target = testing::random_simplex_rows(rng, n, k);
        AdapterState a = init_adapter(d);
        a.scale = testing::random_vector(rng, d, 0.3).array() + 1.0;
        a.shift = testing::random_vector(rng, d, 0.1);
        const auto g = refine_gradient(a, x, protos, target);

        Vector fd_scale(d), fd_shift(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            Vector up = a.scale, dn = a.scale;
            up(j) += h;
            dn(j) -= h;
            fd_scale(j) = (loss_at(up, a.shift, x, protos, target) - loss_at(dn, a.shift, x, protos, target)) / (2 * h);
            up = a.shift;
            dn = a.shift;
            up(j) += h;
            dn(j) -= h;
            fd_shift(j) = (loss_at(a.scale, up, x, protos, target) - loss_at(a.scale, dn, x, protos, target)) / (2 * h);
        }
        INFO("trial " << trial << " n=" << n << " d=" << d << " k=" << k);
        CHECK(rel_err(g.grad_scale, fd_scale) < 1e-5);
        CHECK(rel_err(g.grad_shift, fd_shift) < 1e-5);
        ++configs;
    }
    CHECK(configs >= 20);
}

TEST_CASE("target equal to the sketch distribution is stationary")
{
    std::mt19937_64 rng(54);
    const auto protos = prototypes_from(testing::random_matrix(rng, 3, 5), 0.2);
    const Matrix x = testing::random_matrix(rng, 10, 5);
    const AdapterState a = init_adapter(5);
    const Matrix z = forward(a, x, false);
    const Matrix q = kernels::serial::row_softmax(kernels::serial::cosine_logits(z, protos.prototypes.cast<double>()), 5.0);
    const auto g = refine_gradient(a, x, protos, q);
    CHECK(g.grad_scale.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(g.grad_shift.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("EMA update")
{
    std::mt19937_64 rng(55);
    const auto protos = prototypes_from(testing::random_matrix(rng, 3, 4), 0.1);
    const Matrix x = testing::random_matrix(rng, 8, 4);
    const Matrix target = testing::random_simplex_rows(rng, 8, 3);

    AdapterState frozen = init_adapter(4, 0.05, 1.0);
    for (int t = 0; t < 5; ++t)
        frozen = backward_and_step(frozen, x, protos, target).adapter;
    CHECK(frozen.ema_scale == Vector::Ones(4));
    CHECK(frozen.ema_shift == Vector::Zero(4));
    CHECK(frozen.scale != Vector::Ones(4));

    const auto copy = backward_and_step(init_adapter(4, 0.05, 0.0), x, protos, target).adapter;
    CHECK(copy.ema_scale == copy.scale);
    CHECK(copy.ema_shift == copy.shift);

    AdapterState a = init_adapter(4, 0.05, 0.9);
    a.ema_scale = Vector::Constant(4, 2.0);
    const auto r = backward_and_step(a, x, protos, target);
    for (Eigen::Index j = 0; j < 4; ++j)
        CHECK(r.adapter.ema_scale(j) == doctest::Approx(0.9 * 2.0 + 0.1 * r.adapter.scale(j)).epsilon(1e-15));
    CHECK(r.adapter.steps == 1);
    // EMA moves toward the live parameters.
    CHECK((r.adapter.ema_scale - r.adapter.scale).norm() < (a.ema_scale - r.adapter.scale).norm());
}

TEST_CASE("a small step lowers the loss")
{
    std::mt19937_64 rng(56);
    for (int t = 0; t < 5; ++t) {
        const auto protos = prototypes_from(testing::random_matrix(rng, 4, 6));
        const Matrix x = testing::random_matrix(rng, 16, 6);
        const Matrix target = testing::random_simplex_rows(rng, 16, 4);
        const AdapterState a = init_adapter(6, 1e-4);
        const auto r = backward_and_step(a, x, protos, target);
        CHECK_FALSE(r.skipped);
        CHECK(refine_gradient(r.adapter, x, protos, target).value < r.loss.value);
    }
}

TEST_CASE("non-finite gradient leaves the parameters untouched")
{
    std::mt19937_64 rng(57);
    const auto protos = prototypes_from(testing::random_matrix(rng, 3, 4));
    Matrix x = testing::random_matrix(rng, 5, 4);
    x.row(2).setZero();
    const AdapterState a = init_adapter(4);
    const auto r = backward_and_step(a, x, protos, testing::random_simplex_rows(rng, 5, 3));
    CHECK(r.skipped);
    CHECK(r.adapter.scale == a.scale);
    CHECK(r.adapter.ema_scale == a.ema_scale);
    CHECK(r.adapter.steps == 0);
}

TEST_CASE("checkpoint round trip and config checks")
{
    std::mt19937_64 rng(58);
    AdapterState a = init_adapter(5);
    a.scale = testing::random_vector(rng, 5);
    a.shift = testing::random_vector(rng, 5);
    a.ema_scale = testing::random_vector(rng, 5);
    a.ema_shift = testing::random_vector(rng, 5);
    std::stringstream buf;
    write_checkpoint(a, buf);
    const auto b = read_checkpoint(buf, 5);
    CHECK(b.scale == a.scale);
    CHECK(b.shift == a.shift);
    CHECK(b.ema_scale == a.ema_scale);
    CHECK(b.ema_shift == a.ema_shift);
    std::stringstream shortbuf(buf.str().substr(0, 20));
    CHECK_THROWS_AS(read_checkpoint(shortbuf, 5), DataError);

    CHECK_THROWS_AS(init_adapter(0), ConfigError);
    CHECK_THROWS_AS(init_adapter(3, 0.0), ConfigError);
    CHECK_THROWS_AS(init_adapter(3, 0.1, 1.5), ConfigError);
}
