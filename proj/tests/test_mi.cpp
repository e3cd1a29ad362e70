#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "coe/encoders.hpp"
#include "coe/mi.hpp"

using namespace coe;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                     Scalar scale = 1.0) {
  auto rng = make_rng(seed, 1);
  std::normal_distribution<Scalar> gauss(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

CriticParams identity_critic(Scalar tau = 0.2) {
  CriticParams critic;
  critic.tau = tau;
  return critic;
}

}  // namespace

TEST_CASE("critic score closed forms") {
  SUBCASE("equal vectors under the identity projection") {
    Vector z(3);
    z << 1, 2, 3;
    CHECK(critic_score(z, z, identity_critic(0.2)) == doctest::Approx(5.0));
  }
  SUBCASE("orthogonal projected vectors score zero") {
    Vector a(2), b(2);
    a << 1, 0;
    b << 0, 1;
    CHECK(critic_score(a, b, identity_critic(0.2)) == doctest::Approx(0.0));
  }
  SUBCASE("matches a hand-composed projection") {
    const CriticParams critic = CriticParams::init(4, 42, 0.2);
    const Vector a = random_matrix(4, 1, 1).col(0);
    const Vector b = random_matrix(4, 1, 2).col(0);
    const Vector pa = Vector(critic.w.transpose() * a + critic.b.row(0).transpose()).array().tanh();
    const Vector pb = Vector(critic.w.transpose() * b + critic.b.row(0).transpose()).array().tanh();
    const Scalar oracle = pa.dot(pb) / (pa.norm() * pb.norm() * 0.2);
    CHECK(critic_score(a, b, critic) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(critic_score(b, a, critic) == doctest::Approx(critic_score(a, b, critic)));
  }
  SUBCASE("zero projected norm is rejected") {
    CriticParams critic;
    critic.w = Matrix::Identity(2, 2);
    critic.b = Matrix::Zero(1, 2);
    const Vector z = Vector::Zero(2);  // projects to exactly zero
    CHECK_THROWS_WITH_AS(critic_score(z, z, critic), doctest::Contains("zero projected norm"),
                         ValidationError);
  }
}

TEST_CASE("identical embeddings return -ln(B)") {
  const Matrix z = Matrix::Ones(5, 3);
  const InfoNceResult r = info_nce(z, z, identity_critic(), MiBatch::full(5), false);
  CHECK(r.value == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("batch below two is rejected") {
  const Matrix z = Matrix::Ones(1, 3);
  CHECK_THROWS_AS(info_nce(z, z, identity_critic(), MiBatch::full(1), false), ValidationError);
}

TEST_CASE("value never exceeds ln(B)") {
  for (int trial = 0; trial < 1000; ++trial) {
    const int b = 2 + trial % 7;
    const Matrix za = random_matrix(b, 4, 3000 + static_cast<std::uint64_t>(trial));
    const Matrix zb = random_matrix(b, 4, 7000 + static_cast<std::uint64_t>(trial));
    const CriticParams critic =
        trial % 2 ? CriticParams::init(4, static_cast<std::uint64_t>(trial), 0.2)
                  : identity_critic();
    const InfoNceResult r = info_nce(za, zb, critic, MiBatch::full(b), false);
    CHECK(r.value <= std::log(static_cast<Scalar>(b)) + 1e-12);
  }
}

TEST_CASE("two separable pairs approach the saturation limit from below") {
  // Positives at score s, negatives at score s - gap: each direction
  // contributes -log(1 + e^(-gap)), which climbs to 0 as the gap widens.
  Matrix za(2, 2), zb(2, 2);
  za << 1, 0, 0, 1;
  zb << 1, 0, 0, 1;
  CriticParams critic = identity_critic(1.0 / 20.0);  // unit cosines scaled to a gap of 20
  const InfoNceResult r = info_nce(za, zb, critic, MiBatch::full(2), false);
  const Scalar oracle = -std::log1p(std::exp(-20.0));
  CHECK(r.value == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(r.value > -1e-8);
  CHECK(r.value <= 0.0);
}

TEST_CASE("symmetrized value is invariant to swapping the arguments") {
  const Matrix za = random_matrix(8, 5, 11);
  const Matrix zb = random_matrix(8, 5, 12);
  const CriticParams critic = CriticParams::init(5, 77, 0.2);
  const InfoNceResult ab = info_nce(za, zb, critic, MiBatch::full(8), false);
  const InfoNceResult ba = info_nce(zb, za, critic, MiBatch::full(8), false);
  CHECK(std::abs(ab.value - ba.value) < 1e-10);
}

TEST_CASE("identity projection is invariant to a common rotation") {
  const Matrix za = random_matrix(6, 3, 21);
  const Matrix zb = random_matrix(6, 3, 22);
  const Eigen::HouseholderQR<Matrix> qr(random_matrix(3, 3, 23));
  const Matrix q = qr.householderQ();
  const InfoNceResult base = info_nce(za, zb, identity_critic(), MiBatch::full(6), false);
  const InfoNceResult rotated =
      info_nce(za * q, zb * q, identity_critic(), MiBatch::full(6), false);
  CHECK(rotated.value == doctest::Approx(base.value).epsilon(1e-10));
}

TEST_CASE("gradients match central differences") {
  for (std::uint64_t seed : {500, 600, 700}) {
    const int b = 5, d = 4;
    Matrix za = random_matrix(b, d, seed);
    Matrix zb = random_matrix(b, d, seed + 1);
    CriticParams critic = CriticParams::init(d, seed + 2, 0.2);
    const MiBatch batch = MiBatch::full(b);

    const InfoNceResult r = info_nce(za, zb, critic, batch, true);

    Matrix grad_za = r.d_za, grad_zb = r.d_zb, grad_w = r.d_w, grad_b = r.d_b;
    ParamPack grads;
    grads.add(&grad_za);
    grads.add(&grad_zb);
    grads.add(&grad_w);
    grads.add(&grad_b);

    Matrix pza = za, pzb = zb;
    CriticParams pc = critic;
    ParamPack probe;
    probe.add(&pza);
    probe.add(&pzb);
    probe.add(&pc.w);
    probe.add(&pc.b);
    const Vector at = probe.to_vector();
    const auto loss = [&](const Vector& v) {
      probe.from_vector(v);
      return info_nce(pza, pzb, pc, batch, false).value;
    };
    const FiniteDiffReport report =
        finite_diff_check(loss, at, grads.to_vector(), 1e-5, 1e-3, 200, seed);
    CAPTURE(seed);
    CHECK(report.pass);
  }
}
