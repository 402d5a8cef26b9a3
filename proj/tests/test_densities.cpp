#include "linbridge/densities.hpp"
#include "linbridge/errors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace linbridge;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

double integrate_line(const std::function<double(double)>& f, double lo, double hi) {
  QuadOptions o;
  o.rel_tol = 1e-12;
  return integrate(f, lo, hi, o);
}

}  // namespace

TEST(Densities, GaussLawBasics) {
  Matrix C(2, 2);
  C << 2.0, 0.3, 0.3, 0.5;
  Vector m(2);
  m << 1.0, -1.0;
  const GaussLaw law(m, C);
  EXPECT_FALSE(law.degenerate());
  EXPECT_NEAR(law.logdet(), std::log(C.determinant()), 1e-14);
  EXPECT_LT((law.factor() * law.factor().transpose() - C).norm(), 1e-14);
  const double peak = 1.0 / (2 * std::numbers::pi * std::sqrt(C.determinant()));
  EXPECT_NEAR(law.density(m), peak, 1e-14);

  const GaussLaw one(v1(0.5), Matrix::Constant(1, 1, 0.7));
  const double sd = std::sqrt(0.7);
  EXPECT_NEAR(integrate_line([&](double y) { return one.density(v1(y)); }, 0.5 - 10 * sd, 0.5 + 10 * sd), 1.0,
              1e-12);

  const GaussLaw zero(Vector::Zero(2), Matrix::Zero(2, 2));
  EXPECT_TRUE(zero.degenerate());
  EXPECT_EQ(zero.factor().norm(), 0.0);
  EXPECT_THROW((void)zero.log_density(Vector::Zero(2)), DomainError);

  Matrix bad(2, 2);
  bad << 1, 0, 0, -1;
  EXPECT_THROW(GaussLaw(Vector::Zero(2), bad), NotPositiveDefinite);
}

TEST(Densities, SemidefiniteFactor) {
  Vector u(3);
  u << 1.0, 2.0, -0.5;
  const Matrix C = u * u.transpose();
  const GaussLaw law(Vector::Zero(3), C);
  EXPECT_TRUE(law.degenerate());
  EXPECT_LT((law.factor() * law.factor().transpose() - C).norm(), 1e-12);
}

TEST(Densities, ZWiener) {
  BridgeKernel k(fixtures::wiener_model(), 2.0, v1(0), v1(0));
  for (double t : {0.3, 1.0, 2.0})
    EXPECT_NEAR(transition_density_z(k, v1(0), v1(0), 0.0, t).value, 1.0 / std::sqrt(2 * std::numbers::pi * t),
                1e-12);
  const auto p1 = transition_density_z(k, v1(0.3), v1(-0.8), 0.2, 1.1);
  const auto p2 = transition_density_z(k, v1(-0.8), v1(0.3), 0.2, 1.1);
  EXPECT_NEAR(p1.value, p2.value, 1e-15);
  EXPECT_NEAR(p1.log_value, std::log(p1.value), 1e-14);
}

TEST(Densities, ZOu) {
  BridgeKernel k(fixtures::ou_model(1.0, 1.0), 1.0, v1(0), v1(0));
  const double want = 1.0 / std::sqrt(2 * std::numbers::pi * (std::exp(2.0) - 1) / 2);
  EXPECT_NEAR(transition_density_z(k, v1(0), v1(0), 0.0, 1.0).value, want, 1e-11);
}

TEST(Densities, WienerBridgeLaw) {
  BridgeKernel k(fixtures::wiener_model(), 1.0, v1(0), v1(0));
  for (double t : {0.2, 0.5, 0.9}) {
    const double var = t * (1 - t);
    const double y = 0.37;
    const double want = std::exp(-y * y / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
    const auto p = transition_density_bridge(k, v1(0), v1(y), 0.0, t);
    EXPECT_NEAR(p.value, want, 1e-10 * want);
    EXPECT_NEAR(p.log_value, p.log_value_ratio, 1e-10);
  }
}

TEST(Densities, RatioRouteRandomOu) {
  fixtures::RandomModelGen gen(31);
  for (int rep = 0; rep < 20; ++rep) {
    const double q = gen.uniform(-2, 2), sg = gen.uniform(0.3, 1.5);
    BridgeKernel k(fixtures::ou_model(q, sg), 1.0, v1(gen.uniform(-1, 1)), v1(gen.uniform(-1, 1)));
    const double s = gen.uniform(0, 0.5), t = gen.uniform(s + 0.01, 0.99);
    const auto p = transition_density_bridge(k, v1(gen.uniform(-1, 1)), v1(gen.uniform(-1, 1)), s, t);
    EXPECT_LT(std::abs(std::exp(p.log_value_ratio) - p.value) / p.value, 1e-8);
  }
}

TEST(Densities, RatioRoutePolynomial2d) {
  Vector a(2), b(2), x(2), y(2);
  a << 0.2, -0.4;
  b << 1.0, 0.5;
  x << 0.1, 0.1;
  y << 0.3, 0.2;
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a, b);
  const auto p = transition_density_bridge(k, x, y, 0.25, 0.6);
  EXPECT_LT(std::abs(std::exp(p.log_value_ratio) - p.value) / p.value, 1e-8);
}

TEST(Densities, PeakValue) {
  Vector a(2), b(2), x(2);
  a << 0.2, -0.4;
  b << 1.0, 0.5;
  x << 0.0, 0.3;
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a, b);
  const double s = 0.1, t = 0.5;
  const Vector mean = k.bridge_mean(x, s, t);
  const double det = k.sigma_bridge(s, t).determinant();
  const double want = 1.0 / (2 * std::numbers::pi * std::sqrt(det));
  EXPECT_NEAR(transition_density_bridge(k, x, mean, s, t).value, want, 1e-9 * want);
}

TEST(Densities, ChapmanKolmogorovBridge) {
  fixtures::RandomModelGen gen(77);
  for (int rep = 0; rep < 5; ++rep) {
    const double q = gen.uniform(-2, 2), sg = gen.uniform(0.3, 1.5);
    BridgeKernel k(fixtures::ou_model(q, sg), 1.0, v1(0.2), v1(gen.uniform(-1, 1)));
    const double s = gen.uniform(0, 0.3), u = gen.uniform(0.35, 0.6), t = gen.uniform(0.65, 0.95);
    const double x = gen.uniform(-1, 1), y = gen.uniform(-1, 1);
    const GaussLaw mid(k.bridge_mean(v1(x), s, u), k.sigma_bridge(s, u));
    const double sd = std::sqrt(mid.cov()(0, 0)), c = mid.mean()(0);
    const double lhs = integrate_line(
        [&](double z) {
          return transition_density_bridge(k, v1(x), v1(z), s, u).value *
                 transition_density_bridge(k, v1(z), v1(y), u, t).value;
        },
        c - 10 * sd, c + 10 * sd);
    const double rhs = transition_density_bridge(k, v1(x), v1(y), s, t).value;
    EXPECT_LT(std::abs(lhs - rhs) / rhs, 1e-6);
  }
}

TEST(Densities, HarmonicZ) {
  fixtures::RandomModelGen gen(78);
  for (int rep = 0; rep < 5; ++rep) {
    const double q = gen.uniform(-2, 2), sg = gen.uniform(0.3, 1.5);
    BridgeKernel k(fixtures::ou_model(q, sg, gen.uniform(-0.5, 0.5)), 1.0, v1(0), v1(gen.uniform(-1, 1)));
    const double s = gen.uniform(0, 0.4), t = gen.uniform(0.5, 0.9);
    const double x = gen.uniform(-1, 1);
    const GaussLaw mid(k.mean_forward(v1(x), s, t), k.kappa(s, t));
    const double sd = std::sqrt(mid.cov()(0, 0)), c = mid.mean()(0);
    const double lhs = integrate_line(
        [&](double y) { return transition_density_z(k, v1(x), v1(y), s, t).value * h_function(k, v1(y), t).value; },
        c - 10 * sd, c + 10 * sd);
    const double rhs = h_function(k, v1(x), s).value;
    EXPECT_LT(std::abs(lhs - rhs) / rhs, 1e-6);
  }
}

TEST(Densities, ConditionalWienerSingle) {
  const double T = 2.0;
  BridgeKernel k(fixtures::wiener_model(), T, v1(0), v1(0));
  for (double t : {0.5, 1.0, 1.7}) {
    const auto law = conditional_fdd(k, {t});
    EXPECT_NEAR(law.mean()(0), 0.0, 1e-14);
    EXPECT_NEAR(law.cov()(0, 0), t * (T - t) / T, 1e-12);
  }
  EXPECT_EQ(conditional_fdd(k, {}).dim(), 0);
  EXPECT_THROW((void)conditional_fdd(k, {0.5, 0.5}), ConfigError);
  EXPECT_THROW((void)conditional_fdd(k, {T}), ConfigError);
}

TEST(Densities, ConditionalWienerPairBruteForce) {
  const double T = 1.5, t1 = T / 3, t2 = 2 * T / 3;
  BridgeKernel k(fixtures::wiener_model(), T, v1(0), v1(0));
  const auto law = conditional_fdd(k, {t1, t2});
  Matrix C(3, 3);
  const double ts[3] = {t1, t2, T};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) C(i, j) = std::min(ts[i], ts[j]);
  const Matrix cond = C.topLeftCorner(2, 2) - C.topRightCorner(2, 1) * C.bottomRightCorner(1, 1).inverse() *
                                                  C.bottomLeftCorner(1, 2);
  EXPECT_LT((law.cov() - cond).norm(), 1e-10);
  EXPECT_NEAR(law.cov()(0, 1), t1 * (T - t2) / T, 1e-10);
}

TEST(Densities, ConditionalMatchesKernels) {
  fixtures::RandomModelGen gen(55);
  for (int rep = 0; rep < 10; ++rep) {
    const auto m = gen.next();
    const auto d = m.dim();
    const Vector a = Vector::LinSpaced(d, -0.5, 0.5), b = Vector::LinSpaced(d, 1.0, -1.0);
    BridgeKernel k(m, 1.0, a, b);
    const std::vector<double> times{0.15, 0.4, 0.8};
    const auto law = conditional_fdd(k, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto I = static_cast<Eigen::Index>(i);
      const double t = times[i];
      EXPECT_LT((law.mean().segment(I * d, d) - k.bridge_mean(a, 0.0, t)).norm(), 1e-8);
      EXPECT_LT((law.cov().block(I * d, I * d, d, d) - k.sigma_bridge(0.0, t)).norm(), 1e-8);
      for (std::size_t j = i + 1; j < times.size(); ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        EXPECT_LT((law.cov().block(I * d, J * d, d, d) - bridge_covariance(k, t, times[j])).norm(), 1e-8);
      }
    }
  }
}

TEST(Densities, ZCovarianceOu) {
  const double q = -1.0, sg = 1.0;
  BridgeKernel k(fixtures::ou_model(q, sg), 2.0, v1(0), v1(0));
  const double s = 0.5, t = 1.2;
  const double want = std::exp(q * (t - s)) * sg * sg * std::expm1(2 * q * s) / (2 * q);
  EXPECT_NEAR(z_covariance(k, s, t)(0, 0), want, 1e-11);
}
