#include "linbridge/errors.hpp"
#include "linbridge/onedim.hpp"
#include "linbridge/samplers.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace linbridge;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }

struct Moments {
  Vector mean;
  Matrix cov;
};

Moments moments_at(const PathEnsemble& e, Eigen::Index i) {
  const auto d = e.dim;
  Vector m = Vector::Zero(d);
  Matrix c = Matrix::Zero(d, d);
  for (Eigen::Index p = 0; p < e.n_paths; ++p) m += e.state(p, i);
  m /= static_cast<double>(e.n_paths);
  for (Eigen::Index p = 0; p < e.n_paths; ++p) {
    const Vector x = e.state(p, i) - m;
    c += x * x.transpose();
  }
  c /= static_cast<double>(e.n_paths - 1);
  return {m, c};
}

// Every mean and covariance entry within 4 standard errors.
void expect_law(const PathEnsemble& e, Eigen::Index i, const Vector& mean, const Matrix& cov) {
  const auto mo = moments_at(e, i);
  const double n = static_cast<double>(e.n_paths);
  for (Eigen::Index j = 0; j < e.dim; ++j) {
    EXPECT_LT(std::abs(mo.mean(j) - mean(j)), 4 * std::sqrt(cov(j, j) / n) + 1e-12) << "t=" << e.grid[i];
    for (Eigen::Index l = 0; l < e.dim; ++l) {
      const double se = std::sqrt((cov(j, j) * cov(l, l) + cov(j, l) * cov(j, l)) / n);
      EXPECT_LT(std::abs(mo.cov(j, l) - cov(j, l)), 4 * se + 1e-12) << "t=" << e.grid[i];
    }
  }
}

Vector a2() {
  Vector a(2);
  a << 0.2, -0.4;
  return a;
}
Vector b2() {
  Vector b(2);
  b << 1.0, 0.5;
  return b;
}

SamplerOptions threads(unsigned n) {
  SamplerOptions o;
  o.threads = n;
  return o;
}

}  // namespace

TEST(Samplers, StreamSeeds) {
  EXPECT_EQ(stream_seed(1, 0), stream_seed(1, 0));
  EXPECT_NE(stream_seed(1, 0), stream_seed(1, 1));
  EXPECT_NE(stream_seed(1, 0), stream_seed(2, 0));
  NormalStream x(stream_seed(3, 4)), y(stream_seed(3, 4));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(x(), y());
  EXPECT_EQ(to_string(SampleMethod::bridge_sde), "bridge_sde");
}

TEST(Samplers, ZWiener) {
  BridgeKernel k(fixtures::wiener_model(), 1.0, v1(0), v1(0));
  const std::vector<double> grid{0.0, 0.25, 0.5, 1.0};
  const auto e = sample_z(k, v1(0.5), grid, 20000, 11, threads(1));
  EXPECT_EQ(e.n_times(), 4);
  EXPECT_EQ(e.at(7, 0, 0), 0.5);
  for (Eigen::Index i = 1; i < 4; ++i) expect_law(e, i, v1(0.5), Matrix::Constant(1, 1, grid[i]));
}

TEST(Samplers, ThreadIndependence) {
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a2(), b2());
  const std::vector<double> grid{0.0, 0.3, 0.6, 1.0};
  const std::vector<double> inner{0.3, 0.6};
  for (unsigned n : {2u, 3u}) {
    EXPECT_EQ(sample_z(k, a2(), grid, 37, 5, threads(1)).states, sample_z(k, a2(), grid, 37, 5, threads(n)).states);
    EXPECT_EQ(sample_bridge_exact(k, grid, 37, 5, threads(1)).states,
              sample_bridge_exact(k, grid, 37, 5, threads(n)).states);
    EXPECT_EQ(sample_bridge_sde(k, 20, 37, 5, 0.0, {}, threads(1)).states,
              sample_bridge_sde(k, 20, 37, 5, 0.0, {}, threads(n)).states);
    EXPECT_EQ(sample_bridge_anticipative(k, grid, 37, 5, threads(1)).states,
              sample_bridge_anticipative(k, grid, 37, 5, threads(n)).states);
    EXPECT_EQ(sample_conditional_oracle(k, inner, 37, 5, threads(1)).states,
              sample_conditional_oracle(k, inner, 37, 5, threads(n)).states);
  }
  // a path does not depend on how many paths are drawn
  const auto small = sample_bridge_exact(k, grid, 3, 5);
  const auto big = sample_bridge_exact(k, grid, 40, 5);
  for (std::size_t i = 0; i < small.states.size(); ++i) EXPECT_EQ(small.states[i], big.states[i]);
  EXPECT_NE(sample_bridge_exact(k, grid, 3, 6).states, small.states);
}

TEST(Samplers, BridgeExactPinsAndLaw) {
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a2(), b2());
  const std::vector<double> grid{0.0, 0.2, 0.5, 0.8, 1.0};
  const auto e = sample_bridge_exact(k, grid, 20000, 3);
  for (Eigen::Index p = 0; p < e.n_paths; p += 997) {
    EXPECT_EQ(Vector(e.state(p, 0)), a2());
    EXPECT_EQ(Vector(e.state(p, 4)), b2());
  }
  for (Eigen::Index i = 1; i < 4; ++i)
    expect_law(e, i, k.bridge_mean(a2(), 0.0, grid[i]), k.sigma_bridge(0.0, grid[i]));
  EXPECT_THROW(sample_bridge_exact(k, {0.1, 0.5}, 5, 1), ConfigError);
}

TEST(Samplers, GridValidation) {
  BridgeKernel k(fixtures::wiener_model(), 1.0, v1(0), v1(0));
  EXPECT_THROW(check_grid(k, {}, false), ConfigError);
  EXPECT_THROW(check_grid(k, {0.0, 0.5, 0.5}, false), ConfigError);
  EXPECT_THROW(check_grid(k, {0.0, 1.5}, false), ConfigError);
  EXPECT_THROW(check_grid(k, {0.0, 1.0 - 1e-12}, false), DomainError);
  EXPECT_NO_THROW(check_grid(k, {0.0, 0.5, 1.0}, true));
  EXPECT_THROW(check_grid(k, {0.2, 0.5}, true), ConfigError);
}

TEST(Samplers, SdeDriftMatchesScalarBridge) {
  for (double q : {-1.2, 0.7}) {
    const double sg = 0.8, a = 0.3, b = -0.5, T = 1.3;
    BridgeKernel k(fixtures::ou_model(q, sg), T, v1(a), v1(b));
    const auto B = ou_bridge(q, sg, a, b, T);
    for (double t : {0.0, 0.4, 1.2}) {
      const auto dr = sde_drift_coefficients(k, t);
      for (double u : {-1.0, 0.0, 0.6})
        EXPECT_NEAR(dr.B(0, 0) * u + dr.beta(0), B.sde_drift(t, u), 1e-9 * (1 + std::abs(B.sde_drift(t, u))));
    }
  }
  // sign flip of q leaves the conditioned drift unchanged
  BridgeKernel kp(fixtures::ou_model(0.9, 1.0), 1.0, v1(0.2), v1(0.4));
  BridgeKernel kn(fixtures::ou_model(-0.9, 1.0), 1.0, v1(0.2), v1(0.4));
  const auto p = sde_drift_coefficients(kp, 0.3), n = sde_drift_coefficients(kn, 0.3);
  EXPECT_NEAR(p.B(0, 0), n.B(0, 0), 1e-9);
  EXPECT_NEAR(p.beta(0), n.beta(0), 1e-9);
  EXPECT_THROW(sde_drift_coefficients(kp, 1.0), DomainError);
}

TEST(Samplers, SdeGridAndPin) {
  BridgeKernel k(fixtures::wiener_model(), 2.0, v1(0.1), v1(0.7));
  const auto g = sde_step_grid(k, 8, 0.0);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 2.0);
  EXPECT_NEAR(g[7], 2.0 - 0.25, 1e-15);
  EXPECT_NEAR(g[1], 0.25, 1e-15);
  const auto e = sample_bridge_sde(k, 8, 50, 1);
  for (Eigen::Index p = 0; p < 50; ++p) {
    EXPECT_EQ(e.at(p, 0, 0), 0.1);
    EXPECT_EQ(e.at(p, 8, 0), 0.7);
  }
  const auto r = sample_bridge_sde(k, 8, 50, 1, 0.0, std::vector<double>{g[2], g[5]});
  EXPECT_EQ(r.n_times(), 2);
  for (Eigen::Index p = 0; p < 50; ++p) EXPECT_EQ(r.at(p, 1, 0), e.at(p, 5, 0));
  EXPECT_THROW(sample_bridge_sde(k, 8, 5, 1, 0.0, std::vector<double>{0.3}), GridMismatch);
  EXPECT_THROW(sample_bridge_sde(k, 0, 5, 1), ConfigError);
}

TEST(Samplers, EulerMomentRecursion) {
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a2(), b2());
  const int n_steps = 16;
  const auto law = sde_euler_moments(k, n_steps);
  const auto e = sample_bridge_sde(k, n_steps, 20000, 21);
  ASSERT_EQ(static_cast<Eigen::Index>(law.size()), e.n_times());
  for (Eigen::Index i : {4, 8, 12}) expect_law(e, i, law[i].mean(), law[i].cov());
  EXPECT_LT((law.back().mean() - b2()).norm(), 1e-15);
}

TEST(Samplers, EulerBiasShrinks) {
  BridgeKernel k(fixtures::ou_model(1.0, 1.0, 0.2), 1.0, v1(0.3), v1(-0.2));
  double prev = 1e300;
  for (int n : {16, 64, 256}) {
    const auto law = sde_euler_moments(k, n);
    const auto idx = static_cast<std::size_t>(n / 2);
    const double t = sde_step_grid(k, n, 0.0)[idx];
    const double err = std::abs(law[idx].mean()(0) - k.bridge_mean(k.a(), 0.0, t)(0)) +
                       std::abs(law[idx].cov()(0, 0) - k.sigma_bridge(0.0, t)(0, 0));
    EXPECT_LT(err, prev / 2.5);
    prev = err;
  }
}

TEST(Samplers, AnticipativeCoefficients) {
  const double q = 1.4, T = 1.1;
  BridgeKernel k(fixtures::ou_model(q, 0.6), T, v1(0.0), v1(0.0));
  for (double t : {0.0, 0.3, 0.9, T}) {
    const auto c = anticipative_coefficients(k, t);
    EXPECT_NEAR(c.coef_a(0, 0), std::sinh(q * (T - t)) / std::sinh(q * T), 1e-10);
    EXPECT_NEAR(c.coef_b(0, 0), std::sinh(q * t) / std::sinh(q * T), 1e-10);
    EXPECT_EQ(c.coef_Zt(0, 0), 1.0);
    EXPECT_EQ(c.coef_ZT(0, 0), -c.coef_b(0, 0));
  }
  // Y_t is uncorrelated with Z_T
  BridgeKernel k2(fixtures::polynomial_2d(), 1.0, a2(), b2());
  for (double t : {0.2, 0.7}) {
    const auto c = anticipative_coefficients(k2, t);
    const Matrix cov = z_covariance(k2, t, 1.0) + c.coef_ZT * k2.kappa(0.0, 1.0);
    EXPECT_LT(cov.norm(), 1e-10);
  }
}

TEST(Samplers, AnticipativeLaw) {
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a2(), b2());
  const std::vector<double> grid{0.0, 0.25, 0.75, 1.0};
  const auto e = sample_bridge_anticipative(k, grid, 20000, 8);
  EXPECT_EQ(Vector(e.state(5, 0)), a2());
  EXPECT_EQ(Vector(e.state(5, 3)), b2());
  for (Eigen::Index i : {1, 2}) expect_law(e, i, k.bridge_mean(a2(), 0.0, grid[i]), k.sigma_bridge(0.0, grid[i]));
}

TEST(Samplers, ConditionalOracle) {
  BridgeKernel k(fixtures::polynomial_2d(), 1.0, a2(), b2());
  const std::vector<double> times{0.1, 0.5, 0.9};
  const auto e = sample_conditional_oracle(k, times, 20000, 4);
  EXPECT_EQ(e.method, SampleMethod::conditional_oracle);
  for (Eigen::Index i = 0; i < 3; ++i)
    expect_law(e, i, k.bridge_mean(a2(), 0.0, times[i]), k.sigma_bridge(0.0, times[i]));
  const auto none = sample_conditional_oracle(k, {}, 10, 4);
  EXPECT_EQ(none.n_paths, 0);
  EXPECT_TRUE(none.states.empty());
}

TEST(Samplers, CsvFormat) {
  BridgeKernel k(fixtures::wiener_model(), 1.0, v1(0), v1(1));
  const auto e = sample_bridge_exact(k, {0.0, 1.0}, 2, 1);
  std::ostringstream os;
  write_ensemble_csv(os, e, {"method=bridge_exact"});
  EXPECT_EQ(os.str(), "# method=bridge_exact\npath,t,x1\n0,0,0\n0,1,1\n1,0,0\n1,1,1\n");
  PathEnsemble f;
  f.grid = {0.1};
  f.n_paths = 1;
  f.dim = 2;
  f.states = {1.0 / 3.0, -2.5};
  std::ostringstream os2;
  write_ensemble_csv(os2, f);
  EXPECT_EQ(os2.str(), "path,t,x1,x2\n0,0.10000000000000001,0.33333333333333331,-2.5\n");
}
