// Shared fixtures and hand-rolled generators for the test binaries.
#pragma once

#include "linbridge/model.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace linbridge::fixtures {

inline LinearModel ou_model(double q, double sigma, double r = 0.0) { return make_scalar_model(q, r, sigma); }

inline LinearModel wiener_model(double sigma = 1.0) { return make_scalar_model(0.0, 0.0, sigma); }

inline LinearModel integrated_wiener() {
  Matrix Q(2, 2);
  Q << 0, 1, 0, 0;
  Matrix S(2, 1);
  S << 0, 1;
  return make_constant_model(Q, Vector::Zero(2), S);
}

// d = 2, p = 1 model with time-varying polynomial coefficients. Controllable
// through the constant Q (rank-2 [S, -QS]).
inline LinearModel polynomial_2d() {
  Matrix Q0(2, 2), Q1(2, 2);
  Q0 << -0.5, 1.0, -0.3, -0.2;
  Q1 << 0.1, 0.0, 0.2, -0.1;
  Matrix r0(2, 1), r1(2, 1);
  r0 << 0.1, -0.2;
  r1 << 0.0, 0.3;
  Matrix S0(2, 1), S1(2, 1);
  S0 << 0.3, 0.8;
  S1 << 0.2, 0.1;
  return LinearModel(CoefficientFn::polynomial({Q0, Q1}), CoefficientFn::polynomial({r0, r1}),
                     CoefficientFn::polynomial({S0, S1}));
}

/// Random model with polynomial coefficients of degree <= 2, d in {1,2,3},
/// p in {1,2}. The constant part of S is kept well conditioned (rank
/// min(d, p) with singular values bounded away from zero) and, when p < d,
/// Q(0) gets a shift structure so the controllability condition holds.
class RandomModelGen {
 public:
  explicit RandomModelGen(std::uint64_t seed) : rng_(seed) {}

  LinearModel next() {
    std::uniform_int_distribution<int> dd(1, 3), pd(1, 2), deg(0, 2);
    const int d = dd(rng_);
    const int p = pd(rng_);
    return next(d, p, deg(rng_), deg(rng_), deg(rng_));
  }

  LinearModel next(int d, int p, int deg_q, int deg_r, int deg_s) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto rand_mat = [&](int r, int c, double scale) {
      Matrix m(r, c);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scale * u(rng_);
      return m;
    };
    std::vector<Matrix> q, rr, s;
    Matrix q0 = rand_mat(d, d, 0.5);
    for (int i = 0; i + 1 < d; ++i) q0(i, i + 1) += 1.5;  // chain coupling
    q.push_back(q0);
    for (int k = 1; k <= deg_q; ++k) q.push_back(rand_mat(d, d, 0.3));
    for (int k = 0; k <= deg_r; ++k) rr.push_back(rand_mat(d, 1, 0.5));
    Matrix s0 = rand_mat(d, p, 0.2);
    for (int j = 0; j < p && j < d; ++j) s0(d - 1 - j, j) += 1.0;
    s.push_back(s0);
    for (int k = 1; k <= deg_s; ++k) s.push_back(rand_mat(d, p, 0.2));
    return LinearModel(CoefficientFn::polynomial(q), CoefficientFn::polynomial(rr), CoefficientFn::polynomial(s));
  }

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace linbridge::fixtures
