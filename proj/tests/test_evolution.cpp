#include "linbridge/errors.hpp"
#include "linbridge/evolution.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace linbridge;

TEST(Evolution, ZeroGenerator) {
  const auto m = make_constant_model(Matrix::Zero(3, 3), Vector::Zero(3), Matrix::Identity(3, 3));
  EvolutionOperator op(m, 2.0);
  for (double s : {0.0, 0.4, 1.7})
    for (double t : {0.0, 0.9, 2.0}) EXPECT_LT((op.evolve(t, s) - Matrix::Identity(3, 3)).norm(), 1e-14);
}

TEST(Evolution, Nilpotent) {
  EvolutionOperator op(fixtures::integrated_wiener(), 3.0);
  for (double tau : {0.1, 1.0, 2.5}) {
    Matrix want(2, 2);
    want << 1, tau, 0, 1;
    EXPECT_LT((op.evolve(tau, 0.0) - want).norm(), 1e-12);
    Matrix back(2, 2);
    back << 1, -tau, 0, 1;
    EXPECT_LT((op.evolve(0.0, tau) - back).norm(), 1e-12);
  }
}

TEST(Evolution, ScalarExponential) {
  for (double q : {-2.0, -0.5, 0.7, 2.0}) {
    EvolutionOperator op(make_scalar_model(q, 0.0, 1.0), 1.0);
    for (double s : {0.0, 0.3, 0.8})
      for (double t : {0.0, 0.25, 1.0}) {
        const double want = std::exp(q * (t - s));
        EXPECT_NEAR(op.evolve(t, s)(0, 0), want, 1e-9 * want);
      }
  }
}

TEST(Evolution, IdentityOnDiagonal) {
  EvolutionOperator op(fixtures::polynomial_2d(), 1.0);
  EXPECT_EQ(op.evolve(0.37, 0.37), Matrix::Identity(2, 2));
}

TEST(Evolution, SeriesConstantQ) {
  Matrix Q(2, 2);
  Q << 0.3, -1.2, 0.8, -0.4;
  const auto m = make_constant_model(Q, Vector::Zero(2), Matrix::Identity(2, 2));
  const double s = 0.2, t = 0.9;
  for (int k = 0; k <= 6; ++k) {
    Matrix want = Matrix::Identity(2, 2);
    Matrix term = Matrix::Identity(2, 2);
    for (int j = 1; j <= k; ++j) {
      term = term * ((t - s) * Q) / j;
      want += term;
    }
    EXPECT_LT((evolve_series(m, s, t, k) - want).norm(), 1e-13) << "terms=" << k;
  }
}

TEST(Evolution, SeriesScalar) {
  for (double q : {-2.0, -1.0, 0.5, 2.0}) {
    const auto m = make_scalar_model(q, 0.0, 1.0);
    EXPECT_NEAR(evolve_series(m, 0.4, 0.5, 8)(0, 0), std::exp(0.1 * q), 1e-10);
  }
  EXPECT_EQ(evolve_series(make_scalar_model(0.0, 0.0, 1.0), 0.0, 1.0, 5)(0, 0), 1.0);
}

TEST(Evolution, AgreesWithSeries) {
  fixtures::RandomModelGen gen(21);
  for (int rep = 0; rep < 30; ++rep) {
    const auto m = gen.next();
    EvolutionOperator op(m, 1.0);
    const double s = gen.uniform(0.0, 0.8);
    const double t = s + gen.uniform(0.02, 0.2);
    const double L = generator_bound(m, s, t);
    // Series remainder after n terms is at most (L h)^{n+1}/(n+1)! e^{L h}.
    int terms = 1;
    double rem = L * (t - s);
    while (rem * std::exp(L * (t - s)) > 1e-14) {
      ++terms;
      rem *= L * (t - s) / terms;
    }
    const Matrix series = evolve_series(m, s, t, terms);
    EXPECT_LT((op.evolve(t, s) - series).norm(), 1e-9);
    EXPECT_LT((op.evolve(s, t) - evolve_series(m, t, s, terms)).norm(), 1e-9);
  }
}

TEST(Evolution, NormBound) {
  fixtures::RandomModelGen gen(3);
  for (int rep = 0; rep < 20; ++rep) {
    const auto m = gen.next();
    EvolutionOperator op(m, 1.0);
    const double s = gen.uniform(0, 1), t = gen.uniform(0, 1);
    const double L = generator_bound(m, s, t, 2001);
    EXPECT_LE(op.evolve(t, s).operatorNorm(), std::exp(L * std::abs(t - s)) * (1 + 1e-6));
  }
}

TEST(Evolution, CocycleInverseDerivative) {
  fixtures::RandomModelGen gen(99);
  for (int rep = 0; rep < 30; ++rep) {
    const auto m = gen.next();
    EvolutionOperator op(m, 1.0);
    op.freeze();
    const double r = gen.uniform(0, 1), s = gen.uniform(0, 1), t = gen.uniform(0, 1);
    const auto I = Matrix::Identity(m.dim(), m.dim());
    EXPECT_LT((op.evolve(t, s) * op.evolve(s, r) - op.evolve(t, r)).norm(), 1e-8);
    EXPECT_LT((op.evolve(t, s) * op.evolve(s, t) - I).norm(), 1e-8);
    const double h = 1e-4;
    const double sc = std::clamp(s, h, 1 - h), tc = std::clamp(t, h, 1 - h);
    const Matrix d1 = (op.evolve(tc + h, sc) - op.evolve(tc - h, sc)) / (2 * h);
    const Matrix d2 = (op.evolve(tc, sc + h) - op.evolve(tc, sc - h)) / (2 * h);
    EXPECT_LT((d1 - m.Q()(tc) * op.evolve(tc, sc)).norm(), 1e-6);
    EXPECT_LT((d2 + op.evolve(tc, sc) * m.Q()(sc)).norm(), 1e-6);
  }
}

TEST(Evolution, FrozenRejectsExtension) {
  EvolutionOperator op(fixtures::ou_model(1.0, 1.0), 1.0);
  op.extend_to(2.0);
  EXPECT_GE(op.horizon(), 2.0);
  op.freeze();
  EXPECT_THROW(op.extend_to(3.0), Error);
  EXPECT_NO_THROW(op.extend_to(1.5));
}

TEST(Evolution, StepLimit) {
  EvolutionOptions o;
  o.max_steps = 3;
  EXPECT_THROW(EvolutionOperator(fixtures::ou_model(40.0, 1.0), 5.0, o), SolverError);
}

TEST(Evolution, TargetWithinRoundingOfAnchor) {
  // uniform grids hit anchors up to rounding; the final short step must not
  // be reported as a step size underflow
  for (const auto& m : {fixtures::integrated_wiener(), fixtures::ou_model(1.0, 1.0)}) {
    EvolutionOperator op(m, 1.0);
    for (int i = 0; i <= 20; ++i) {
      const double t = i * (1.0 / 20);
      EXPECT_NO_THROW((void)op.evolve(t, 0.0)) << i;
      EXPECT_NO_THROW((void)op.evolve(1.0, t)) << i;
      EXPECT_NO_THROW((void)op.evolve(t, 0.05 * i)) << i;
    }
  }
}
