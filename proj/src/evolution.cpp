#include "linbridge/evolution.hpp"

#include "linbridge/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace linbridge {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

enum class Side { left, right };

// Right-hand side of Phi' = Q Phi (left) or Psi' = -Psi Q (right).
struct MatrixOde {
  const CoefficientFn* Q;
  Side side;
  mutable Matrix q;

  void operator()(double t, const Matrix& y, Matrix& dy) const {
    Q->eval_into(t, q);
    if (side == Side::left) {
      dy.noalias() = q * y;
    } else {
      dy.noalias() = -(y * q);
    }
  }
};

double error_norm(const Matrix& err, const Matrix& y0, const Matrix& y1, const EvolutionOptions& o) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = o.abs_tol + o.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = err(i) / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

struct StepResult {
  Matrix y;
  double err;
};

StepResult dp_step(const MatrixOde& f, double t, const Matrix& y, double h, const Matrix& k1,
                   const EvolutionOptions& o, Matrix& k7_out) {
  Matrix k2(y.rows(), y.cols()), k3 = k2, k4 = k2, k5 = k2, k6 = k2;
  f(t + c2 * h, y + h * (a21 * k1), k2);
  f(t + c3 * h, y + h * (a31 * k1 + a32 * k2), k3);
  f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3), k4);
  f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), k5);
  f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), k6);
  Matrix y1 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  k7_out.resize(y.rows(), y.cols());
  f(t + h, y1, k7_out);
  const Matrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7_out);
  const double e = error_norm(err, y, y1, o);
  return {std::move(y1), e};
}

double initial_step(const CoefficientFn& Q, double t0, double span) {
  const double qn = Q(t0).norm();
  return std::min(std::abs(span), 0.05 / (1.0 + qn));
}

// Integrates from (t0, y0) to t1. When `trace` is given every accepted step
// (time, state) is appended to it.
template <class Trace>
Matrix integrate_ode(const MatrixOde& f, double t0, Matrix y, double t1, const EvolutionOptions& o,
                     Trace&& trace) {
  if (t0 == t1) return y;
  const double dir = t1 > t0 ? 1.0 : -1.0;
  double h = dir * initial_step(*f.Q, t0, t1 - t0);
  double t = t0;
  Matrix k1(y.rows(), y.cols());
  Matrix k7;
  f(t, y, k1);
  long steps = 0;
  while (dir * (t1 - t) > 0.0) {
    if (++steps > o.max_steps) throw SolverError("evolution: maximum number of steps exceeded");
    bool last = false;
    if (dir * (t + h - t1) >= 0.0) {
      h = t1 - t;
      last = true;
    }
    auto [y1, err] = dp_step(f, t, y, h, k1, o, k7);
    if (!std::isfinite(err)) throw SolverError("evolution: non-finite state");
    if (err <= 1.0) {
      t = last ? t1 : t + h;
      y = std::move(y1);
      k1 = k7;  // FSAL
      trace(t, y);
      if (last) break;
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h *= fac;
    } else {
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
    if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t)))
      throw SolverError("evolution: step size underflow at t=" + std::to_string(t));
  }
  return y;
}

Matrix integrate_ode(const MatrixOde& f, double t0, Matrix y, double t1, const EvolutionOptions& o) {
  return integrate_ode(f, t0, std::move(y), t1, o, [](double, const Matrix&) {});
}

}  // namespace

EvolutionOperator::EvolutionOperator(LinearModel model, double horizon, EvolutionOptions options)
    : model_(std::move(model)), options_(options) {
  if (!(horizon > 0.0)) throw ConfigError("evolution: horizon must be positive");
  const auto d = model_.dim();
  anchors_.push_back(0.0);
  phi_.push_back(Matrix::Identity(d, d));
  psi_.push_back(Matrix::Identity(d, d));
  extend_to(horizon);
}

void EvolutionOperator::extend_to(double horizon) {
  if (horizon <= anchors_.back()) return;
  if (frozen_) throw Error("evolution: cannot extend a frozen operator");
  // Integrate Phi to the new horizon recording its accepted steps, then
  // evaluate Psi on exactly the same anchor times.
  const MatrixOde fphi{&model_.Q(), Side::left, {}};
  const MatrixOde fpsi{&model_.Q(), Side::right, {}};
  const double t0 = anchors_.back();
  std::vector<double> new_times;
  std::vector<Matrix> new_phi;
  integrate_ode(fphi, t0, phi_.back(), horizon, options_, [&](double t, const Matrix& y) {
    new_times.push_back(t);
    new_phi.push_back(y);
  });
  double prev_t = t0;
  Matrix psi = psi_.back();
  for (std::size_t i = 0; i < new_times.size(); ++i) {
    psi = integrate_ode(fpsi, prev_t, std::move(psi), new_times[i], options_);
    prev_t = new_times[i];
    anchors_.push_back(new_times[i]);
    phi_.push_back(new_phi[i]);
    psi_.push_back(psi);
  }
}

std::size_t EvolutionOperator::anchor_below(double t) const {
  const auto it = std::upper_bound(anchors_.begin(), anchors_.end(), t);
  if (it == anchors_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(anchors_.begin(), it)) - 1;
}

Matrix EvolutionOperator::phi(double t) const {
  if (t < 0.0) throw ConfigError("evolution: negative time");
  const auto k = anchor_below(t);
  if (anchors_[k] == t) return phi_[k];
  const MatrixOde f{&model_.Q(), Side::left, {}};
  return integrate_ode(f, anchors_[k], phi_[k], t, options_);
}

Matrix EvolutionOperator::phi_inv(double t) const {
  if (t < 0.0) throw ConfigError("evolution: negative time");
  const auto k = anchor_below(t);
  if (anchors_[k] == t) return psi_[k];
  const MatrixOde f{&model_.Q(), Side::right, {}};
  return integrate_ode(f, anchors_[k], psi_[k], t, options_);
}

Matrix EvolutionOperator::evolve(double to, double from) const {
  if (to == from) return Matrix::Identity(model_.dim(), model_.dim());
  if (from == 0.0) return phi(to);
  if (to == 0.0) return phi_inv(from);
  return phi(to) * phi_inv(from);
}

// ---------------------------------------------------------------------------
// Peano-Baker oracle

namespace {

constexpr int kNodes = 16;

struct Collocation {
  std::array<double, kNodes> x{};  // ascending nodes on [-1, 1]
  std::array<double, kNodes> w{};
  // cum(i, j) = int_{-1}^{x_i} l_j(x) dx for the Lagrange basis l_j on x.
  Eigen::Matrix<double, kNodes, kNodes> cum;

  Collocation() {
    using Rule = boost::math::quadrature::gauss<double, kNodes>;
    const auto& ax = Rule::abscissa();
    const auto& aw = Rule::weights();
    const int half = kNodes / 2;
    for (int i = 0; i < half; ++i) {
      x[static_cast<std::size_t>(half - 1 - i)] = -ax[static_cast<std::size_t>(i)];
      w[static_cast<std::size_t>(half - 1 - i)] = aw[static_cast<std::size_t>(i)];
      x[static_cast<std::size_t>(half + i)] = ax[static_cast<std::size_t>(i)];
      w[static_cast<std::size_t>(half + i)] = aw[static_cast<std::size_t>(i)];
    }
    auto lagrange = [this](int j, double u) {
      double v = 1.0;
      for (int m = 0; m < kNodes; ++m) {
        if (m == j) continue;
        v *= (u - x[static_cast<std::size_t>(m)]) /
             (x[static_cast<std::size_t>(j)] - x[static_cast<std::size_t>(m)]);
      }
      return v;
    };
    // l_j has degree 15, so the 16-point rule mapped onto [-1, x_i] is exact.
    for (int i = 0; i < kNodes; ++i) {
      const double lo = -1.0, hi = x[static_cast<std::size_t>(i)];
      const double hw = 0.5 * (hi - lo), mid = 0.5 * (hi + lo);
      for (int j = 0; j < kNodes; ++j) {
        double acc = 0.0;
        for (int m = 0; m < kNodes; ++m)
          acc += w[static_cast<std::size_t>(m)] * lagrange(j, mid + hw * x[static_cast<std::size_t>(m)]);
        cum(i, j) = hw * acc;
      }
    }
  }
};

const Collocation& collocation() {
  static const Collocation c;
  return c;
}

}  // namespace

Matrix evolve_series(const LinearModel& model, double s, double t, int terms) {
  const auto d = model.dim();
  Matrix result = Matrix::Identity(d, d);
  if (terms <= 0 || s == t) return result;

  const auto& col = collocation();
  const double span = t - s;
  const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(span) / 0.05)));
  const double width = span / panels;
  const std::size_t n_nodes = static_cast<std::size_t>(panels) * kNodes;

  std::vector<double> times(n_nodes);
  std::vector<Matrix> q(n_nodes);
  for (int p = 0; p < panels; ++p) {
    const double lo = s + p * width;
    for (int i = 0; i < kNodes; ++i) {
      const auto idx = static_cast<std::size_t>(p * kNodes + i);
      times[idx] = lo + 0.5 * width * (col.x[static_cast<std::size_t>(i)] + 1.0);
      q[idx] = model.Q()(times[idx]);
    }
  }

  // term_k(u) = int_s^u Q(v) term_{k-1}(v) dv, tabulated at the collocation nodes.
  std::vector<Matrix> term(n_nodes, Matrix::Identity(d, d));
  std::vector<Matrix> integrand(n_nodes);
  for (int k = 1; k <= terms; ++k) {
    for (std::size_t n = 0; n < n_nodes; ++n) integrand[n] = q[n] * term[n];
    Matrix carried = Matrix::Zero(d, d);
    for (int p = 0; p < panels; ++p) {
      const auto base = static_cast<std::size_t>(p * kNodes);
      for (int i = 0; i < kNodes; ++i) {
        Matrix acc = Matrix::Zero(d, d);
        for (int j = 0; j < kNodes; ++j) acc += col.cum(i, j) * integrand[base + static_cast<std::size_t>(j)];
        term[base + static_cast<std::size_t>(i)] = carried + 0.5 * width * acc;
      }
      Matrix panel_total = Matrix::Zero(d, d);
      for (int j = 0; j < kNodes; ++j)
        panel_total += col.w[static_cast<std::size_t>(j)] * integrand[base + static_cast<std::size_t>(j)];
      carried += 0.5 * width * panel_total;
    }
    result += carried;
  }
  return result;
}

double generator_bound(const LinearModel& model, double s, double t, int samples) {
  const double lo = std::min(s, t), hi = std::max(s, t);
  double bound = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double u = samples == 1 ? lo : lo + (hi - lo) * i / (samples - 1);
    const Matrix q = model.Q()(u);
    bound = std::max(bound, q.operatorNorm());
  }
  return bound;
}

}  // namespace linbridge
