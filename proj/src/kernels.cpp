#include "linbridge/kernels.hpp"

#include "linbridge/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace linbridge {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

double scaled_residual(const Matrix& lhs, const Matrix& rhs) {
  const double denom = std::max({1.0, lhs.norm(), rhs.norm()});
  return (lhs - rhs).norm() / denom;
}

Matrix spd_inverse(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

}  // namespace

BridgeKernel::BridgeKernel(LinearModel model, double T, Vector a, Vector b, KernelOptions options)
    : model_(std::move(model)),
      T_(T),
      a_(std::move(a)),
      b_(std::move(b)),
      options_(options),
      breaks_(breakpoints(model_)),
      eps_(options.eps_factor * T),
      evo_(model_, T > 0.0 ? T : 1.0, options.evolution) {
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("bridge horizon T must be positive and finite");
  if (a_.size() != model_.dim() || b_.size() != model_.dim())
    throw ConfigError("bridge endpoints must have length " + std::to_string(model_.dim()));
  if (!(options_.eps_factor >= 0.0 && options_.eps_factor < 0.5)) throw ConfigError("eps_factor must lie in [0, 0.5)");
  evo_.freeze();
  probe_kappa();
}

double BridgeKernel::scale(Perturbation::Target target) const noexcept {
  return options_.perturbation.target == target ? options_.perturbation.factor : 1.0;
}

void BridgeKernel::probe_kappa() const {
  const int n = std::max(1, options_.probe_points);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j <= n; ++j) {
      const double s = T_ * i / n, t = T_ * j / n;
      const Matrix K = kappa(s, t);
      Eigen::LLT<Matrix> llt(K);
      const bool ok = llt.info() == Eigen::Success && K.diagonal().minCoeff() > 0.0 &&
                      llt.matrixLLT().diagonal().minCoeff() > 1e-14 * std::sqrt(std::max(K.norm(), 1e-300));
      if (!ok) {
        std::ostringstream os;
        os << "kappa(" << s << ", " << t << ") is not positive definite; the model cannot be bridged";
        throw NotPositiveDefinite(os.str());
      }
    }
  }
}

void BridgeKernel::check_pair(double s, double t, const char* what) const {
  if (!(s >= 0.0) || !(t >= s)) {
    std::ostringstream os;
    os << what << ": requires 0 <= s <= t, got s=" << s << ", t=" << t;
    throw ConfigError(os.str());
  }
}

void BridgeKernel::check_horizon(double t, const char* what) const {
  if (t > T_ - eps_) {
    std::ostringstream os;
    os << what << ": time " << t << " lies within eps=" << eps_ << " of the horizon T=" << T_;
    throw DomainError(os.str());
  }
}

Matrix BridgeKernel::evolve(double to, double from) const {
  return scale(Perturbation::Target::evolution) * evo_.evolve(to, from);
}

Matrix BridgeKernel::noise_gramian(double s, double t) const {
  const auto d = model_.dim();
  if (s == t || model_.S().is_identically_zero()) return Matrix::Zero(d, d);
  Matrix Sm(d, model_.noise_dim());
  auto f = [&](double u) -> Matrix {
    model_.S().eval_into(u, Sm);
    const Matrix ps = evo_.phi_inv(u) * Sm;
    return ps * ps.transpose();
  };
  return integrate(f, s, t, breaks_, options_.quad);
}

Vector BridgeKernel::drift_integral(double s, double t) const {
  const auto d = model_.dim();
  if (s == t || model_.r().is_identically_zero()) return Vector::Zero(d);
  Matrix rm(d, 1);
  auto f = [&](double u) -> Matrix {
    model_.r().eval_into(u, rm);
    return evo_.phi_inv(u) * rm;
  };
  return integrate(f, s, t, breaks_, options_.quad).col(0);
}

Matrix BridgeKernel::kappa(double s, double t) const {
  check_pair(s, t, "kappa");
  const Matrix phi = evo_.phi(t);
  return scale(Perturbation::Target::kappa) * symmetrize(phi * noise_gramian(s, t) * phi.transpose());
}

Matrix BridgeKernel::gamma(double s, double t) const {
  check_pair(s, t, "gamma");
  if (s == t) return Matrix::Zero(dim(), dim());
  return scale(Perturbation::Target::gamma) * (evolve(s, t) * kappa(s, t));
}

Matrix BridgeKernel::gamma_integral(double s, double t) const {
  check_pair(s, t, "gamma");
  const auto d = model_.dim();
  if (s == t) return Matrix::Zero(d, d);
  Matrix Sm(d, model_.noise_dim());
  auto f = [&](double u) -> Matrix {
    model_.S().eval_into(u, Sm);
    return (evo_.evolve(s, u) * Sm) * (evo_.evolve(t, u) * Sm).transpose();
  };
  return integrate(f, s, t, breaks_, options_.quad);
}

Eigen::PartialPivLU<Matrix> BridgeKernel::gamma_to_horizon_lu(double s) const {
  check_horizon(s, "gamma(s, T) inversion");
  Eigen::PartialPivLU<Matrix> lu(gamma(s, T_));
  const double rc = lu.rcond();
  if (!std::isfinite(rc) || rc < 1e3 * std::numeric_limits<double>::epsilon()) {
    std::ostringstream os;
    os << "gamma(" << s << ", T) is numerically singular (rcond=" << rc << ")";
    throw SingularGamma(os.str());
  }
  if (1.0 / rc > options_.cond_warn) {
    std::ostringstream os;
    os << "gamma(" << s << ", T) is ill-conditioned (cond ~ " << 1.0 / rc << ")";
    warn(os.str());
  }
  return lu;
}

Matrix BridgeKernel::sigma_bridge(double s, double t) const {
  check_pair(s, t, "sigma_bridge");
  if (t == T_ || s == t) return Matrix::Zero(dim(), dim());
  check_horizon(t, "sigma_bridge");
  const auto lu = gamma_to_horizon_lu(s);
  const Matrix sig = gamma(t, T_) * lu.solve(gamma(s, t));
  return scale(Perturbation::Target::sigma) * symmetrize(sig);
}

Vector BridgeKernel::m_plus(const Vector& x, double s, double t) const {
  check_pair(s, t, "m_plus");
  return x + evo_.phi(s) * drift_integral(s, t);
}

Vector BridgeKernel::m_minus(const Vector& x, double s, double t) const {
  check_pair(s, t, "m_minus");
  return x - evo_.phi(t) * drift_integral(s, t);
}

Vector BridgeKernel::mean_forward(const Vector& x, double s, double t) const {
  check_pair(s, t, "mean_forward");
  return evolve(t, s) * x + evo_.phi(t) * drift_integral(s, t);
}

AffineTransition BridgeKernel::bridge_transition(double s, double t) const {
  check_pair(s, t, "bridge_transition");
  const auto d = dim();
  if (t == T_) return {Matrix::Zero(d, d), b_, Matrix::Zero(d, d)};
  if (s == t) return {Matrix::Identity(d, d), Vector::Zero(d), Matrix::Zero(d, d)};
  check_horizon(t, "bridge_transition");
  const auto lu = gamma_to_horizon_lu(s);
  const Matrix g_st = gamma(s, t);
  const Matrix A = gamma(t, T_) * lu.inverse();
  const Vector shift = evo_.phi(s) * drift_integral(s, t);  // m_plus_x - x
  const Vector c = A * shift + g_st.transpose() * lu.inverse().transpose() * m_minus(b_, t, T_);
  Matrix cov = scale(Perturbation::Target::sigma) * symmetrize(A * g_st);
  return {A, c, std::move(cov)};
}

AffineTransition BridgeKernel::forward_transition(double s, double t) const {
  check_pair(s, t, "forward_transition");
  const auto d = dim();
  if (s == t) return {Matrix::Identity(d, d), Vector::Zero(d), Matrix::Zero(d, d)};
  return {evolve(t, s), evo_.phi(t) * drift_integral(s, t), kappa(s, t)};
}

Vector BridgeKernel::bridge_mean(const Vector& x, double s, double t) const {
  check_pair(s, t, "bridge_mean");
  if (t == T_) return b_;
  if (s == t) return x;
  check_horizon(t, "bridge_mean");
  const auto lu = gamma_to_horizon_lu(s);
  return gamma(t, T_) * lu.solve(m_plus(x, s, t)) + gamma(s, t).transpose() * lu.inverse().transpose() * m_minus(b_, t, T_);
}

// ---------------------------------------------------------------------------

std::map<std::string, double> identity_residuals(const BridgeKernel& k, double s, double t) {
  const double T = k.T();
  if (!(0.0 <= s && s < t && t < T)) throw ConfigError("identity_residuals requires 0 <= s < t < T");
  const auto d = k.dim();
  const auto& model = k.model();
  std::map<std::string, double> out;

  const Matrix E_Tt = k.evolve(T, t);
  const Matrix g_sT = k.gamma(s, T);
  const Matrix g_tT = k.gamma(t, T);
  const Matrix g_st = k.gamma(s, t);
  const Matrix g_0T = k.gamma(0.0, T);
  const Matrix g_0t = k.gamma(0.0, t);
  const Matrix g_0s = k.gamma(0.0, s);
  const Matrix g_sT_inv = g_sT.inverse();
  const Matrix g_tT_inv = g_tT.inverse();
  const Matrix g_0T_inv = g_0T.inverse();
  const Matrix sigma = k.sigma_bridge(s, t);
  const Matrix kap_st = k.kappa(s, t);
  const Matrix kap_tT = k.kappa(t, T);
  const Matrix kap_sT = k.kappa(s, T);

  out["I1"] = scaled_residual(spd_inverse(sigma, "sigma(s,t)"),
                              spd_inverse(kap_st, "kappa(s,t)") +
                                  E_Tt.transpose() * spd_inverse(kap_tT, "kappa(t,T)") * E_Tt);

  out["I2a"] = scaled_residual(spd_inverse(kap_tT, "kappa(t,T)") - spd_inverse(kap_sT, "kappa(s,T)"),
                               g_sT_inv * g_st * g_tT_inv.transpose());

  {
    // Each evaluation carries the error of the inner Gamma(u,T) quadrature,
    // amplified by the inverse; a fixed composite rule averages that noise
    // where an adaptive one would chase it.
    Matrix Sm(d, model.noise_dim());
    auto f = [&](double u) -> Matrix {
      model.S().eval_into(u, Sm);
      const Matrix gi = k.gamma(u, T).inverse() * Sm;
      return gi * gi.transpose();
    };
    std::vector<double> cuts{s};
    for (double x : k.breaks())
      if (x > s && x < t) cuts.push_back(x);
    cuts.push_back(t);
    Matrix inner = Matrix::Zero(d, d);
    constexpr int kPanels = 16;
    for (std::size_t c = 1; c < cuts.size(); ++c) {
      const double w = (cuts[c] - cuts[c - 1]) / kPanels;
      for (int j = 0; j < kPanels; ++j) inner += detail::gl_panel(f, cuts[c - 1] + j * w, cuts[c - 1] + (j + 1) * w);
    }
    out["I2b"] = scaled_residual(sigma, g_tT * inner * g_tT.transpose());
  }

  out["I2c"] = scaled_residual(k.evolve(t, 0.0) - g_0t.transpose() * g_0T_inv.transpose() * k.evolve(T, 0.0),
                               g_tT * g_0T_inv);

  out["I2d"] = scaled_residual(g_sT.transpose() * k.evolve(t, s).transpose() - k.evolve(T, s) * g_st,
                               g_tT.transpose());

  {
    Matrix Sm(d, model.noise_dim());
    auto f = [&](double u) -> Matrix {
      model.S().eval_into(u, Sm);
      const Matrix es = k.evolve(0.0, u) * Sm;
      return es * es.transpose();
    };
    const Matrix M = integrate(f, t, T, k.breaks(), k.options().quad);
    const Matrix E0T = k.evolve(0.0, T);
    out["I3"] = scaled_residual(M, E0T * kap_tT * E0T.transpose());
  }

  {
    const double u = t;
    out["I4"] = scaled_residual(
        g_sT * g_0T_inv * k.evolve(0.0, u) + g_0s.transpose() * g_0T_inv.transpose() * k.evolve(T, u),
        k.evolve(s, u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Controllability

namespace {

using Poly = std::vector<Matrix>;

Poly poly_of(const CoefficientFn& f) { return f.coeffs(); }

Poly poly_derivative(const Poly& p) {
  if (p.size() <= 1) return {Matrix::Zero(p.front().rows(), p.front().cols())};
  Poly out;
  for (std::size_t k = 1; k < p.size(); ++k) out.push_back(static_cast<double>(k) * p[k]);
  return out;
}

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, Matrix::Zero(a.front().rows(), b.front().cols()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly poly_sub(Poly a, const Poly& b) {
  if (b.size() > a.size()) a.resize(b.size(), Matrix::Zero(b.front().rows(), b.front().cols()));
  for (std::size_t i = 0; i < b.size(); ++i) a[i] -= b[i];
  return a;
}

Matrix poly_eval(const Poly& p, double t) {
  Matrix acc = p.back();
  for (std::size_t k = p.size() - 1; k-- > 0;) acc = acc * t + p[k];
  return acc;
}

int numerical_rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double tol = std::max(rel_tol * sv(0), 1e-300);
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++r;
  return r;
}

}  // namespace

ControllabilityReport controllability_check(const LinearModel& model, double t0, int k_max) {
  if (!(t0 >= 0.0)) throw ConfigError("controllability: t0 must be >= 0");
  if (k_max < 0) throw ConfigError("controllability: k_max must be >= 0");
  const auto d = model.dim();
  const auto p = model.noise_dim();
  ControllabilityReport rep;
  rep.finite_differences = !model.Q().is_smooth() || !model.S().is_smooth();
  const double rank_tol = rep.finite_differences ? 1e-7 : 1e-10;

  std::function<Matrix(int)> block;
  if (!rep.finite_differences) {
    const Poly q = poly_of(model.Q());
    std::vector<Poly> terms{poly_of(model.S())};
    block = [q, terms, t0](int k) mutable -> Matrix {
      while (static_cast<int>(terms.size()) <= k)
        terms.push_back(poly_sub(poly_derivative(terms.back()), poly_mul(q, terms.back())));
      return poly_eval(terms[static_cast<std::size_t>(k)], t0);
    };
  } else {
    // Knot range over all table coefficients involved.
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    double spacing = std::numeric_limits<double>::infinity();
    for (const auto* f : {&model.Q(), &model.S()}) {
      if (f->kind() != CoeffKind::table) continue;
      const auto& kn = f->knots();
      lo = std::max(lo, kn.front());
      hi = std::min(hi, kn.back());
      for (std::size_t i = 1; i < kn.size(); ++i) spacing = std::min(spacing, kn[i] - kn[i - 1]);
    }
    const double h = std::min(1e-3, 0.25 * spacing);
    block = [&model, t0, h, lo, hi](int k) -> Matrix {
      if (t0 - k * h < lo || t0 + k * h > hi) {
        std::ostringstream os;
        os << "controllability: finite-difference stencil of order " << k << " around t0=" << t0
           << " leaves the knot range [" << lo << ", " << hi << "]";
        throw DifferentiationError(os.str());
      }
      std::function<Matrix(int, double)> D = [&](int j, double t) -> Matrix {
        if (j == 0) return model.S()(t);
        return (D(j - 1, t + h) - D(j - 1, t - h)) / (2.0 * h) - model.Q()(t) * D(j - 1, t);
      };
      return D(k, t0);
    };
  }

  Matrix ctrl(d, 0);
  for (int k = 0; k <= k_max; ++k) {
    const Matrix blk = block(k);
    Matrix next(d, ctrl.cols() + p);
    next << ctrl, blk;
    ctrl = std::move(next);
    rep.rank = numerical_rank(ctrl, rank_tol);
    rep.k_used = k;
    if (k == 0) rep.condition_a = rep.rank == d;
    if (rep.rank == d) break;
  }
  rep.satisfied = rep.rank == d;
  rep.condition = rep.condition_a ? "a" : (rep.satisfied ? "b" : "none");
  return rep;
}

}  // namespace linbridge
