#include "linbridge/onedim.hpp"

#include "linbridge/errors.hpp"

#include <algorithm>
#include <cmath>

namespace linbridge {

namespace {

void require_scalar(const CoefficientFn& f, const char* name) {
  if (f.rows() != 1 || f.cols() != 1) throw ConfigError(std::string("onedim: ") + name + " must be 1x1");
}

bool is_constant(const CoefficientFn& f) {
  if (f.kind() == CoeffKind::table) {
    const auto& v = f.values();
    return std::all_of(v.begin(), v.end(), [&](const Matrix& m) { return m(0, 0) == v.front()(0, 0); });
  }
  const auto& c = f.coeffs();
  for (std::size_t k = 1; k < c.size(); ++k)
    if (c[k](0, 0) != 0.0) return false;
  return true;
}

void check_times(double s, double t, double T) {
  if (!(0.0 <= s && s <= t && t <= T)) throw ConfigError("onedim: need 0 <= s <= t <= T");
}

}  // namespace

ScalarModel::ScalarModel(CoefficientFn q, CoefficientFn r, CoefficientFn sigma, double probe_horizon, QuadOptions quad)
    : q_(std::move(q)), r_(std::move(r)), sigma_(std::move(sigma)), quad_(quad) {
  require_scalar(q_, "q");
  require_scalar(r_, "r");
  require_scalar(sigma_, "sigma");
  breaks_ = breakpoints(LinearModel(q_, r_, sigma_));
  if (q_.kind() == CoeffKind::table) {
    const auto& k = q_.knots();
    const auto& v = q_.values();
    qbar_knots_.assign(k.size(), 0.0);
    for (std::size_t i = 1; i < k.size(); ++i)
      qbar_knots_[i] = qbar_knots_[i - 1] + 0.5 * (k[i] - k[i - 1]) * (v[i](0, 0) + v[i - 1](0, 0));
  }
  std::vector<double> probes;
  constexpr int n = 256;
  for (int i = 0; i <= n; ++i) probes.push_back(probe_horizon * i / n);
  for (double k : sigma_.knots())
    if (k >= 0.0) probes.push_back(k);
  for (double t : probes)
    if (this->sigma(t) == 0.0) throw DomainError("onedim: sigma vanishes at t = " + std::to_string(t));
}

ScalarModel ScalarModel::from_linear(const LinearModel& m, double probe_horizon, QuadOptions quad) {
  if (m.dim() != 1 || m.noise_dim() != 1) throw ConfigError("onedim requires a model with d = p = 1");
  return ScalarModel(m.Q(), m.r(), m.S(), probe_horizon, quad);
}

LinearModel ScalarModel::to_linear() const { return LinearModel(q_, r_, sigma_); }

double ScalarModel::qbar(double t) const {
  if (q_.kind() != CoeffKind::table) {
    double acc = 0.0;
    const auto& c = q_.coeffs();
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * t + c[k](0, 0) / static_cast<double>(k + 1);
    return acc * t;
  }
  // F(t) = int_{k0}^t q, linear outside the knot range
  const auto& k = q_.knots();
  const auto& v = q_.values();
  auto F = [&](double x) {
    if (x <= k.front()) return v.front()(0, 0) * (x - k.front());
    if (x >= k.back()) return qbar_knots_.back() + v.back()(0, 0) * (x - k.back());
    const auto i = static_cast<std::size_t>(std::upper_bound(k.begin(), k.end(), x) - k.begin()) - 1;
    return qbar_knots_[i] + 0.5 * (x - k[i]) * (v[i](0, 0) + q(x));
  };
  return F(t) - F(0.0);
}

double gamma_1d(const ScalarModel& m, double s, double t) {
  if (t == s) return 0.0;
  const double qt = m.qbar(t);
  return integrate(
      [&](double u) {
        const double sg = m.sigma(u);
        return std::exp(2.0 * (qt - m.qbar(u))) * sg * sg;
      },
      s, t, m.breaks(), m.quad());
}

double mean_1d(const ScalarModel& m, double x, double s, double t) {
  const double qt = m.qbar(t);
  double out = std::exp(qt - m.qbar(s)) * x;
  if (m.has_drift() && t != s)
    out += integrate([&](double u) { return std::exp(qt - m.qbar(u)) * m.r(u); }, s, t, m.breaks(), m.quad());
  return out;
}

namespace {

// int_t^T exp(qbar(T) - qbar(u)) r(u) du
double drift_to_horizon(const ScalarModel& m, double t, double T) {
  if (!m.has_drift() || t == T) return 0.0;
  const double qT = m.qbar(T);
  return integrate([&](double u) { return std::exp(qT - m.qbar(u)) * m.r(u); }, t, T, m.breaks(), m.quad());
}

}  // namespace

double n_ab_1d(const ScalarModel& m, double a, double b, double s, double t, double T) {
  check_times(s, t, T);
  if (s == T) throw DomainError("n_ab_1d: s must be < T");
  if (t == s) return a;
  if (t == T) return b;
  const double gst = gamma_1d(m, s, t), gtT = gamma_1d(m, t, T), gsT = gamma_1d(m, s, T);
  const double target = std::exp(m.qbar(T) - m.qbar(t)) * (b - drift_to_horizon(m, t, T));
  return gst / gsT * target + gtT / gsT * mean_1d(m, a, s, t);
}

double sigma_1d(const ScalarModel& m, double s, double t, double T) {
  check_times(s, t, T);
  if (s == T) throw DomainError("sigma_1d: s must be < T");
  return gamma_1d(m, s, t) * gamma_1d(m, t, T) / gamma_1d(m, s, T);
}

double integral_kernel_1d(const ScalarModel& m, double s, double t, double T) {
  check_times(s, t, T);
  if (s == T) throw DomainError("integral_kernel_1d: s must be < T");
  return gamma_1d(m, t, T) / gamma_1d(m, s, T) * std::exp(m.qbar(t) - m.qbar(s)) * m.sigma(s);
}

ScalarDrift sde_drift_1d(const ScalarModel& m, double b, double t, double T) {
  if (!(0.0 <= t && t < T)) throw DomainError("sde_drift_1d requires 0 <= t < T");
  const double gtT = gamma_1d(m, t, T);
  const double e = std::exp(m.qbar(T) - m.qbar(t));
  const double sg2 = m.sigma(t) * m.sigma(t);
  return {m.q(t) - e * e * sg2 / gtT, m.r(t) + e / gtT * (b - drift_to_horizon(m, t, T)) * sg2};
}

ScalarBridgeBundle ou_bridge(double q, double sigma, double a, double b, double T) {
  if (q == 0.0) throw DomainError("ou_bridge: q = 0, use wiener_bridge");
  if (sigma == 0.0) throw DomainError("ou_bridge: sigma = 0");
  if (!(T > 0.0)) throw ConfigError("ou_bridge: T must be positive");
  return {q, sigma, a, b, T, false};
}

ScalarBridgeBundle wiener_bridge(double sigma, double a, double b, double T) {
  if (sigma == 0.0) throw DomainError("wiener_bridge: sigma = 0");
  if (!(T > 0.0)) throw ConfigError("wiener_bridge: T must be positive");
  return {0.0, sigma, a, b, T, true};
}

double ScalarBridgeBundle::mean(double t) const {
  if (wiener) return a * (T - t) / T + b * t / T;
  const double sT = std::sinh(q * T);
  return a * std::sinh(q * (T - t)) / sT + b * std::sinh(q * t) / sT;
}

double ScalarBridgeBundle::var(double s, double t) const {
  if (wiener) return sigma * sigma * (t - s) * (T - t) / (T - s);
  return sigma * sigma / q * std::sinh(q * (T - t)) * std::sinh(q * (t - s)) / std::sinh(q * (T - s));
}

double ScalarBridgeBundle::sde_drift(double t, double u) const {
  if (t >= T) throw DomainError("bridge drift is singular at T");
  if (wiener) return (b - u) / (T - t);
  const double x = q * (T - t);
  return q * (-std::cosh(x) / std::sinh(x) * u + b / std::sinh(x));
}

double ScalarBridgeBundle::integral_coeff(double s, double t) const {
  if (wiener) return sigma * (T - t) / (T - s);
  return sigma * std::sinh(q * (T - t)) / std::sinh(q * (T - s));
}

double lamperti_time_change(const ScalarModel& m, double t) {
  if (t < 0.0) throw ConfigError("lamperti_time_change requires t >= 0");
  if (t == 0.0) return 0.0;
  return integrate(
      [&](double u) {
        const double sg = m.sigma(u);
        return std::exp(-2.0 * m.qbar(u)) * sg * sg;
      },
      0.0, t, m.breaks(), m.quad());
}

std::vector<double> lamperti_transform(const ScalarModel& m, const std::vector<double>& times,
                                       const std::vector<double>& wiener_at_tau) {
  if (times.size() != wiener_at_tau.size()) throw GridMismatch("lamperti_transform: sizes differ");
  std::vector<double> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    out[i] = mean_1d(m, 0.0, 0.0, times[i]) + std::exp(m.qbar(times[i])) * wiener_at_tau[i];
  return out;
}

PathEnsemble sample_lamperti(const ScalarModel& m, const std::vector<double>& grid, Eigen::Index n_paths,
                             std::uint64_t seed, const SamplerOptions& opt) {
  if (grid.empty()) throw ConfigError("sample_lamperti: empty grid");
  if (n_paths < 0) throw ConfigError("number of paths must be non-negative");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0) throw ConfigError("sample_lamperti: negative time");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("sample_lamperti: grid must be strictly increasing");
  }
  std::vector<double> tau(grid.size()), shift(grid.size()), scale(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    tau[i] = lamperti_time_change(m, grid[i]);
    shift[i] = mean_1d(m, 0.0, 0.0, grid[i]);
    scale[i] = std::exp(m.qbar(grid[i]));
  }
  PathEnsemble e;
  e.grid = grid;
  e.n_paths = n_paths;
  e.dim = 1;
  e.method = SampleMethod::lamperti;
  e.seed = seed;
  e.states.assign(static_cast<std::size_t>(n_paths) * grid.size(), 0.0);
  for_each_path(n_paths, opt, [&](Eigen::Index p) {
    NormalStream rng(e.stream_id(p));
    double w = 0.0, prev = 0.0;
    double* out = e.states.data() + static_cast<std::size_t>(p) * grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      w += std::sqrt(std::max(tau[i] - prev, 0.0)) * rng();
      prev = tau[i];
      out[i] = shift[i] + scale[i] * w;
    }
  });
  return e;
}

Anticipative1dForms anticipative_1d_coeffs(const ScalarModel& m, double T, double t) {
  check_times(0.0, t, T);
  if (!(T > 0.0)) throw ConfigError("anticipative_1d_coeffs: T must be positive");
  const double qt = m.qbar(t), qT = m.qbar(T);
  const double g0t = gamma_1d(m, 0.0, t), g0T = gamma_1d(m, 0.0, T), gtT = gamma_1d(m, t, T);
  auto make = [](double ca, double cb) { return AnticipativeCoeffs1d{ca, cb, 1.0, -cb}; };

  Anticipative1dForms f{};
  auto Rtilde = [&](double s, double u, double g) { return g * std::exp(m.qbar(s) - m.qbar(u)); };
  const double Rt0T = Rtilde(0.0, T, g0T);
  f.rtilde = make(Rtilde(t, T, gtT) / Rt0T, Rtilde(0.0, t, g0t) / Rt0T);

  f.gamma_form = make(std::exp(qt) - std::exp(2.0 * qT - qt) * g0t / g0T, std::exp(qT - qt) * g0t / g0T);

  // R(s,u) = Cov(Z_s, Z_u) = exp(qbar(u) - qbar(s)) R(s,s) for s <= u, R(s,s) = gamma(0,s)
  const double RtT = std::exp(qT - qt) * g0t, RTT = g0T;
  f.covariance_form = make(std::exp(qt) - std::exp(qT) * RtT / RTT, RtT / RTT);

  std::vector<AnticipativeCoeffs1d> all{f.rtilde, f.gamma_form, f.covariance_form};
  const LinearModel lin = m.to_linear();
  if (is_constant(lin.Q()) && is_constant(lin.S()) && m.q(0.0) != 0.0) {
    const double q = m.q(0.0), sT = std::sinh(q * T);
    f.sinh_form = make(std::sinh(q * (T - t)) / sT, std::sinh(q * t) / sT);
    all.push_back(*f.sinh_form);
  }
  f.max_discrepancy = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j)
      f.max_discrepancy = std::max({f.max_discrepancy, std::abs(all[i].coef_a - all[j].coef_a),
                                    std::abs(all[i].coef_b - all[j].coef_b), std::abs(all[i].coef_Zt - all[j].coef_Zt),
                                    std::abs(all[i].coef_ZT - all[j].coef_ZT)});
  return f;
}

double martingale_integral_kernel(const ScalarModel& m, double s, double t, double T) {
  check_times(s, t, T);
  if (s == T) throw DomainError("martingale_integral_kernel: s must be < T");
  return gamma_1d(m, t, T) / gamma_1d(m, s, T) * std::exp(-m.qbar(s)) * m.sigma(s);
}

MartingaleForms martingale_bridge_forms(const ScalarModel& m, double T, double t) {
  if (m.has_drift()) throw DomainError("martingale forms need r = 0");
  check_times(0.0, t, T);
  const double qt = m.qbar(t), qT = m.qbar(T);
  const double g0t = gamma_1d(m, 0.0, t), g0T = gamma_1d(m, 0.0, T), gtT = gamma_1d(m, t, T);
  const double ratio = g0t / g0T;

  MartingaleForms f{};
  f.qv = lamperti_time_change(m, t);
  f.anticipative.coef_a = 1.0 - std::exp(2.0 * (qT - qt)) * ratio;
  f.anticipative.coef_b = std::exp(qT - 2.0 * qt) * ratio;
  f.anticipative.coef_Zt = std::exp(-qt);
  f.anticipative.coef_ZT = -std::exp(qT - 2.0 * qt) * ratio;
  f.integral_a = f.anticipative.coef_a;
  f.integral_b = f.anticipative.coef_b;

  // bridge coefficients of Z computed independently through gamma(t,T)
  const double et = std::exp(qt);
  const double bridge_a = et * gtT / g0T;
  const double bridge_b = std::exp(qT - qt) * ratio;
  double res = std::max({std::abs(et * f.anticipative.coef_a - bridge_a), std::abs(et * f.anticipative.coef_b - bridge_b),
                         std::abs(et * f.anticipative.coef_Zt - 1.0), std::abs(et * f.anticipative.coef_ZT + bridge_b),
                         std::abs(et * f.integral_a - bridge_a), std::abs(et * f.integral_b - bridge_b)});
  if (t < T) {
    for (int j = 0; j <= 4; ++j) {
      const double s = t * j / 4.0;
      res = std::max(res, std::abs(et * martingale_integral_kernel(m, s, t, T) - integral_kernel_1d(m, s, t, T)));
    }
  }
  f.scaling_residual = res;
  return f;
}

}  // namespace linbridge
