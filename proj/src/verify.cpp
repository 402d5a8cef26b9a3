#include "linbridge/verify.hpp"

#include "linbridge/errors.hpp"
#include "linbridge/onedim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

namespace linbridge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t=%.6g", t);
  return buf;
}

double zscore(double diff, double se) {
  if (diff == 0.0) return 0.0;
  return se > 0.0 ? std::abs(diff) / se : kInf;
}

double scaled(const Matrix& lhs, const Matrix& rhs) {
  const double s = std::max({1.0, lhs.norm(), rhs.norm()});
  return (lhs - rhs).norm() / s;
}

double rel(double x, double y, double scale = 0.0) {
  return std::abs(x - y) / std::max({std::abs(y), scale, std::numeric_limits<double>::min()});
}

}  // namespace

MomentSummary estimate_moments(const PathEnsemble& e) {
  if (e.n_paths < 2) throw ConfigError("estimate_moments needs at least 2 paths");
  MomentSummary ms;
  ms.grid = e.grid;
  ms.n_paths = e.n_paths;
  ms.dim = e.dim;
  const auto d = e.dim;
  const double n = static_cast<double>(e.n_paths);
  for (Eigen::Index i = 0; i < e.n_times(); ++i) {
    Vector m = Vector::Zero(d);
    for (Eigen::Index p = 0; p < e.n_paths; ++p) m += e.state(p, i);
    m /= n;
    Matrix c = Matrix::Zero(d, d);
    for (Eigen::Index p = 0; p < e.n_paths; ++p) {
      const Vector x = e.state(p, i) - m;
      c.noalias() += x * x.transpose();
    }
    c /= n - 1.0;
    c = 0.5 * (c + c.transpose());
    Matrix cse(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index l = 0; l < d; ++l) cse(j, l) = std::sqrt((c(j, j) * c(l, l) + c(j, l) * c(j, l)) / n);
    ms.mean_se.push_back((c.diagonal() / n).cwiseSqrt());
    ms.cov_se.push_back(std::move(cse));
    ms.mean.push_back(std::move(m));
    ms.cov.push_back(std::move(c));
  }
  return ms;
}

void VerifyReport::add(std::string name, double statistic, double threshold, std::string detail, bool statistical) {
  Check c;
  c.name = std::move(name);
  c.statistic = statistic;
  c.threshold = threshold;
  c.pass = statistic <= threshold;
  c.statistical = statistical;
  c.detail = std::move(detail);
  checks.push_back(std::move(c));
}

void VerifyReport::add_failure(std::string name, std::string detail) {
  Check c;
  c.name = std::move(name);
  c.statistic = std::numeric_limits<double>::quiet_NaN();
  c.threshold = 0.0;
  c.pass = false;
  c.detail = std::move(detail);
  checks.push_back(std::move(c));
}

void VerifyReport::merge(const VerifyReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
  warnings.insert(warnings.end(), other.warnings.begin(), other.warnings.end());
}

void VerifyReport::finalize() {
  std::stable_sort(checks.begin(), checks.end(), [](const Check& x, const Check& y) { return x.name < y.name; });
  pass = std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string VerifyReport::to_json() const {
  nlohmann::json j;
  j["suite"] = suite;
  j["pass"] = pass;
  j["model_hash"] = model_hash;
  j["seed"] = seed;
  j["retries"] = retries;
  j["warnings"] = warnings;
  auto arr = nlohmann::json::array();
  for (const auto& c : checks) {
    nlohmann::json x;
    x["name"] = c.name;
    if (std::isfinite(c.statistic)) {
      x["statistic"] = c.statistic;
    } else {
      x["statistic"] = nullptr;
    }
    x["threshold"] = c.threshold;
    x["pass"] = c.pass;
    x["statistical"] = c.statistical;
    if (!c.detail.empty()) x["detail"] = c.detail;
    arr.push_back(std::move(x));
  }
  j["checks"] = std::move(arr);
  return j.dump(2) + "\n";
}

VerifyReport compare_to_law(const MomentSummary& ms, const std::vector<GaussLaw>& law, double k_sigma,
                            const std::string& prefix) {
  if (law.size() != ms.grid.size()) throw GridMismatch("compare_to_law: grid and law sizes differ");
  VerifyReport r;
  for (std::size_t i = 0; i < law.size(); ++i) {
    if (law[i].dim() != ms.dim) throw GridMismatch("compare_to_law: dimension mismatch");
    double zm = 0.0, zc = 0.0;
    for (Eigen::Index j = 0; j < ms.dim; ++j) {
      zm = std::max(zm, zscore(ms.mean[i](j) - law[i].mean()(j), ms.mean_se[i](j)));
      for (Eigen::Index l = 0; l < ms.dim; ++l)
        zc = std::max(zc, zscore(ms.cov[i](j, l) - law[i].cov()(j, l), ms.cov_se[i](j, l)));
    }
    const std::string base = prefix + fmt_time(ms.grid[i]);
    r.add(base + "/mean_z", zm, k_sigma, {}, true);
    r.add(base + "/cov_z", zc, k_sigma, {}, true);
  }
  return r;
}

VerifyReport compare_moments(const MomentSummary& x, const MomentSummary& y, double k_sigma,
                             const std::string& prefix) {
  if (x.grid.size() != y.grid.size() || x.dim != y.dim) throw GridMismatch("compare_moments: shapes differ");
  VerifyReport r;
  for (std::size_t i = 0; i < x.grid.size(); ++i) {
    if (std::abs(x.grid[i] - y.grid[i]) > 1e-12 * std::max(1.0, std::abs(x.grid[i])))
      throw GridMismatch("compare_moments: grids differ");
    double zm = 0.0, zc = 0.0;
    for (Eigen::Index j = 0; j < x.dim; ++j) {
      zm = std::max(zm, zscore(x.mean[i](j) - y.mean[i](j), std::hypot(x.mean_se[i](j), y.mean_se[i](j))));
      for (Eigen::Index l = 0; l < x.dim; ++l)
        zc = std::max(zc, zscore(x.cov[i](j, l) - y.cov[i](j, l), std::hypot(x.cov_se[i](j, l), y.cov_se[i](j, l))));
    }
    const std::string base = prefix + fmt_time(x.grid[i]);
    r.add(base + "/mean_z", zm, k_sigma, {}, true);
    r.add(base + "/cov_z", zc, k_sigma, {}, true);
  }
  return r;
}

std::map<std::string, double> evolution_residuals(const EvolutionOperator& op, double r, double s, double t,
                                                  double h) {
  const LinearModel& m = op.model();
  const auto d = m.dim();
  const Matrix Ets = op.evolve(t, s);
  std::map<std::string, double> out;
  out["cocycle"] = scaled(Ets * op.evolve(s, r), op.evolve(t, r));
  out["inverse"] = scaled(Ets * op.evolve(s, t), Matrix::Identity(d, d));
  const Matrix dt = (op.evolve(t + h, s) - op.evolve(t - h, s)) / (2 * h);
  const Matrix ds = (op.evolve(t, s + h) - op.evolve(t, s - h)) / (2 * h);
  out["d_dt"] = scaled(dt, m.Q()(t) * Ets);
  out["d_ds"] = scaled(ds, -Ets * m.Q()(s));
  return out;
}

std::vector<double> interior_times(double T) {
  std::vector<double> out;
  for (int k = 1; k < 16; k += 2) out.push_back(T * k / 16.0);
  return out;
}

namespace {

struct SuiteContext {
  const LinearModel& model;
  const VerifyConfig& cfg;
  Vector a, b;
  SamplerOptions sopt;
};

// Runs fn, turning a library error into a failed check named `group`/error.
void guarded(VerifyReport& r, const std::string& group, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    r.add_failure(group + "/error", e.what());
  }
}

std::vector<double> pair_times(double T) { return {0.0, 0.2 * T, 0.5 * T, 0.8 * T}; }

VerifyReport suite_identities(const SuiteContext& c) {
  VerifyReport r;
  guarded(r, "identities", [&] {
    BridgeKernel k(c.model, c.cfg.T, c.a, c.b, c.cfg.kernel);
    std::map<std::string, double> worst;
    const auto ts = pair_times(c.cfg.T);
    for (std::size_t i = 0; i < ts.size(); ++i)
      for (std::size_t j = i + 1; j < ts.size(); ++j)
        for (const auto& [name, v] : identity_residuals(k, ts[i], ts[j]))
          worst[name] = std::max(worst[name], std::isnan(v) ? kInf : v);
    for (const auto& [name, v] : worst) r.add("identities/" + name, v, c.cfg.tol);
  });
  return r;
}

VerifyReport suite_evolution(const SuiteContext& c) {
  VerifyReport r;
  guarded(r, "evolution", [&] {
    const double T = c.cfg.T;
    EvolutionOperator op(c.model, T, c.cfg.kernel.evolution);
    op.freeze();
    const double h = 1e-4 * T;
    const std::vector<double> pts{0.1 * T, 0.35 * T, 0.6 * T, 0.9 * T};
    std::map<std::string, double> worst;
    for (double x : pts)
      for (double y : pts)
        for (double z : pts)
          for (const auto& [name, v] : evolution_residuals(op, x, y, z, h))
            worst[name] = std::max(worst[name], std::isnan(v) ? kInf : v);
    for (const auto& [name, v] : worst) r.add("evolution/" + name, v, c.cfg.tol);
  });
  return r;
}

VerifyReport suite_conditioning(const SuiteContext& c) {
  VerifyReport r;
  guarded(r, "conditioning", [&] {
    BridgeKernel k(c.model, c.cfg.T, c.a, c.b, c.cfg.kernel);
    const auto times = interior_times(c.cfg.T);
    GaussLaw law = c.cfg.b_alt ? conditional_fdd(BridgeKernel(c.model, c.cfg.T, c.a, *c.cfg.b_alt, c.cfg.kernel), times)
                               : conditional_fdd(k, times);
    const auto d = k.dim();
    double em = 0.0, ec = 0.0, ex = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const auto I = static_cast<Eigen::Index>(i);
      em = std::max(em, scaled(law.mean().segment(I * d, d), k.bridge_mean(c.a, 0.0, times[i])));
      ec = std::max(ec, scaled(law.cov().block(I * d, I * d, d, d), k.sigma_bridge(0.0, times[i])));
      for (std::size_t j = i + 1; j < times.size(); ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        ex = std::max(ex, scaled(law.cov().block(I * d, J * d, d, d), bridge_covariance(k, times[i], times[j])));
      }
    }
    r.add("conditioning/mean", em, c.cfg.tol);
    r.add("conditioning/cov", ec, c.cfg.tol);
    r.add("conditioning/cross_cov", ex, c.cfg.tol);
    if (c.cfg.b_alt) r.warnings.push_back("conditional law built with the alternative endpoint b' (negative control)");
  });
  return r;
}

// Interior comparison times snapped to the Euler grid so that every method
// can be compared at identical times.
std::vector<double> sde_times(const BridgeKernel& k, int n_steps) {
  const auto g = sde_step_grid(k, n_steps, 0.0);
  std::vector<double> out;
  for (double t : interior_times(k.T())) {
    std::size_t best = 1;
    for (std::size_t j = 1; j + 1 < g.size(); ++j)
      if (std::abs(g[j] - t) < std::abs(g[best] - t)) best = j;
    if (out.empty() || g[best] > out.back()) out.push_back(g[best]);
  }
  return out;
}

MomentSummary interior_moments(const PathEnsemble& e) {
  auto ms = estimate_moments(e);
  // drop the pinned endpoints 0 and T
  auto strip = [](auto& v) { v = std::vector<typename std::decay_t<decltype(v)>::value_type>(v.begin() + 1, v.end() - 1); };
  strip(ms.grid);
  strip(ms.mean);
  strip(ms.cov);
  strip(ms.mean_se);
  strip(ms.cov_se);
  return ms;
}

VerifyReport suite_samplers(const SuiteContext& c, std::uint64_t seed) {
  VerifyReport r;
  guarded(r, "samplers", [&] {
    BridgeKernel k(c.model, c.cfg.T, c.a, c.b, c.cfg.kernel);
    const auto ts = sde_times(k, c.cfg.n_steps);
    std::vector<double> grid{0.0};
    grid.insert(grid.end(), ts.begin(), ts.end());
    grid.push_back(k.T());
    std::vector<GaussLaw> law;
    for (double t : ts) law.emplace_back(k.bridge_mean(c.a, 0.0, t), k.sigma_bridge(0.0, t));

    const auto n = c.cfg.n_paths;
    const double ks = c.cfg.k_sigma;
    const auto oracle = estimate_moments(sample_conditional_oracle(k, ts, n, stream_seed(seed, 4), c.sopt));
    const std::map<std::string, MomentSummary> methods{
        {"exact", interior_moments(sample_bridge_exact(k, grid, n, stream_seed(seed, 1), c.sopt))},
        {"sde", estimate_moments(sample_bridge_sde(k, c.cfg.n_steps, n, stream_seed(seed, 2), 0.0, ts, c.sopt))},
        {"anticipative", interior_moments(sample_bridge_anticipative(k, grid, n, stream_seed(seed, 3), c.sopt))},
    };
    r.merge(compare_to_law(oracle, law, ks, "samplers/oracle/"));
    for (const auto& [name, ms] : methods) {
      r.merge(compare_to_law(ms, law, ks, "samplers/" + name + "/"));
      r.merge(compare_moments(ms, oracle, ks, "samplers/" + name + "_vs_oracle/"));
    }
  });
  return r;
}

VerifyReport suite_onedim(const SuiteContext& c, std::uint64_t seed) {
  VerifyReport r;
  if (c.model.dim() != 1 || c.model.noise_dim() != 1) throw ConfigError("onedim suite needs a model with d = p = 1");
  const double T = c.cfg.T, tol = c.cfg.tol;
  const double a = c.a(0), b = c.b(0);
  const ScalarModel sm = ScalarModel::from_linear(c.model, T, c.cfg.kernel.quad);
  BridgeKernel k(c.model, T, c.a, c.b, c.cfg.kernel);
  const double scale = std::max(std::abs(a), std::abs(b));

  guarded(r, "onedim/general", [&] {
    double eg = 0, en = 0, es = 0, ed = 0;
    const auto ts = pair_times(T);
    for (std::size_t i = 0; i < ts.size(); ++i)
      for (std::size_t j = i + 1; j < ts.size(); ++j) {
        const double s = ts[i], t = ts[j];
        eg = std::max(eg, rel(gamma_1d(sm, s, t), k.kappa(s, t)(0, 0)));
        en = std::max(en, rel(n_ab_1d(sm, a, b, s, t, T), k.bridge_mean(c.a, s, t)(0), scale));
        es = std::max(es, rel(sigma_1d(sm, s, t, T), k.sigma_bridge(s, t)(0, 0)));
      }
    for (double t : ts) {
      const auto d1 = sde_drift_1d(sm, b, t, T);
      const auto dg = sde_drift_coefficients(k, t);
      ed = std::max({ed, rel(d1.slope, dg.B(0, 0)), rel(d1.intercept, dg.beta(0), 1.0)});
    }
    r.add("onedim/general/gamma", eg, tol);
    r.add("onedim/general/n_ab", en, tol);
    r.add("onedim/general/sigma", es, tol);
    r.add("onedim/general/sde_drift", ed, tol);
  });

  guarded(r, "onedim/anticipative", [&] {
    double forms = 0, general = 0;
    for (double t : {0.0, 0.25 * T, 0.5 * T, 0.75 * T, T}) {
      const auto f = anticipative_1d_coeffs(sm, T, t);
      const auto g = anticipative_coefficients(k, t);
      forms = std::max(forms, f.max_discrepancy);
      general = std::max({general, std::abs(f.rtilde.coef_a - g.coef_a(0, 0)), std::abs(f.rtilde.coef_b - g.coef_b(0, 0)),
                          std::abs(f.rtilde.coef_ZT - g.coef_ZT(0, 0))});
    }
    r.add("onedim/anticipative/forms", forms, 1e-10);
    r.add("onedim/anticipative/general", general, 1e-10);
  });

  if (!sm.has_drift()) {
    guarded(r, "onedim/martingale", [&] {
      double res = 0, qv = 0;
      for (double t : {0.0, 0.25 * T, 0.5 * T, 0.75 * T, T}) {
        const auto f = martingale_bridge_forms(sm, T, t);
        res = std::max(res, f.scaling_residual);
        qv = std::max(qv, std::abs(f.qv - lamperti_time_change(sm, t)));
      }
      r.add("onedim/martingale/scaling", res, 1e-10);
      r.add("onedim/martingale/qv", qv, 1e-14);
    });

    const auto& Q = c.model.Q();
    const auto& S = c.model.S();
    const bool constant = Q.kind() == CoeffKind::constant && S.kind() == CoeffKind::constant;
    if (constant) {
      guarded(r, "onedim/bundle", [&] {
        const double q = Q.coeffs()[0](0, 0), sg = S.coeffs()[0](0, 0);
        const auto B = q == 0.0 ? wiener_bridge(sg, a, b, T) : ou_bridge(q, sg, a, b, T);
        double e = 0, sign = 0;
        for (double t : {0.1 * T, 0.5 * T, 0.9 * T}) {
          const double s = 0.05 * T;
          e = std::max({e, rel(B.mean(t), n_ab_1d(sm, a, b, 0.0, t, T), scale), rel(B.var(s, t), sigma_1d(sm, s, t, T)),
                        rel(B.integral_coeff(s, t), integral_kernel_1d(sm, s, t, T))});
          const auto dr = sde_drift_1d(sm, b, t, T);
          e = std::max(e, rel(B.sde_drift(t, 0.5), dr.slope * 0.5 + dr.intercept, 1.0));
          if (q != 0.0) {
            const auto N = ou_bridge(-q, sg, a, b, T);
            sign = std::max({sign, std::abs(B.mean(t) - N.mean(t)), std::abs(B.var(s, t) - N.var(s, t)),
                             std::abs(B.sde_drift(t, 0.5) - N.sde_drift(t, 0.5)),
                             std::abs(B.integral_coeff(s, t) - N.integral_coeff(s, t))});
          }
        }
        r.add("onedim/bundle/closed_form", e, tol);
        if (q != 0.0) r.add("onedim/bundle/sign_invariance", sign, 1e-12);
      });
    }
  }

  guarded(r, "onedim/lamperti", [&] {
    std::vector<double> grid{0.0};
    for (double t : interior_times(T)) grid.push_back(t);
    const auto n = c.cfg.n_paths;
    const auto lam = estimate_moments(sample_lamperti(sm, grid, n, stream_seed(seed, 5), c.sopt));
    const auto z = estimate_moments(sample_z(k, Vector::Zero(1), grid, n, stream_seed(seed, 6), c.sopt));
    auto drop0 = [](MomentSummary ms) {
      ms.grid.erase(ms.grid.begin());
      ms.mean.erase(ms.mean.begin());
      ms.cov.erase(ms.cov.begin());
      ms.mean_se.erase(ms.mean_se.begin());
      ms.cov_se.erase(ms.cov_se.begin());
      return ms;
    };
    r.merge(compare_moments(drop0(lam), drop0(z), c.cfg.k_sigma, "onedim/lamperti_vs_z/"));
  });
  return r;
}

bool statistical_failure(const VerifyReport& r) {
  return std::any_of(r.checks.begin(), r.checks.end(), [](const Check& c) { return c.statistical && !c.pass; });
}

}  // namespace

VerifyReport run_suite(const std::string& name, const LinearModel& model, const VerifyConfig& config) {
  static const std::vector<std::string> known{"identities", "samplers", "conditioning", "onedim", "evolution"};
  if (std::find(known.begin(), known.end(), name) == known.end()) throw ConfigError("unknown suite '" + name + "'");
  if (!(config.T > 0.0)) throw ConfigError("T must be positive");
  const auto d = model.dim();
  SuiteContext c{model, config, config.a.size() ? config.a : Vector::Zero(d),
                 config.b.size() ? config.b : Vector::Zero(d), SamplerOptions{config.threads}};
  if (c.a.size() != d || c.b.size() != d) throw ConfigError("endpoints must have length " + std::to_string(d));
  if (config.b_alt && config.b_alt->size() != d) throw ConfigError("b' must have length " + std::to_string(d));

  std::function<VerifyReport(std::uint64_t)> run;
  if (name == "identities") run = [&](std::uint64_t) { return suite_identities(c); };
  if (name == "evolution") run = [&](std::uint64_t) { return suite_evolution(c); };
  if (name == "conditioning") run = [&](std::uint64_t) { return suite_conditioning(c); };
  if (name == "samplers") run = [&](std::uint64_t s) { return suite_samplers(c, s); };
  if (name == "onedim") run = [&](std::uint64_t s) { return suite_onedim(c, s); };

  std::vector<std::string> notes;
  if ((name == "samplers" || name == "onedim") && config.n_paths < 1000) {
    notes.push_back("n_paths = " + std::to_string(config.n_paths) +
                    " is small: standard errors are noisy and the k-sigma thresholds are wide");
    warn(notes.back());
  }

  VerifyReport r = run(config.seed);
  if (statistical_failure(r)) {
    const std::uint64_t retry_seed = stream_seed(config.seed, 0x7265747279ULL);
    notes.push_back("statistical checks failed with seed " + std::to_string(config.seed) + ", retried with seed " +
                    std::to_string(retry_seed));
    r = run(retry_seed);
    r.retries = 1;
  }
  r.suite = name;
  r.model_hash = model_hash(model);
  r.seed = config.seed;
  r.warnings.insert(r.warnings.begin(), notes.begin(), notes.end());
  r.finalize();
  return r;
}

}  // namespace linbridge
