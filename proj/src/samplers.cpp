#include "linbridge/samplers.hpp"

#include "linbridge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <thread>

namespace linbridge {

std::string_view to_string(SampleMethod m) {
  switch (m) {
    case SampleMethod::exact_z:
      return "exact_z";
    case SampleMethod::bridge_exact:
      return "bridge_exact";
    case SampleMethod::bridge_sde:
      return "bridge_sde";
    case SampleMethod::bridge_anticipative:
      return "bridge_anticipative";
    case SampleMethod::conditional_oracle:
      return "conditional_oracle";
    case SampleMethod::lamperti:
      return "lamperti";
  }
  return "unknown";
}

std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t path) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(master_seed) ^ mix(path + 0x632be59bd9b4e019ULL));
}

void for_each_path(Eigen::Index n_paths, const SamplerOptions& opt, const std::function<void(Eigen::Index)>& fn) {
  unsigned workers = opt.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : opt.threads;
  workers = static_cast<unsigned>(std::min<Eigen::Index>(workers, std::max<Eigen::Index>(n_paths, 1)));
  if (workers <= 1) {
    for (Eigen::Index p = 0; p < n_paths; ++p) fn(p);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const Eigen::Index chunk = (n_paths + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const Eigen::Index lo = w * chunk, hi = std::min(n_paths, lo + chunk);
    pool.emplace_back([&, lo, hi, w] {
      try {
        for (Eigen::Index p = lo; p < hi; ++p) fn(p);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void check_grid(const BridgeKernel& k, const std::vector<double>& grid, bool require_zero_start) {
  if (grid.empty()) throw ConfigError("sampling grid is empty");
  if (require_zero_start && grid.front() != 0.0) throw ConfigError("sampling grid must start at 0");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid[i];
    if (!(t >= 0.0 && t <= k.T())) throw ConfigError("sampling grid must lie in [0, T]");
    if (i > 0 && !(t > grid[i - 1])) throw ConfigError("sampling grid must be strictly increasing");
    if (t != k.T() && t > k.T() - k.eps()) {
      std::ostringstream os;
      os << "grid time " << t << " lies within eps of T; use T itself";
      throw DomainError(os.str());
    }
  }
}

namespace {

// One affine Gaussian step x -> A x + c + L xi, stored row-major for an
// allocation-free inner loop.
struct Step {
  std::vector<double> A;
  std::vector<double> c;
  std::vector<double> L;
  Eigen::Index q = 0;  // noise columns of L
  bool pin = false;    // result is exactly c
};

Step make_step(const Matrix& A, const Vector& c, const Matrix& L) {
  Step s;
  const auto d = A.rows();
  s.q = L.cols();
  s.A.resize(static_cast<std::size_t>(d * d));
  s.L.resize(static_cast<std::size_t>(d * s.q));
  s.c.assign(c.data(), c.data() + d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) s.A[static_cast<std::size_t>(i * d + j)] = A(i, j);
    for (Eigen::Index j = 0; j < s.q; ++j) s.L[static_cast<std::size_t>(i * s.q + j)] = L(i, j);
  }
  return s;
}

Step pin_step(const Vector& value) {
  Step s;
  s.c.assign(value.data(), value.data() + value.size());
  s.pin = true;
  return s;
}

Matrix factor_or_throw(const Matrix& cov, const char* what, bool allow_degenerate) {
  const GaussLaw law(Vector::Zero(cov.rows()), cov);
  if (law.degenerate() && !allow_degenerate) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
  return law.factor();
}

// y = A x + c + L xi; x and y must not alias.
void advance(const Step& s, Eigen::Index d, const double* x, double* y, NormalStream& rng, double* xi) {
  if (s.pin) {
    std::copy(s.c.begin(), s.c.end(), y);
    return;
  }
  for (Eigen::Index j = 0; j < s.q; ++j) xi[j] = rng();
  for (Eigen::Index i = 0; i < d; ++i) {
    double acc = s.c[static_cast<std::size_t>(i)];
    const double* a = s.A.data() + i * d;
    for (Eigen::Index j = 0; j < d; ++j) acc += a[j] * x[j];
    const double* l = s.L.data() + i * s.q;
    for (Eigen::Index j = 0; j < s.q; ++j) acc += l[j] * xi[j];
    y[i] = acc;
  }
}

constexpr Eigen::Index kMaxNoise = 64;

PathEnsemble make_ensemble(std::vector<double> grid, Eigen::Index n_paths, Eigen::Index d, SampleMethod method,
                           std::uint64_t seed) {
  if (n_paths < 0) throw ConfigError("number of paths must be non-negative");
  PathEnsemble e;
  e.grid = std::move(grid);
  e.n_paths = n_paths;
  e.dim = d;
  e.method = method;
  e.seed = seed;
  e.states.assign(static_cast<std::size_t>(n_paths * e.n_times() * d), 0.0);
  return e;
}

// Runs the chain x_0 = start, x_{i+1} = step_i(x_i) for every path and stores
// the states flagged in `record` (length steps + 1).
void run_chain(PathEnsemble& e, const Vector& start, const std::vector<Step>& steps, const std::vector<bool>& record,
               const SamplerOptions& opt) {
  const auto d = e.dim;
  for (const auto& s : steps)
    if (s.q > kMaxNoise) throw ConfigError("noise dimension too large");
  for_each_path(e.n_paths, opt, [&](Eigen::Index p) {
    NormalStream rng(e.stream_id(p));
    std::vector<double> cur(start.data(), start.data() + d), nxt(static_cast<std::size_t>(d));
    double xi[kMaxNoise];
    double* out = e.states.data() + p * e.n_times() * d;
    if (record[0]) {
      std::copy(cur.begin(), cur.end(), out);
      out += d;
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
      advance(steps[i], d, cur.data(), nxt.data(), rng, xi);
      std::swap(cur, nxt);
      if (record[i + 1]) {
        std::copy(cur.begin(), cur.end(), out);
        out += d;
      }
    }
  });
}

std::vector<Step> forward_steps(const BridgeKernel& k, const std::vector<double>& times) {
  std::vector<Step> steps;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const auto tr = k.forward_transition(times[i], times[i + 1]);
    steps.push_back(make_step(tr.A, tr.c, factor_or_throw(tr.cov, "kappa(s,t)", false)));
  }
  return steps;
}

}  // namespace

PathEnsemble sample_z(const BridgeKernel& k, const Vector& z0, const std::vector<double>& grid, Eigen::Index n_paths,
                      std::uint64_t seed, const SamplerOptions& opt) {
  check_grid(k, grid, false);
  if (z0.size() != k.dim()) throw ConfigError("sample_z: initial state has wrong dimension");
  auto e = make_ensemble(grid, n_paths, k.dim(), SampleMethod::exact_z, seed);
  run_chain(e, z0, forward_steps(k, grid), std::vector<bool>(grid.size(), true), opt);
  return e;
}

PathEnsemble sample_bridge_exact(const BridgeKernel& k, const std::vector<double>& grid, Eigen::Index n_paths,
                                 std::uint64_t seed, const SamplerOptions& opt) {
  check_grid(k, grid, true);
  std::vector<Step> steps;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (grid[i + 1] == k.T()) {
      steps.push_back(pin_step(k.b()));
      continue;
    }
    const auto tr = k.bridge_transition(grid[i], grid[i + 1]);
    steps.push_back(make_step(tr.A, tr.c, factor_or_throw(tr.cov, "sigma(s,t)", false)));
  }
  auto e = make_ensemble(grid, n_paths, k.dim(), SampleMethod::bridge_exact, seed);
  run_chain(e, k.a(), steps, std::vector<bool>(grid.size(), true), opt);
  return e;
}

SdeDrift sde_drift_coefficients(const BridgeKernel& k, double t) {
  if (!(t >= 0.0)) throw ConfigError("sde drift requires t >= 0");
  if (t > k.T() - k.eps() || t >= k.T()) throw DomainError("sde drift is singular at the horizon");
  const Matrix S = k.model().S()(t);
  const Matrix SS = S * S.transpose();
  const auto lu = k.gamma_to_horizon_lu(t);
  const Matrix g_inv = lu.inverse();
  SdeDrift out;
  out.B = k.model().Q()(t) - SS * k.evolve(k.T(), t).transpose() * g_inv;
  out.beta = SS * g_inv.transpose() * k.m_minus(k.b(), t, k.T()) + k.model().r()(t).col(0);
  return out;
}

std::vector<double> sde_step_grid(const BridgeKernel& k, int n_steps, double eps_pin) {
  const double T = k.T();
  if (n_steps < 2) throw ConfigError("sde sampler needs at least 2 steps");
  if (eps_pin <= 0.0) eps_pin = T / n_steps;
  if (!(eps_pin < 0.5 * T)) throw ConfigError("eps_pin must lie in (0, T/2)");
  const double end = T - eps_pin;
  std::vector<double> g(static_cast<std::size_t>(n_steps) + 1);
  for (int j = 0; j < n_steps; ++j) g[static_cast<std::size_t>(j)] = end * j / (n_steps - 1);
  g.back() = T;
  return g;
}

namespace {

std::vector<Step> sde_steps(const BridgeKernel& k, const std::vector<double>& g) {
  const auto d = k.dim();
  std::vector<Step> steps;
  for (std::size_t j = 0; j + 2 < g.size(); ++j) {
    const double t = g[j], h = g[j + 1] - g[j];
    const auto dr = sde_drift_coefficients(k, t);
    const Matrix A = Matrix::Identity(d, d) + h * dr.B;
    steps.push_back(make_step(A, h * dr.beta, std::sqrt(h) * k.model().S()(t)));
  }
  steps.push_back(pin_step(k.b()));
  return steps;
}

}  // namespace

PathEnsemble sample_bridge_sde(const BridgeKernel& k, int n_steps, Eigen::Index n_paths, std::uint64_t seed,
                               double eps_pin, const std::optional<std::vector<double>>& record_times,
                               const SamplerOptions& opt) {
  const auto g = sde_step_grid(k, n_steps, eps_pin);
  std::vector<bool> record(g.size(), !record_times.has_value());
  std::vector<double> out_grid = g;
  if (record_times) {
    out_grid.clear();
    std::size_t j = 0;
    for (double t : *record_times) {
      while (j < g.size() && g[j] < t - 1e-12 * k.T()) ++j;
      if (j == g.size() || std::abs(g[j] - t) > 1e-12 * k.T()) {
        std::ostringstream os;
        os << "record time " << t << " is not a point of the " << n_steps << "-step Euler grid";
        throw GridMismatch(os.str());
      }
      if (!out_grid.empty() && g[j] == out_grid.back()) throw ConfigError("record times must be strictly increasing");
      record[j] = true;
      out_grid.push_back(g[j]);
    }
  }
  auto e = make_ensemble(out_grid, n_paths, k.dim(), SampleMethod::bridge_sde, seed);
  run_chain(e, k.a(), sde_steps(k, g), record, opt);
  return e;
}

std::vector<GaussLaw> sde_euler_moments(const BridgeKernel& k, int n_steps, double eps_pin) {
  const auto g = sde_step_grid(k, n_steps, eps_pin);
  const auto d = k.dim();
  std::vector<GaussLaw> out;
  Vector m = k.a();
  Matrix P = Matrix::Zero(d, d);
  out.emplace_back(m, P);
  for (std::size_t j = 0; j + 2 < g.size(); ++j) {
    const double t = g[j], h = g[j + 1] - g[j];
    const auto dr = sde_drift_coefficients(k, t);
    const Matrix A = Matrix::Identity(d, d) + h * dr.B;
    const Matrix S = k.model().S()(t);
    m = A * m + h * dr.beta;
    P = A * P * A.transpose() + h * S * S.transpose();
    out.emplace_back(m, P);
  }
  out.emplace_back(k.b(), Matrix::Zero(d, d));
  return out;
}

AnticipativeCoefficients anticipative_coefficients(const BridgeKernel& k, double t) {
  const auto d = k.dim();
  if (!(t >= 0.0 && t <= k.T())) throw ConfigError("anticipative coefficients require t in [0, T]");
  const Matrix g0T_inv = k.gamma_to_horizon_lu(0.0).inverse();
  AnticipativeCoefficients c;
  c.coef_a = t == k.T() ? Matrix::Zero(d, d) : Matrix(k.gamma(t, k.T()) * g0T_inv);
  c.coef_b = t == 0.0 ? Matrix::Zero(d, d) : Matrix(k.gamma(0.0, t).transpose() * g0T_inv.transpose());
  if (t == k.T()) c.coef_b = Matrix::Identity(d, d);
  if (t == 0.0) c.coef_a = Matrix::Identity(d, d);
  c.coef_Zt = Matrix::Identity(d, d);
  c.coef_ZT = -c.coef_b;
  return c;
}

PathEnsemble sample_bridge_anticipative(const BridgeKernel& k, const std::vector<double>& grid, Eigen::Index n_paths,
                                        std::uint64_t seed, const SamplerOptions& opt) {
  check_grid(k, grid, true);
  const auto d = k.dim();
  const double T = k.T();
  std::vector<double> zgrid = grid;
  if (zgrid.back() != T) zgrid.push_back(T);
  const auto steps = forward_steps(k, zgrid);

  // Deterministic part and Z_t, Z_T weights per output time.
  std::vector<Vector> offset;
  std::vector<Matrix> wT;
  for (double t : grid) {
    const auto c = anticipative_coefficients(k, t);
    offset.push_back(c.coef_a * k.a() + c.coef_b * k.b());
    wT.push_back(c.coef_ZT);
  }

  auto e = make_ensemble(grid, n_paths, d, SampleMethod::bridge_anticipative, seed);
  const Eigen::Index nz = static_cast<Eigen::Index>(zgrid.size());
  for_each_path(n_paths, opt, [&](Eigen::Index p) {
    NormalStream rng(e.stream_id(p));
    Matrix Z(d, nz);
    Z.col(0).setZero();
    double xi[kMaxNoise];
    for (Eigen::Index i = 0; i + 1 < nz; ++i)
      advance(steps[static_cast<std::size_t>(i)], d, Z.col(i).data(), Z.col(i + 1).data(), rng, xi);
    const Vector ZT = Z.col(nz - 1);
    double* out = e.states.data() + p * e.n_times() * d;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      Vector y;
      if (grid[i] == 0.0) {
        y = k.a();
      } else if (grid[i] == T) {
        y = k.b();
      } else {
        y = offset[i] + Z.col(static_cast<Eigen::Index>(i)) + wT[i] * ZT;
      }
      std::copy(y.data(), y.data() + d, out + static_cast<Eigen::Index>(i) * d);
    }
  });
  return e;
}

PathEnsemble sample_conditional_oracle(const BridgeKernel& k, const std::vector<double>& times, Eigen::Index n_paths,
                                       std::uint64_t seed, const SamplerOptions& opt) {
  const auto d = k.dim();
  const auto law = conditional_fdd(k, times);
  auto e = make_ensemble(times, times.empty() ? 0 : n_paths, d, SampleMethod::conditional_oracle, seed);
  if (times.empty()) return e;
  const auto n = law.dim();
  const Matrix& F = law.factor();
  for_each_path(e.n_paths, opt, [&](Eigen::Index p) {
    NormalStream rng(e.stream_id(p));
    Vector xi(n);
    for (Eigen::Index j = 0; j < n; ++j) xi(j) = rng();
    const Vector y = law.mean() + F * xi;
    std::copy(y.data(), y.data() + n, e.states.data() + p * n);
  });
  return e;
}

void write_ensemble_csv(std::ostream& os, const PathEnsemble& e, const std::vector<std::string>& comments) {
  for (const auto& c : comments) os << "# " << c << '\n';
  os << "path,t";
  for (Eigen::Index j = 0; j < e.dim; ++j) os << ",x" << (j + 1);
  os << '\n';
  char buf[32];
  for (Eigen::Index p = 0; p < e.n_paths; ++p) {
    for (Eigen::Index i = 0; i < e.n_times(); ++i) {
      os << p;
      std::snprintf(buf, sizeof buf, "%.17g", e.grid[static_cast<std::size_t>(i)]);
      os << ',' << buf;
      for (Eigen::Index j = 0; j < e.dim; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", e.at(p, i, j));
        os << ',' << buf;
      }
      os << '\n';
    }
  }
}

}  // namespace linbridge
