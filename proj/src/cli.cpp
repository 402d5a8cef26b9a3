#include "linbridge/cli.hpp"

#include "linbridge/densities.hpp"
#include "linbridge/errors.hpp"
#include "linbridge/kernels.hpp"
#include "linbridge/onedim.hpp"
#include "linbridge/samplers.hpp"
#include "linbridge/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace linbridge {

namespace {

using json = nlohmann::json;

struct CliConfig {
  std::string model_path;
  double T = 1.0;
  std::string a, b;
  std::string grid = "11";
  std::string method = "exact";
  long long n_paths = 1000;
  long long verify_paths = 100000;
  int n_steps = 2048;
  std::uint64_t seed = 1;
  std::string out;
  double tol = 1e-8;
  double solver_tol = 1e-12;
  double eps_pin = 0.0;
  std::string suite;
  std::string b_alt;
  std::string perturb;
  double k_sigma = 4.0;
  double t0 = 0.0;
  int k_max = 3;
  double s = 0.0, t = 0.5;
  std::string x, y;
  unsigned threads = 0;
  bool grid_given = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError(what + ": '" + item + "' is not a number");
    }
    if (used != item.size()) throw ConfigError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

Vector parse_vector(const std::string& text, Eigen::Index d, const std::string& what) {
  if (text.empty()) return Vector::Zero(d);
  const auto v = parse_list(text, what);
  if (static_cast<Eigen::Index>(v.size()) != d)
    throw ConfigError(what + " must have " + std::to_string(d) + " comma-separated entries");
  return Eigen::Map<const Vector>(v.data(), d);
}

/// "N" (an integer >= 2) gives N uniform points on [0, T]; anything else is
/// an explicit comma-separated list.
std::vector<double> parse_grid(const std::string& text, double T) {
  const bool integer = !text.empty() && std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; });
  if (integer) {
    const long n = std::stol(text);
    if (n < 2) throw ConfigError("--grid N needs N >= 2");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = T * static_cast<double>(i) / static_cast<double>(n - 1);
    g.back() = T;
    return g;
  }
  auto g = parse_list(text, "--grid");
  for (double t : g)
    if (t < 0.0 || t > T) throw ConfigError("--grid times must lie in [0, T]");
  return g;
}

KernelOptions kernel_options(const CliConfig& c) {
  KernelOptions o;
  o.quad.rel_tol = c.solver_tol;
  o.evolution.rel_tol = c.solver_tol;
  o.evolution.abs_tol = std::min(o.evolution.abs_tol, c.solver_tol * 1e-2);
  if (!c.perturb.empty()) {
    const auto colon = c.perturb.find(':');
    if (colon == std::string::npos) throw ConfigError("--perturb expects target:factor");
    const std::string target = c.perturb.substr(0, colon);
    static const std::map<std::string, Perturbation::Target> targets{{"evolution", Perturbation::Target::evolution},
                                                                     {"kappa", Perturbation::Target::kappa},
                                                                     {"gamma", Perturbation::Target::gamma},
                                                                     {"sigma", Perturbation::Target::sigma}};
    const auto it = targets.find(target);
    if (it == targets.end()) throw ConfigError("--perturb: unknown target '" + target + "'");
    o.perturbation = {it->second, parse_list(c.perturb.substr(colon + 1), "--perturb factor").at(0)};
  }
  return o;
}

unsigned thread_cap(const CliConfig& c) {
  if (c.threads > 0) return c.threads;
  if (const char* env = std::getenv("LINBRIDGE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 0;
}

// Writes to --out when given, otherwise to `out`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      os_ = &fallback;
      return;
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw ConfigError("cannot open output file '" + path + "'");
    os_ = file_.get();
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_ = nullptr;
};

std::vector<std::string> header_comments(const LinearModel& m, const std::string& what) {
  return {"linbridge " + std::string(kVersion) + " " + what, "model_hash=" + model_hash(m)};
}

void append_flat(std::vector<std::string>& row, const Matrix& M) {
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(fmt(M(i, j)));
}

int cmd_kernels(const CliConfig& c, std::ostream& out) {
  const auto model = load_model(c.model_path);
  const auto d = model.dim();
  BridgeKernel k(model, c.T, parse_vector(c.a, d, "--a"), parse_vector(c.b, d, "--b"), kernel_options(c));
  const auto grid = parse_grid(c.grid, c.T);

  Sink sink(c.out, out);
  std::ostream& os = *sink;
  for (const auto& line : header_comments(model, "kernels")) os << "# " << line << '\n';
  os << "# T=" << fmt(c.T) << '\n';
  os << "# columns: t, kappa(0,t), Gamma(t,T), Sigma(0,t) flattened row-major, then n_{a,b}(0,t)\n";
  os << 't';
  for (const char* name : {"kappa", "gamma", "sigma"})
    for (Eigen::Index i = 1; i <= d; ++i)
      for (Eigen::Index j = 1; j <= d; ++j) os << ',' << name << '_' << i << '_' << j;
  for (Eigen::Index i = 1; i <= d; ++i) os << ",n_" << i;
  os << '\n';

  const Matrix Z = Matrix::Zero(d, d);
  for (double t : grid) {
    const bool at_T = t == c.T;
    std::vector<std::string> row{fmt(t)};
    append_flat(row, k.kappa(0.0, t));
    append_flat(row, at_T ? Z : k.gamma(t, c.T));
    append_flat(row, at_T || t == 0.0 ? Z : k.sigma_bridge(0.0, t));
    const Vector n = at_T ? k.b() : (t == 0.0 ? k.a() : k.bridge_mean(k.a(), 0.0, t));
    for (Eigen::Index i = 0; i < d; ++i) row.push_back(fmt(n(i)));
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
  return kExitOk;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int cmd_sample(const CliConfig& c, std::ostream& out) {
  const auto model = load_model(c.model_path);
  const auto d = model.dim();
  BridgeKernel k(model, c.T, parse_vector(c.a, d, "--a"), parse_vector(c.b, d, "--b"), kernel_options(c));
  if (c.n_paths < 0) throw ConfigError("--paths must be non-negative");
  const SamplerOptions so{thread_cap(c)};
  const auto n = static_cast<Eigen::Index>(c.n_paths);

  PathEnsemble e;
  if (c.method == "exact") {
    e = sample_bridge_exact(k, parse_grid(c.grid, c.T), n, c.seed, so);
  } else if (c.method == "anticipative") {
    e = sample_bridge_anticipative(k, parse_grid(c.grid, c.T), n, c.seed, so);
  } else if (c.method == "z") {
    e = sample_z(k, k.a(), parse_grid(c.grid, c.T), n, c.seed, so);
  } else if (c.method == "sde") {
    std::optional<std::vector<double>> rec;
    if (c.grid_given && c.grid != "all") rec = parse_grid(c.grid, c.T);
    e = sample_bridge_sde(k, c.n_steps, n, c.seed, c.eps_pin, rec, so);
  } else if (c.method == "oracle") {
    std::vector<double> inner;
    for (double t : parse_grid(c.grid, c.T))
      if (t > 0.0 && t < c.T) inner.push_back(t);
    e = sample_conditional_oracle(k, inner, n, c.seed, so);
  } else if (c.method == "lamperti") {
    if (d != 1 || model.noise_dim() != 1) throw ConfigError("method lamperti needs a model with d = p = 1");
    e = sample_lamperti(ScalarModel::from_linear(model, c.T), parse_grid(c.grid, c.T), n, c.seed, so);
  } else {
    throw ConfigError("unknown method '" + c.method + "' (exact, sde, anticipative, z, oracle, lamperti)");
  }

  auto comments = header_comments(model, "sample");
  comments.push_back("method=" + std::string(to_string(e.method)) + " seed=" + std::to_string(c.seed) +
                     " paths=" + std::to_string(e.n_paths));
  {
    Sink sink(c.out, out);
    write_ensemble_csv(*sink, e, comments);
  }
  if (!c.out.empty()) {
    json meta;
    meta["version"] = kVersion;
    meta["model_hash"] = model_hash(model);
    meta["model"] = json::parse(serialize_model(model));
    meta["method"] = std::string(to_string(e.method));
    meta["seed"] = c.seed;
    meta["n_paths"] = c.n_paths;
    meta["T"] = c.T;
    meta["a"] = vector_json(k.a());
    meta["b"] = vector_json(k.b());
    meta["grid"] = e.grid;
    if (c.method == "sde") {
      meta["n_steps"] = c.n_steps;
      meta["eps_pin"] = c.eps_pin > 0.0 ? c.eps_pin : c.T / c.n_steps;
    }
    meta["solver_tol"] = c.solver_tol;
    std::ofstream f(c.out + ".meta.json", std::ios::binary);
    if (!f) throw ConfigError("cannot write metadata sidecar");
    f << meta.dump(2) << '\n';
  }
  return kExitOk;
}

int cmd_density(const CliConfig& c, std::ostream& out) {
  const auto model = load_model(c.model_path);
  const auto d = model.dim();
  BridgeKernel k(model, c.T, parse_vector(c.a, d, "--a"), parse_vector(c.b, d, "--b"), kernel_options(c));
  if (c.x.empty() || c.y.empty()) throw ConfigError("density needs --x and --y");
  const Vector x = parse_vector(c.x, d, "--x"), y = parse_vector(c.y, d, "--y");
  if (!(0.0 <= c.s && c.s < c.t && c.t <= c.T)) throw ConfigError("density needs 0 <= s < t <= T");
  const auto pz = transition_density_z(k, x, y, c.s, c.t);
  Sink sink(c.out, out);
  std::ostream& os = *sink;
  os << "s=" << fmt(c.s) << "\nt=" << fmt(c.t) << '\n';
  os << "p_z=" << fmt(pz.value) << "\nlog_p_z=" << fmt(pz.log_value) << '\n';
  if (c.t < c.T) {
    const auto pu = transition_density_bridge(k, x, y, c.s, c.t);
    os << "p_bridge=" << fmt(pu.value) << "\nlog_p_bridge=" << fmt(pu.log_value)
       << "\nlog_p_bridge_ratio=" << fmt(pu.log_value_ratio) << '\n';
  }
  return kExitOk;
}

int cmd_verify(const CliConfig& c, std::ostream& out, std::ostream& err) {
  const auto model = load_model(c.model_path);
  const auto d = model.dim();
  VerifyConfig v;
  v.T = c.T;
  v.a = parse_vector(c.a, d, "--a");
  v.b = parse_vector(c.b, d, "--b");
  if (!c.b_alt.empty()) v.b_alt = parse_vector(c.b_alt, d, "--b-alt");
  if (c.verify_paths < 2) throw ConfigError("--paths must be at least 2 for verify");
  v.n_paths = static_cast<Eigen::Index>(c.verify_paths);
  v.n_steps = c.n_steps;
  v.seed = c.seed;
  v.k_sigma = c.k_sigma;
  v.tol = c.tol;
  v.threads = thread_cap(c);
  v.kernel = kernel_options(c);
  const auto report = run_suite(c.suite, model, v);
  Sink sink(c.out, out);
  *sink << report.to_json();
  err << "verify " << c.suite << ": " << (report.pass ? "PASS" : "FAIL") << '\n';
  return report.pass ? kExitOk : kExitCheckFailed;
}

int cmd_controllability(const CliConfig& c, std::ostream& out) {
  const auto model = load_model(c.model_path);
  if (!(c.t0 >= 0.0)) throw ConfigError("--t0 must be non-negative");
  if (c.k_max < 0) throw ConfigError("--kmax must be non-negative");
  const auto r = controllability_check(model, c.t0, c.k_max);
  Sink sink(c.out, out);
  std::ostream& os = *sink;
  os << "rank=" << r.rank << "\ndim=" << model.dim() << "\nk_used=" << r.k_used
     << "\nsatisfied=" << (r.satisfied ? "true" : "false") << "\ncondition=" << r.condition
     << "\nfinite_differences=" << (r.finite_differences ? "true" : "false") << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CliConfig c;
  CLI::App app{"Bridges of linear Gauss-Markov SDEs: kernels, sampling, densities and verification", "linbridge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("linbridge ") + kVersion);
  app.add_option("--threads", c.threads,
                 "Worker threads for sampling (0 = LINBRIDGE_THREADS or all cores); output does not depend on it");

  auto common = [&](CLI::App* s) {
    s->add_option("--model", c.model_path, "Model file (JSON)")->required();
    s->add_option("--T", c.T, "Bridge horizon T > 0")->capture_default_str();
    s->add_option("--a", c.a, "Start point a, comma-separated (default 0)");
    s->add_option("--b", c.b, "End point b, comma-separated (default 0)");
    s->add_option("--out", c.out, "Output file (default stdout)");
    s->add_option("--solver-tol", c.solver_tol, "Relative tolerance of ODE and quadrature")->capture_default_str();
    s->add_option("--perturb", c.perturb, "Negative control: scale a kernel, e.g. kappa:1.01");
  };

  auto* kernels = app.add_subcommand("kernels", "CSV table of kappa(0,t), Gamma(t,T), Sigma(0,t), n_{a,b}(0,t)");
  common(kernels);
  kernels->add_option("--grid", c.grid, "N uniform points on [0,T], or t1,t2,...")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "Sample paths to CSV (plus OUT.meta.json when --out is given)");
  common(sample);
  auto* sample_grid = sample->add_option("--grid", c.grid, "N uniform points on [0,T], or t1,t2,... (sde: record times, 'all' = every step)")
      ->capture_default_str();
  sample->add_option("--method", c.method, "exact | sde | anticipative | z | oracle | lamperti")->capture_default_str();
  sample->add_option("--paths", c.n_paths, "Number of paths")->capture_default_str();
  sample->add_option("--steps", c.n_steps, "Euler steps (sde)")->capture_default_str();
  sample->add_option("--eps-pin", c.eps_pin, "Gap before T where the sde path is pinned (default T/steps)");
  sample->add_option("--seed", c.seed, "Master seed")->capture_default_str();

  auto* density = app.add_subcommand("density", "Transition densities p^Z(s,x;t,y) and p^U(s,x;t,y)");
  common(density);
  density->add_option("--s", c.s, "Start time s")->capture_default_str();
  density->add_option("--t", c.t, "End time t")->capture_default_str();
  density->add_option("--x", c.x, "State at s, comma-separated")->required();
  density->add_option("--y", c.y, "State at t, comma-separated")->required();

  auto* verify = app.add_subcommand("verify", "Run a verification suite; JSON report, exit 0 iff all checks pass");
  common(verify);
  verify->add_option("--suite", c.suite, "identities | samplers | conditioning | onedim | evolution")->required();
  verify->add_option("--paths", c.verify_paths, "Monte Carlo paths")->capture_default_str();
  verify->add_option("--steps", c.n_steps, "Euler steps of the sde sampler")->capture_default_str();
  verify->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  verify->add_option("--tol", c.tol, "Tolerance of the algebraic checks")->capture_default_str();
  verify->add_option("--ksigma", c.k_sigma, "Standard-error multiple of the statistical checks")->capture_default_str();
  verify->add_option("--b-alt", c.b_alt, "Conditioning suite: endpoint used for the conditional law (negative control)");

  auto* ctrl = app.add_subcommand("controllability", "Rank test of the controllability matrix at t0");
  ctrl->add_option("--model", c.model_path, "Model file (JSON)")->required();
  ctrl->add_option("--t0", c.t0, "Time t0 >= 0")->capture_default_str();
  ctrl->add_option("--kmax", c.k_max, "Highest derivative order")->capture_default_str();
  ctrl->add_option("--out", c.out, "Output file (default stdout)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  c.grid_given = sample_grid->count() > 0;

  auto handler = set_warning_handler([&err](std::string_view msg) { err << "warning: " << msg << '\n'; });
  struct Restore {
    WarningHandler h;
    ~Restore() { set_warning_handler(h); }
  } restore{handler};

  try {
    if (*kernels) return cmd_kernels(c, out);
    if (*sample) return cmd_sample(c, out);
    if (*density) return cmd_density(c, out);
    if (*verify) return cmd_verify(c, out, err);
    if (*ctrl) return cmd_controllability(c, out);
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const GridMismatch& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DifferentiationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace linbridge
