#pragma once

#include "linbridge/densities.hpp"
#include "linbridge/kernels.hpp"
#include "linbridge/samplers.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace linbridge {

/// Per-time sample moments of an ensemble with their standard errors. The
/// covariance SE uses the Gaussian fourth-moment formula
/// Var(C_jl) ~ (C_jj C_ll + C_jl^2) / n.
struct MomentSummary {
  std::vector<double> grid;
  Eigen::Index n_paths = 0;
  Eigen::Index dim = 0;
  std::vector<Vector> mean;
  std::vector<Matrix> cov;
  std::vector<Vector> mean_se;
  std::vector<Matrix> cov_se;
};

/// Unbiased moments per grid time. ConfigError if n_paths < 2.
MomentSummary estimate_moments(const PathEnsemble& e);

struct Check {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool pass = false;
  /// Monte Carlo check, eligible for the seeded retry.
  bool statistical = false;
  std::string detail;
};

struct VerifyReport {
  std::string suite;
  std::vector<Check> checks;
  bool pass = false;
  std::string model_hash;
  std::uint64_t seed = 0;
  int retries = 0;
  std::vector<std::string> warnings;

  /// Adds a check that passes iff statistic <= threshold (NaN fails).
  void add(std::string name, double statistic, double threshold, std::string detail = {}, bool statistical = false);
  void add_failure(std::string name, std::string detail);
  void merge(const VerifyReport& other);
  /// Sorts the checks by name and sets pass to the conjunction of all checks.
  void finalize();
  [[nodiscard]] std::string to_json() const;
};

/// z-scores of every mean and covariance entry of ms against law[i] at
/// ms.grid[i]; one check per time and moment kind holding the largest |z|,
/// passing iff it is <= k_sigma. GridMismatch if the sizes differ.
VerifyReport compare_to_law(const MomentSummary& ms, const std::vector<GaussLaw>& law, double k_sigma = 4.0,
                            const std::string& prefix = {});

/// Two-sample version: differences are scaled by sqrt(se_a^2 + se_b^2).
/// The grids must agree to 1e-12 relative.
VerifyReport compare_moments(const MomentSummary& x, const MomentSummary& y, double k_sigma = 4.0,
                             const std::string& prefix = {});

/// Scaled residuals ||lhs - rhs||_F / max(1, ||lhs||, ||rhs||) of
///   cocycle  E(t,s) E(s,r) = E(t,r)
///   inverse  E(t,s) E(s,t) = I
///   d_dt     dE(t,s)/dt = Q(t) E(t,s)
///   d_ds     dE(t,s)/ds = -E(t,s) Q(s)
/// with central differences of step h. Needs h <= s, t and t + h, s + h
/// inside the operator's horizon.
std::map<std::string, double> evolution_residuals(const EvolutionOperator& op, double r, double s, double t,
                                                  double h = 1e-4);

struct VerifyConfig {
  double T = 1.0;
  /// Empty vectors mean zero endpoints.
  Vector a;
  Vector b;
  /// Conditioning suite only: build the conditional law with this endpoint
  /// instead of b (a negative control that must fail).
  std::optional<Vector> b_alt;
  Eigen::Index n_paths = 100000;
  int n_steps = 2048;
  std::uint64_t seed = 1;
  double k_sigma = 4.0;
  /// Tolerance of the algebraic checks.
  double tol = 1e-8;
  unsigned threads = 0;
  KernelOptions kernel{};
};

/// Comparison times k T / 16 for odd k.
std::vector<double> interior_times(double T);

/// Runs one of the suites identities, samplers, conditioning, onedim,
/// evolution. Statistical suites retry once with a derived seed when a
/// statistical check fails; the retry is recorded. Errors inside a check
/// group become failed checks. ConfigError for an unknown suite, or for
/// onedim on a model that is not scalar.
VerifyReport run_suite(const std::string& name, const LinearModel& model, const VerifyConfig& config);

}  // namespace linbridge
