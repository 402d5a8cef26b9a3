#pragma once

#include "linbridge/evolution.hpp"
#include "linbridge/model.hpp"
#include "linbridge/quadrature.hpp"

#include <map>
#include <string>

namespace linbridge {

/// Multiplies one kernel family by `factor` wherever it is evaluated. Only
/// meant for negative controls of the identity checks.
struct Perturbation {
  enum class Target { none, evolution, kappa, gamma, sigma };
  Target target = Target::none;
  double factor = 1.0;
};

struct KernelOptions {
  QuadOptions quad{};
  EvolutionOptions evolution{};
  /// Kernels that invert Gamma(., T) accept times up to T - eps_factor * T.
  double eps_factor = 1e-9;
  /// Number of probe intervals per side of the kappa positive-definiteness
  /// grid; all pairs of the (probe_points + 1) grid times are checked.
  int probe_points = 8;
  double cond_warn = 1e10;
  Perturbation perturbation{};
};

/// Affine Gaussian transition x -> N(A x + c, cov).
struct AffineTransition {
  Matrix A;
  Vector c;
  Matrix cov;
};

/// All kernels of the bridge from a (time 0) to b (time T) of a linear model.
///
///   kappa(s,t)  = int_s^t E(t,u) S S^T E(t,u)^T du
///   gamma(s,t)  = E(s,t) kappa(s,t)
///   sigma(s,t)  = gamma(t,T) gamma(s,T)^{-1} gamma(s,t)
///   m_plus      = x + int_s^t E(s,u) r du
///   m_minus     = x - int_s^t E(t,u) r du
///   mean_fwd    = E(t,s) x + int_s^t E(t,u) r du
///   bridge_mean = gamma(t,T) gamma(s,T)^{-1} m_plus_x(s,t)
///                 + gamma(s,t)^T gamma(s,T)^{-T} m_minus_b(t,T)
///
/// Construction probes kappa for positive definiteness and then freezes the
/// evolution cache; afterwards every method is const and thread-safe.
class BridgeKernel {
 public:
  BridgeKernel(LinearModel model, double T, Vector a, Vector b, KernelOptions options = {});

  [[nodiscard]] Matrix evolve(double to, double from) const;
  [[nodiscard]] Matrix kappa(double s, double t) const;
  [[nodiscard]] Matrix gamma(double s, double t) const;
  /// Second form int_s^t E(s,u) S S^T E(t,u)^T du, evaluated directly.
  [[nodiscard]] Matrix gamma_integral(double s, double t) const;
  [[nodiscard]] Matrix sigma_bridge(double s, double t) const;

  [[nodiscard]] Vector bridge_mean(const Vector& x, double s, double t) const;
  [[nodiscard]] Vector mean_forward(const Vector& x, double s, double t) const;
  [[nodiscard]] Vector m_plus(const Vector& x, double s, double t) const;
  [[nodiscard]] Vector m_minus(const Vector& x, double s, double t) const;

  /// Law of U_t given U_s = x, as an affine map of x. t == T yields the
  /// degenerate transition onto b.
  [[nodiscard]] AffineTransition bridge_transition(double s, double t) const;
  /// Law of Z_t given Z_s = x.
  [[nodiscard]] AffineTransition forward_transition(double s, double t) const;

  /// gamma(s,T)^{-1} via LU; SingularGamma on failure, warning above
  /// options().cond_warn.
  [[nodiscard]] Eigen::PartialPivLU<Matrix> gamma_to_horizon_lu(double s) const;

  [[nodiscard]] const LinearModel& model() const noexcept { return model_; }
  [[nodiscard]] const EvolutionOperator& evolution() const noexcept { return evo_; }
  [[nodiscard]] const KernelOptions& options() const noexcept { return options_; }
  /// Table knots of the model coefficients.
  [[nodiscard]] const std::vector<double>& breaks() const noexcept { return breaks_; }
  [[nodiscard]] double T() const noexcept { return T_; }
  [[nodiscard]] double eps() const noexcept { return eps_; }
  [[nodiscard]] const Vector& a() const noexcept { return a_; }
  [[nodiscard]] const Vector& b() const noexcept { return b_; }
  [[nodiscard]] Eigen::Index dim() const noexcept { return model_.dim(); }

 private:
  [[nodiscard]] Matrix noise_gramian(double s, double t) const;  // int_s^t Psi S S^T Psi^T
  [[nodiscard]] Vector drift_integral(double s, double t) const;  // int_s^t Psi r
  void check_pair(double s, double t, const char* what) const;
  void check_horizon(double t, const char* what) const;
  void probe_kappa() const;
  [[nodiscard]] double scale(Perturbation::Target target) const noexcept;

  LinearModel model_;
  double T_;
  Vector a_;
  Vector b_;
  KernelOptions options_;
  std::vector<double> breaks_;
  double eps_;
  EvolutionOperator evo_;
};

/// Scaled Frobenius residuals ||lhs - rhs|| / max(1, ||lhs||, ||rhs||) of
/// the kernel identities, keyed I1, I2a, I2b, I2c, I2d, I3, I4.
///   I1   sigma(s,t)^{-1} = kappa(s,t)^{-1} + E(T,t)^T kappa(t,T)^{-1} E(T,t)
///   I2a  kappa(t,T)^{-1} - kappa(s,T)^{-1} = gamma(s,T)^{-1} gamma(s,t) gamma(t,T)^{-T}
///   I2b  sigma(s,t) = gamma(t,T) [int_s^t gamma(u,T)^{-1} S S^T gamma(u,T)^{-T} du] gamma(t,T)^T
///   I2c  E(t,0) - gamma(0,t)^T gamma(0,T)^{-T} E(T,0) = gamma(t,T) gamma(0,T)^{-1}
///   I2d  gamma(s,T)^T E(t,s)^T - E(T,s) gamma(s,t) = gamma(t,T)^T
///   I3   int_t^T E(0,u) S S^T E(0,u)^T du = E(0,T) kappa(t,T) E(0,T)^T
///   I4   gamma(s,T) gamma(0,T)^{-1} E(0,u) + gamma(0,s)^T gamma(0,T)^{-T} E(T,u) = E(s,u), u = t
/// Requires 0 <= s < t < T.
std::map<std::string, double> identity_residuals(const BridgeKernel& k, double s, double t);

struct ControllabilityReport {
  int rank = 0;
  bool satisfied = false;
  int k_used = 0;
  /// S(t0) alone has rank d.
  bool condition_a = false;
  /// "a" when condition_a, "b" when the extended matrix reached rank d,
  /// "none" otherwise.
  std::string condition;
  /// Finite differences were used (table coefficients present).
  bool finite_differences = false;
};

/// Rank of [S, Delta S, ..., Delta^k S](t0) with Delta S = S' - Q S, with k
/// increased until the rank is d or k_max is reached. Exact polynomial
/// algebra for constant/polynomial coefficients; nested central differences
/// when a table is involved (DifferentiationError if the stencil leaves the
/// knot range).
ControllabilityReport controllability_check(const LinearModel& model, double t0, int k_max);

}  // namespace linbridge
