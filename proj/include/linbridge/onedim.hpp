#pragma once

#include "linbridge/model.hpp"
#include "linbridge/quadrature.hpp"
#include "linbridge/samplers.hpp"

#include <optional>
#include <vector>

namespace linbridge {

/// dZ = (q(t) Z + r(t)) dt + sigma(t) dB in one dimension, with
/// qbar(t) = int_0^t q(u) du evaluated exactly (antiderivative for
/// polynomials, piecewise-exact for linearly interpolated tables).
class ScalarModel {
 public:
  /// Throws DomainError if sigma vanishes at a probe point of [0, probe_horizon]
  /// (257 uniform points plus table knots).
  ScalarModel(CoefficientFn q, CoefficientFn r, CoefficientFn sigma, double probe_horizon = 1.0,
              QuadOptions quad = {});
  /// From a d = p = 1 LinearModel.
  static ScalarModel from_linear(const LinearModel& m, double probe_horizon = 1.0, QuadOptions quad = {});
  [[nodiscard]] LinearModel to_linear() const;

  [[nodiscard]] double q(double t) const { return q_(t)(0, 0); }
  [[nodiscard]] double r(double t) const { return r_(t)(0, 0); }
  [[nodiscard]] double sigma(double t) const { return sigma_(t)(0, 0); }
  [[nodiscard]] double qbar(double t) const;
  [[nodiscard]] bool has_drift() const { return !r_.is_identically_zero(); }
  [[nodiscard]] const QuadOptions& quad() const noexcept { return quad_; }
  /// Table knots of q, r and sigma.
  [[nodiscard]] const std::vector<double>& breaks() const noexcept { return breaks_; }

 private:
  CoefficientFn q_, r_, sigma_;
  QuadOptions quad_;
  std::vector<double> qbar_knots_;  // cumulative qbar at table knots
  std::vector<double> breaks_;
};

/// gamma(s,t) = int_s^t exp(2(qbar(t) - qbar(u))) sigma(u)^2 du.
double gamma_1d(const ScalarModel& m, double s, double t);
/// m_x(s,t) = exp(qbar(t) - qbar(s)) x + int_s^t exp(qbar(t) - qbar(u)) r(u) du.
double mean_1d(const ScalarModel& m, double x, double s, double t);
/// Bridge mean n_{a,b}(s,t) over [0, T] with a in the role of the state at s.
double n_ab_1d(const ScalarModel& m, double a, double b, double s, double t, double T);
/// Bridge variance gamma(s,t) gamma(t,T) / gamma(s,T).
double sigma_1d(const ScalarModel& m, double s, double t, double T);
/// Kernel of the integral representation gamma(t,T)/gamma(s,T) exp(qbar(t)-qbar(s)) sigma(s).
double integral_kernel_1d(const ScalarModel& m, double s, double t, double T);

/// Bridge SDE dU = (slope U + intercept) dt + sigma dB at t < T.
struct ScalarDrift {
  double slope;
  double intercept;
};
ScalarDrift sde_drift_1d(const ScalarModel& m, double b, double t, double T);

/// Closed forms for the constant-coefficient bridge from a to b over [0, T]
/// with r = 0. ou_bridge needs q != 0 and sigma != 0 (DomainError otherwise);
/// wiener_bridge is the q = 0 branch.
struct ScalarBridgeBundle {
  double q, sigma, a, b, T;
  bool wiener;
  [[nodiscard]] double mean(double t) const;
  [[nodiscard]] double var(double s, double t) const;
  /// Drift of the bridge SDE at (t, u).
  [[nodiscard]] double sde_drift(double t, double u) const;
  [[nodiscard]] double integral_coeff(double s, double t) const;
};
ScalarBridgeBundle ou_bridge(double q, double sigma, double a, double b, double T);
ScalarBridgeBundle wiener_bridge(double sigma, double a, double b, double T);

/// tau(t) = int_0^t exp(-2 qbar(u)) sigma(u)^2 du.
double lamperti_time_change(const ScalarModel& m, double t);

/// Z*_t = m_0(0,t) + exp(qbar(t)) W(tau(t)) for a standard Wiener path W
/// given at tau(times).
std::vector<double> lamperti_transform(const ScalarModel& m, const std::vector<double>& times,
                                       const std::vector<double>& wiener_at_tau);

/// Ensemble of Z (from 0) built by the time change of simulated Wiener paths.
PathEnsemble sample_lamperti(const ScalarModel& m, const std::vector<double>& grid, Eigen::Index n_paths,
                             std::uint64_t seed, const SamplerOptions& opt = {});

struct AnticipativeCoeffs1d {
  double coef_a, coef_b, coef_Zt, coef_ZT;
};

/// Coefficients of Y_t = coef_a a + coef_b b + coef_Zt Z_t + coef_ZT Z_T
/// (Z from 0) in three forms: through Rtilde(s,t) = gamma(s,t) exp(qbar(s)-qbar(t)),
/// through gamma(0,.) directly, and through the covariance function R of Z.
/// For constant q != 0 and sigma the sinh form is added. max_discrepancy is
/// the largest pairwise difference over all forms and coefficients.
struct Anticipative1dForms {
  AnticipativeCoeffs1d rtilde, gamma_form, covariance_form;
  std::optional<AnticipativeCoeffs1d> sinh_form;
  double max_discrepancy;
};
Anticipative1dForms anticipative_1d_coeffs(const ScalarModel& m, double T, double t);

/// For r = 0: M_t = a + exp(-qbar(t)) Z_t has quadratic variation qv = tau(t).
/// `anticipative` holds the coefficients of the anticipative bridge of M from
/// a to exp(-qbar(T)) b (weights of a, b, Z_t, Z_T); integral_a, integral_b
/// and integral_kernel(s) the non-anticipative form. scaling_residual is the
/// largest deviation of exp(qbar(t)) times those coefficients from the
/// bridge coefficients of Z. DomainError if r is not identically zero.
struct MartingaleForms {
  double qv;
  AnticipativeCoeffs1d anticipative;
  double integral_a, integral_b;
  double scaling_residual;
};
MartingaleForms martingale_bridge_forms(const ScalarModel& m, double T, double t);
/// gamma(t,T)/gamma(s,T) exp(-qbar(s)) sigma(s), the integrand of the
/// martingale integral form.
double martingale_integral_kernel(const ScalarModel& m, double s, double t, double T);

}  // namespace linbridge
