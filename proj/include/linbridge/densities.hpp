#pragma once

#include "linbridge/kernels.hpp"

#include <vector>

namespace linbridge {

/// Gaussian law N(mean, cov). The Cholesky factor and log-determinant are
/// computed once. A covariance that is only positive semidefinite (for
/// instance the pinned endpoint) is flagged degenerate: it can still be
/// sampled through a pivoted LDL^T factor, but has no density.
class GaussLaw {
 public:
  GaussLaw() = default;
  GaussLaw(Vector mean, Matrix cov);

  [[nodiscard]] const Vector& mean() const noexcept { return mean_; }
  [[nodiscard]] const Matrix& cov() const noexcept { return cov_; }
  [[nodiscard]] Eigen::Index dim() const noexcept { return mean_.size(); }
  [[nodiscard]] bool degenerate() const noexcept { return degenerate_; }
  /// Square-root factor F with F F^T = cov (lower triangular unless degenerate).
  [[nodiscard]] const Matrix& factor() const noexcept { return factor_; }
  /// log det cov; DomainError when degenerate.
  [[nodiscard]] double logdet() const;

  [[nodiscard]] double log_density(const Vector& y) const;
  [[nodiscard]] double density(const Vector& y) const;

  /// Marginal law of components [offset, offset + size).
  [[nodiscard]] GaussLaw block(Eigen::Index offset, Eigen::Index size) const;

 private:
  Vector mean_;
  Matrix cov_;
  Matrix factor_;
  bool degenerate_ = false;
  double logdet_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

struct DensityValue {
  double value;
  double log_value;
};

/// Transition density of Z from (s, x) to (t, y): N(m_x(s,t), kappa(s,t)).
DensityValue transition_density_z(const BridgeKernel& k, const Vector& x, const Vector& y, double s, double t);

struct BridgeDensityValue {
  double value;
  double log_value;
  /// log p_{s,t}(x,y) + log p_{t,T}(y,b) - log p_{s,T}(x,b)
  double log_value_ratio;
};

/// Transition density of the bridge from (s, x) to (t, y), t < T:
/// N(n_{x,b}(s,t), Sigma(s,t)), together with the ratio of Z densities.
/// A warning is emitted when the two routes disagree beyond 1e-6 in log.
BridgeDensityValue transition_density_bridge(const BridgeKernel& k, const Vector& x, const Vector& y, double s,
                                             double t);

/// h(t, x) = p_{t,T}(x, b), the space-time harmonic function of the bridge.
DensityValue h_function(const BridgeKernel& k, const Vector& x, double t);

/// Cov(Z_s, Z_t) = (E(t,0) Gamma(0,s))^T for s <= t and a deterministic start.
Matrix z_covariance(const BridgeKernel& k, double s, double t);
/// Cov(U_s, U_t) = (Gamma(t,T) Gamma(0,T)^{-1} Gamma(0,s))^T for s <= t < T.
Matrix bridge_covariance(const BridgeKernel& k, double s, double t);

/// Exact law of (Z_{t_1}, ..., Z_{t_n}) given Z_0 = a and Z_T = b, stacked
/// into R^{n d}. Times must be strictly increasing inside (0, T).
GaussLaw conditional_fdd(const BridgeKernel& k, const std::vector<double>& times);

}  // namespace linbridge
