#include "linbridge/densities.hpp"

#include "linbridge/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace linbridge {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

}  // namespace

GaussLaw::GaussLaw(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  const auto n = mean_.size();
  if (cov_.rows() != n || cov_.cols() != n) throw ConfigError("GaussLaw: covariance shape does not match mean");
  cov_ = 0.5 * (cov_ + cov_.transpose());
  if (n == 0) return;
  llt_.compute(cov_);
  const bool ok = llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > 0.0;
  if (ok) {
    factor_ = llt_.matrixL();
    logdet_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    return;
  }
  // Semidefinite: pivoted LDL^T, tolerating round-off sized negative pivots.
  degenerate_ = true;
  Eigen::LDLT<Matrix> ldlt(cov_);
  Vector D = ldlt.vectorD();
  const double scale = std::max(cov_.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < D.size(); ++i) {
    if (D(i) < -1e-10 * scale) throw NotPositiveDefinite("GaussLaw: covariance is not positive semidefinite");
    D(i) = std::max(D(i), 0.0);
  }
  Matrix L = ldlt.matrixL();
  factor_ = ldlt.transpositionsP().transpose() * (L * D.cwiseSqrt().asDiagonal());
}

double GaussLaw::logdet() const {
  if (degenerate_) throw DomainError("GaussLaw: degenerate law has no log-determinant");
  return logdet_;
}

double GaussLaw::log_density(const Vector& y) const {
  if (degenerate_) throw DomainError("GaussLaw: degenerate law has no density");
  if (y.size() != mean_.size()) throw ConfigError("GaussLaw: point has wrong dimension");
  const Vector z = llt_.matrixL().solve(y - mean_);
  return -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + logdet_ + z.squaredNorm());
}

double GaussLaw::density(const Vector& y) const { return std::exp(log_density(y)); }

GaussLaw GaussLaw::block(Eigen::Index offset, Eigen::Index size) const {
  return GaussLaw(mean_.segment(offset, size), cov_.block(offset, offset, size, size));
}

DensityValue transition_density_z(const BridgeKernel& k, const Vector& x, const Vector& y, double s, double t) {
  if (!(s < t)) throw ConfigError("transition_density_z requires s < t");
  const GaussLaw law(k.mean_forward(x, s, t), k.kappa(s, t));
  if (law.degenerate()) throw NotPositiveDefinite("kappa(s,t) is not positive definite");
  const double lp = law.log_density(y);
  return {std::exp(lp), lp};
}

BridgeDensityValue transition_density_bridge(const BridgeKernel& k, const Vector& x, const Vector& y, double s,
                                             double t) {
  if (!(s < t && t < k.T())) throw ConfigError("transition_density_bridge requires s < t < T");
  const GaussLaw law(k.bridge_mean(x, s, t), k.sigma_bridge(s, t));
  if (law.degenerate()) throw NotPositiveDefinite("sigma(s,t) is not positive definite");
  const double lp = law.log_density(y);
  const double lr = transition_density_z(k, x, y, s, t).log_value +
                    transition_density_z(k, y, k.b(), t, k.T()).log_value -
                    transition_density_z(k, x, k.b(), s, k.T()).log_value;
  if (std::abs(lp - lr) > 1e-6 * std::max(1.0, std::abs(lp))) {
    std::ostringstream os;
    os << "bridge density routes disagree: log " << lp << " vs " << lr;
    warn(os.str());
  }
  return {std::exp(lp), lp, lr};
}

DensityValue h_function(const BridgeKernel& k, const Vector& x, double t) {
  return transition_density_z(k, x, k.b(), t, k.T());
}

Matrix z_covariance(const BridgeKernel& k, double s, double t) {
  if (!(0.0 <= s && s <= t)) throw ConfigError("z_covariance requires 0 <= s <= t");
  return (k.evolve(t, 0.0) * k.gamma(0.0, s)).transpose();
}

Matrix bridge_covariance(const BridgeKernel& k, double s, double t) {
  if (!(0.0 <= s && s <= t)) throw ConfigError("bridge_covariance requires 0 <= s <= t");
  if (t == k.T()) return Matrix::Zero(k.dim(), k.dim());
  const auto lu = k.gamma_to_horizon_lu(0.0);
  return (k.gamma(t, k.T()) * lu.solve(k.gamma(0.0, s))).transpose();
}

GaussLaw conditional_fdd(const BridgeKernel& k, const std::vector<double>& times) {
  const auto d = k.dim();
  const auto n = static_cast<Eigen::Index>(times.size());
  const double T = k.T();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0 && times[i] < T)) throw ConfigError("conditional_fdd: times must lie in (0, T)");
    if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("conditional_fdd: times must be strictly increasing");
  }
  if (n == 0) return GaussLaw(Vector(0), Matrix(0, 0));

  const Vector& a = k.a();
  const Matrix E_T0 = k.evolve(T, 0.0);
  const Matrix C_TT = k.kappa(0.0, T);
  Eigen::LLT<Matrix> llt(C_TT);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("kappa(0,T) is not positive definite");
  const Vector innovation = k.b() - k.mean_forward(a, 0.0, T);

  std::vector<Matrix> g0(times.size()), E_i0(times.size()), C_iT(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    g0[i] = k.gamma(0.0, times[i]);
    E_i0[i] = k.evolve(times[i], 0.0);
    C_iT[i] = (E_T0 * g0[i]).transpose();
  }

  Vector mean(n * d);
  Matrix cov(n * d, n * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    mean.segment(i * d, d) = k.mean_forward(a, 0.0, times[ui]) + C_iT[ui] * llt.solve(innovation);
    for (Eigen::Index j = i; j < n; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      // Cov(Z_ti, Z_tj) for ti <= tj
      const Matrix C_ij = (E_i0[uj] * g0[ui]).transpose();
      const Matrix blk = C_ij - C_iT[ui] * llt.solve(C_iT[uj].transpose());
      cov.block(i * d, j * d, d, d) = blk;
      cov.block(j * d, i * d, d, d) = blk.transpose();
    }
  }
  return GaussLaw(std::move(mean), std::move(cov));
}

}  // namespace linbridge
