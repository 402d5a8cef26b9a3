#pragma once

#include "linbridge/model.hpp"

#include <vector>

namespace linbridge {

struct EvolutionOptions {
  double rel_tol = 1e-12;
  double abs_tol = 1e-14;
  long max_steps = 1'000'000;
};

/// State-transition matrices E(t, s) of y' = Q(t) y.
///
/// On construction the fundamental matrix Phi(t) = E(t, 0) and its inverse
/// Psi(t) = E(0, t) are integrated over [0, horizon] with an embedded
/// Dormand-Prince 5(4) scheme, the inverse through its own ODE
/// Psi' = -Psi Q rather than by matrix inversion. The accepted step points
/// form the anchor cache. Queries integrate from the nearest anchor below
/// and compose E(t, s) = Phi(t) Psi(s); they never touch the cache.
///
/// extend_to() is the only mutating operation. After freeze() it throws,
/// so a frozen operator can be shared across threads without locking.
class EvolutionOperator {
 public:
  EvolutionOperator(LinearModel model, double horizon, EvolutionOptions options = {});

  /// E(to, from), mapping a state at time `from` to time `to`. Throws
  /// SolverError if step control fails.
  [[nodiscard]] Matrix evolve(double to, double from) const;

  [[nodiscard]] Matrix phi(double t) const;      ///< E(t, 0)
  [[nodiscard]] Matrix phi_inv(double t) const;  ///< E(0, t)

  void extend_to(double horizon);
  void freeze() noexcept { frozen_ = true; }
  [[nodiscard]] bool frozen() const noexcept { return frozen_; }

  [[nodiscard]] double horizon() const noexcept { return anchors_.back(); }
  [[nodiscard]] std::size_t anchor_count() const noexcept { return anchors_.size(); }
  [[nodiscard]] const LinearModel& model() const noexcept { return model_; }
  [[nodiscard]] const EvolutionOptions& options() const noexcept { return options_; }

 private:
  [[nodiscard]] std::size_t anchor_below(double t) const;

  LinearModel model_;
  EvolutionOptions options_;
  bool frozen_ = false;
  std::vector<double> anchors_;
  std::vector<Matrix> phi_;
  std::vector<Matrix> psi_;
};

/// Peano-Baker series truncated after `terms` iterated integrals,
///   I + int_s^t Q(t1) dt1 + int_s^t int_s^t1 Q(t1) Q(t2) dt2 dt1 + ...
/// evaluated with spectral (Gauss-Legendre collocation) cumulative quadrature.
/// Independent of EvolutionOperator; used as its oracle on short intervals.
[[nodiscard]] Matrix evolve_series(const LinearModel& model, double s, double t, int terms);

/// Upper bound L on ||Q(u)||_2 sampled over [min(s,t), max(s,t)], so that
/// ||E(t,s)|| <= exp(L |t - s|) can be checked.
[[nodiscard]] double generator_bound(const LinearModel& model, double s, double t, int samples = 257);

}  // namespace linbridge
