#pragma once

#include "linbridge/densities.hpp"
#include "linbridge/kernels.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace linbridge {

enum class SampleMethod { exact_z, bridge_exact, bridge_sde, bridge_anticipative, conditional_oracle, lamperti };

std::string_view to_string(SampleMethod m);

/// Per-path random stream. The engine for path i of master seed s is seeded
/// with splitmix64 applied to (s, i), so a path's draws do not depend on
/// which thread generated it or in which order.
std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t path);

class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return dist_(engine_); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

/// Sampled trajectories on a common time grid. States are stored path-major:
/// state (path p, time index i, component j) lives at ((p * n_times) + i) * d + j.
struct PathEnsemble {
  std::vector<double> grid;
  Eigen::Index n_paths = 0;
  Eigen::Index dim = 0;
  std::vector<double> states;
  SampleMethod method = SampleMethod::exact_z;
  std::uint64_t seed = 0;

  [[nodiscard]] Eigen::Index n_times() const noexcept { return static_cast<Eigen::Index>(grid.size()); }
  [[nodiscard]] double at(Eigen::Index path, Eigen::Index time, Eigen::Index comp) const {
    return states[static_cast<std::size_t>((path * n_times() + time) * dim + comp)];
  }
  [[nodiscard]] Eigen::Map<const Vector> state(Eigen::Index path, Eigen::Index time) const {
    return Eigen::Map<const Vector>(states.data() + (path * n_times() + time) * dim, dim);
  }
  [[nodiscard]] std::uint64_t stream_id(Eigen::Index path) const {
    return stream_seed(seed, static_cast<std::uint64_t>(path));
  }
};

struct SamplerOptions {
  /// Worker threads; 0 means std::thread::hardware_concurrency().
  unsigned threads = 0;
};

/// Exact Gauss-Markov sampling of Z from z0 at grid[0].
PathEnsemble sample_z(const BridgeKernel& k, const Vector& z0, const std::vector<double>& grid, Eigen::Index n_paths,
                      std::uint64_t seed, const SamplerOptions& opt = {});

/// Sequential exact sampling of the bridge: U_{t+} ~ N(n_{U_t,b}(t,t+), Sigma(t,t+)).
/// grid[0] must be 0; a last point equal to T is pinned to b.
PathEnsemble sample_bridge_exact(const BridgeKernel& k, const std::vector<double>& grid, Eigen::Index n_paths,
                                 std::uint64_t seed, const SamplerOptions& opt = {});

struct SdeDrift {
  Matrix B;     ///< Q - S S^T E(T,t)^T Gamma(t,T)^{-1}
  Vector beta;  ///< S S^T Gamma(t,T)^{-T} m_minus_b(t,T) + r
};

/// Drift of the bridge SDE dU = (B(t) U + beta(t)) dt + S(t) dB at t < T.
SdeDrift sde_drift_coefficients(const BridgeKernel& k, double t);

/// Time points of the Euler scheme: n_steps - 1 uniform steps over
/// [0, T - eps_pin], then T.
std::vector<double> sde_step_grid(const BridgeKernel& k, int n_steps, double eps_pin);

/// Euler-Maruyama for the bridge SDE on sde_step_grid, with U_T := b.
/// eps_pin <= 0 selects the default T / n_steps. When record_times is set,
/// only those times (which must be step points) are stored.
PathEnsemble sample_bridge_sde(const BridgeKernel& k, int n_steps, Eigen::Index n_paths, std::uint64_t seed,
                               double eps_pin = 0.0, const std::optional<std::vector<double>>& record_times = {},
                               const SamplerOptions& opt = {});

/// Exact mean and covariance of the Euler scheme at every step point (the
/// scheme is affine in U, so its moments follow a closed recursion).
std::vector<GaussLaw> sde_euler_moments(const BridgeKernel& k, int n_steps, double eps_pin = 0.0);

struct AnticipativeCoefficients {
  Matrix coef_a;   ///< Gamma(t,T) Gamma(0,T)^{-1}
  Matrix coef_b;   ///< Gamma(0,t)^T Gamma(0,T)^{-T}
  Matrix coef_Zt;  ///< identity
  Matrix coef_ZT;  ///< -coef_b
};

/// Y_t = coef_a a + coef_b b + coef_Zt Z_t + coef_ZT Z_T with Z_0 = 0.
AnticipativeCoefficients anticipative_coefficients(const BridgeKernel& k, double t);

/// Anticipative representation: Z is sampled exactly from 0 on grid and T,
/// then mapped through anticipative_coefficients. Y_0 = a and Y_T = b exactly.
PathEnsemble sample_bridge_anticipative(const BridgeKernel& k, const std::vector<double>& grid, Eigen::Index n_paths,
                                        std::uint64_t seed, const SamplerOptions& opt = {});

/// I.i.d. draws from conditional_fdd(k, times).
PathEnsemble sample_conditional_oracle(const BridgeKernel& k, const std::vector<double>& times, Eigen::Index n_paths,
                                       std::uint64_t seed, const SamplerOptions& opt = {});

/// Runs fn(path) for every path index, split into contiguous blocks over at
/// most opt.threads workers.
void for_each_path(Eigen::Index n_paths, const SamplerOptions& opt, const std::function<void(Eigen::Index)>& fn);

/// Validates a sampling grid: non-empty, strictly increasing, inside [0, T]
/// and not within eps of T unless equal to T.
void check_grid(const BridgeKernel& k, const std::vector<double>& grid, bool require_zero_start);

/// CSV with '#'-prefixed comment lines, then `path,t,x1,...,xd`, one row per
/// (path, time), doubles printed with 17 significant digits.
void write_ensemble_csv(std::ostream& os, const PathEnsemble& e, const std::vector<std::string>& comments = {});

}  // namespace linbridge
