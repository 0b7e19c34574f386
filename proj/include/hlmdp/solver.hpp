#pragma once

// Exact solution of an LMDP in exponentiated-value space, policy extraction and
// the single-sample Z-learning update.

#include <cstddef>
#include <span>
#include <vector>

#include "hlmdp/kernels.hpp"
#include "hlmdp/lmdp.hpp"

namespace hlmdp {

/// Exponentiated values z(s) = exp(v(s) / lambda). Length S or S+T depending
/// on context; z-space is the primary representation everywhere.
using ZVector = std::vector<double>;

struct SolveConfig {
  double lambda = 1.0;
  /// Stop when max_s |z_k(s) - z_{k-1}(s)| / max(z_k(s), kZFloor) <= tol.
  double tol = 1e-10;
  std::size_t max_iters = 100000;
  Backend backend = Backend::openmp;

  void check() const;
};

/// Values below this are treated as zero when forming relative changes, and
/// converged values below it are reported as exactly zero.
inline constexpr double kZFloor = 1e-300;

struct PowerIterationResult {
  ZVector z;  // over S+T for the flat solver
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Per-terminal exponentiated rewards exp(J(t)/lambda); -inf maps to 0.
ZVector terminal_z(const Lmdp& lmdp, double lambda);

/// exp(R(s)/lambda) for every non-terminal state.
std::vector<double> reward_factors(const Lmdp& lmdp, double lambda);

/// z'(s) = exp(R(s)/lambda) * sum_s' P(s'|s) z_plus(s') over non-terminal s.
ZVector bellman_backup(const Lmdp& lmdp, std::span<const double> z_plus, const SolveConfig& cfg);

/// Power iteration from z = 1 on non-terminals with terminals pinned to
/// exp(J/lambda). Throws ConvergenceError after max_iters.
PowerIterationResult solve_flat(const Lmdp& lmdp, const SolveConfig& cfg);

/// Probability over the support of P(.|s), aligned with lmdp.successors(s).
using PolicyRow = std::vector<double>;

/// Optimal policy row of state s given z over S+T. Throws Error when
/// sum_t P(t|s) z(t) == 0 (a dead state).
PolicyRow policy_from_z(const Lmdp& lmdp, std::span<const double> z_plus, std::size_t s);

/// R(s) - lambda * KL(pi || P(.|s)). `pi` is aligned with lmdp.successors(s).
double kl_penalized_reward(const Lmdp& lmdp, std::size_t s, std::span<const double> pi,
                           double lambda);

struct TransitionSample {
  std::size_t from_state = 0;
  double reward = 0.0;
  std::size_t to_state = 0;
  double uncontrolled_prob = 1.0;
  double behavior_prob = 1.0;
};

/// Importance-corrected Z-learning:
///   (1 - alpha) z_s + alpha * exp(r/lambda) * z_next * P / pi_behavior
double z_learning_step(double z_hat_s, const TransitionSample& sample, double z_hat_next,
                       double alpha, double lambda);

/// lambda * ln z, with z == 0 mapped to -inf.
std::vector<double> v_from_z(std::span<const double> z, double lambda);
std::vector<double> z_from_v(std::span<const double> v, double lambda);
double v_from_z(double z, double lambda);
double z_from_v(double v, double lambda);

}  // namespace hlmdp
