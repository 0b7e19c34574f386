#include "hlmdp/solver.hpp"

#include <cmath>
#include <string>

namespace hlmdp {

void SolveConfig::check() const {
  if (!(lambda > 0.0)) throw Error("solve config: lambda must be positive");
  if (!(tol > 0.0)) throw Error("solve config: tol must be positive");
  if (max_iters < 1) throw Error("solve config: max_iters must be at least 1");
}

ZVector terminal_z(const Lmdp& lmdp, double lambda) {
  ZVector out(lmdp.n_terminal());
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t] = std::exp(lmdp.terminal_rewards()[t] / lambda);
  }
  return out;
}

std::vector<double> reward_factors(const Lmdp& lmdp, double lambda) {
  std::vector<double> out(lmdp.n_states());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = std::exp(lmdp.state_reward(s) / lambda);
  return out;
}

ZVector bellman_backup(const Lmdp& lmdp, std::span<const double> z_plus, const SolveConfig& cfg) {
  if (z_plus.size() != lmdp.n_total()) {
    throw DimensionError("bellman_backup: z has " + std::to_string(z_plus.size()) +
                         " entries, expected " + std::to_string(lmdp.n_total()));
  }
  auto scale = reward_factors(lmdp, cfg.lambda);
  ZVector out(lmdp.n_states());
  kernels::scaled_matvec(cfg.backend, lmdp.transitions(), scale, z_plus, out);
  return out;
}

PowerIterationResult solve_flat(const Lmdp& lmdp, const SolveConfig& cfg) {
  cfg.check();
  require_valid(lmdp);
  const std::size_t n = lmdp.n_states();
  auto scale = reward_factors(lmdp, cfg.lambda);
  auto pins = terminal_z(lmdp, cfg.lambda);

  ZVector cur(lmdp.n_total(), 1.0);
  std::copy(pins.begin(), pins.end(), cur.begin() + static_cast<std::ptrdiff_t>(n));
  ZVector next = cur;

  PowerIterationResult res;
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    std::span<double> head(next.data(), n);
    kernels::scaled_matvec(cfg.backend, lmdp.transitions(), scale, cur, head);
    res.residual = kernels::max_relative_change(cfg.backend, std::span<const double>(cur.data(), n),
                                                head, kZFloor);
    cur.swap(next);
    res.iterations = it;
    if (res.residual <= cfg.tol) {
      for (std::size_t i = 0; i < n; ++i) {
        if (cur[i] < kZFloor) cur[i] = 0.0;
      }
      res.z = std::move(cur);
      return res;
    }
  }
  throw ConvergenceError("solve_flat: no convergence after " + std::to_string(cfg.max_iters) +
                             " iterations, residual " + std::to_string(res.residual),
                         res.residual, res.iterations);
}

PolicyRow policy_from_z(const Lmdp& lmdp, std::span<const double> z_plus, std::size_t s) {
  auto cols = lmdp.successors(s);
  auto probs = lmdp.probabilities(s);
  PolicyRow row(cols.size());
  double denom = 0.0;
  for (std::size_t e = 0; e < cols.size(); ++e) {
    row[e] = probs[e] * z_plus[cols[e]];
    denom += row[e];
  }
  if (!(denom > 0.0)) {
    throw Error("policy_from_z: dead state " + std::to_string(s) + " (all successors have z = 0)");
  }
  for (double& p : row) p /= denom;
  return row;
}

double kl_penalized_reward(const Lmdp& lmdp, std::size_t s, std::span<const double> pi,
                           double lambda) {
  auto probs = lmdp.probabilities(s);
  if (pi.size() != probs.size()) {
    throw Error("kl_penalized_reward: policy row must cover the support of P(.|" +
                std::to_string(s) + ")");
  }
  double kl = 0.0;
  for (std::size_t e = 0; e < pi.size(); ++e) {
    if (pi[e] < 0.0) throw Error("kl_penalized_reward: negative probability");
    if (pi[e] == 0.0) continue;
    kl += pi[e] * std::log(pi[e] / probs[e]);
  }
  return lmdp.state_reward(s) - lambda * kl;
}

double z_learning_step(double z_hat_s, const TransitionSample& sample, double z_hat_next,
                       double alpha, double lambda) {
  if (!(sample.behavior_prob > 0.0)) {
    throw Error("z_learning_step: behavior probability must be positive");
  }
  double target = std::exp(sample.reward / lambda) * z_hat_next *
                  (sample.uncontrolled_prob / sample.behavior_prob);
  return (1.0 - alpha) * z_hat_s + alpha * target;
}

double v_from_z(double z, double lambda) {
  return z > 0.0 ? lambda * std::log(z) : kNegInf;
}

double z_from_v(double v, double lambda) { return std::exp(v / lambda); }

std::vector<double> v_from_z(std::span<const double> z, double lambda) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = v_from_z(z[i], lambda);
  return out;
}

std::vector<double> z_from_v(std::span<const double> v, double lambda) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = z_from_v(v[i], lambda);
  return out;
}

}  // namespace hlmdp
