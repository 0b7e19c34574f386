#pragma once

// Generators and independent oracles shared by the test binaries.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "hlmdp/envs.hpp"
#include "hlmdp/hierarchy.hpp"
#include "hlmdp/lmdp.hpp"
#include "hlmdp/solver.hpp"

namespace testing {

using namespace hlmdp;
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random distribution over the given targets, summing to 1 up to rounding.
inline std::vector<Successor> random_row(Rng& rng, const std::vector<std::size_t>& targets) {
  std::vector<double> w(targets.size());
  for (double& x : w) x = uniform(rng, 0.1, 1.0);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<Successor> row;
  for (std::size_t i = 0; i < targets.size(); ++i) row.push_back({targets[i], w[i] / total});
  return row;
}

inline std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(n, k));
  return all;
}

// Valid LMDP with S in [1, max_s] and T in [1, 3]; one terminal may be -inf.
inline Lmdp random_lmdp(Rng& rng, std::size_t max_s = 8) {
  const std::size_t S = pick(rng, 1, max_s);
  const std::size_t T = pick(rng, 1, 3);
  std::vector<std::vector<Successor>> rows(S);
  for (auto& row : rows) row = random_row(rng, sample_distinct(rng, S + T, pick(rng, 1, 4)));
  std::vector<double> r(S), j(T);
  for (double& x : r) x = uniform(rng, -2.0, -0.1);
  for (double& x : j) x = uniform(rng, -3.0, 0.0);
  if (T > 1 && pick(rng, 0, 3) == 0) j[0] = kNegInf;
  return Lmdp(S, T, std::move(rows), std::move(r), std::move(j));
}

// Independent oracle: dense LU solve of z_S = D (P_SS z_S + P_ST z_T).
inline std::vector<double> dense_solve(const Lmdp& lmdp, double lambda) {
  const auto S = static_cast<Eigen::Index>(lmdp.n_states());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(S, S);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const double d = std::exp(lmdp.state_reward(static_cast<std::size_t>(s)) / lambda);
    auto cols = lmdp.successors(static_cast<std::size_t>(s));
    auto probs = lmdp.probabilities(static_cast<std::size_t>(s));
    for (std::size_t e = 0; e < cols.size(); ++e) {
      if (lmdp.is_terminal(cols[e])) {
        b(s) += d * probs[e] * std::exp(lmdp.terminal_reward(cols[e]) / lambda);
      } else {
        a(s, static_cast<Eigen::Index>(cols[e])) -= d * probs[e];
      }
    }
  }
  Eigen::VectorXd z = a.partialPivLu().solve(b);
  std::vector<double> out(lmdp.n_total());
  for (Eigen::Index s = 0; s < S; ++s) out[static_cast<std::size_t>(s)] = z(s);
  for (std::size_t t = lmdp.n_states(); t < lmdp.n_total(); ++t) out[t] = std::exp(lmdp.terminal_reward(t) / lambda);
  return out;
}

// Values below the solver's floor region count as zero.
inline double rel_diff(double a, double b) {
  if (a == b || (std::fabs(a) < 1e-250 && std::fabs(b) < 1e-250)) return 0.0;
  return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b));
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, rel_diff(a[i], b[i]));
  return m;
}

// Max |v_a - v_b| over states where both z are positive.
inline double max_abs_dv(const std::vector<double>& za, const std::vector<double>& zb, std::size_t n,
                         double lambda) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (za[i] > 0.0 && zb[i] > 0.0) m = std::max(m, std::fabs(v_from_z(za[i], lambda) - v_from_z(zb[i], lambda)));
  }
  return m;
}

struct RandomDecomposable {
  Lmdp lmdp;
  DecompositionInput input;
};

// L copies of one random K-state template with N slots. Each copy wires its
// slots to distinct outside states or terminals, so the copies are equivalent
// by construction.
inline RandomDecomposable random_decomposable(Rng& rng) {
  const std::size_t K = pick(rng, 1, 4);
  const std::size_t N = pick(rng, 1, 3);
  const std::size_t L = pick(rng, 1, 4);
  const std::size_t T = N + 1;
  const std::size_t S = L * K;
  std::vector<std::vector<Successor>> tmpl(K);
  for (auto& row : tmpl) row = random_row(rng, sample_distinct(rng, K + N, pick(rng, 1, std::min<std::size_t>(4, K + N))));
  std::vector<double> r(K);
  for (double& x : r) x = uniform(rng, -1.5, -0.2);

  RandomDecomposable out{Lmdp(), {}};
  out.input.partition_of.resize(S);
  out.input.local_index.resize(S);
  out.input.class_of.assign(L, 0);
  out.input.slot_targets.resize(L);
  std::vector<std::vector<Successor>> rows(S);
  std::vector<double> rewards(S);
  for (std::size_t p = 0; p < L; ++p) {
    std::vector<std::size_t> pool;
    for (std::size_t s = 0; s < S; ++s) {
      if (s / K != p) pool.push_back(s);
    }
    for (std::size_t t = 0; t < T; ++t) pool.push_back(S + t);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(N);
    out.input.slot_targets[p] = pool;
    for (std::size_t x = 0; x < K; ++x) {
      const std::size_t s = p * K + x;
      out.input.partition_of[s] = p;
      out.input.local_index[s] = x;
      rewards[s] = r[x];
      for (const auto& e : tmpl[x]) {
        rows[s].push_back({e.state < K ? p * K + e.state : pool[e.state - K], e.prob});
      }
    }
  }
  std::vector<double> j(T);
  for (double& x : j) x = uniform(rng, -2.0, 0.0);
  out.lmdp = Lmdp(S, T, std::move(rows), std::move(rewards), std::move(j));
  return out;
}

inline RoomsConfig random_rooms(Rng& rng) {
  RoomsConfig c;
  c.rooms_x = pick(rng, 1, 3);
  c.rooms_y = pick(rng, 1, 3);
  c.room_w = pick(rng, 1, 4);
  c.room_h = pick(rng, 1, 4);
  c.door_row = pick(rng, 0, c.room_h - 1);
  c.door_col = pick(rng, 0, c.room_w - 1);
  c.goal_room = std::pair{pick(rng, 0, c.rooms_x - 1), pick(rng, 0, c.rooms_y - 1)};
  c.goal_cell = std::pair{pick(rng, 0, c.room_w - 1), pick(rng, 0, c.room_h - 1)};
  c.interior_reward = uniform(rng, -2.0, -0.2);
  c.goal_reward = uniform(rng, -1.0, 0.0);
  c.padded_equivalence = pick(rng, 0, 1) == 1;
  return c;
}

}  // namespace testing
