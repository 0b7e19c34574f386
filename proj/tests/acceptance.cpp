// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hlmdp/bench.hpp"
#include "hlmdp/envs.hpp"
#include "hlmdp/hierarchy.hpp"
#include "hlmdp/learner.hpp"
#include "hlmdp/solver.hpp"

using namespace hlmdp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double rel_diff(double a, double b) {
  if (a == b) return 0.0;
  return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b));
}

double max_abs_dv(const ZVector& a, const ZVector& b, std::size_t n, double lambda) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] > 0.0 && b[i] > 0.0) m = std::max(m, std::fabs(v_from_z(a[i], lambda) - v_from_z(b[i], lambda)));
    if ((a[i] > 0.0) != (b[i] > 0.0)) m = std::max(m, HUGE_VAL);
  }
  return m;
}

Domain rooms(std::size_t x, std::size_t y) {
  RoomsConfig c;
  c.rooms_x = x;
  c.rooms_y = y;
  return build_rooms(c);
}

double max_base_sum(const BaseValueSet& bases) {
  double worst = 0.0;
  for (const auto& tab : bases.classes) {
    for (std::size_t x = 0; x < tab.n_local; ++x) {
      double sum = 0.0;
      for (std::size_t k = 0; k < tab.n_slots; ++k) sum += tab.at(k, x);
      worst = std::max(worst, sum);
    }
  }
  return worst;
}

double mean_final_mae(const Domain& d, LearnConfig cfg, const std::vector<double>& truth, int seeds, bool flat) {
  double total = 0.0;
  for (int s = 0; s < seeds; ++s) {
    cfg.seed = static_cast<std::uint64_t>(s);
    total += flat ? train_flat(d.lmdp, cfg, truth).trace.back().mae : train(d.lmdp, d.dec, cfg, truth).trace.back().mae;
  }
  return total / seeds;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

Outcome c1_model_based() {
  auto t0 = Clock::now();
  Domain d = rooms(2, 2);
  auto f = solve_flat(d.lmdp, SolveConfig{});
  auto h = solve_hierarchical(d.lmdp, d.dec, SolveConfig{});
  const double dv = max_abs_dv(h.z, f.z, d.lmdp.n_states(), 1.0);
  const double secs = seconds_since(t0);
  return {dv <= 1e-6 && secs < 1.0, fmt("max|dv|=%.3g", dv) + fmt(" over 100 states, %.3fs", secs)};
}

Outcome c2_compositionality() {
  Domain d = rooms(2, 2);
  const auto& t = d.dec.templates[0];
  auto tab = solve_bases(t, SolveConfig{});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 0.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> j(t.n_slots());
    for (double& x : j) x = u(rng);
    std::vector<std::vector<Successor>> rows(t.n_local());
    for (std::size_t x = 0; x < t.n_local(); ++x) {
      auto cols = t.dynamics.successors(x);
      auto probs = t.dynamics.probabilities(x);
      for (std::size_t e = 0; e < cols.size(); ++e) rows[x].push_back({cols[e], probs[e]});
    }
    Lmdp direct(t.n_local(), t.n_slots(), std::move(rows), t.dynamics.state_rewards(), j);
    auto z = solve_flat(direct, SolveConfig{}).z;
    for (std::size_t x = 0; x < t.n_local(); ++x) {
      double combo = 0.0;
      for (std::size_t k = 0; k < t.n_slots(); ++k) combo += std::exp(j[k]) * tab.at(k, x);
      worst = std::max(worst, rel_diff(z[x], combo));
    }
  }
  return {worst <= 1e-8, fmt("max relative z error %.3g over 100 assignments", worst)};
}

Outcome c3_base_sum() {
  double worst = 0.0;
  for (const Domain& d : {rooms(2, 2), rooms(10, 10), build_taxi(TaxiConfig{})}) {
    worst = std::max(worst, max_base_sum(solve_all_bases(d.dec.templates, SolveConfig{})));
  }
  RoomsConfig strict;
  strict.padded_equivalence = false;
  strict.rooms_x = strict.rooms_y = 3;
  worst = std::max(worst, max_base_sum(solve_all_bases(build_rooms(strict).dec.templates, SolveConfig{})));
  return {worst <= 1.0 + 1e-12, fmt("max sum_k z^k = %.15g (rooms padded/strict, taxi)", worst)};
}

Outcome c4_exit_uniqueness() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1e-3, 10.0);
  double worst = 0.0;
  for (const Domain& d : {rooms(2, 2), rooms(3, 3), build_taxi(TaxiConfig{})}) {
    auto bases = solve_all_bases(d.dec.templates, SolveConfig{});
    auto sys = build_exit_system(d.dec.spec, bases, d.lmdp, 1.0);
    std::vector<ZVector> sols;
    for (int i = 0; i < 10; ++i) {
      std::vector<double> init(sys.exits.size());
      for (double& x : init) x = u(rng);
      sols.push_back(solve_exit_system(sys, SolveConfig{}, std::span<const double>(init)).z);
    }
    for (std::size_t a = 0; a < sols.size(); ++a) {
      for (std::size_t b = a + 1; b < sols.size(); ++b) {
        for (std::size_t e = 0; e < sols[a].size(); ++e) worst = std::max(worst, rel_diff(sols[a][e], sols[b][e]));
      }
    }
  }
  return {worst <= 1e-8, fmt("max pairwise relative difference %.3g (10 starts each on 2x2, 3x3, taxi)", worst)};
}

Outcome c5_sizes() {
  auto s2 = decomposition_size(rooms(2, 2).dec.spec);
  auto s10 = decomposition_size(rooms(10, 10).dec.spec);
  const std::size_t cmn = s2.n_classes * s2.max_slots * s2.max_local;
  const bool ok = cmn == 125 && s2.n_exits == 9 && s10.stored_values == 486 && s10.n_exits == 361 &&
                  s10.periter_cost == 2305 && s10.flat_periter_cost == 10000;
  return {ok, "CMN=" + std::to_string(cmn) + " E=" + std::to_string(s2.n_exits) + "; 10x10: stored=" +
                  std::to_string(s10.stored_values) + " E=" + std::to_string(s10.n_exits) + " periter=" +
                  std::to_string(s10.periter_cost) + " flat=" + std::to_string(s10.flat_periter_cost)};
}

Outcome c6_model_free() {
  auto t0 = Clock::now();
  Domain d = rooms(2, 2);
  auto truth = ground_truth(d.lmdp, SolveConfig{});
  bool ok = true;
  std::string detail;
  for (Variant v : {Variant::V1, Variant::V2, Variant::V3}) {
    LearnConfig cfg;
    cfg.variant = v;
    cfg.max_episodes = 20000;
    cfg.evaluation_period = 1000;
    const double m = mean_final_mae(d, cfg, truth, 10, false);
    ok = ok && m <= 0.1;
    detail += std::string(to_string(v)) + fmt("=%.4f ", m);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 120.0, detail + fmt("(mean of 10 seeds, %.1fs)", secs)};
}

Outcome c7_variant_order() {
  Domain d = rooms(3, 3);
  auto truth = ground_truth(d.lmdp, SolveConfig{});
  LearnConfig cfg;
  cfg.max_episodes = 1000000;
  cfg.max_total_steps = 50000;
  cfg.evaluation_period = 1000;
  const int seeds = 20;
  cfg.variant = Variant::V1;
  const double v1 = mean_final_mae(d, cfg, truth, seeds, false);
  cfg.variant = Variant::V3;
  const double v3 = mean_final_mae(d, cfg, truth, seeds, false);
  return {v3 <= v1, fmt("V3=%.4f", v3) + fmt(" V1=%.4f at 50000 steps, 20 seeds", v1)};
}

Outcome c8_flat_zis() {
  RoomsConfig c;
  c.rooms_x = c.rooms_y = 1;
  c.padded_equivalence = false;  // a plain gridworld: no padding terminal
  Domain d = build_rooms(c);
  auto truth = ground_truth(d.lmdp, SolveConfig{});
  LearnConfig cfg;
  cfg.max_episodes = 10000;
  cfg.evaluation_period = 1000;
  const double m = mean_final_mae(d, cfg, truth, 10, true);
  return {m <= 0.05, fmt("Z-IS final MAE %.3g (mean of 10 seeds, 10000 episodes)", m)};
}

Outcome c9_is_invariance() {
  // Three states, each with three successors.
  Lmdp m(3, 1, {{{0, 0.2}, {1, 0.5}, {3, 0.3}}, {{0, 0.4}, {2, 0.6}}, {{1, 0.3}, {2, 0.3}, {3, 0.4}}},
         {-1.0, -0.5, -0.3}, {0.0});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ZVector zhat{u(rng), u(rng), u(rng), 1.0};
    for (std::size_t s = 0; s < 3; ++s) {
      auto pi = policy_from_z(m, zhat, s);
      auto cols = m.successors(s);
      auto probs = m.probabilities(s);
      double corrected = 0.0;
      double plain = 0.0;
      for (std::size_t e = 0; e < cols.size(); ++e) {
        corrected += pi[e] * (std::exp(m.state_reward(s)) * zhat[cols[e]] * probs[e] / pi[e]);
        plain += probs[e] * std::exp(m.state_reward(s)) * zhat[cols[e]];
      }
      worst = std::max(worst, std::fabs(corrected - plain));
    }
  }
  return {worst <= 1e-12, fmt("max |E_pi[corrected] - E_P[target]| = %.3g", worst)};
}

Outcome c10_taxi() {
  TaxiConfig cfg;
  Domain d = build_taxi(cfg);  // induce_partition verifies every member
  const auto& spec = d.dec.spec;
  std::set<std::size_t> classes;
  for (std::size_t at = 0; at < 4; ++at) {
    for (std::size_t dest = 0; dest < 4; ++dest) classes.insert(spec.class_of[taxi_waiting_partition(cfg, at, dest)]);
  }
  const std::size_t waiting = 16;
  auto f = solve_flat(d.lmdp, SolveConfig{});
  auto h = solve_hierarchical(d.lmdp, d.dec, SolveConfig{});
  const double dv = max_abs_dv(h.z, f.z, d.lmdp.n_states(), 1.0);
  return {classes.size() == 1 && dv <= 1e-6,
          std::to_string(waiting) + " waiting partitions in " + std::to_string(classes.size()) +
              " class; " + fmt("max|dv|=%.3g", dv)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"model-based equivalence", c1_model_based},
      {"compositionality exactness", c2_compositionality},
      {"base sum bound", c3_base_sum},
      {"exit solution uniqueness", c4_exit_uniqueness},
      {"size accounting", c5_sizes},
      {"model-free convergence", c6_model_free},
      {"variant ordering", c7_variant_order},
      {"flat Z-IS baseline", c8_flat_zis},
      {"off-policy invariance", c9_is_invariance},
      {"taxi structure", c10_taxi},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-28s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
