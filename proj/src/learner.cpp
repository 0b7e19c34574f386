#include "hlmdp/learner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>

namespace hlmdp {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::V1: return "V1";
    case Variant::V2: return "V2";
    case Variant::V3: return "V3";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "V1" || s == "v1") return Variant::V1;
  if (s == "V2" || s == "v2") return Variant::V2;
  if (s == "V3" || s == "v3") return Variant::V3;
  return std::nullopt;
}

void LearnConfig::check() const {
  if (!(lambda > 0.0)) throw Error("learn config: lambda must be positive");
  if (!(c_base > 0.0) || !(c_exit > 0.0) || !(c_flat > 0.0)) throw Error("learn config: learning-rate constants must be positive");
  if (evaluation_period == 0) throw Error("learn config: evaluation_period must be at least 1");
}

double lr_schedule(double c, std::size_t n) { return c / (c + static_cast<double>(n)); }

LearnerState make_learner_state(const Lmdp& lmdp, const Decomposition& dec, double lambda) {
  LearnerState ls;
  for (const auto& t : dec.templates) ls.base_estimates.classes.emplace_back(t.n_local(), t.n_slots(), 1.0);
  const auto& spec = dec.spec;
  ls.exit_estimates.assign(spec.n_exits(), 1.0);
  for (std::size_t e = 0; e < spec.n_exits(); ++e) {
    if (spec.exit_pinned[e]) ls.exit_estimates[e] = std::exp(lmdp.terminal_reward(spec.exits[e]) / lambda);
  }
  return ls;
}

double estimate_state_value(const LearnerState& ls, const Lmdp& lmdp, const PartitionSpec& spec,
                            std::size_t s, double lambda) {
  if (lmdp.is_terminal(s)) return std::exp(lmdp.terminal_reward(s) / lambda);
  return compose_state_value(spec, ls.base_estimates, ls.exit_estimates, s);
}

PolicyRow behavior_policy(const LearnerState& ls, const Lmdp& lmdp, const PartitionSpec& spec,
                          std::size_t s, double lambda) {
  auto cols = lmdp.successors(s);
  auto probs = lmdp.probabilities(s);
  PolicyRow row(cols.size());
  double denom = 0.0;
  for (std::size_t e = 0; e < cols.size(); ++e) {
    row[e] = probs[e] * estimate_state_value(ls, lmdp, spec, cols[e], lambda);
    denom += row[e];
  }
  if (!(denom > 0.0)) return PolicyRow(probs.begin(), probs.end());
  for (double& p : row) p /= denom;
  return row;
}

namespace {

// Value of base k of the template at successor `next` of a state in partition p:
// the estimate when `next` stays inside, the boundary constant otherwise. When
// several slots lead to the same place, the constant is split by template mass.
void successor_base_values(const LearnerState& ls, const Lmdp& lmdp, const Decomposition& dec, std::size_t s,
                           std::size_t next, std::vector<double>& out) {
  const auto& spec = dec.spec;
  const std::size_t p = spec.partition_of[s];
  const std::size_t j = spec.class_of[p];
  const BaseTable& tab = ls.base_estimates.classes[j];
  out.assign(tab.n_slots, 0.0);
  if (!lmdp.is_terminal(next) && spec.partition_of[next] == p) {
    const std::size_t nx = spec.local_index[next];
    for (std::size_t k = 0; k < tab.n_slots; ++k) out[k] = tab.at(k, nx);
    return;
  }
  const bool zero_next = lmdp.is_terminal(next) && lmdp.terminal_reward(next) == kNegInf;
  const Lmdp& local = dec.templates[j].dynamics;
  const std::size_t x = spec.local_index[s];
  auto cols = local.successors(x);
  auto probs = local.probabilities(x);
  double total = 0.0;
  for (std::size_t e = 0; e < cols.size(); ++e) {
    if (cols[e] < tab.n_local) continue;
    const std::size_t k = cols[e] - tab.n_local;
    const bool zero_slot = spec.slot_exit[p][k] == kAbsent;
    const bool match = zero_next ? zero_slot : (!zero_slot && spec.slot_target[p][k] == next);
    if (match) {
      out[k] += probs[e];
      total += probs[e];
    }
  }
  if (!(total > 0.0)) {
    throw DecompositionError("intra_task_update: state " + std::to_string(s) + " leaves partition " +
                             std::to_string(p) + " to " + std::to_string(next) +
                             ", which is not one of its terminal slots");
  }
  for (double& v : out) v /= total;
}

}  // namespace

void intra_task_update(LearnerState& ls, const Lmdp& lmdp, const Decomposition& dec,
                       const TransitionSample& sample, double alpha, double lambda,
                       std::span<const double> behavior_row) {
  if (!(sample.behavior_prob > 0.0)) throw Error("intra_task_update: behavior probability must be positive");
  const auto& spec = dec.spec;
  const std::size_t s = sample.from_state;
  BaseTable& tab = ls.base_estimates.classes[spec.class_of[spec.partition_of[s]]];
  const std::size_t x = spec.local_index[s];

  std::vector<double> next_value;
  successor_base_values(ls, lmdp, dec, s, sample.to_state, next_value);
  const double ratio = sample.uncontrolled_prob / sample.behavior_prob;
  for (double& v : next_value) v *= ratio;

  // Successors the behavior policy never picks are folded in by their expected
  // contribution, which keeps the corrected target unbiased.
  if (!behavior_row.empty()) {
    auto cols = lmdp.successors(s);
    auto probs = lmdp.probabilities(s);
    if (behavior_row.size() != cols.size()) throw DimensionError("intra_task_update: behavior row size mismatch");
    std::vector<double> off;
    for (std::size_t e = 0; e < cols.size(); ++e) {
      if (behavior_row[e] > 0.0) continue;
      successor_base_values(ls, lmdp, dec, s, cols[e], off);
      for (std::size_t k = 0; k < tab.n_slots; ++k) next_value[k] += probs[e] * off[k];
    }
  }

  const double gain = std::exp(sample.reward / lambda);
  for (std::size_t k = 0; k < tab.n_slots; ++k) {
    tab.at(k, x) = (1.0 - alpha) * tab.at(k, x) + alpha * gain * next_value[k];
  }
}

void exit_update(LearnerState& ls, const PartitionSpec& spec, std::size_t exit, double alpha) {
  const std::size_t s = spec.exits[exit];
  double composed = compose_state_value(spec, ls.base_estimates, ls.exit_estimates, s);
  ls.exit_estimates[exit] = (1.0 - alpha) * ls.exit_estimates[exit] + alpha * composed;
}

std::vector<std::size_t> exits_to_update(const PartitionSpec& spec, std::size_t s_t, std::size_t s_next,
                                         Variant variant) {
  std::vector<std::size_t> out;
  if (spec.is_exit(s_t)) out.push_back(spec.exit_index_of[s_t]);
  const std::size_t p = spec.partition_of[s_t];
  const bool leaves = s_next >= spec.n_states || spec.partition_of[s_next] != p;
  if (leaves && variant == Variant::V2) {
    const auto& own = spec.partition_exits[p];
    out.insert(out.end(), own.begin(), own.end());
  } else if (leaves && variant == Variant::V3) {
    for (std::size_t q : spec.members_of[spec.class_of[p]]) {
      const auto& ex = spec.partition_exits[q];
      out.insert(out.end(), ex.begin(), ex.end());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> trigger_exit_updates(LearnerState& ls, const PartitionSpec& spec,
                                              std::size_t s_t, std::size_t s_next, Variant variant,
                                              double alpha) {
  auto todo = exits_to_update(spec, s_t, s_next, variant);
  for (std::size_t e : todo) exit_update(ls, spec, e, alpha);
  return todo;
}

double mae(std::span<const double> estimate_v, std::span<const double> truth_v) {
  if (estimate_v.size() != truth_v.size()) throw DimensionError("mae: state sets differ");
  if (truth_v.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < truth_v.size(); ++i) {
    if (estimate_v[i] == kNegInf && truth_v[i] == kNegInf) continue;
    acc += std::fabs(estimate_v[i] - truth_v[i]);
  }
  return acc / static_cast<double>(truth_v.size());
}

std::vector<double> estimated_values(const LearnerState& ls, const Lmdp& lmdp, const PartitionSpec& spec,
                                     double lambda) {
  std::vector<double> v(lmdp.n_states());
  for (std::size_t s = 0; s < v.size(); ++s) {
    v[s] = v_from_z(compose_state_value(spec, ls.base_estimates, ls.exit_estimates, s), lambda);
  }
  return v;
}

namespace {

class StartSampler {
 public:
  StartSampler(std::size_t n_states, std::span<const double> weights) : n_(n_states) {
    if (weights.empty()) return;
    if (weights.size() != n_states) throw DimensionError("start distribution must cover every non-terminal state");
    double acc = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw Error("start distribution has a negative weight");
      acc += w;
      cdf_.push_back(acc);
    }
    if (!(acc > 0.0)) throw Error("start distribution has no mass");
  }

  template <class Rng>
  std::size_t operator()(Rng& rng) const {
    if (cdf_.empty()) return std::uniform_int_distribution<std::size_t>(0, n_ - 1)(rng);
    double u = std::uniform_real_distribution<double>(0.0, cdf_.back())(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf_.begin()), n_ - 1);
  }

 private:
  std::size_t n_;
  std::vector<double> cdf_;
};

template <class Rng>
std::size_t sample_index(const PolicyRow& row, Rng& rng) {
  double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t e = 0; e < row.size(); ++e) {
    if (row[e] <= 0.0) continue;
    acc += row[e];
    last = e;
    if (u < acc) return e;
  }
  return last;
}

std::size_t step_cap(const LearnConfig& cfg, const Lmdp& lmdp) {
  return cfg.max_steps_per_episode ? cfg.max_steps_per_episode : 10 * lmdp.n_states();
}

// Shared episode loop. `step` performs one transition and returns the successor.
template <class Step, class Eval>
std::vector<TracePoint> run_episodes(const Lmdp& lmdp, const LearnConfig& cfg, std::span<const double> start,
                                     std::size_t& episodes, std::size_t& steps, Step&& step, Eval&& eval) {
  std::vector<TracePoint> trace;
  if (lmdp.n_states() == 0) return trace;
  std::mt19937_64 rng(cfg.seed);
  StartSampler starts(lmdp.n_states(), start);
  const std::size_t cap = step_cap(cfg, lmdp);
  auto budget_left = [&] { return cfg.max_total_steps == 0 || steps < cfg.max_total_steps; };
  while (episodes < cfg.max_episodes && budget_left()) {
    const std::size_t n = episodes;
    std::size_t s = starts(rng);
    for (std::size_t t = 0; t < cap && budget_left(); ++t) {
      std::size_t next = step(s, n, rng);
      ++steps;
      if (lmdp.is_terminal(next)) break;
      s = next;
    }
    ++episodes;
    if (episodes % cfg.evaluation_period == 0) trace.push_back({steps, episodes, eval()});
  }
  if (episodes > 0 && (trace.empty() || trace.back().episode != episodes)) {
    trace.push_back({steps, episodes, eval()});
  }
  return trace;
}

}  // namespace

HierarchicalRun train(const Lmdp& lmdp, const Decomposition& dec, const LearnConfig& cfg,
                      std::span<const double> truth_v, std::span<const double> start) {
  cfg.check();
  if (truth_v.size() != lmdp.n_states()) throw DimensionError("train: ground truth must cover every non-terminal state");
  HierarchicalRun run;
  run.state = make_learner_state(lmdp, dec, cfg.lambda);
  auto& ls = run.state;
  const auto& spec = dec.spec;
  auto step = [&](std::size_t s, std::size_t n, std::mt19937_64& rng) {
    PolicyRow pi = behavior_policy(ls, lmdp, spec, s, cfg.lambda);
    std::size_t e = sample_index(pi, rng);
    TransitionSample sample{s, lmdp.state_reward(s), lmdp.successors(s)[e], lmdp.probabilities(s)[e], pi[e]};
    intra_task_update(ls, lmdp, dec, sample, lr_schedule(cfg.c_base, n), cfg.lambda, pi);
    trigger_exit_updates(ls, spec, s, sample.to_state, cfg.variant, lr_schedule(cfg.c_exit, n));
    return sample.to_state;
  };
  auto eval = [&] { return mae(estimated_values(ls, lmdp, spec, cfg.lambda), truth_v); };
  run.trace = run_episodes(lmdp, cfg, start, ls.episode_counter, ls.step_counter, step, eval);
  return run;
}

FlatRun train_flat(const Lmdp& lmdp, const LearnConfig& cfg, std::span<const double> truth_v,
                   std::span<const double> start) {
  cfg.check();
  if (truth_v.size() != lmdp.n_states()) throw DimensionError("train_flat: ground truth must cover every non-terminal state");
  FlatRun run;
  run.z.assign(lmdp.n_total(), 1.0);
  auto pins = terminal_z(lmdp, cfg.lambda);
  std::copy(pins.begin(), pins.end(), run.z.begin() + static_cast<std::ptrdiff_t>(lmdp.n_states()));
  auto& z = run.z;
  auto step = [&](std::size_t s, std::size_t n, std::mt19937_64& rng) {
    auto cols = lmdp.successors(s);
    auto probs = lmdp.probabilities(s);
    PolicyRow pi(cols.size());
    double denom = 0.0;
    for (std::size_t e = 0; e < cols.size(); ++e) denom += (pi[e] = probs[e] * z[cols[e]]);
    if (denom > 0.0) {
      for (double& q : pi) q /= denom;
    } else {
      pi.assign(probs.begin(), probs.end());
    }
    std::size_t e = sample_index(pi, rng);
    TransitionSample sample{s, lmdp.state_reward(s), cols[e], probs[e], pi[e]};
    z[s] = z_learning_step(z[s], sample, z[cols[e]], lr_schedule(cfg.c_flat, n), cfg.lambda);
    return cols[e];
  };
  auto eval = [&] {
    return mae(v_from_z(std::span<const double>(z.data(), lmdp.n_states()), cfg.lambda), truth_v);
  };
  run.trace = run_episodes(lmdp, cfg, start, run.episode_counter, run.step_counter, step, eval);
  return run;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trace_csv(std::span<const TracePoint> trace, std::string_view variant, std::uint64_t seed) {
  std::string out = "steps,episode,variant,seed,mae\n";
  for (const auto& pt : trace) {
    out += std::to_string(pt.steps) + "," + std::to_string(pt.episode) + "," + std::string(variant) + "," +
           std::to_string(seed) + "," + format_double(pt.mae) + "\n";
  }
  return out;
}

}  // namespace hlmdp
