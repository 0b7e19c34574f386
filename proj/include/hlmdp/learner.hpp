#pragma once

// Model-free hierarchical Z-learning.
//
// Base-LMDP estimates of a class are all updated from every transition taken
// inside one of its member partitions (intra-task learning). Exit estimates
// follow the compositional rule, triggered per transition according to the
// chosen variant:
//   V1  the source state is an exit;
//   V2  V1, plus every exit of the source partition when the transition leaves it;
//   V3  V2, extended to every member partition of the source's class.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hlmdp/hierarchy.hpp"
#include "hlmdp/lmdp.hpp"
#include "hlmdp/solver.hpp"

namespace hlmdp {

enum class Variant { V1, V2, V3 };

std::string_view to_string(Variant v);
std::optional<Variant> parse_variant(std::string_view s);

struct LearnConfig {
  double lambda = 1.0;
  double c_base = 15.0;
  double c_exit = 100.0;
  double c_flat = 1000.0;  // flat Z-learning baseline only
  Variant variant = Variant::V3;
  std::size_t max_episodes = 1000;
  std::size_t max_steps_per_episode = 0;  // 0 means 10 * S
  std::size_t max_total_steps = 0;        // 0 means unbounded
  std::uint64_t seed = 0;
  std::size_t evaluation_period = 100;

  void check() const;
};

/// c / (c + n)
double lr_schedule(double c, std::size_t n);

struct LearnerState {
  BaseValueSet base_estimates;  // boundary columns hold the 1/0 pins
  ZVector exit_estimates;
  std::size_t episode_counter = 0;
  std::size_t step_counter = 0;
};

/// All base and free exit estimates at 1, pinned exits at exp(J/lambda).
LearnerState make_learner_state(const Lmdp& lmdp, const Decomposition& dec, double lambda);

/// Composed estimate for a non-terminal state; the pin for a terminal one.
double estimate_state_value(const LearnerState& ls, const Lmdp& lmdp, const PartitionSpec& spec,
                            std::size_t s, double lambda);

/// Optimal-form policy over the successors of s using composed estimates. Falls back
/// to the uncontrolled row when every successor estimate is zero.
PolicyRow behavior_policy(const LearnerState& ls, const Lmdp& lmdp, const PartitionSpec& spec,
                          std::size_t s, double lambda);

/// Updates every base estimate of the source's class at the source's local state.
/// `behavior_row` is the sampling distribution over the successors of the
/// source; successors it gives zero probability (the BLOCKED pads, for one)
/// contribute their expected share in closed form. Empty means full support.
void intra_task_update(LearnerState& ls, const Lmdp& lmdp, const Decomposition& dec,
                       const TransitionSample& sample, double alpha, double lambda,
                       std::span<const double> behavior_row = {});

/// Compositional update of the free exit with index `exit`.
void exit_update(LearnerState& ls, const PartitionSpec& spec, std::size_t exit, double alpha);

/// Exit indices a transition s_t -> s_next triggers, ascending.
std::vector<std::size_t> exits_to_update(const PartitionSpec& spec, std::size_t s_t,
                                         std::size_t s_next, Variant variant);

/// Applies exit_update to exits_to_update(...) in order; returns the indices.
std::vector<std::size_t> trigger_exit_updates(LearnerState& ls, const PartitionSpec& spec,
                                              std::size_t s_t, std::size_t s_next, Variant variant,
                                              double alpha);

struct TracePoint {
  std::size_t steps = 0;
  std::size_t episode = 0;
  double mae = 0.0;
};

/// Mean over states of |estimate - truth| in value space; positions where both
/// are -inf contribute 0.
double mae(std::span<const double> estimate_v, std::span<const double> truth_v);

/// v-space estimates of every non-terminal state.
std::vector<double> estimated_values(const LearnerState& ls, const Lmdp& lmdp,
                                     const PartitionSpec& spec, double lambda);

struct HierarchicalRun {
  std::vector<TracePoint> trace;
  LearnerState state;
};

/// `truth_v` holds optimal values of the non-terminal states. An empty
/// `start` means uniform over non-terminal states; otherwise it is a weight
/// per non-terminal state.
HierarchicalRun train(const Lmdp& lmdp, const Decomposition& dec, const LearnConfig& cfg,
                      std::span<const double> truth_v, std::span<const double> start = {});

struct FlatRun {
  std::vector<TracePoint> trace;
  ZVector z;  // over S+T
  std::size_t episode_counter = 0;
  std::size_t step_counter = 0;
};

/// Z-learning on one table of non-terminal estimates with importance-sampling
/// correction, sampling from its own induced policy. Uses cfg.c_flat.
FlatRun train_flat(const Lmdp& lmdp, const LearnConfig& cfg, std::span<const double> truth_v,
                   std::span<const double> start = {});

/// Header `steps,episode,variant,seed,mae`.
std::string trace_csv(std::span<const TracePoint> trace, std::string_view variant, std::uint64_t seed);

std::string format_double(double v);

}  // namespace hlmdp
