#pragma once

// Multi-seed learning-curve sweeps.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hlmdp/envs.hpp"
#include "hlmdp/learner.hpp"
#include "hlmdp/solver.hpp"

namespace hlmdp {

enum class Algorithm { V1, V2, V3, ZIS };

std::string_view to_string(Algorithm a);
/// Accepts V1, V2, V3 (any case) and Z-IS / ZIS / zis.
std::optional<Algorithm> parse_algorithm(std::string_view s);

struct EnvSpec {
  enum class Kind { rooms, taxi, map, lmdp };
  Kind kind = Kind::rooms;
  RoomsConfig rooms;
  TaxiConfig taxi;
  std::string text;            // map or lmdp document
  std::string partition_text;  // required for map; optional for lmdp

  /// The lmdp document's lambda, if any.
  std::optional<double> document_lambda() const;
  Lmdp build_lmdp() const;
  /// Throws Error when the environment carries no decomposition.
  Domain build_domain() const;
  bool has_decomposition() const;
};

struct BenchmarkConfig {
  EnvSpec env;
  std::vector<Algorithm> algorithms{Algorithm::V1, Algorithm::V2, Algorithm::V3, Algorithm::ZIS};
  std::vector<std::uint64_t> seeds;
  double lambda = 1.0;
  double c_base = 15.0;
  double c_exit = 100.0;
  double c_flat = 1000.0;
  /// Non-empty: choose c per algorithm by mean final MAE. Hierarchical runs try
  /// every (c_base, c_exit) pair from the grid, Z-IS every c_flat.
  std::vector<double> c_grid;
  std::size_t episodes = 20000;
  std::size_t max_steps_per_episode = 0;
  std::size_t max_total_steps = 0;
  std::size_t evaluation_period = 100;
  Backend backend = Backend::openmp;

  void check() const;
};

/// Optimal values of the non-terminal states. Cached per (LMDP, lambda).
std::vector<double> ground_truth(const Lmdp& lmdp, const SolveConfig& cfg);
std::size_t ground_truth_cache_size();

struct AlgorithmSummary {
  Algorithm algorithm = Algorithm::V1;
  std::size_t runs = 0;
  double mean_final_mae = 0.0;
  double sd_final_mae = 0.0;
  double c_base = 0.0;  // hierarchical: chosen c_base; Z-IS: chosen c_flat
  double c_exit = 0.0;  // hierarchical only
};

struct BenchmarkResult {
  std::string csv;  // steps,episode,algorithm,variant,seed,mae
  std::vector<AlgorithmSummary> summary;

  std::string summary_table() const;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);

}  // namespace hlmdp
