#include "hlmdp/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>

namespace hlmdp {

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::V1: return "V1";
    case Algorithm::V2: return "V2";
    case Algorithm::V3: return "V3";
    case Algorithm::ZIS: return "Z-IS";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view s) {
  std::string up;
  for (char c : s) {
    if (c != '-') up += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  if (up == "V1") return Algorithm::V1;
  if (up == "V2") return Algorithm::V2;
  if (up == "V3") return Algorithm::V3;
  if (up == "ZIS") return Algorithm::ZIS;
  return std::nullopt;
}

std::optional<double> EnvSpec::document_lambda() const {
  if (kind != Kind::lmdp) return std::nullopt;
  return parse_lmdp(text).lambda_default;
}

Lmdp EnvSpec::build_lmdp() const {
  switch (kind) {
    case Kind::rooms: return build_rooms(rooms).lmdp;
    case Kind::taxi: return build_taxi(taxi).lmdp;
    case Kind::map: return parse_map(text);
    case Kind::lmdp: return parse_lmdp(text).lmdp;
  }
  throw Error("unknown environment kind");
}

bool EnvSpec::has_decomposition() const {
  return kind == Kind::rooms || kind == Kind::taxi || !partition_text.empty();
}

Domain EnvSpec::build_domain() const {
  switch (kind) {
    case Kind::rooms: return build_rooms(rooms);
    case Kind::taxi: return build_taxi(taxi);
    case Kind::map:
      if (partition_text.empty()) throw Error("map environment needs a partition file");
      return load_map(text, partition_text);
    case Kind::lmdp: {
      if (partition_text.empty()) throw Error("lmdp environment has no partition file; hierarchical methods need one");
      Domain dom{parse_lmdp(text).lmdp, {}};
      dom.dec = induce_partition(dom.lmdp, parse_partition(partition_text, dom.lmdp.n_states()));
      return dom;
    }
  }
  throw Error("unknown environment kind");
}

void BenchmarkConfig::check() const {
  if (algorithms.empty()) throw Error("benchmark: the algorithm list is empty");
  if (seeds.empty()) throw Error("benchmark: the seed list is empty");
  if (!(lambda > 0.0)) throw Error("benchmark: lambda must be positive");
  if (!(c_base > 0.0) || !(c_exit > 0.0) || !(c_flat > 0.0)) {
    throw Error("benchmark: learning-rate constants must be positive");
  }
  for (double c : c_grid) {
    if (!(c > 0.0)) throw Error("benchmark: learning-rate grid values must be positive");
  }
  if (evaluation_period == 0) throw Error("benchmark: evaluation_period must be at least 1");
}

namespace {

std::mutex g_truth_mutex;
std::map<std::string, std::vector<double>> g_truth_cache;

std::string fingerprint(const Lmdp& lmdp, const SolveConfig& cfg) {
  return format_lmdp(lmdp, cfg.lambda) + "tol " + format_double(cfg.tol);
}

struct Candidate {
  double c1 = 0.0;
  double c2 = 0.0;
};

struct Cell {
  std::size_t algorithm = 0;  // index into cfg.algorithms
  std::size_t candidate = 0;
  std::size_t seed = 0;  // index into cfg.seeds
  std::vector<TracePoint> trace;
};

std::vector<Candidate> candidates_for(const BenchmarkConfig& cfg, Algorithm a) {
  if (cfg.c_grid.empty()) {
    if (a == Algorithm::ZIS) return {{cfg.c_flat, 0.0}};
    return {{cfg.c_base, cfg.c_exit}};
  }
  std::vector<Candidate> out;
  if (a == Algorithm::ZIS) {
    for (double c : cfg.c_grid) out.push_back({c, 0.0});
  } else {
    for (double cb : cfg.c_grid) {
      for (double ce : cfg.c_grid) out.push_back({cb, ce});
    }
  }
  return out;
}

double mean_of(std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

double sd_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::vector<double> ground_truth(const Lmdp& lmdp, const SolveConfig& cfg) {
  const std::string key = fingerprint(lmdp, cfg);
  {
    std::lock_guard<std::mutex> lock(g_truth_mutex);
    auto it = g_truth_cache.find(key);
    if (it != g_truth_cache.end()) return it->second;
  }
  auto res = solve_flat(lmdp, cfg);
  std::vector<double> v(lmdp.n_states());
  for (std::size_t s = 0; s < v.size(); ++s) v[s] = v_from_z(res.z[s], cfg.lambda);
  std::lock_guard<std::mutex> lock(g_truth_mutex);
  return g_truth_cache.emplace(key, std::move(v)).first->second;
}

std::size_t ground_truth_cache_size() {
  std::lock_guard<std::mutex> lock(g_truth_mutex);
  return g_truth_cache.size();
}

std::string BenchmarkResult::summary_table() const {
  std::ostringstream os;
  os << "algorithm  runs  final_mae_mean  final_mae_sd  c\n";
  for (const auto& s : summary) {
    std::string name(to_string(s.algorithm));
    name.resize(std::max<std::size_t>(name.size(), 9), ' ');
    os << name << "  " << s.runs << "  " << format_double(s.mean_final_mae) << "  " << format_double(s.sd_final_mae)
       << "  ";
    if (s.algorithm == Algorithm::ZIS) {
      os << "c_flat=" << format_double(s.c_base);
    } else {
      os << "c_base=" << format_double(s.c_base) << " c_exit=" << format_double(s.c_exit);
    }
    os << "\n";
  }
  return os.str();
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  cfg.check();
  const bool any_hier = std::any_of(cfg.algorithms.begin(), cfg.algorithms.end(),
                                    [](Algorithm a) { return a != Algorithm::ZIS; });
  std::optional<Domain> dom;
  Lmdp lmdp = any_hier ? (dom = cfg.env.build_domain(), dom->lmdp) : cfg.env.build_lmdp();
  SolveConfig scfg;
  scfg.lambda = cfg.lambda;
  scfg.backend = cfg.backend;
  const auto truth = ground_truth(lmdp, scfg);

  std::vector<std::vector<Candidate>> cands;
  std::vector<Cell> cells;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    cands.push_back(candidates_for(cfg, cfg.algorithms[a]));
    for (std::size_t c = 0; c < cands.back().size(); ++c) {
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) cells.push_back({a, c, s, {}});
    }
  }

  std::vector<std::exception_ptr> errors(cells.size());
  const long n_cells = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic) if (cfg.backend == Backend::openmp)
  for (long i = 0; i < n_cells; ++i) {
    Cell& cell = cells[static_cast<std::size_t>(i)];
    try {
      const Algorithm alg = cfg.algorithms[cell.algorithm];
      const Candidate cand = cands[cell.algorithm][cell.candidate];
      LearnConfig lc;
      lc.lambda = cfg.lambda;
      lc.max_episodes = cfg.episodes;
      lc.max_steps_per_episode = cfg.max_steps_per_episode;
      lc.max_total_steps = cfg.max_total_steps;
      lc.seed = cfg.seeds[cell.seed];
      lc.evaluation_period = cfg.evaluation_period;
      if (alg == Algorithm::ZIS) {
        lc.c_flat = cand.c1;
        cell.trace = train_flat(lmdp, lc, truth).trace;
      } else {
        lc.c_base = cand.c1;
        lc.c_exit = cand.c2;
        lc.variant = alg == Algorithm::V1 ? Variant::V1 : alg == Algorithm::V2 ? Variant::V2 : Variant::V3;
        cell.trace = train(dom->lmdp, dom->dec, lc, truth).trace;
      }
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto final_mae = [](const Cell& c) { return c.trace.empty() ? 0.0 : c.trace.back().mae; };
  BenchmarkResult res;
  res.csv = "steps,episode,algorithm,variant,seed,mae\n";
  std::size_t base = 0;
  for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
    const Algorithm alg = cfg.algorithms[a];
    const std::size_t n_seeds = cfg.seeds.size();
    std::size_t best = 0;
    double best_mean = 0.0;
    std::vector<double> best_finals;
    for (std::size_t c = 0; c < cands[a].size(); ++c) {
      std::vector<double> finals;
      for (std::size_t s = 0; s < n_seeds; ++s) finals.push_back(final_mae(cells[base + c * n_seeds + s]));
      const double m = mean_of(finals);
      if (c == 0 || m < best_mean) {
        best = c;
        best_mean = m;
        best_finals = finals;
      }
    }
    const std::string algorithm = alg == Algorithm::ZIS ? "Z-IS" : "hierarchical";
    const std::string variant = alg == Algorithm::ZIS ? "none" : std::string(to_string(alg));
    for (std::size_t s = 0; s < n_seeds; ++s) {
      for (const auto& pt : cells[base + best * n_seeds + s].trace) {
        res.csv += std::to_string(pt.steps) + "," + std::to_string(pt.episode) + "," + algorithm + "," + variant +
                   "," + std::to_string(cfg.seeds[s]) + "," + format_double(pt.mae) + "\n";
      }
    }
    res.summary.push_back({alg, n_seeds, best_mean, sd_of(best_finals), cands[a][best].c1, cands[a][best].c2});
    base += cands[a].size() * n_seeds;
  }
  return res;
}

}  // namespace hlmdp
