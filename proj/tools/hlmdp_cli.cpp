// hlmdp: exact solves, training runs and benchmark sweeps.
//
// Exit codes: 0 success, 1 usage/configuration/input error, 2 runtime failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hlmdp/bench.hpp"
#include "hlmdp/envs.hpp"
#include "hlmdp/hierarchy.hpp"
#include "hlmdp/learner.hpp"
#include "hlmdp/solver.hpp"

namespace {

using namespace hlmdp;

struct InputError : Error {
  using Error::Error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
}

struct EnvOptions {
  std::string env = "rooms";
  std::size_t rooms_x = 2, rooms_y = 2, room_w = 5, room_h = 5;
  std::optional<std::size_t> door_row, door_col;
  std::vector<std::size_t> goal_room, goal_cell;
  bool strict = false;
  std::optional<double> interior_reward;
  double goal_reward = 0.0;
  std::size_t grid_w = 5, grid_h = 5;
  std::vector<std::string> landmarks;
  double success_reward = 0.0;
  double failure_reward = -10.0;
  std::string map_path, lmdp_path, partition_path;

  void attach(CLI::App* app) {
    app->add_option("--env", env, "Environment: rooms, taxi, map or lmdp")
        ->check(CLI::IsMember({"rooms", "taxi", "map", "lmdp"}));
    app->add_option("--rooms-x", rooms_x, "Rooms along x");
    app->add_option("--rooms-y", rooms_y, "Rooms along y");
    app->add_option("--room-w", room_w, "Room width in cells");
    app->add_option("--room-h", room_h, "Room height in cells");
    app->add_option("--door-row", door_row, "Row of the left/right openings");
    app->add_option("--door-col", door_col, "Column of the top/bottom openings");
    app->add_option("--goal-room", goal_room, "Goal room as RX RY")->expected(2);
    app->add_option("--goal-cell", goal_cell, "Goal-adjacent cell as CX CY")->expected(2);
    app->add_flag("--strict", strict, "Group rooms by exact doorway pattern instead of padding");
    app->add_option("--interior-reward", interior_reward, "Reward of non-terminal states (default -1)");
    app->add_option("--goal-reward", goal_reward, "Reward of the goal terminal");
    app->add_option("--grid-w", grid_w, "Taxi grid width");
    app->add_option("--grid-h", grid_h, "Taxi grid height");
    app->add_option("--landmark", landmarks, "Taxi landmark as X,Y (repeatable)");
    app->add_option("--success-reward", success_reward, "Taxi success reward");
    app->add_option("--failure-reward", failure_reward, "Taxi failed-pickup reward");
    app->add_option("--map", map_path, "ASCII map file (env map)");
    app->add_option("--lmdp", lmdp_path, "LMDP text file (env lmdp)");
    app->add_option("--partition", partition_path, "Partition file (env map or lmdp)");
  }

  EnvSpec spec() const {
    EnvSpec e;
    if (env == "rooms") {
      e.kind = EnvSpec::Kind::rooms;
      e.rooms.rooms_x = rooms_x;
      e.rooms.rooms_y = rooms_y;
      e.rooms.room_w = room_w;
      e.rooms.room_h = room_h;
      e.rooms.door_row = door_row;
      e.rooms.door_col = door_col;
      if (!goal_room.empty()) e.rooms.goal_room = std::pair{goal_room[0], goal_room[1]};
      if (!goal_cell.empty()) e.rooms.goal_cell = std::pair{goal_cell[0], goal_cell[1]};
      if (interior_reward) e.rooms.interior_reward = *interior_reward;
      e.rooms.goal_reward = goal_reward;
      e.rooms.padded_equivalence = !strict;
    } else if (env == "taxi") {
      e.kind = EnvSpec::Kind::taxi;
      e.taxi.grid_w = grid_w;
      e.taxi.grid_h = grid_h;
      for (const auto& l : landmarks) {
        std::size_t x = 0, y = 0;
        char comma = 0;
        std::istringstream is(l);
        if (!(is >> x >> comma >> y) || comma != ',' || !is.eof()) throw InputError("bad landmark '" + l + "'");
        e.taxi.landmarks.emplace_back(x, y);
      }
      if (interior_reward) e.taxi.interior_reward = *interior_reward;
      e.taxi.success_reward = success_reward;
      e.taxi.failure_reward = failure_reward;
    } else if (env == "map") {
      e.kind = EnvSpec::Kind::map;
      if (map_path.empty()) throw InputError("--env map needs --map");
      e.text = read_file(map_path);
      if (!partition_path.empty()) e.partition_text = read_file(partition_path);
    } else {
      e.kind = EnvSpec::Kind::lmdp;
      if (lmdp_path.empty()) throw InputError("--env lmdp needs --lmdp");
      e.text = read_file(lmdp_path);
      if (!partition_path.empty()) e.partition_text = read_file(partition_path);
    }
    return e;
  }
};

struct SolveOptions {
  std::optional<double> lambda;
  double tol = 1e-10;
  std::size_t max_iters = 100000;
  std::string backend = "openmp";

  void attach(CLI::App* app) {
    app->add_option("--lambda", lambda, "Temperature (default 1, or the lmdp file's value)");
    app->add_option("--tol", tol, "Relative convergence tolerance");
    app->add_option("--max-iters", max_iters, "Iteration cap");
    app->add_option("--backend", backend, "serial or openmp")->check(CLI::IsMember({"serial", "openmp"}));
  }

  SolveConfig config(const EnvSpec& env) const {
    SolveConfig c;
    c.lambda = lambda ? *lambda : env.document_lambda().value_or(1.0);
    c.tol = tol;
    c.max_iters = max_iters;
    c.backend = backend == "serial" ? Backend::serial : Backend::openmp;
    c.check();
    return c;
  }
};

std::string values_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
  std::string out = "state";
  for (const auto& n : names) out += "," + n;
  out += "\n";
  for (std::size_t s = 0; s < cols.front().size(); ++s) {
    out += std::to_string(s);
    for (const auto& c : cols) out += "," + format_double(c[s]);
    out += "\n";
  }
  return out;
}

int cmd_solve(const EnvOptions& eo, const SolveOptions& so, const std::string& mode, const std::string& out,
              const std::string& format) {
  EnvSpec env = eo.spec();
  SolveConfig cfg = so.config(env);
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;
  std::size_t S = 0;
  if (mode == "flat" || mode == "both") {
    Lmdp lmdp = env.build_lmdp();
    S = lmdp.n_states();
    auto res = solve_flat(lmdp, cfg);
    names.push_back("v_flat");
    cols.push_back(v_from_z(std::span<const double>(res.z.data(), S), cfg.lambda));
    std::cerr << "flat: " << res.iterations << " iterations, residual " << format_double(res.residual) << "\n";
  }
  if (mode == "hier" || mode == "both") {
    Domain dom = env.build_domain();
    S = dom.lmdp.n_states();
    auto res = solve_hierarchical(dom.lmdp, dom.dec, cfg);
    names.push_back("v_hier");
    cols.push_back(v_from_z(std::span<const double>(res.z.data(), S), cfg.lambda));
    std::cerr << "hier: " << res.exit_solution.iterations << " exit iterations, residual "
              << format_double(res.exit_solution.residual) << "\n";
  }
  std::string text;
  if (format == "csv") {
    text = values_csv(names, cols);
  } else {
    for (std::size_t s = 0; s < S; ++s) {
      text += std::to_string(s);
      for (const auto& c : cols) text += " " + format_double(c[s]);
      text += "\n";
    }
  }
  write_output(out, text);
  if (cols.size() == 2) {
    double worst = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double a = cols[0][s], b = cols[1][s];
      if (a == b) continue;
      worst = std::max(worst, std::fabs(a - b));
    }
    std::cerr << "max_abs_dv=" << format_double(worst) << "\n";
  }
  return 0;
}

struct TrainOptions {
  std::string algorithm = "V3";
  std::size_t episodes = 1000;
  double c_base = 15.0, c_exit = 100.0, c_flat = 1000.0;
  std::uint64_t seed = 0;
  std::size_t eval_period = 100;
  std::size_t max_steps = 0;
  std::size_t max_total_steps = 0;

  void attach(CLI::App* app, bool single) {
    if (single) {
      app->add_option("--algorithm,--variant", algorithm, "V1, V2, V3 or Z-IS");
      app->add_option("--seed", seed, "RNG seed");
    }
    app->add_option("--episodes", episodes, "Episode budget");
    app->add_option("--c-base", c_base, "Learning-rate constant of base estimates");
    app->add_option("--c-exit", c_exit, "Learning-rate constant of exit estimates");
    app->add_option("--c-flat", c_flat, "Learning-rate constant of the flat Z-IS baseline");
    app->add_option("--eval-period", eval_period, "Episodes between MAE snapshots");
    app->add_option("--max-steps", max_steps, "Step cap per episode (0: 10 x states)");
    app->add_option("--max-total-steps", max_total_steps, "Total sample budget (0: unbounded)");
  }
};

int cmd_train(const EnvOptions& eo, const SolveOptions& so, const TrainOptions& to, const std::string& out) {
  auto alg = parse_algorithm(to.algorithm);
  if (!alg) throw InputError("unknown algorithm '" + to.algorithm + "'");
  BenchmarkConfig bc;
  bc.env = eo.spec();
  SolveConfig scfg = so.config(bc.env);
  bc.algorithms = {*alg};
  bc.seeds = {to.seed};
  bc.lambda = scfg.lambda;
  bc.backend = scfg.backend;
  bc.c_base = to.c_base;
  bc.c_exit = to.c_exit;
  bc.c_flat = to.c_flat;
  bc.episodes = to.episodes;
  bc.max_steps_per_episode = to.max_steps;
  bc.max_total_steps = to.max_total_steps;
  bc.evaluation_period = to.eval_period;
  auto res = run_benchmark(bc);
  write_output(out, res.csv);
  std::cerr << "final MAE " << format_double(res.summary.front().mean_final_mae) << "\n";
  return 0;
}

std::vector<std::uint64_t> seed_list(const std::vector<std::uint64_t>& seeds, std::optional<std::size_t> count) {
  if (count) {
    std::vector<std::uint64_t> out(*count);
    for (std::size_t i = 0; i < *count; ++i) out[i] = i;
    return out;
  }
  return seeds;
}

int cmd_bench(const EnvOptions& eo, const SolveOptions& so, const TrainOptions& to,
              const std::vector<std::string>& algorithms, const std::vector<std::uint64_t>& seeds,
              std::optional<std::size_t> seed_count, const std::vector<double>& grid, const std::string& out) {
  BenchmarkConfig bc;
  bc.env = eo.spec();
  SolveConfig scfg = so.config(bc.env);
  bc.algorithms.clear();
  for (const auto& a : algorithms) {
    auto alg = parse_algorithm(a);
    if (!alg) throw InputError("unknown algorithm '" + a + "'");
    bc.algorithms.push_back(*alg);
  }
  bc.seeds = seed_list(seeds, seed_count);
  bc.lambda = scfg.lambda;
  bc.backend = scfg.backend;
  bc.c_base = to.c_base;
  bc.c_exit = to.c_exit;
  bc.c_flat = to.c_flat;
  bc.c_grid = grid;
  bc.episodes = to.episodes;
  bc.max_steps_per_episode = to.max_steps;
  bc.max_total_steps = to.max_total_steps;
  bc.evaluation_period = to.eval_period;
  auto res = run_benchmark(bc);
  write_output(out, res.csv);
  (out.empty() || out == "-" ? std::cerr : std::cout) << res.summary_table();
  return 0;
}

int cmd_inspect(const EnvOptions& eo, bool list) {
  Domain dom = eo.spec().build_domain();
  auto d = decomposition_size(dom.dec.spec);
  std::cout << "states=" << d.n_states << "\n"
            << "partitions=" << dom.dec.spec.n_partitions() << "\n"
            << "classes=" << d.n_classes << "\n"
            << "max_local_states=" << d.max_local << "\n"
            << "max_slots=" << d.max_slots << "\n"
            << "exits=" << d.n_exits << "\n"
            << "max_support=" << d.max_support << "\n"
            << "base_lmdps=" << d.n_bases << "\n"
            << "stored_values=" << d.stored_values << "\n"
            << "periter_cost=" << d.periter_cost << "\n"
            << "flat_periter_cost=" << d.flat_periter_cost << "\n";
  if (list) {
    for (const auto& t : dom.dec.templates) {
      std::cout << "# class " << t.class_id << ": " << t.n_local() << " local states, " << t.n_slots()
                << " slots, members";
      for (std::size_t p : t.members) std::cout << " " << p;
      std::cout << "\n";
    }
    std::cout << format_partition(dom.dec.spec);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical linearly-solvable MDP solver and learner"};
  app.require_subcommand(1);

  EnvOptions env_opts;
  SolveOptions solve_opts;
  TrainOptions train_opts;
  std::string out, format = "csv", mode = "both";
  std::vector<std::string> algorithms{"V1", "V2", "V3", "Z-IS"};
  std::vector<std::uint64_t> seeds{0};
  std::optional<std::size_t> seed_count;
  std::vector<double> grid;
  bool list = false;

  auto* solve = app.add_subcommand("solve", "Model-based solve, flat and/or hierarchical");
  env_opts.attach(solve);
  solve_opts.attach(solve);
  solve->add_option("--mode", mode, "flat, hier or both")->check(CLI::IsMember({"flat", "hier", "both"}));
  solve->add_option("--out", out, "Output file (default stdout)");
  solve->add_option("--format", format, "csv or text")->check(CLI::IsMember({"csv", "text"}));

  auto* train = app.add_subcommand("train", "Single learning run; writes its MAE trace");
  env_opts.attach(train);
  solve_opts.attach(train);
  train_opts.attach(train, true);
  train->add_option("--out", out, "Output CSV (default stdout)");
  train->add_option("--format", format, "csv")->check(CLI::IsMember({"csv"}));

  auto* bench = app.add_subcommand("bench", "Multi-seed sweep over algorithms");
  env_opts.attach(bench);
  solve_opts.attach(bench);
  train_opts.attach(bench, false);
  bench->add_option("--algorithms", algorithms, "Algorithms to run")->delimiter(',');
  auto* seeds_opt = bench->add_option("--seeds", seeds, "Seed list")->delimiter(',');
  bench->add_option("--seed-count", seed_count, "Use seeds 0..N-1")->excludes(seeds_opt);
  bench->add_option("--c-grid", grid, "Learning-rate grid searched per algorithm")->delimiter(',');
  bench->add_option("--out", out, "Output CSV (default stdout)");
  bench->add_option("--format", format, "csv")->check(CLI::IsMember({"csv"}));

  auto* inspect = app.add_subcommand("inspect", "Decomposition size report");
  env_opts.attach(inspect);
  inspect->add_flag("--list", list, "Also print the decomposition");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*solve) return cmd_solve(env_opts, solve_opts, mode, out, format);
    if (*train) return cmd_train(env_opts, solve_opts, train_opts, out);
    if (*bench) return cmd_bench(env_opts, solve_opts, train_opts, algorithms, seeds, seed_count, grid, out);
    if (*inspect) return cmd_inspect(env_opts, list);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
