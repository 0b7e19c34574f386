#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hlmdp/envs.hpp"
#include "hlmdp/hierarchy.hpp"
#include "support.hpp"

using namespace hlmdp;
using doctest::Approx;

namespace {

Domain rooms(std::size_t x, std::size_t y, bool padded = true) {
  RoomsConfig c;
  c.rooms_x = x;
  c.rooms_y = y;
  c.padded_equivalence = padded;
  return build_rooms(c);
}

// Template dynamics with explicit terminal rewards on the slots.
Lmdp with_slot_rewards(const SubtaskTemplate& t, const std::vector<double>& j) {
  const Lmdp& d = t.dynamics;
  std::vector<std::vector<Successor>> rows(d.n_states());
  for (std::size_t x = 0; x < d.n_states(); ++x) {
    for (std::size_t e = 0; e < d.successors(x).size(); ++e) rows[x].push_back({d.successors(x)[e], d.probabilities(x)[e]});
  }
  return Lmdp(d.n_states(), d.n_terminal(), std::move(rows), d.state_rewards(), j);
}

}  // namespace

TEST_CASE("induce_partition on 2x2 rooms") {
  Domain d = rooms(2, 2);
  const auto& spec = d.dec.spec;
  CHECK(spec.n_partitions() == 4);
  CHECK(spec.n_classes() == 1);
  REQUIRE(d.dec.templates.size() == 1);
  CHECK(d.dec.templates[0].n_local() == 25);
  CHECK(d.dec.templates[0].n_slots() == 5);
  CHECK(d.dec.templates[0].members == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(spec.n_exits() == 9);
  // Top-left room: only the R and B slots are real.
  const std::size_t top_left = 0;
  std::size_t real = 0;
  for (std::size_t k = 0; k < 5; ++k) real += spec.slot_exit[top_left][k] != kAbsent;
  CHECK(real == 2);
  CHECK(spec.slot_exit[top_left][0] == kAbsent);  // G
  CHECK(spec.slot_exit[top_left][1] == kAbsent);  // L
  CHECK(spec.slot_exit[top_left][2] != kAbsent);  // R
  CHECK(spec.slot_exit[top_left][3] == kAbsent);  // T
  CHECK(spec.slot_exit[top_left][4] != kAbsent);  // B
  // BLOCKED is never an exit.
  CHECK_FALSE(spec.is_exit(d.lmdp.n_states() + 1));
  CHECK(spec.is_exit(d.lmdp.n_states()));
}

TEST_CASE("induce_partition with a single partition") {
  testing::Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    Lmdp m = testing::random_lmdp(rng);
    DecompositionInput in;
    in.partition_of.assign(m.n_states(), 0);
    in.class_of = {0};
    for (std::size_t s = 0; s < m.n_states(); ++s) in.local_index.push_back(s);
    auto dec = induce_partition(m, in);
    const auto& spec = dec.spec;
    // Template terminals are the reachable terminals, each mapped to itself.
    for (std::size_t k = 0; k < spec.slot_target[0].size(); ++k) CHECK(m.is_terminal(spec.slot_target[0][k]));
    for (std::size_t e = 0; e < spec.n_exits(); ++e) CHECK(spec.exit_pinned[e]);
    auto h = solve_hierarchical(m, dec, SolveConfig{});
    auto f = solve_flat(m, SolveConfig{});
    CHECK(testing::max_rel_diff(h.z, f.z, m.n_total()) <= 1e-8);
  }
}

TEST_CASE("induce_partition rejects non-equivalent members") {
  // Two 2-state chains feeding one terminal; the second has different interior probabilities.
  Lmdp m(4, 1,
         {{{1, 0.5}, {4, 0.5}}, {{0, 0.5}, {4, 0.5}}, {{3, 0.4}, {4, 0.6}}, {{2, 0.5}, {4, 0.5}}},
         {-1.0, -1.0, -1.0, -1.0}, {0.0});
  DecompositionInput in;
  in.partition_of = {0, 0, 1, 1};
  in.local_index = {0, 1, 0, 1};
  in.class_of = {0, 0};
  try {
    induce_partition(m, in);
    FAIL("expected DecompositionError");
  } catch (const DecompositionError& e) {
    CHECK(std::string(e.what()).find("not equivalent") != std::string::npos);
  }
  SUBCASE("differing rewards") {
    Lmdp r(2, 1, {{{2, 1.0}}, {{2, 1.0}}}, {-1.0, -2.0}, {0.0});
    DecompositionInput ri;
    ri.partition_of = {0, 1};
    ri.local_index = {0, 0};
    ri.class_of = {0, 0};
    CHECK_THROWS_AS(induce_partition(r, ri), DecompositionError);
  }
  SUBCASE("bad layout") {
    DecompositionInput bad = in;
    bad.local_index = {0, 0, 0, 1};
    CHECK_THROWS_AS(induce_partition(m, bad), DecompositionError);
  }
  SUBCASE("dangling successor") {
    Domain d = rooms(2, 1);
    DecompositionInput di;
    di.partition_of = d.dec.spec.partition_of;
    di.class_of = d.dec.spec.class_of;
    di.local_index = d.dec.spec.local_index;
    di.slot_targets = d.dec.spec.slot_target;
    // Point the R slot of room 0 somewhere it never goes.
    di.slot_targets[0][2] = 49;
    try {
      induce_partition(d.lmdp, di);
      FAIL("expected DecompositionError");
    } catch (const DecompositionError& e) {
      CHECK(std::string(e.what()).find("dangling") != std::string::npos);
    }
  }
}

TEST_CASE("build_base_lmdps") {
  Domain d = rooms(2, 2);
  const auto& t = d.dec.templates[0];
  auto bases = build_base_lmdps(t);
  REQUIRE(bases.size() == 5);
  std::vector<double> sum(5, 0.0);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(bases[k].transitions().cols == t.dynamics.transitions().cols);
    CHECK(bases[k].transitions().vals == t.dynamics.transitions().vals);
    for (std::size_t l = 0; l < 5; ++l) {
      const double z = std::exp(bases[k].terminal_reward(25 + l));
      CHECK(z == (l == k ? 1.0 : 0.0));
      sum[l] += z;
    }
  }
  for (double s : sum) CHECK(s == 1.0);
  SUBCASE("single slot") {
    Lmdp one(1, 1, {{{1, 1.0}}}, {-1.0}, {0.0});
    DecompositionInput in{{0}, {0}, {0}, {}};
    auto dec = induce_partition(one, in);
    auto b = build_base_lmdps(dec.templates[0]);
    REQUIRE(b.size() == 1);
    CHECK(b[0].terminal_reward(1) == 0.0);
  }
}

TEST_CASE("solve_bases") {
  SUBCASE("one state, one slot") {
    Lmdp one(1, 1, {{{1, 1.0}}}, {-1.0}, {0.0});
    auto dec = induce_partition(one, DecompositionInput{{0}, {0}, {0}, {}});
    auto tab = solve_bases(dec.templates[0], SolveConfig{});
    CHECK(tab.at(0, 0) == Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("rooms template") {
    Domain d = rooms(2, 2);
    for (auto backend : {Backend::serial, Backend::openmp}) {
      SolveConfig cfg;
      cfg.backend = backend;
      auto tab = solve_bases(d.dec.templates[0], cfg);
      for (std::size_t x = 0; x < 25; ++x) {
        double sum = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
          CHECK(tab.at(k, x) >= 0.0);
          CHECK(tab.at(k, x) <= 1.0);
          sum += tab.at(k, x);
        }
        CHECK(sum <= 1.0 + 1e-12);
      }
      for (std::size_t k = 0; k < 5; ++k) {
        for (std::size_t l = 0; l < 5; ++l) CHECK(tab.at(k, 25 + l) == (k == l ? 1.0 : 0.0));
      }
    }
  }
}

TEST_CASE("compose_state_value") {
  Domain d = rooms(2, 2);
  const auto& spec = d.dec.spec;
  auto h = solve_hierarchical(d.lmdp, d.dec, SolveConfig{});
  auto f = solve_flat(d.lmdp, SolveConfig{});
  SUBCASE("top-left room uses only its B and R slots") {
    const std::size_t s = 7;  // some cell of room 0
    const auto& tab = h.bases.classes[0];
    const std::size_t x = spec.local_index[s];
    const double expected = h.exit_solution.z[spec.slot_exit[0][4]] * tab.at(4, x) +
                            h.exit_solution.z[spec.slot_exit[0][2]] * tab.at(2, x);
    CHECK(compose_state_value(spec, h.bases, h.exit_solution.z, s) == Approx(expected).epsilon(1e-15));
  }
  SUBCASE("zero exits") {
    std::vector<double> zeros(spec.n_exits(), 0.0);
    for (std::size_t s = 0; s < spec.n_states; ++s) CHECK(compose_state_value(spec, h.bases, zeros, s) == 0.0);
  }
  SUBCASE("optimal exits reproduce the flat solution") {
    std::vector<double> ze(spec.n_exits());
    for (std::size_t e = 0; e < spec.n_exits(); ++e) ze[e] = f.z[spec.exits[e]];
    for (std::size_t s = 0; s < spec.n_states; ++s) {
      CHECK(testing::rel_diff(compose_state_value(spec, h.bases, ze, s), f.z[s]) <= 1e-8);
    }
  }
}

TEST_CASE("build_exit_system") {
  Domain d = rooms(2, 2);
  auto bases = solve_all_bases(d.dec.templates, SolveConfig{});
  auto sys = build_exit_system(d.dec.spec, bases, d.lmdp, 1.0);
  CHECK(sys.exits.size() == 9);
  CHECK(std::count(sys.pinned.begin(), sys.pinned.end(), true) == 1);
  CHECK(sys.free_exits.size() == 8);
  CHECK(sys.g.n_rows() == 8);
  for (std::size_t r = 0; r < sys.g.n_rows(); ++r) {
    double sum = 0.0;
    for (double v : sys.g.row_vals(r)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(sum <= 1.0 + 1e-12);
  }
  SUBCASE("single partition: pins only") {
    Domain one = rooms(1, 1);
    auto b1 = solve_all_bases(one.dec.templates, SolveConfig{});
    auto s1 = build_exit_system(one.dec.spec, b1, one.lmdp, 1.0);
    CHECK(s1.free_exits.empty());
    CHECK(s1.exits == std::vector<std::size_t>{one.lmdp.n_states()});
    auto sol = solve_exit_system(s1, SolveConfig{});
    CHECK(sol.z == std::vector<double>{1.0});
  }
}

TEST_CASE("solve_exit_system") {
  Domain d = rooms(2, 2);
  auto h = solve_hierarchical(d.lmdp, d.dec, SolveConfig{});
  auto f = solve_flat(d.lmdp, SolveConfig{});
  SUBCASE("agrees with the flat solution at the exits") {
    for (std::size_t e = 0; e < 9; ++e) {
      CHECK(std::fabs(v_from_z(h.exit_solution.z[e], 1.0) - v_from_z(f.z[d.dec.spec.exits[e]], 1.0)) <= 1e-6);
    }
  }
  SUBCASE("optimal exits are a fixed point of G") {
    std::vector<double> ze(9), next(9);
    for (std::size_t e = 0; e < 9; ++e) ze[e] = f.z[d.dec.spec.exits[e]];
    for (std::size_t r = 0; r < h.system.free_exits.size(); ++r) {
      double acc = 0.0;
      auto cols = h.system.g.row_cols(r);
      auto vals = h.system.g.row_vals(r);
      for (std::size_t i = 0; i < cols.size(); ++i) acc += vals[i] * ze[cols[i]];
      CHECK(testing::rel_diff(acc, ze[h.system.free_exits[r]]) <= 1e-8);
    }
  }
  SUBCASE("zero pins give the zero solution") {
    ExitSystem sys = h.system;
    std::fill(sys.pins.begin(), sys.pins.end(), 0.0);
    auto sol = solve_exit_system(sys, SolveConfig{});
    for (double z : sol.z) CHECK(z == 0.0);
  }
  SUBCASE("initial guess does not matter") {
    testing::Rng rng(22);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> init(9);
      for (double& v : init) v = testing::uniform(rng, 1e-3, 10.0);
      auto sol = solve_exit_system(h.system, SolveConfig{}, std::span<const double>(init));
      CHECK(testing::max_rel_diff(sol.z, h.exit_solution.z, 9) <= 10 * 1e-10);
    }
  }
}

TEST_CASE("random decompositions: hierarchical equals flat, restriction consistency, base sums") {
  testing::Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    auto rd = testing::random_decomposable(rng);
    auto dec = induce_partition(rd.lmdp, rd.input);
    SolveConfig cfg;
    cfg.lambda = testing::uniform(rng, 0.5, 2.0);
    auto f = solve_flat(rd.lmdp, cfg);
    auto h = solve_hierarchical(rd.lmdp, dec, cfg);
    CHECK(testing::max_abs_dv(h.z, f.z, rd.lmdp.n_states(), cfg.lambda) <= 1e-6);
    CHECK(testing::max_rel_diff(h.z, f.z, rd.lmdp.n_states()) <= 1e-8);
    for (const auto& tab : h.bases.classes) {
      for (std::size_t x = 0; x < tab.n_local; ++x) {
        double sum = 0.0;
        for (std::size_t k = 0; k < tab.n_slots; ++k) sum += tab.at(k, x);
        CHECK(sum <= 1.0 + 1e-12);
      }
    }
    // Restriction: a subtask with optimal boundary values reproduces the global values.
    const auto& spec = dec.spec;
    for (std::size_t p = 0; p < spec.n_partitions(); ++p) {
      const auto& t = dec.templates[spec.class_of[p]];
      std::vector<double> j(t.n_slots());
      for (std::size_t k = 0; k < j.size(); ++k) j[k] = v_from_z(f.z[spec.slot_target[p][k]], cfg.lambda);
      auto local = solve_flat(with_slot_rewards(t, j), cfg);
      for (std::size_t x = 0; x < t.n_local(); ++x) {
        CHECK(testing::rel_diff(local.z[x], f.z[spec.states_of[p][x]]) <= 1e-8);
      }
    }
  }
}

TEST_CASE("compositional exactness on the rooms template") {
  Domain d = rooms(2, 2);
  const auto& t = d.dec.templates[0];
  auto tab = solve_bases(t, SolveConfig{});
  testing::Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> j(5);
    for (double& v : j) v = testing::uniform(rng, -5.0, 0.0);
    auto direct = solve_flat(with_slot_rewards(t, j), SolveConfig{});
    for (std::size_t x = 0; x < 25; ++x) {
      double combo = 0.0;
      for (std::size_t k = 0; k < 5; ++k) combo += std::exp(j[k]) * tab.at(k, x);
      CHECK(testing::rel_diff(direct.z[x], combo) <= 1e-8);
    }
  }
}

TEST_CASE("decomposition_size") {
  auto small = decomposition_size(rooms(2, 2).dec.spec);
  CHECK(small.n_classes * small.max_local * small.max_slots == 125);
  CHECK(small.n_exits == 9);
  CHECK(small.stored_values == 134);
  auto big = decomposition_size(rooms(10, 10).dec.spec);
  CHECK(big.n_states == 2500);
  CHECK(big.stored_values == 486);
  CHECK(big.n_exits == 361);
  CHECK(big.periter_cost == 2305);
  CHECK(big.flat_periter_cost == 10000);
  CHECK(big.n_bases == 5);
}

TEST_CASE("partition text format") {
  Domain d = rooms(2, 2);
  auto text = format_partition(d.dec.spec);
  auto in = parse_partition(text, d.lmdp.n_states());
  CHECK(in.partition_of == d.dec.spec.partition_of);
  CHECK(in.class_of == d.dec.spec.class_of);
  CHECK(in.local_index == d.dec.spec.local_index);
  CHECK(in.slot_targets == d.dec.spec.slot_target);
  auto again = induce_partition(d.lmdp, in);
  CHECK(again.spec.exits == d.dec.spec.exits);

  SUBCASE("without slot lines the slots are derived") {
    std::string no_t;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) {
      if (line.rfind("t ", 0) != 0) no_t += line + "\n";
    }
    auto derived = induce_partition(d.lmdp, parse_partition(no_t, d.lmdp.n_states()));
    auto f = solve_flat(d.lmdp, SolveConfig{});
    auto h = solve_hierarchical(d.lmdp, derived, SolveConfig{});
    CHECK(testing::max_abs_dv(h.z, f.z, d.lmdp.n_states(), 1.0) <= 1e-6);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(parse_partition("p 0 0\n", 1), ParseError);
    CHECK_THROWS_AS(parse_partition("p 0 0 0\n", 2), ParseError);
    CHECK_THROWS_AS(parse_partition("q 0 0 0\n", 1), ParseError);
  }
}
