#include "hlmdp/hierarchy.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <exception>
#include <map>
#include <string>

namespace hlmdp {
namespace {

// Group key shared by every zero-valued target: absent slots and terminals
// with reward -inf are interchangeable since they all contribute z = 0.
constexpr std::size_t kZeroGroup = kAbsent - 1;
constexpr double kEquivTol = 1e-12;

bool is_zero_target(const Lmdp& lmdp, std::size_t t) {
  return t == kAbsent || (lmdp.is_terminal(t) && lmdp.terminal_reward(t) == kNegInf);
}

std::size_t group_of(const Lmdp& lmdp, std::size_t t) {
  return is_zero_target(lmdp, t) ? kZeroGroup : t;
}

std::string describe_target(std::size_t t) {
  return t == kAbsent ? std::string("ABSENT") : std::to_string(t);
}

using GroupMass = std::vector<std::pair<std::size_t, double>>;  // sorted by group

void add_mass(std::map<std::size_t, double>& m, std::size_t g, double p) { m[g] += p; }

GroupMass to_sorted(const std::map<std::size_t, double>& m) { return {m.begin(), m.end()}; }

struct Layout {
  std::vector<std::vector<std::size_t>> states_of;
  std::vector<std::vector<std::size_t>> members_of;
};

Layout check_layout(const Lmdp& lmdp, const DecompositionInput& in) {
  const std::size_t n = lmdp.n_states();
  if (in.partition_of.size() != n || in.local_index.size() != n) {
    throw DecompositionError("partition: labels and local indices must cover all " +
                             std::to_string(n) + " non-terminal states");
  }
  std::size_t n_part = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (in.partition_of[s] == kAbsent) {
      throw DecompositionError("partition: state " + std::to_string(s) + " has no partition");
    }
    n_part = std::max(n_part, in.partition_of[s] + 1);
  }
  if (in.class_of.size() != n_part) {
    throw DecompositionError("partition: expected a class for each of " + std::to_string(n_part) +
                             " partitions");
  }
  Layout lay;
  std::vector<std::size_t> sizes(n_part, 0);
  for (std::size_t s = 0; s < n; ++s) sizes[in.partition_of[s]]++;
  lay.states_of.resize(n_part);
  for (std::size_t p = 0; p < n_part; ++p) {
    if (sizes[p] == 0) throw DecompositionError("partition: partition " + std::to_string(p) + " is empty");
    lay.states_of[p].assign(sizes[p], kAbsent);
  }
  for (std::size_t s = 0; s < n; ++s) {
    auto& slots = lay.states_of[in.partition_of[s]];
    std::size_t x = in.local_index[s];
    if (x >= slots.size() || slots[x] != kAbsent) {
      throw DecompositionError("partition: local index " + std::to_string(x) + " of state " +
                               std::to_string(s) + " is not a bijection onto the template");
    }
    slots[x] = s;
  }
  std::size_t n_class = 0;
  for (std::size_t c : in.class_of) n_class = std::max(n_class, c + 1);
  lay.members_of.resize(n_class);
  for (std::size_t p = 0; p < n_part; ++p) lay.members_of[in.class_of[p]].push_back(p);
  for (std::size_t c = 0; c < n_class; ++c) {
    const auto& mem = lay.members_of[c];
    if (mem.empty()) throw DecompositionError("partition: class " + std::to_string(c) + " has no members");
    for (std::size_t p : mem) {
      if (lay.states_of[p].size() != lay.states_of[mem.front()].size()) {
        throw DecompositionError("not equivalent: partitions " + std::to_string(mem.front()) + " and " +
                                 std::to_string(p) + " of class " + std::to_string(c) +
                                 " differ in size");
      }
    }
  }
  return lay;
}

// Outside successors of s in successor order.
std::vector<Successor> outside_of(const Lmdp& lmdp, const DecompositionInput& in, std::size_t s) {
  std::vector<Successor> out;
  auto cols = lmdp.successors(s);
  auto probs = lmdp.probabilities(s);
  const std::size_t p = in.partition_of[s];
  for (std::size_t e = 0; e < cols.size(); ++e) {
    std::size_t t = cols[e];
    if (lmdp.is_terminal(t) || in.partition_of[t] != p) out.push_back({t, probs[e]});
  }
  return out;
}

void append_inside(const Lmdp& lmdp, const DecompositionInput& in, std::size_t s,
                   std::vector<Successor>& row) {
  auto cols = lmdp.successors(s);
  auto probs = lmdp.probabilities(s);
  const std::size_t p = in.partition_of[s];
  for (std::size_t e = 0; e < cols.size(); ++e) {
    std::size_t t = cols[e];
    if (!lmdp.is_terminal(t) && in.partition_of[t] == p) row.push_back({in.local_index[t], probs[e]});
  }
}

// Slots keyed by (local state, ordinal of the outside successor); keys whose
// targets coincide in every member share a slot.
void derive_slots(const Lmdp& lmdp, const DecompositionInput& in, const Layout& lay, std::size_t c,
                  std::vector<std::vector<std::size_t>>& slot_targets,
                  std::vector<std::vector<Successor>>& rows) {
  const auto& mem = lay.members_of[c];
  const std::size_t k_local = lay.states_of[mem.front()].size();
  std::vector<std::vector<std::size_t>> slot_sig;  // per slot, target per member
  rows.assign(k_local, {});
  for (std::size_t x = 0; x < k_local; ++x) {
    std::vector<std::vector<Successor>> outs;
    for (std::size_t p : mem) outs.push_back(outside_of(lmdp, in, lay.states_of[p][x]));
    for (std::size_t m = 1; m < mem.size(); ++m) {
      if (outs[m].size() != outs[0].size()) {
        throw DecompositionError("not equivalent: state " + std::to_string(lay.states_of[mem[m]][x]) +
                                 " of partition " + std::to_string(mem[m]) + " has " +
                                 std::to_string(outs[m].size()) + " outside successors, state " +
                                 std::to_string(lay.states_of[mem[0]][x]) + " has " +
                                 std::to_string(outs[0].size()));
      }
    }
    const std::size_t first = lay.states_of[mem.front()][x];
    append_inside(lmdp, in, first, rows[x]);
    for (std::size_t ord = 0; ord < outs[0].size(); ++ord) {
      std::vector<std::size_t> sig;
      for (const auto& o : outs) sig.push_back(o[ord].state);
      auto it = std::find(slot_sig.begin(), slot_sig.end(), sig);
      std::size_t k = static_cast<std::size_t>(it - slot_sig.begin());
      if (it == slot_sig.end()) slot_sig.push_back(sig);
      rows[x].push_back({k_local + k, outs[0][ord].prob});
    }
  }
  for (std::size_t m = 0; m < mem.size(); ++m) {
    auto& tgt = slot_targets[mem[m]];
    tgt.clear();
    for (const auto& sig : slot_sig) tgt.push_back(sig[m]);
  }
}

// With supplied slot targets, a template transition x -> slot is pinned down by
// intersecting, over all members, the slots whose target group is reachable
// from x. Slots indistinguishable in every member are merged onto the lowest.
void explicit_slots(const Lmdp& lmdp, const DecompositionInput& in, const Layout& lay, std::size_t c,
                    const std::vector<std::vector<std::size_t>>& slot_targets,
                    std::vector<std::vector<Successor>>& rows) {
  const auto& mem = lay.members_of[c];
  const std::size_t k_local = lay.states_of[mem.front()].size();
  const std::size_t n_slots = slot_targets[mem.front()].size();
  rows.assign(k_local, {});
  for (std::size_t x = 0; x < k_local; ++x) {
    std::vector<std::map<std::size_t, double>> masses(mem.size());
    for (std::size_t m = 0; m < mem.size(); ++m) {
      for (const auto& o : outside_of(lmdp, in, lay.states_of[mem[m]][x])) {
        add_mass(masses[m], group_of(lmdp, o.state), o.prob);
      }
    }
    auto group = [&](std::size_t m, std::size_t k) { return group_of(lmdp, slot_targets[mem[m]][k]); };
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < n_slots; ++k) {
      bool ok = true;
      for (std::size_t m = 0; m < mem.size() && ok; ++m) ok = masses[m].count(group(m, k)) > 0;
      if (ok) candidates.push_back(k);
    }
    std::map<std::vector<std::size_t>, std::vector<std::size_t>> atoms;
    for (std::size_t k : candidates) {
      std::vector<std::size_t> sig;
      for (std::size_t m = 0; m < mem.size(); ++m) sig.push_back(group(m, k));
      atoms[sig].push_back(k);
    }
    append_inside(lmdp, in, lay.states_of[mem.front()][x], rows[x]);
    // An atom's mass is read off a member group once every other atom sharing
    // that group has a known mass.
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> list(atoms.begin(), atoms.end());
    std::vector<std::optional<double>> mass(list.size());
    for (bool progress = true; progress;) {
      progress = false;
      for (std::size_t a = 0; a < list.size(); ++a) {
        if (mass[a]) continue;
        for (std::size_t m = 0; m < mem.size() && !mass[a]; ++m) {
          const std::size_t g = list[a].first[m];
          double known = 0.0;
          bool all_known = true;
          for (std::size_t b = 0; b < list.size() && all_known; ++b) {
            if (b == a || list[b].first[m] != g) continue;
            if (mass[b]) {
              known += *mass[b];
            } else {
              all_known = false;
            }
          }
          if (all_known) {
            mass[a] = masses[m][g] - known;
            progress = true;
          }
        }
      }
    }
    for (std::size_t a = 0; a < list.size(); ++a) {
      if (!mass[a]) {
        throw DecompositionError("ambiguous slot identification at local state " + std::to_string(x) +
                                 " of class " + std::to_string(c));
      }
      if (*mass[a] > kEquivTol) rows[x].push_back({k_local + list[a].second.front(), *mass[a]});
    }
  }
}

void verify_member(const Lmdp& lmdp, const DecompositionInput& in, const Layout& lay,
                   const SubtaskTemplate& tmpl, std::size_t p,
                   const std::vector<std::size_t>& targets) {
  const Lmdp& t = tmpl.dynamics;
  const std::size_t k_local = t.n_states();
  for (std::size_t x = 0; x < k_local; ++x) {
    const std::size_t s = lay.states_of[p][x];
    auto fail = [&](const std::string& what) {
      throw DecompositionError("not equivalent: partition " + std::to_string(p) + ", state " +
                               std::to_string(s) + " (local " + std::to_string(x) + "): " + what);
    };
    if (std::fabs(lmdp.state_reward(s) - t.state_reward(x)) > kEquivTol) {
      fail("reward " + std::to_string(lmdp.state_reward(s)) + " differs from template reward " +
           std::to_string(t.state_reward(x)));
    }
    std::vector<Successor> inside;
    append_inside(lmdp, in, s, inside);
    std::sort(inside.begin(), inside.end(),
              [](const Successor& a, const Successor& b) { return a.state < b.state; });
    std::vector<Successor> tmpl_inside;
    std::map<std::size_t, double> tmpl_out;
    auto cols = t.successors(x);
    auto probs = t.probabilities(x);
    for (std::size_t e = 0; e < cols.size(); ++e) {
      if (cols[e] < k_local) {
        tmpl_inside.push_back({cols[e], probs[e]});
      } else {
        add_mass(tmpl_out, group_of(lmdp, targets[cols[e] - k_local]), probs[e]);
      }
    }
    for (std::size_t i = 0; i < std::max(inside.size(), tmpl_inside.size()); ++i) {
      if (i >= inside.size() || i >= tmpl_inside.size() || inside[i].state != tmpl_inside[i].state ||
          std::fabs(inside[i].prob - tmpl_inside[i].prob) > kEquivTol) {
        std::size_t local = i < inside.size() ? inside[i].state : tmpl_inside[i].state;
        fail("transition to local state " + std::to_string(local) + " (global " +
             std::to_string(lay.states_of[p][local]) + ") does not match the template");
      }
    }
    std::map<std::size_t, double> member_out;
    for (const auto& o : outside_of(lmdp, in, s)) {
      std::size_t g = group_of(lmdp, o.state);
      if (g != kZeroGroup && std::find(targets.begin(), targets.end(), o.state) == targets.end()) {
        throw DecompositionError("dangling successor: partition " + std::to_string(p) + ", state " +
                                 std::to_string(s) + " reaches " + std::to_string(o.state) +
                                 ", which is not a terminal slot of the partition");
      }
      add_mass(member_out, g, o.prob);
    }
    auto a = to_sorted(member_out);
    auto b = to_sorted(tmpl_out);
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
      if (i >= a.size() || i >= b.size() || a[i].first != b[i].first ||
          std::fabs(a[i].second - b[i].second) > kEquivTol) {
        std::size_t g = i < a.size() ? a[i].first : b[i].first;
        fail("transition to " + (g == kZeroGroup ? std::string("a zero-valued terminal") : std::to_string(g)) +
             " does not match the template");
      }
    }
  }
}

}  // namespace

Decomposition induce_partition(const Lmdp& lmdp, const DecompositionInput& input) {
  require_valid(lmdp);
  Layout lay = check_layout(lmdp, input);
  const std::size_t n_part = lay.states_of.size();
  const std::size_t n_class = lay.members_of.size();

  std::vector<std::vector<std::size_t>> targets(n_part);
  const bool supplied = !input.slot_targets.empty();
  if (supplied) {
    if (input.slot_targets.size() != n_part) {
      throw DecompositionError("partition: slot targets must be given for all " +
                               std::to_string(n_part) + " partitions");
    }
    for (std::size_t p = 0; p < n_part; ++p) {
      for (std::size_t t : input.slot_targets[p]) {
        if (t == kAbsent) continue;
        if (t >= lmdp.n_total()) {
          throw DecompositionError("partition " + std::to_string(p) + ": slot target " +
                                   std::to_string(t) + " out of range");
        }
        if (!lmdp.is_terminal(t) && input.partition_of[t] == p) {
          throw DecompositionError("partition " + std::to_string(p) + ": slot target " +
                                   std::to_string(t) + " lies inside the partition");
        }
      }
      targets[p] = input.slot_targets[p];
    }
  }

  Decomposition dec;
  dec.templates.resize(n_class);
  for (std::size_t c = 0; c < n_class; ++c) {
    const auto& mem = lay.members_of[c];
    std::vector<std::vector<Successor>> rows;
    if (supplied) {
      for (std::size_t p : mem) {
        if (targets[p].size() != targets[mem.front()].size()) {
          throw DecompositionError("not equivalent: partitions " + std::to_string(mem.front()) +
                                   " and " + std::to_string(p) + " have different slot counts");
        }
      }
      explicit_slots(lmdp, input, lay, c, targets, rows);
    } else {
      derive_slots(lmdp, input, lay, c, targets, rows);
    }
    const std::size_t k_local = rows.size();
    const std::size_t n_slots = targets[mem.front()].size();
    std::vector<double> rewards(k_local);
    for (std::size_t x = 0; x < k_local; ++x) rewards[x] = lmdp.state_reward(lay.states_of[mem.front()][x]);
    auto& tmpl = dec.templates[c];
    tmpl.class_id = c;
    tmpl.members = mem;
    tmpl.dynamics = Lmdp(k_local, n_slots, std::move(rows), std::move(rewards),
                         std::vector<double>(n_slots, 0.0));
    for (std::size_t p : mem) verify_member(lmdp, input, lay, tmpl, p, targets[p]);
  }

  PartitionSpec& spec = dec.spec;
  spec.n_states = lmdp.n_states();
  spec.max_support = lmdp.max_support();
  spec.partition_of = input.partition_of;
  spec.class_of = input.class_of;
  spec.local_index = input.local_index;
  spec.states_of = lay.states_of;
  spec.members_of = lay.members_of;
  for (const auto& t : dec.templates) {
    spec.n_local_of_class.push_back(t.n_local());
    spec.n_slots_of_class.push_back(t.n_slots());
  }
  spec.slot_target = targets;

  std::vector<std::size_t> exits;
  for (const auto& row : targets) {
    for (std::size_t t : row) {
      if (!is_zero_target(lmdp, t)) exits.push_back(t);
    }
  }
  std::sort(exits.begin(), exits.end());
  exits.erase(std::unique(exits.begin(), exits.end()), exits.end());
  spec.exits = exits;
  spec.exit_index_of.assign(lmdp.n_total(), kAbsent);
  spec.partition_exits.assign(n_part, {});
  for (std::size_t e = 0; e < exits.size(); ++e) {
    spec.exit_index_of[exits[e]] = e;
    spec.exit_pinned.push_back(lmdp.is_terminal(exits[e]));
    if (!lmdp.is_terminal(exits[e])) spec.partition_exits[input.partition_of[exits[e]]].push_back(e);
  }
  spec.slot_exit.assign(n_part, {});
  for (std::size_t p = 0; p < n_part; ++p) {
    for (std::size_t t : targets[p]) {
      spec.slot_exit[p].push_back(is_zero_target(lmdp, t) ? kAbsent : spec.exit_index_of[t]);
    }
  }
  return dec;
}

std::vector<Lmdp> build_base_lmdps(const SubtaskTemplate& tmpl) {
  const Lmdp& d = tmpl.dynamics;
  std::vector<Lmdp> out;
  out.reserve(tmpl.n_slots());
  for (std::size_t k = 0; k < tmpl.n_slots(); ++k) {
    std::vector<std::vector<Successor>> rows(d.n_states());
    for (std::size_t x = 0; x < d.n_states(); ++x) {
      auto cols = d.successors(x);
      auto probs = d.probabilities(x);
      for (std::size_t e = 0; e < cols.size(); ++e) rows[x].push_back({cols[e], probs[e]});
    }
    std::vector<double> j(tmpl.n_slots(), kNegInf);
    j[k] = 0.0;
    out.emplace_back(d.n_states(), d.n_terminal(), std::move(rows), d.state_rewards(), std::move(j));
  }
  return out;
}

BaseTable::BaseTable(std::size_t local, std::size_t slots, double interior_init)
    : n_local(local), n_slots(slots), data(slots * (local + slots), 0.0) {
  for (std::size_t k = 0; k < slots; ++k) {
    for (std::size_t x = 0; x < local; ++x) at(k, x) = interior_init;
    at(k, local + k) = 1.0;
  }
}

BaseTable solve_bases(const SubtaskTemplate& tmpl, const SolveConfig& cfg) {
  auto bases = build_base_lmdps(tmpl);
  BaseTable table(tmpl.n_local(), tmpl.n_slots(), 0.0);
  const auto n = static_cast<std::int64_t>(bases.size());
  std::vector<std::exception_ptr> errors(bases.size());
  SolveConfig inner = cfg;
  inner.backend = Backend::serial;
  const bool parallel = cfg.backend == Backend::openmp;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      auto res = solve_flat(bases[k], inner);
      std::copy(res.z.begin(), res.z.end(), table.data.begin() + static_cast<std::ptrdiff_t>(k * table.n_cols()));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return table;
}

BaseValueSet solve_all_bases(const std::vector<SubtaskTemplate>& templates, const SolveConfig& cfg) {
  BaseValueSet out;
  for (const auto& t : templates) out.classes.push_back(solve_bases(t, cfg));
  return out;
}

double compose_state_value(const PartitionSpec& spec, const BaseValueSet& bases,
                           std::span<const double> exit_values, std::size_t s) {
  const std::size_t p = spec.partition_of[s];
  const BaseTable& tab = bases.classes[spec.class_of[p]];
  const std::size_t x = spec.local_index[s];
  const auto& slots = spec.slot_exit[p];
  double acc = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k] == kAbsent) continue;
    acc += exit_values[slots[k]] * tab.at(k, x);
  }
  return acc;
}

ExitSystem build_exit_system(const PartitionSpec& spec, const BaseValueSet& bases, const Lmdp& lmdp,
                             double lambda) {
  ExitSystem sys;
  sys.exits = spec.exits;
  sys.pinned = spec.exit_pinned;
  sys.pins.assign(spec.n_exits(), 0.0);
  sys.g.n_cols = spec.n_exits();
  for (std::size_t e = 0; e < spec.n_exits(); ++e) {
    const std::size_t s = spec.exits[e];
    if (spec.exit_pinned[e]) {
      sys.pins[e] = std::exp(lmdp.terminal_reward(s) / lambda);
      continue;
    }
    if (s >= spec.partition_of.size()) {
      throw DecompositionError("exit " + std::to_string(s) + " is not covered by any partition");
    }
    sys.free_exits.push_back(e);
    const std::size_t p = spec.partition_of[s];
    const BaseTable& tab = bases.classes[spec.class_of[p]];
    const std::size_t x = spec.local_index[s];
    std::map<std::size_t, double> coef;
    for (std::size_t k = 0; k < spec.slot_exit[p].size(); ++k) {
      std::size_t ex = spec.slot_exit[p][k];
      if (ex != kAbsent) coef[ex] += tab.at(k, x);
    }
    for (const auto& [col, v] : coef) {
      if (v == 0.0) continue;
      sys.g.cols.push_back(col);
      sys.g.vals.push_back(v);
    }
    sys.g.row_offsets.push_back(sys.g.cols.size());
  }
  return sys;
}

ExitSolution solve_exit_system(const ExitSystem& sys, const SolveConfig& cfg,
                               std::optional<std::span<const double>> initial) {
  cfg.check();
  const std::size_t n = sys.exits.size();
  if (initial && initial->size() != n) {
    throw DimensionError("solve_exit_system: initial guess has " + std::to_string(initial->size()) +
                         " entries, expected " + std::to_string(n));
  }
  ExitSolution sol;
  sol.z.resize(n);
  for (std::size_t e = 0; e < n; ++e) {
    sol.z[e] = sys.pinned[e] ? sys.pins[e] : (initial ? (*initial)[e] : 1.0);
  }
  const std::size_t m = sys.free_exits.size();
  if (m == 0) return sol;
  std::vector<double> prev(m);
  std::vector<double> next(m);
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    for (std::size_t i = 0; i < m; ++i) prev[i] = sol.z[sys.free_exits[i]];
    kernels::scaled_matvec(cfg.backend, sys.g, {}, sol.z, next);
    sol.residual = kernels::max_relative_change(cfg.backend, prev, next, kZFloor);
    for (std::size_t i = 0; i < m; ++i) sol.z[sys.free_exits[i]] = next[i];
    sol.iterations = it;
    if (sol.residual <= cfg.tol) {
      for (std::size_t e : sys.free_exits) {
        if (sol.z[e] < kZFloor) sol.z[e] = 0.0;
      }
      return sol;
    }
  }
  throw ConvergenceError("solve_exit_system: no convergence after " + std::to_string(cfg.max_iters) +
                             " iterations, residual " + std::to_string(sol.residual),
                         sol.residual, sol.iterations);
}

HierarchicalSolution solve_hierarchical(const Lmdp& lmdp, const Decomposition& dec,
                                        const SolveConfig& cfg) {
  HierarchicalSolution out;
  out.bases = solve_all_bases(dec.templates, cfg);
  out.system = build_exit_system(dec.spec, out.bases, lmdp, cfg.lambda);
  out.exit_solution = solve_exit_system(out.system, cfg);
  out.z.assign(lmdp.n_total(), 0.0);
  for (std::size_t s = 0; s < lmdp.n_states(); ++s) {
    out.z[s] = compose_state_value(dec.spec, out.bases, out.exit_solution.z, s);
  }
  auto pins = terminal_z(lmdp, cfg.lambda);
  std::copy(pins.begin(), pins.end(), out.z.begin() + static_cast<std::ptrdiff_t>(lmdp.n_states()));
  return out;
}

DecompositionSize decomposition_size(const PartitionSpec& spec) {
  DecompositionSize d;
  d.n_classes = spec.n_classes();
  for (std::size_t c = 0; c < spec.n_classes(); ++c) {
    d.max_local = std::max(d.max_local, spec.n_local_of_class[c]);
    d.max_slots = std::max(d.max_slots, spec.n_slots_of_class[c]);
  }
  d.n_exits = spec.n_exits();
  d.max_support = spec.max_support;
  d.n_states = spec.n_states;
  d.n_bases = d.n_classes * d.max_slots;
  d.stored_values = d.n_classes * d.max_local * d.max_slots + d.n_exits;
  d.periter_cost = d.n_classes * d.max_slots * d.max_support * d.max_local + d.max_slots * d.n_exits;
  d.flat_periter_cost = d.max_support * d.n_states;
  return d;
}

namespace {

std::vector<std::pair<std::string_view, std::size_t>> split_fields(std::string_view line) {
  std::vector<std::pair<std::string_view, std::size_t>> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    out.emplace_back(line.substr(start, i - start), start + 1);
  }
  return out;
}

std::size_t field_index(const std::pair<std::string_view, std::size_t>& f, std::size_t line) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(f.first.data(), f.first.data() + f.first.size(), v);
  if (ec != std::errc() || p != f.first.data() + f.first.size()) {
    throw ParseError("expected a nonnegative integer, got '" + std::string(f.first) + "'", line, f.second);
  }
  return v;
}

}  // namespace

DecompositionInput parse_partition(std::string_view text, std::size_t n_states) {
  DecompositionInput in;
  in.partition_of.assign(n_states, kAbsent);
  in.local_index.assign(n_states, kAbsent);
  std::map<std::size_t, std::size_t> classes;
  std::map<std::size_t, std::map<std::size_t, std::size_t>> slots;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto f = split_fields(line);
    if (f.empty() || f[0].first.front() == '#') continue;
    auto need = [&](std::size_t n) {
      if (f.size() != n) {
        throw ParseError("'" + std::string(f[0].first) + "' takes " + std::to_string(n - 1) + " fields",
                         line_no, f.size() > n ? f[n].second : f.back().second);
      }
    };
    if (f[0].first == "p") {
      need(4);
      std::size_t s = field_index(f[1], line_no);
      if (s >= n_states) throw ParseError("state out of range", line_no, f[1].second);
      in.partition_of[s] = field_index(f[2], line_no);
      in.local_index[s] = field_index(f[3], line_no);
    } else if (f[0].first == "c") {
      need(3);
      classes[field_index(f[1], line_no)] = field_index(f[2], line_no);
    } else if (f[0].first == "t") {
      need(4);
      std::size_t p = field_index(f[1], line_no);
      std::size_t k = field_index(f[2], line_no);
      slots[p][k] = f[3].first == "ABSENT" ? kAbsent : field_index(f[3], line_no);
    } else {
      throw ParseError("unknown record '" + std::string(f[0].first) + "'", line_no, f[0].second);
    }
  }
  for (std::size_t s = 0; s < n_states; ++s) {
    if (in.partition_of[s] == kAbsent) {
      throw ParseError("state " + std::to_string(s) + " has no 'p' record", line_no, 1);
    }
  }
  std::size_t n_part = 0;
  for (std::size_t p : in.partition_of) n_part = std::max(n_part, p + 1);
  in.class_of.assign(n_part, kAbsent);
  for (const auto& [p, c] : classes) {
    if (p >= n_part) throw ParseError("class record for unknown partition " + std::to_string(p), line_no, 1);
    in.class_of[p] = c;
  }
  for (std::size_t p = 0; p < n_part; ++p) {
    if (in.class_of[p] == kAbsent) {
      throw ParseError("partition " + std::to_string(p) + " has no 'c' record", line_no, 1);
    }
  }
  if (!slots.empty()) {
    in.slot_targets.assign(n_part, {});
    for (std::size_t p = 0; p < n_part; ++p) {
      auto it = slots.find(p);
      if (it == slots.end()) {
        throw ParseError("partition " + std::to_string(p) + " has no 't' records", line_no, 1);
      }
      std::size_t n_slot = it->second.rbegin()->first + 1;
      if (it->second.size() != n_slot) {
        throw ParseError("partition " + std::to_string(p) + " skips a slot index", line_no, 1);
      }
      for (const auto& [k, t] : it->second) in.slot_targets[p].push_back(t);
    }
  }
  return in;
}

std::string format_partition(const PartitionSpec& spec) {
  std::string out;
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    out += "p " + std::to_string(s) + " " + std::to_string(spec.partition_of[s]) + " " +
           std::to_string(spec.local_index[s]) + "\n";
  }
  for (std::size_t p = 0; p < spec.n_partitions(); ++p) {
    out += "c " + std::to_string(p) + " " + std::to_string(spec.class_of[p]) + "\n";
  }
  for (std::size_t p = 0; p < spec.n_partitions(); ++p) {
    for (std::size_t k = 0; k < spec.slot_target[p].size(); ++k) {
      out += "t " + std::to_string(p) + " " + std::to_string(k) + " " +
             describe_target(spec.slot_target[p][k]) + "\n";
    }
  }
  return out;
}

}  // namespace hlmdp
