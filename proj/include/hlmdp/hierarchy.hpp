#pragma once

// Two-level decomposition of an LMDP.
//
// Non-terminal states are partitioned; each partition induces a subtask whose
// terminals are the outside states reachable in one step. Subtasks with the
// same local dynamics share a template, and the template's terminal slots are
// the union of its members' terminals. Solving one base LMDP per slot (boundary
// z = 1 on that slot, 0 elsewhere) gives a basis: any subtask value is a
// weighted sum of base values with weights equal to the exit values. The exit
// values themselves solve a small linear fixed point z_E = G z_E.

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "hlmdp/lmdp.hpp"
#include "hlmdp/solver.hpp"

namespace hlmdp {

inline constexpr std::size_t kAbsent = std::numeric_limits<std::size_t>::max();

struct DecompositionInput {
  std::vector<std::size_t> partition_of;  // per non-terminal state, ids 0..L-1
  std::vector<std::size_t> class_of;      // per partition, ids 0..C-1
  std::vector<std::size_t> local_index;   // per non-terminal state, its template state
  // Per partition: slot k -> the global state its transitions reach, or kAbsent.
  // Leave empty to derive slots from the dynamics.
  std::vector<std::vector<std::size_t>> slot_targets;
};

struct SubtaskTemplate {
  std::size_t class_id = 0;
  std::vector<std::size_t> members;  // partition ids, ascending
  // Local states 0..K-1 and slots K..K+n-1. Terminal rewards are placeholders.
  Lmdp dynamics;

  std::size_t n_local() const { return dynamics.n_states(); }
  std::size_t n_slots() const { return dynamics.n_terminal(); }
};

struct PartitionSpec {
  std::size_t n_states = 0;
  std::size_t max_support = 0;  // B of the full problem

  std::vector<std::size_t> partition_of;
  std::vector<std::size_t> class_of;
  std::vector<std::size_t> local_index;
  std::vector<std::vector<std::size_t>> states_of;   // per partition, by local index
  std::vector<std::vector<std::size_t>> members_of;  // per class
  std::vector<std::size_t> n_local_of_class;
  std::vector<std::size_t> n_slots_of_class;

  // Slot -> global state as supplied or derived (may be a zero-valued terminal).
  std::vector<std::vector<std::size_t>> slot_target;
  // Slot -> exit index; kAbsent when the slot is absent or leads to a z = 0 terminal.
  std::vector<std::vector<std::size_t>> slot_exit;

  std::vector<std::size_t> exits;          // global indices, ascending
  std::vector<bool> exit_pinned;           // exit is a terminal of the full problem
  std::vector<std::size_t> exit_index_of;  // per global state, kAbsent if not an exit
  std::vector<std::vector<std::size_t>> partition_exits;  // E_i as exit indices

  std::size_t n_partitions() const { return class_of.size(); }
  std::size_t n_classes() const { return members_of.size(); }
  std::size_t n_exits() const { return exits.size(); }
  std::size_t class_of_state(std::size_t s) const { return class_of[partition_of[s]]; }
  bool is_exit(std::size_t s) const { return exit_index_of[s] != kAbsent; }
};

struct Decomposition {
  PartitionSpec spec;
  std::vector<SubtaskTemplate> templates;  // indexed by class id
};

/// Builds templates and verifies that every member realizes its template's
/// dynamics and rewards (to 1e-12). Throws DecompositionError on failure.
Decomposition induce_partition(const Lmdp& lmdp, const DecompositionInput& input);

/// The n base LMDPs of a template; base k pins slot k to z = 1 and every
/// other slot to z = 0 (reward -inf).
std::vector<Lmdp> build_base_lmdps(const SubtaskTemplate& tmpl);

/// n_slots rows over n_local + n_slots columns; row k holds z^k, including its
/// boundary columns.
struct BaseTable {
  std::size_t n_local = 0;
  std::size_t n_slots = 0;
  std::vector<double> data;

  BaseTable() = default;
  BaseTable(std::size_t local, std::size_t slots, double interior_init);

  std::size_t n_cols() const { return n_local + n_slots; }
  double at(std::size_t k, std::size_t col) const { return data[k * n_cols() + col]; }
  double& at(std::size_t k, std::size_t col) { return data[k * n_cols() + col]; }
  std::span<const double> row(std::size_t k) const { return {data.data() + k * n_cols(), n_cols()}; }
};

struct BaseValueSet {
  std::vector<BaseTable> classes;
};

BaseTable solve_bases(const SubtaskTemplate& tmpl, const SolveConfig& cfg);
BaseValueSet solve_all_bases(const std::vector<SubtaskTemplate>& templates, const SolveConfig& cfg);

/// sum_k z_E(slot k) * z^k(f(s)); absent slots weigh 0.
double compose_state_value(const PartitionSpec& spec, const BaseValueSet& bases,
                           std::span<const double> exit_values, std::size_t s);

struct ExitSystem {
  std::vector<std::size_t> exits;       // global indices
  std::vector<bool> pinned;
  std::vector<double> pins;             // exp(J/lambda) for pinned exits, 0 otherwise
  std::vector<std::size_t> free_exits;  // exit indices of non-terminal exits
  CsrMatrix g;                          // one row per free exit, columns are exit indices
};

ExitSystem build_exit_system(const PartitionSpec& spec, const BaseValueSet& bases,
                             const Lmdp& lmdp, double lambda);

struct ExitSolution {
  ZVector z;  // per exit
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Power iteration on the free exits with pinned exits held constant. The
/// default start is 1 on free exits.
ExitSolution solve_exit_system(const ExitSystem& sys, const SolveConfig& cfg,
                               std::optional<std::span<const double>> initial = std::nullopt);

struct HierarchicalSolution {
  BaseValueSet bases;
  ExitSystem system;
  ExitSolution exit_solution;
  ZVector z;  // over S+T; terminals pinned
};

/// Model-based pipeline: bases, exit system, then composition at every state.
HierarchicalSolution solve_hierarchical(const Lmdp& lmdp, const Decomposition& dec,
                                        const SolveConfig& cfg);

struct DecompositionSize {
  std::size_t n_classes = 0;    // C
  std::size_t max_local = 0;    // K
  std::size_t max_slots = 0;    // N
  std::size_t n_exits = 0;      // E
  std::size_t max_support = 0;  // B
  std::size_t n_states = 0;     // S
  std::size_t n_bases = 0;      // C*N
  std::size_t stored_values = 0;       // C*K*N + E
  std::size_t periter_cost = 0;        // C*N*B*K + N*E
  std::size_t flat_periter_cost = 0;   // B*S
};

DecompositionSize decomposition_size(const PartitionSpec& spec);

/// Partition text format:
///   p s partition_id local_index
///   c partition_id class_id
///   t partition_id slot global_state|ABSENT
/// '#' starts a comment line. `t` lines are optional as a whole.
DecompositionInput parse_partition(std::string_view text, std::size_t n_states);
std::string format_partition(const PartitionSpec& spec);

}  // namespace hlmdp
