#pragma once

// Linearly-solvable MDP container, validation and the plain-text exchange format.

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hlmdp/kernels.hpp"

namespace hlmdp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual, std::size_t iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  std::size_t iterations() const { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line, std::size_t column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        line_(line),
        column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class DecompositionError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Successor {
  std::size_t state;
  double prob;
};

/// An LMDP over non-terminal states 0..S-1 and terminal states S..S+T-1.
///
/// Rows are stored sorted by successor index; duplicate successors are merged.
/// Construction only checks container sizes, so malformed problems can still be
/// built and reported by validate(). A terminal reward of -inf is allowed and
/// means the terminal has exponentiated value 0.
class Lmdp {
 public:
  Lmdp() = default;
  Lmdp(std::size_t n_states, std::size_t n_terminal, std::vector<std::vector<Successor>> rows,
       std::vector<double> state_reward, std::vector<double> terminal_reward);

  std::size_t n_states() const { return n_states_; }
  std::size_t n_terminal() const { return n_terminal_; }
  std::size_t n_total() const { return n_states_ + n_terminal_; }
  bool is_terminal(std::size_t s) const { return s >= n_states_; }

  const CsrMatrix& transitions() const { return p_; }
  std::span<const std::size_t> successors(std::size_t s) const { return p_.row_cols(s); }
  std::span<const double> probabilities(std::size_t s) const { return p_.row_vals(s); }
  /// P(to | from), zero outside the support.
  double prob(std::size_t from, std::size_t to) const;

  double state_reward(std::size_t s) const { return state_reward_[s]; }
  const std::vector<double>& state_rewards() const { return state_reward_; }
  /// Reward of terminal state with global index t (t >= n_states()).
  double terminal_reward(std::size_t t) const { return terminal_reward_[t - n_states_]; }
  const std::vector<double>& terminal_rewards() const { return terminal_reward_; }

  /// Largest support size over all rows (B).
  std::size_t max_support() const { return p_.max_row_size(); }

 private:
  std::size_t n_states_ = 0;
  std::size_t n_terminal_ = 0;
  CsrMatrix p_;
  std::vector<double> state_reward_;
  std::vector<double> terminal_reward_;
};

/// Lists every broken invariant; empty iff the problem is well formed.
std::vector<std::string> validate(const Lmdp& lmdp);

/// Throws Error carrying the first violation, if any.
void require_valid(const Lmdp& lmdp);

struct LmdpDocument {
  Lmdp lmdp;
  double lambda_default = 1.0;
};

// Text format:
//   lmdp S T lambda
//   P s s' prob
//   R s reward
//   J t reward        (t is the global index, S <= t < S+T)
// Blank lines and lines starting with '#' are ignored.
LmdpDocument parse_lmdp(std::string_view text);
std::string format_lmdp(const Lmdp& lmdp, double lambda_default);

}  // namespace hlmdp
