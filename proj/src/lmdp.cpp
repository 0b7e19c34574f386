#include "hlmdp/lmdp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace hlmdp {

Lmdp::Lmdp(std::size_t n_states, std::size_t n_terminal, std::vector<std::vector<Successor>> rows,
           std::vector<double> state_reward, std::vector<double> terminal_reward)
    : n_states_(n_states),
      n_terminal_(n_terminal),
      state_reward_(std::move(state_reward)),
      terminal_reward_(std::move(terminal_reward)) {
  if (rows.size() != n_states_ || state_reward_.size() != n_states_) {
    throw DimensionError("lmdp: expected " + std::to_string(n_states_) +
                         " transition rows and state rewards");
  }
  if (terminal_reward_.size() != n_terminal_) {
    throw DimensionError("lmdp: expected " + std::to_string(n_terminal_) + " terminal rewards");
  }
  p_.n_cols = n_total();
  p_.row_offsets.reserve(n_states_ + 1);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end(),
              [](const Successor& a, const Successor& b) { return a.state < b.state; });
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (!p_.cols.empty() && p_.cols.size() > p_.row_offsets.back() &&
          p_.cols.back() == row[i].state) {
        p_.vals.back() += row[i].prob;
        continue;
      }
      p_.cols.push_back(row[i].state);
      p_.vals.push_back(row[i].prob);
    }
    p_.row_offsets.push_back(p_.cols.size());
  }
}

double Lmdp::prob(std::size_t from, std::size_t to) const {
  auto cols = successors(from);
  auto it = std::lower_bound(cols.begin(), cols.end(), to);
  if (it == cols.end() || *it != to) return 0.0;
  return probabilities(from)[static_cast<std::size_t>(it - cols.begin())];
}

std::vector<std::string> validate(const Lmdp& lmdp) {
  std::vector<std::string> out;
  auto at = [](std::size_t s) { return "state " + std::to_string(s) + ": "; };
  for (std::size_t s = 0; s < lmdp.n_states(); ++s) {
    auto cols = lmdp.successors(s);
    auto probs = lmdp.probabilities(s);
    if (cols.empty()) {
      out.push_back(at(s) + "empty transition row");
    }
    double sum = 0.0;
    for (std::size_t e = 0; e < cols.size(); ++e) {
      if (cols[e] >= lmdp.n_total()) {
        out.push_back(at(s) + "successor " + std::to_string(cols[e]) + " out of range");
      }
      if (!(probs[e] > 0.0 && probs[e] <= 1.0)) {
        out.push_back(at(s) + "probability " + std::to_string(probs[e]) + " to successor " +
                      std::to_string(cols[e]) + " outside (0, 1]");
      }
      sum += probs[e];
    }
    if (!cols.empty() && std::fabs(sum - 1.0) > 1e-12) {
      std::ostringstream msg;
      msg.precision(17);
      msg << at(s) << "row sum " << sum << " differs from 1";
      out.push_back(msg.str());
    }
    double r = lmdp.state_reward(s);
    if (!(r < 0.0)) {
      out.push_back(at(s) + "nonnegative reward " + std::to_string(r));
    }
  }
  for (std::size_t t = lmdp.n_states(); t < lmdp.n_total(); ++t) {
    if (std::isnan(lmdp.terminal_reward(t))) {
      out.push_back("terminal " + std::to_string(t) + ": reward is NaN");
    }
  }
  return out;
}

void require_valid(const Lmdp& lmdp) {
  auto v = validate(lmdp);
  if (!v.empty()) {
    throw Error("invalid lmdp: " + v.front() +
                (v.size() > 1 ? " (+" + std::to_string(v.size() - 1) + " more)" : ""));
  }
}

namespace {

struct LineReader {
  std::string_view text;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  bool next(std::string_view& line) {
    while (pos <= text.size()) {
      if (pos == text.size()) {
        pos++;
        return false;
      }
      std::size_t end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      line = text.substr(pos, end - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      pos = end + 1;
      ++line_no;
      return true;
    }
    return false;
  }
};

struct Token {
  std::string_view text;
  std::size_t column;  // 1-based
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    toks.push_back({line.substr(start, i - start), start + 1});
  }
  return toks;
}

std::size_t parse_index(const Token& t, std::size_t line) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || p != t.text.data() + t.text.size()) {
    throw ParseError("expected a nonnegative integer, got '" + std::string(t.text) + "'", line,
                     t.column);
  }
  return v;
}

double parse_real(const Token& t, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
  if (ec != std::errc() || p != t.text.data() + t.text.size()) {
    throw ParseError("expected a real number, got '" + std::string(t.text) + "'", line, t.column);
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

LmdpDocument parse_lmdp(std::string_view text) {
  LineReader reader{text};
  std::string_view line;
  bool have_header = false;
  std::size_t n_states = 0;
  std::size_t n_terminal = 0;
  double lambda = 1.0;
  std::vector<std::vector<Successor>> rows;
  std::vector<double> rewards;
  std::vector<double> terminal;
  std::vector<bool> reward_set;
  std::vector<bool> terminal_set;

  auto expect = [&](const std::vector<Token>& toks, std::size_t n) {
    if (toks.size() != n) {
      std::size_t col = toks.size() > n ? toks[n].column : toks.back().column;
      throw ParseError("'" + std::string(toks[0].text) + "' takes " + std::to_string(n - 1) +
                           " fields",
                       reader.line_no, col);
    }
  };

  while (reader.next(line)) {
    auto toks = tokenize(line);
    if (toks.empty() || toks[0].text.front() == '#') continue;
    const auto& kw = toks[0].text;
    const std::size_t ln = reader.line_no;
    if (!have_header) {
      if (kw != "lmdp") throw ParseError("expected 'lmdp S T lambda' header", ln, toks[0].column);
      expect(toks, 4);
      n_states = parse_index(toks[1], ln);
      n_terminal = parse_index(toks[2], ln);
      lambda = parse_real(toks[3], ln);
      if (!(lambda > 0.0)) throw ParseError("lambda must be positive", ln, toks[3].column);
      rows.assign(n_states, {});
      rewards.assign(n_states, 0.0);
      reward_set.assign(n_states, false);
      terminal.assign(n_terminal, 0.0);
      terminal_set.assign(n_terminal, false);
      have_header = true;
      continue;
    }
    if (kw == "P") {
      expect(toks, 4);
      std::size_t s = parse_index(toks[1], ln);
      std::size_t t = parse_index(toks[2], ln);
      double p = parse_real(toks[3], ln);
      if (s >= n_states) throw ParseError("source must be a non-terminal state", ln, toks[1].column);
      if (t >= n_states + n_terminal) throw ParseError("successor out of range", ln, toks[2].column);
      if (!(p > 0.0 && p <= 1.0)) throw ParseError("probability outside (0, 1]", ln, toks[3].column);
      rows[s].push_back({t, p});
    } else if (kw == "R") {
      expect(toks, 3);
      std::size_t s = parse_index(toks[1], ln);
      if (s >= n_states) throw ParseError("R expects a non-terminal state", ln, toks[1].column);
      rewards[s] = parse_real(toks[2], ln);
      reward_set[s] = true;
    } else if (kw == "J") {
      expect(toks, 3);
      std::size_t t = parse_index(toks[1], ln);
      if (t < n_states || t >= n_states + n_terminal) {
        throw ParseError("J expects a terminal state index", ln, toks[1].column);
      }
      terminal[t - n_states] = parse_real(toks[2], ln);
      terminal_set[t - n_states] = true;
    } else {
      throw ParseError("unknown record '" + std::string(kw) + "'", ln, toks[0].column);
    }
  }
  if (!have_header) throw ParseError("missing 'lmdp' header", reader.line_no, 1);
  for (std::size_t s = 0; s < n_states; ++s) {
    if (!reward_set[s]) throw ParseError("no R record for state " + std::to_string(s), reader.line_no, 1);
  }
  for (std::size_t t = 0; t < n_terminal; ++t) {
    if (!terminal_set[t]) {
      throw ParseError("no J record for terminal " + std::to_string(n_states + t), reader.line_no, 1);
    }
  }
  LmdpDocument doc{Lmdp(n_states, n_terminal, std::move(rows), std::move(rewards), std::move(terminal)),
                   lambda};
  for (std::size_t s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (double p : doc.lmdp.probabilities(s)) sum += p;
    if (std::fabs(sum - 1.0) > 1e-12) {
      throw ParseError("transition row of state " + std::to_string(s) + " sums to " + format_real(sum),
                       reader.line_no, 1);
    }
  }
  return doc;
}

std::string format_lmdp(const Lmdp& lmdp, double lambda_default) {
  std::string out = "lmdp " + std::to_string(lmdp.n_states()) + " " +
                    std::to_string(lmdp.n_terminal()) + " " + format_real(lambda_default) + "\n";
  for (std::size_t s = 0; s < lmdp.n_states(); ++s) {
    auto cols = lmdp.successors(s);
    auto probs = lmdp.probabilities(s);
    for (std::size_t e = 0; e < cols.size(); ++e) {
      out += "P " + std::to_string(s) + " " + std::to_string(cols[e]) + " " + format_real(probs[e]) + "\n";
    }
  }
  for (std::size_t s = 0; s < lmdp.n_states(); ++s) {
    out += "R " + std::to_string(s) + " " + format_real(lmdp.state_reward(s)) + "\n";
  }
  for (std::size_t t = lmdp.n_states(); t < lmdp.n_total(); ++t) {
    out += "J " + std::to_string(t) + " " + format_real(lmdp.terminal_reward(t)) + "\n";
  }
  return out;
}

}  // namespace hlmdp
