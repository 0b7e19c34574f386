#include "hlmdp/envs.hpp"

#include <algorithm>
#include <charconv>
#include <array>
#include <map>
#include <optional>

namespace hlmdp {
namespace {

std::vector<Successor> uniform(const std::vector<std::size_t>& targets) {
  std::vector<Successor> row;
  const double p = 1.0 / static_cast<double>(targets.size());
  for (std::size_t t : targets) row.push_back({t, p});
  return row;
}

// Slot order of a room template.
enum RoomSlot : std::size_t { kSlotG = 0, kSlotL, kSlotR, kSlotT, kSlotB, kRoomSlots };

struct RoomsGeometry {
  std::size_t X, Y, w, h, door_row, door_col, goal_rx, goal_ry, goal_cx, goal_cy;

  explicit RoomsGeometry(const RoomsConfig& c)
      : X(c.rooms_x),
        Y(c.rooms_y),
        w(c.room_w),
        h(c.room_h),
        door_row(c.door_row.value_or(c.room_h / 2)),
        door_col(c.door_col.value_or(c.room_w / 2)),
        goal_rx(c.goal_room ? c.goal_room->first : c.rooms_x - 1),
        goal_ry(c.goal_room ? c.goal_room->second : 0),
        goal_cx(c.goal_cell ? c.goal_cell->first : c.room_w - 1),
        goal_cy(c.goal_cell ? c.goal_cell->second : 0) {}

  std::size_t cells() const { return w * h; }
  std::size_t n_states() const { return X * Y * cells(); }
  std::size_t state(std::size_t rx, std::size_t ry, std::size_t cx, std::size_t cy) const {
    return (ry * X + rx) * cells() + cy * w + cx;
  }
  bool is_goal_room(std::size_t rx, std::size_t ry) const { return rx == goal_rx && ry == goal_ry; }

  // Real target of each slot of room (rx, ry), kAbsent where there is none.
  std::array<std::size_t, kRoomSlots> slot_targets(std::size_t rx, std::size_t ry, std::size_t goal) const {
    std::array<std::size_t, kRoomSlots> t{};
    t.fill(kAbsent);
    if (is_goal_room(rx, ry)) t[kSlotG] = goal;
    if (rx > 0) t[kSlotL] = state(rx - 1, ry, w - 1, door_row);
    if (rx + 1 < X) t[kSlotR] = state(rx + 1, ry, 0, door_row);
    if (ry > 0) t[kSlotT] = state(rx, ry - 1, door_col, h - 1);
    if (ry + 1 < Y) t[kSlotB] = state(rx, ry + 1, door_col, 0);
    return t;
  }

  // Local cell that owns each slot's transition.
  std::pair<std::size_t, std::size_t> slot_cell(std::size_t k) const {
    switch (k) {
      case kSlotG: return {goal_cx, goal_cy};
      case kSlotL: return {0, door_row};
      case kSlotR: return {w - 1, door_row};
      case kSlotT: return {door_col, 0};
      default: return {door_col, h - 1};
    }
  }
};

}  // namespace

void RoomsConfig::check() const {
  if (rooms_x < 1 || rooms_y < 1 || room_w < 1 || room_h < 1) {
    throw Error("rooms: grid and room dimensions must be at least 1");
  }
  RoomsGeometry g(*this);
  if (g.door_row >= room_h || g.door_col >= room_w) throw Error("rooms: doorway offset outside the wall");
  if (g.goal_rx >= rooms_x || g.goal_ry >= rooms_y) throw Error("rooms: goal room outside the grid");
  if (g.goal_cx >= room_w || g.goal_cy >= room_h) throw Error("rooms: goal cell outside the room");
  if (!(interior_reward < 0.0)) throw Error("rooms: interior reward must be negative");
}

Domain build_rooms(const RoomsConfig& cfg) {
  cfg.check();
  RoomsGeometry g(cfg);
  const std::size_t S = g.n_states();
  const std::size_t goal = S;
  const std::size_t blocked = S + 1;
  const bool pad = cfg.padded_equivalence;

  std::vector<std::vector<Successor>> rows(S);
  DecompositionInput in;
  in.partition_of.resize(S);
  in.local_index.resize(S);
  std::vector<std::array<std::size_t, kRoomSlots>> room_targets;
  for (std::size_t ry = 0; ry < g.Y; ++ry) {
    for (std::size_t rx = 0; rx < g.X; ++rx) {
      auto targets = g.slot_targets(rx, ry, goal);
      if (pad) {
        for (auto& t : targets) {
          if (t == kAbsent) t = blocked;
        }
      }
      room_targets.push_back(targets);
      for (std::size_t cy = 0; cy < g.h; ++cy) {
        for (std::size_t cx = 0; cx < g.w; ++cx) {
          const std::size_t s = g.state(rx, ry, cx, cy);
          std::vector<std::size_t> succ;
          if (cx > 0) succ.push_back(g.state(rx, ry, cx - 1, cy));
          if (cx + 1 < g.w) succ.push_back(g.state(rx, ry, cx + 1, cy));
          if (cy > 0) succ.push_back(g.state(rx, ry, cx, cy - 1));
          if (cy + 1 < g.h) succ.push_back(g.state(rx, ry, cx, cy + 1));
          for (std::size_t k = 0; k < kRoomSlots; ++k) {
            if (g.slot_cell(k) == std::pair{cx, cy} && targets[k] != kAbsent) succ.push_back(targets[k]);
          }
          rows[s] = uniform(succ);
          in.partition_of[s] = ry * g.X + rx;
          in.local_index[s] = cy * g.w + cx;
        }
      }
    }
  }

  // Strict mode: one class per doorway pattern, slots restricted to the pattern.
  std::map<std::array<bool, kRoomSlots>, std::size_t> pattern_class;
  in.slot_targets.resize(room_targets.size());
  for (std::size_t r = 0; r < room_targets.size(); ++r) {
    std::array<bool, kRoomSlots> pattern{};
    for (std::size_t k = 0; k < kRoomSlots; ++k) pattern[k] = pad || room_targets[r][k] != kAbsent;
    auto [it, inserted] = pattern_class.emplace(pattern, pattern_class.size());
    in.class_of.push_back(it->second);
    for (std::size_t k = 0; k < kRoomSlots; ++k) {
      if (pattern[k]) in.slot_targets[r].push_back(room_targets[r][k]);
    }
  }

  std::vector<double> terminal{cfg.goal_reward};
  if (pad) terminal.push_back(kNegInf);
  const std::size_t n_terminal = terminal.size();
  Lmdp lmdp(S, n_terminal, std::move(rows), std::vector<double>(S, cfg.interior_reward), std::move(terminal));
  Domain dom{std::move(lmdp), {}};
  dom.dec = induce_partition(dom.lmdp, in);
  return dom;
}

std::vector<std::pair<std::size_t, std::size_t>> TaxiConfig::resolved_landmarks() const {
  if (!landmarks.empty()) return landmarks;
  if (grid_w == 0 || grid_h == 0) return {};
  return {{0, 0}, {grid_w - 1, 0}, {0, grid_h - 1}, {grid_w - 1, grid_h - 1}};
}

void TaxiConfig::check() const {
  if (grid_w < 1 || grid_h < 1) throw Error("taxi: grid dimensions must be at least 1");
  auto lm = resolved_landmarks();
  if (lm.size() < 2) throw Error("taxi: need at least two distinct landmarks");
  for (std::size_t i = 0; i < lm.size(); ++i) {
    if (lm[i].first >= grid_w || lm[i].second >= grid_h) throw Error("taxi: landmark outside the grid");
    for (std::size_t j = 0; j < i; ++j) {
      if (lm[i] == lm[j]) throw Error("taxi: landmarks must be distinct");
    }
  }
  if (!(interior_reward < 0.0)) throw Error("taxi: interior reward must be negative");
}

std::size_t taxi_waiting_partition(const TaxiConfig& cfg, std::size_t at, std::size_t dest) {
  return at * cfg.resolved_landmarks().size() + dest;
}

std::size_t taxi_riding_partition(const TaxiConfig& cfg, std::size_t dest) {
  const std::size_t m = cfg.resolved_landmarks().size();
  return m * m + dest;
}

Domain build_taxi(const TaxiConfig& cfg) {
  cfg.check();
  const auto lm = cfg.resolved_landmarks();
  const std::size_t m = lm.size();
  const std::size_t W = cfg.grid_w;
  const std::size_t H = cfg.grid_h;
  const std::size_t cells = W * H;
  const std::size_t n_part = m * m + m;
  const std::size_t S = n_part * cells;
  const std::size_t success = S;
  const std::size_t failure = S + 1;
  auto cell_of = [&](std::size_t q) { return lm[q].second * W + lm[q].first; };
  auto state = [&](std::size_t part, std::size_t cell) { return part * cells + cell; };
  std::vector<std::size_t> landmark_at(cells, kAbsent);
  for (std::size_t q = 0; q < m; ++q) landmark_at[cell_of(q)] = q;

  DecompositionInput in;
  in.partition_of.resize(S);
  in.local_index.resize(S);
  in.class_of.assign(n_part, 0);
  in.slot_targets.resize(n_part);
  std::vector<std::vector<Successor>> rows(S);
  for (std::size_t part = 0; part < n_part; ++part) {
    const bool riding = part >= m * m;
    const std::size_t dest = riding ? part - m * m : part % m;
    const std::size_t at = riding ? kAbsent : part / m;
    // Outcome of the landmark action at landmark q.
    auto outcome = [&](std::size_t q) {
      if (riding) return q == dest ? success : state(taxi_waiting_partition(cfg, q, dest), cell_of(q));
      return q == at ? state(taxi_riding_partition(cfg, dest), cell_of(q)) : failure;
    };
    for (std::size_t q = 0; q < m; ++q) in.slot_targets[part].push_back(outcome(q));
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t cell = y * W + x;
        std::vector<std::size_t> succ;
        if (x > 0) succ.push_back(state(part, cell - 1));
        if (x + 1 < W) succ.push_back(state(part, cell + 1));
        if (y > 0) succ.push_back(state(part, cell - W));
        if (y + 1 < H) succ.push_back(state(part, cell + W));
        if (landmark_at[cell] != kAbsent) succ.push_back(outcome(landmark_at[cell]));
        const std::size_t s = state(part, cell);
        rows[s] = uniform(succ);
        in.partition_of[s] = part;
        in.local_index[s] = cell;
      }
    }
  }
  Lmdp lmdp(S, 2, std::move(rows), std::vector<double>(S, cfg.interior_reward),
            {cfg.success_reward, cfg.failure_reward});
  Domain dom{std::move(lmdp), {}};
  dom.dec = induce_partition(dom.lmdp, in);
  return dom;
}

namespace {

struct MapGrid {
  std::vector<std::string> rows;
  std::vector<std::size_t> line_of;  // source line per grid row
};

double header_value(std::string_view tok, std::size_t line, std::size_t col) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size()) {
    throw ParseError("expected a real number, got '" + std::string(tok) + "'", line, col);
  }
  return v;
}

}  // namespace

Lmdp parse_map(std::string_view text) {
  std::optional<double> goal_reward;
  double reward = -1.0;
  MapGrid grid;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const char c0 = line.front();
    if (c0 == '#' || c0 == '.' || c0 == 'G') {
      grid.rows.emplace_back(line);
      grid.line_of.push_back(line_no);
      continue;
    }
    if (!grid.rows.empty()) throw ParseError("unexpected text after the grid", line_no, 1);
    std::size_t sp = line.find(' ');
    if (sp == std::string_view::npos) throw ParseError("expected 'key value'", line_no, 1);
    std::string_view key = line.substr(0, sp);
    std::string_view val = line.substr(sp + 1);
    while (!val.empty() && val.front() == ' ') val.remove_prefix(1);
    const std::size_t col = static_cast<std::size_t>(val.data() - line.data()) + 1;
    if (key == "goal") {
      goal_reward = header_value(val, line_no, col);
    } else if (key == "reward") {
      reward = header_value(val, line_no, col);
    } else {
      throw ParseError("unknown header '" + std::string(key) + "'", line_no, 1);
    }
  }
  if (!goal_reward) throw ParseError("missing 'goal' header", line_no, 1);
  if (grid.rows.empty()) throw ParseError("missing grid", line_no, 1);
  const std::size_t width = grid.rows.front().size();
  for (std::size_t r = 0; r < grid.rows.size(); ++r) {
    if (grid.rows[r].size() != width) {
      throw ParseError("grid row " + std::to_string(r) + " has length " + std::to_string(grid.rows[r].size()) +
                           ", expected " + std::to_string(width),
                       grid.line_of[r], std::min(grid.rows[r].size(), width) + 1);
    }
  }
  const std::size_t height = grid.rows.size();
  if (width < 3 || height < 3 || width % 2 == 0 || height % 2 == 0) {
    throw ParseError("grid dimensions must be odd and at least 3", grid.line_of.front(), 1);
  }
  auto at = [&](std::size_t r, std::size_t c) { return grid.rows[r][c]; };
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      char ch = at(r, c);
      bool cell = r % 2 == 1 && c % 2 == 1;
      bool border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
      if (ch != '#' && ch != '.' && ch != 'G') {
        throw ParseError(std::string("unexpected character '") + ch + "'", grid.line_of[r], c + 1);
      }
      if (ch == 'G' && !cell) throw ParseError("'G' must sit on a cell position", grid.line_of[r], c + 1);
      if (border && ch != '#') throw ParseError("grid border must be '#'", grid.line_of[r], c + 1);
    }
  }
  const std::size_t H = height / 2;
  const std::size_t W = width / 2;
  std::vector<std::size_t> index(H * W, kAbsent);
  std::size_t S = 0;
  bool any_goal = false;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      char ch = at(2 * y + 1, 2 * x + 1);
      if (ch != '#') index[y * W + x] = S++;
      any_goal = any_goal || ch == 'G';
    }
  }
  if (!any_goal) throw ParseError("map has no 'G' cell", grid.line_of.front(), 1);
  std::vector<std::vector<Successor>> rows(S);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t s = index[y * W + x];
      if (s == kAbsent) continue;
      const std::size_t r = 2 * y + 1;
      const std::size_t c = 2 * x + 1;
      std::vector<std::size_t> succ;
      auto link = [&](std::size_t pr, std::size_t pc, std::size_t ny, std::size_t nx) {
        if (at(pr, pc) == '.' && index[ny * W + nx] != kAbsent) succ.push_back(index[ny * W + nx]);
      };
      if (x > 0) link(r, c - 1, y, x - 1);
      if (x + 1 < W) link(r, c + 1, y, x + 1);
      if (y > 0) link(r - 1, c, y - 1, x);
      if (y + 1 < H) link(r + 1, c, y + 1, x);
      if (at(r, c) == 'G') succ.push_back(S);
      if (succ.empty()) throw ParseError("cell has no neighbours", grid.line_of[r], c + 1);
      rows[s] = uniform(succ);
    }
  }
  return Lmdp(S, 1, std::move(rows), std::vector<double>(S, reward), {*goal_reward});
}

Domain load_map(std::string_view map_text, std::string_view partition_text) {
  Domain dom{parse_map(map_text), {}};
  auto in = parse_partition(partition_text, dom.lmdp.n_states());
  dom.dec = induce_partition(dom.lmdp, in);
  return dom;
}

MapDocuments rooms_to_map(const RoomsConfig& cfg) {
  if (cfg.padded_equivalence) throw Error("rooms_to_map: padded layouts have no ASCII form");
  Domain dom = build_rooms(cfg);
  RoomsGeometry g(cfg);
  const std::size_t W = g.X * g.w;
  const std::size_t H = g.Y * g.h;
  std::vector<std::string> grid(2 * H + 1, std::string(2 * W + 1, '#'));
  auto open_h = [&](std::size_t gx, std::size_t gy) {  // between (gx, gy) and (gx + 1, gy)
    return (gx + 1) % g.w != 0 || gy % g.h == g.door_row;
  };
  auto open_v = [&](std::size_t gx, std::size_t gy) {  // between (gx, gy) and (gx, gy + 1)
    return (gy + 1) % g.h != 0 || gx % g.w == g.door_col;
  };
  std::vector<std::size_t> to_map(dom.lmdp.n_total());
  for (std::size_t gy = 0; gy < H; ++gy) {
    for (std::size_t gx = 0; gx < W; ++gx) {
      const std::size_t rx = gx / g.w, ry = gy / g.h, cx = gx % g.w, cy = gy % g.h;
      const bool goal = g.is_goal_room(rx, ry) && cx == g.goal_cx && cy == g.goal_cy;
      grid[2 * gy + 1][2 * gx + 1] = goal ? 'G' : '.';
      if (gx + 1 < W && open_h(gx, gy)) grid[2 * gy + 1][2 * gx + 2] = '.';
      if (gy + 1 < H && open_v(gx, gy)) grid[2 * gy + 2][2 * gx + 1] = '.';
      to_map[g.state(rx, ry, cx, cy)] = gy * W + gx;
    }
  }
  const std::size_t S = dom.lmdp.n_states();
  for (std::size_t t = S; t < dom.lmdp.n_total(); ++t) to_map[t] = t;

  MapDocuments docs;
  docs.map = "goal " + std::to_string(cfg.goal_reward) + "\nreward " + std::to_string(cfg.interior_reward) + "\n";
  for (const auto& row : grid) docs.map += row + "\n";
  const auto& spec = dom.dec.spec;
  std::vector<std::string> p_lines(S);
  for (std::size_t s = 0; s < S; ++s) {
    p_lines[to_map[s]] = "p " + std::to_string(to_map[s]) + " " + std::to_string(spec.partition_of[s]) + " " +
                         std::to_string(spec.local_index[s]) + "\n";
  }
  for (const auto& l : p_lines) docs.partition += l;
  for (std::size_t p = 0; p < spec.n_partitions(); ++p) {
    docs.partition += "c " + std::to_string(p) + " " + std::to_string(spec.class_of[p]) + "\n";
  }
  for (std::size_t p = 0; p < spec.n_partitions(); ++p) {
    for (std::size_t k = 0; k < spec.slot_target[p].size(); ++k) {
      docs.partition += "t " + std::to_string(p) + " " + std::to_string(k) + " " +
                        std::to_string(to_map[spec.slot_target[p][k]]) + "\n";
    }
  }
  return docs;
}

}  // namespace hlmdp
