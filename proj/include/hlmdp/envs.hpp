#pragma once

// Benchmark domains with their decompositions.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hlmdp/hierarchy.hpp"
#include "hlmdp/lmdp.hpp"

namespace hlmdp {

struct Domain {
  Lmdp lmdp;
  Decomposition dec;
};

/// X by Y rooms of w by h cells. Rooms connect through a wall opening at the
/// middle of each shared wall; the goal terminal G hangs off one cell of the
/// goal room. Coordinates count from the top-left, x to the right, y down.
///
/// With padded_equivalence every room exposes the same five slots (G, L, R, T,
/// B); slots without a real target lead to a shared BLOCKED terminal whose
/// reward is -inf, so all rooms form a single class. Without padding, rooms are
/// grouped by their doorway pattern.
struct RoomsConfig {
  std::size_t rooms_x = 2;
  std::size_t rooms_y = 2;
  std::size_t room_w = 5;
  std::size_t room_h = 5;
  std::optional<std::size_t> door_row;  // row of the L/R openings; default h / 2
  std::optional<std::size_t> door_col;  // column of the T/B openings; default w / 2
  std::optional<std::pair<std::size_t, std::size_t>> goal_room;  // default top-right room
  std::optional<std::pair<std::size_t, std::size_t>> goal_cell;  // default top-right corner
  double interior_reward = -1.0;
  double goal_reward = 0.0;
  bool padded_equivalence = true;

  void check() const;
};

Domain build_rooms(const RoomsConfig& cfg);

/// Grid taxi. A passenger waits at one landmark and wants to reach another.
/// Partitions are keyed by (passenger landmark, destination) plus one
/// in-taxi partition per destination; the taxi position is the local state.
/// At a landmark cell the uncontrolled dynamics add one extra outcome:
/// picking up (correct landmark), failing (wrong landmark, terminal with
/// failure_reward), or dropping off (success terminal at the destination,
/// otherwise the passenger waits at that landmark).
struct TaxiConfig {
  std::size_t grid_w = 5;
  std::size_t grid_h = 5;
  std::vector<std::pair<std::size_t, std::size_t>> landmarks;  // default: the four corners
  double interior_reward = -1.0;
  double success_reward = 0.0;
  double failure_reward = -10.0;

  std::vector<std::pair<std::size_t, std::size_t>> resolved_landmarks() const;
  void check() const;
};

Domain build_taxi(const TaxiConfig& cfg);

/// Partition id of the "passenger waiting at `at`, heading to `dest`" subtask.
std::size_t taxi_waiting_partition(const TaxiConfig& cfg, std::size_t at, std::size_t dest);
/// Partition id of the "passenger in the taxi, heading to `dest`" subtask.
std::size_t taxi_riding_partition(const TaxiConfig& cfg, std::size_t dest);

/// ASCII map:
///   goal <J>        required
///   reward <R>      optional, default -1
///   <grid>
/// The grid is (2H+1) x (2W+1) characters. Cells sit at odd (row, column)
/// positions: '.' floor, 'G' floor next to the goal terminal, '#' no cell.
/// Characters between two cells are '.' for an opening and '#' for a wall;
/// the border must be '#'. Floor cells are numbered row-major; the goal
/// terminal gets index S.
Lmdp parse_map(std::string_view text);

Domain load_map(std::string_view map_text, std::string_view partition_text);

struct MapDocuments {
  std::string map;
  std::string partition;
};

/// Map and partition documents that reproduce an unpadded rooms layout.
MapDocuments rooms_to_map(const RoomsConfig& cfg);

}  // namespace hlmdp
