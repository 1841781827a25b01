#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tlvc/error.hpp"
#include "tlvc/logic.hpp"

namespace tlvc {

struct Cell {
  int row = 0;
  int col = 0;
  auto operator<=>(const Cell&) const = default;
};

/// Finite deterministic MDP: successor(x, a) is total.
class Mdp {
 public:
  Mdp() = default;
  Mdp(std::size_t state_count, std::size_t action_count, std::vector<std::size_t> successor)
      : n_(state_count), m_(action_count), succ_(std::move(successor)) {
    if (n_ == 0 || m_ == 0) throw DomainError("mdp needs at least one state and one action");
    if (succ_.size() != n_ * m_) throw DomainError("successor table has wrong size");
    for (std::size_t s : succ_)
      if (s >= n_) throw DomainError("successor " + std::to_string(s) + " out of range");
  }

  std::size_t state_count() const { return n_; }
  std::size_t action_count() const { return m_; }
  std::size_t successor(std::size_t x, std::size_t a) const { return succ_[x * m_ + a]; }
  const std::vector<std::size_t>& successor_table() const { return succ_; }

  bool has_coordinates() const { return !coords_.empty(); }
  const Cell& cell(std::size_t x) const { return coords_.at(x); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }

  /// State index at a grid cell, if the cell is playable.
  std::optional<std::size_t> state_at(Cell c) const {
    auto it = by_cell_.find(c);
    if (it == by_cell_.end()) return std::nullopt;
    return it->second;
  }

  void set_coordinates(std::vector<Cell> coords, int rows, int cols) {
    if (coords.size() != n_) throw DomainError("coordinate table has wrong size");
    coords_ = std::move(coords);
    rows_ = rows;
    cols_ = cols;
    by_cell_.clear();
    for (std::size_t x = 0; x < n_; ++x) by_cell_[coords_[x]] = x;
  }

  /// max over actions of v(successor(x, a)).
  template <typename Table>
  double best_successor(const Table& v, std::size_t x) const {
    double best = v[succ_[x * m_]];
    for (std::size_t a = 1; a < m_; ++a) best = std::max(best, static_cast<double>(v[succ_[x * m_ + a]]));
    return best;
  }

  /// Lowest-index action attaining best_successor.
  template <typename Table>
  std::size_t argmax_successor(const Table& v, std::size_t x) const {
    std::size_t best_a = 0;
    double best = v[succ_[x * m_]];
    for (std::size_t a = 1; a < m_; ++a) {
      double val = v[succ_[x * m_ + a]];
      if (val > best) {
        best = val;
        best_a = a;
      }
    }
    return best_a;
  }

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::vector<std::size_t> succ_;
  std::vector<Cell> coords_;
  std::map<Cell, std::size_t> by_cell_;
  int rows_ = 0;
  int cols_ = 0;
};

enum GridAction : std::size_t { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };
inline constexpr std::size_t kGridActions = 5;

struct Rect {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;
  bool contains(Cell c) const {
    return c.row >= row_min && c.row <= row_max && c.col >= col_min && c.col <= col_max;
  }
};

struct GridSpec {
  int rows = 1;
  int cols = 1;
  std::set<Cell> walls;
  std::vector<std::pair<std::string, Rect>> regions;
  double scale = 0.25;
};

struct Grid {
  Mdp mdp;
  PredicateRegistry registry;
};

/// Signed region atom: scale * (depth + 0.5) inside, -scale * (distance - 0.5) outside.
inline double region_atom(const Rect& r, Cell c, double scale) {
  if (r.contains(c)) {
    int depth = std::min(std::min(c.row - r.row_min, r.row_max - c.row),
                         std::min(c.col - r.col_min, r.col_max - c.col));
    return std::clamp(scale * (depth + 0.5), -1.0, 1.0);
  }
  int dist = std::max(std::max(r.row_min - c.row, c.row - r.row_max),
                      std::max(r.col_min - c.col, c.col - r.col_max));
  return std::clamp(-scale * (dist - 0.5), -1.0, 1.0);
}

inline void validate(const GridSpec& g) {
  if (g.rows <= 0 || g.cols <= 0) throw ConfigError("grid dimensions must be positive");
  if (!(g.scale > 0.0)) throw ConfigError("scale must be positive");
  auto inside = [&](Cell c) { return c.row >= 0 && c.row < g.rows && c.col >= 0 && c.col < g.cols; };
  for (const auto& w : g.walls)
    if (!inside(w))
      throw ConfigError("wall (" + std::to_string(w.row) + ", " + std::to_string(w.col) + ") outside grid");
  std::set<std::string> names;
  for (const auto& [name, r] : g.regions) {
    if (!names.insert(name).second) throw ConfigError("duplicate region '" + name + "'");
    if (r.row_min > r.row_max || r.col_min > r.col_max)
      throw ConfigError("region '" + name + "' has an empty rectangle");
    if (!inside({r.row_min, r.col_min}) || !inside({r.row_max, r.col_max}))
      throw ConfigError("region '" + name + "' lies outside the grid");
  }
}

inline Grid build_grid(const GridSpec& g) {
  validate(g);
  std::vector<Cell> cells;
  std::map<Cell, std::size_t> index;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      if (!g.walls.count({r, c})) {
        index[{r, c}] = cells.size();
        cells.push_back({r, c});
      }
  if (cells.empty()) throw ConfigError("grid has an empty playable area");
  static constexpr int kDr[kGridActions] = {0, -1, 1, 0, 0};
  static constexpr int kDc[kGridActions] = {0, 0, 0, -1, 1};
  std::vector<std::size_t> succ(cells.size() * kGridActions);
  for (std::size_t x = 0; x < cells.size(); ++x) {
    for (std::size_t a = 0; a < kGridActions; ++a) {
      Cell to{cells[x].row + kDr[a], cells[x].col + kDc[a]};
      auto it = index.find(to);
      succ[x * kGridActions + a] = it == index.end() ? x : it->second;
    }
  }
  Grid out{Mdp(cells.size(), kGridActions, std::move(succ)), PredicateRegistry(cells.size(), 1.0)};
  out.mdp.set_coordinates(cells, g.rows, g.cols);
  for (const auto& [name, rect] : g.regions)
    out.registry.add_fn(name, [&](std::size_t x) { return region_atom(rect, cells[x], g.scale); });
  return out;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<int> parse_ints(const std::string& text, std::size_t line_no) {
  std::istringstream in(text);
  std::vector<int> out;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected an integer, got '" + tok + "'");
    }
  }
  return out;
}

inline bool valid_name(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  static const std::set<std::string> kReserved = {"X", "F", "G", "U", "true", "false", "not", "and", "or"};
  return !kReserved.count(s);
}

}  // namespace detail

/// Parses the grid config format:
///   rows = 4
///   cols = 4
///   walls = 1 1; 2 1            (row col pairs, ';' separated)
///   region.goal = 0 3 0 3       (row_min col_min row_max col_max, inclusive)
///   scale = 0.25                (optional)
/// `#` starts a comment.
inline GridSpec parse_grid_config(const std::string& text) {
  GridSpec g;
  bool have_rows = false, have_cols = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
    if (key == "rows" || key == "cols") {
      auto v = detail::parse_ints(value, line_no);
      if (v.size() != 1) throw ConfigError(where() + key + " takes one integer");
      (key == "rows" ? g.rows : g.cols) = v[0];
      (key == "rows" ? have_rows : have_cols) = true;
    } else if (key == "scale") {
      try {
        std::size_t used = 0;
        g.scale = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ConfigError(where() + "bad scale '" + value + "'");
      }
    } else if (key == "walls") {
      std::istringstream cells(value);
      std::string item;
      while (std::getline(cells, item, ';')) {
        if (detail::trim(item).empty()) continue;
        auto v = detail::parse_ints(item, line_no);
        if (v.size() != 2) throw ConfigError(where() + "wall cells are 'row col' pairs");
        g.walls.insert({v[0], v[1]});
      }
    } else if (key.rfind("region.", 0) == 0) {
      std::string name = key.substr(7);
      if (!detail::valid_name(name)) throw ConfigError(where() + "invalid region name '" + name + "'");
      auto v = detail::parse_ints(value, line_no);
      if (v.size() != 4) throw ConfigError(where() + "region takes row_min col_min row_max col_max");
      g.regions.push_back({name, Rect{v[0], v[1], v[2], v[3]}});
    } else {
      throw ConfigError(where() + "unknown key '" + key + "'");
    }
  }
  if (!have_rows || !have_cols) throw ConfigError("config must set rows and cols");
  validate(g);
  return g;
}

inline std::string to_config(const GridSpec& g) {
  std::ostringstream os;
  os << "rows = " << g.rows << "\ncols = " << g.cols << "\n";
  if (!g.walls.empty()) {
    os << "walls =";
    bool first = true;
    for (const auto& w : g.walls) {
      os << (first ? " " : "; ") << w.row << ' ' << w.col;
      first = false;
    }
    os << "\n";
  }
  for (const auto& [name, r] : g.regions)
    os << "region." << name << " = " << r.row_min << ' ' << r.col_min << ' ' << r.row_max << ' ' << r.col_max << "\n";
  os << "scale = " << g.scale << "\n";
  return os.str();
}

/// A deterministic controller with a 64-bit memory word: (state, memory) -> (action, next memory).
using ActionChooser = std::function<std::pair<std::size_t, std::uint64_t>(std::size_t, std::uint64_t)>;

struct RolloutLog {
  std::vector<std::size_t> states;    // x_0 .. x_T
  std::vector<std::uint64_t> memory;  // memory held at each state
  std::vector<std::size_t> actions;   // a_t taken at x_t (one fewer than states)
  std::optional<std::size_t> loop_start;

  Trace trace() const {
    if (!loop_start) return Trace::finite(states);
    std::vector<std::size_t> prefix(states.begin(), states.begin() + static_cast<long>(*loop_start));
    std::vector<std::size_t> cycle(states.begin() + static_cast<long>(*loop_start), states.end());
    return Trace::lasso(std::move(prefix), std::move(cycle));
  }
};

/// Runs the controller until a (state, memory) pair repeats or `horizon` steps pass.
/// On repetition the log holds the states up to (excluding) the repeat.
inline RolloutLog rollout_log(const Mdp& mdp, const ActionChooser& policy, std::size_t x0,
                              std::size_t horizon, std::uint64_t memory0 = 0) {
  if (horizon < 1) throw DomainError("horizon must be at least 1");
  if (x0 >= mdp.state_count()) throw DomainError("start state " + std::to_string(x0) + " out of range");
  RolloutLog log;
  std::map<std::pair<std::size_t, std::uint64_t>, std::size_t> seen;
  std::size_t x = x0;
  std::uint64_t mem = memory0;
  for (std::size_t t = 0;; ++t) {
    auto [it, fresh] = seen.emplace(std::make_pair(x, mem), t);
    if (!fresh) {
      log.loop_start = it->second;
      log.actions.resize(log.states.size());
      return log;
    }
    log.states.push_back(x);
    log.memory.push_back(mem);
    if (t == horizon) break;
    auto [a, next_mem] = policy(x, mem);
    if (a >= mdp.action_count()) throw DomainError("policy chose an invalid action");
    log.actions.push_back(a);
    x = mdp.successor(x, a);
    mem = next_mem;
  }
  return log;
}

inline Trace rollout(const Mdp& mdp, const ActionChooser& policy, std::size_t x0, std::size_t horizon) {
  return rollout_log(mdp, policy, x0, horizon).trace();
}

}  // namespace tlvc
