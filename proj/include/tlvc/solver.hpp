#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tlvc/dvg.hpp"
#include "tlvc/error.hpp"
#include "tlvc/log.hpp"
#include "tlvc/mdp.hpp"
#include "tlvc/parallel.hpp"

namespace tlvc {

using Table = std::vector<double>;

inline double sup_distance(const Table& a, const Table& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// V⁺(x) = max_a V(f(x, a)).
inline Table successor_max(const Mdp& mdp, const Table& v) {
  Table out(mdp.state_count());
  for (std::size_t x = 0; x < out.size(); ++x) out[x] = mdp.best_successor(v, x);
  return out;
}

// ---------------------------------------------------------------------------
// Bellman backups

inline Table backup_avoid(const Table& v, const Table& q, const Mdp& mdp, double gamma, unsigned jobs = 1) {
  Table out(mdp.state_count());
  parallel_for(out.size(), jobs, [&](std::size_t x) {
    out[x] = (1 - gamma) * q[x] + gamma * std::min(mdp.best_successor(v, x), q[x]);
  });
  return out;
}

inline Table backup_reach_avoid(const Table& v, const Table& r, const Table& q, const Mdp& mdp, double gamma,
                                unsigned jobs = 1) {
  Table out(mdp.state_count());
  parallel_for(out.size(), jobs, [&](std::size_t x) {
    out[x] = (1 - gamma) * std::min(r[x], q[x]) + gamma * std::min(std::max(mdp.best_successor(v, x), r[x]), q[x]);
  });
  return out;
}

/// Loop backup for phase j of a cycle of tables; phase j + 1 wraps to 0.
inline Table backup_reach_avoid_loop(const std::vector<Table>& vs, std::size_t j, const Table& r, const Table& q,
                                     const Mdp& mdp, double gamma, unsigned jobs = 1) {
  const Table& vj = vs.at(j);
  const Table& vn = vs.at((j + 1) % vs.size());
  Table out(mdp.state_count());
  parallel_for(out.size(), jobs, [&](std::size_t x) {
    double hand_over = std::min(r[x], mdp.best_successor(vn, x));
    out[x] = (1 - gamma) * std::min(r[x], q[x]) +
             gamma * std::min(std::max(hand_over, mdp.best_successor(vj, x)), q[x]);
  });
  return out;
}

/// Undiscounted reach-avoid value: least fixpoint of W = min(q, max(r, W⁺)).
inline Table reach_avoid_fixpoint(const Table& r, const Table& q, const Mdp& mdp) {
  const std::size_t n = mdp.state_count();
  Table w(n);
  for (std::size_t x = 0; x < n; ++x) w[x] = std::min(r[x], q[x]);
  for (std::size_t it = 0; it <= n; ++it) {
    bool changed = false;
    Table next(n);
    for (std::size_t x = 0; x < n; ++x) {
      next[x] = std::min(q[x], std::max(r[x], mdp.best_successor(w, x)));
      changed |= next[x] != w[x];
    }
    w = std::move(next);
    if (!changed) return w;
  }
  throw InvariantError("reach-avoid fixpoint did not stabilize");
}

// ---------------------------------------------------------------------------
// Configuration and results

/// How cycles of ReachAvoidLoop nodes are solved.
///  kCoupledReach: exact undiscounted phase values by nested fixpoint, then one
///    discounted reach-avoid problem per phase against the next phase's values.
///  kJacobi: synchronous iteration of backup_reach_avoid_loop over the cycle.
enum class LoopMethod { kCoupledReach, kJacobi };

struct SolveConfig {
  std::vector<double> gamma_schedule{0.9, 0.99, 0.999};
  double tol = 1e-9;
  std::optional<std::size_t> max_iters;  // per gamma and node; see default_max_iters
  bool warm_start = true;
  LoopMethod loop_method = LoopMethod::kCoupledReach;
  unsigned jobs = 1;
  bool record_schedule = false;  // keep every node table at every gamma
};

inline void validate(const SolveConfig& cfg) {
  if (cfg.gamma_schedule.empty()) throw ConfigError("gamma schedule is empty");
  for (std::size_t k = 0; k < cfg.gamma_schedule.size(); ++k) {
    double g = cfg.gamma_schedule[k];
    if (!(g > 0.0 && g < 1.0)) throw ConfigError("gamma must lie in (0, 1), got " + std::to_string(g));
    if (k && !(g > cfg.gamma_schedule[k - 1])) throw ConfigError("gamma schedule must be strictly ascending");
  }
  if (!(cfg.tol > 0.0) || !std::isfinite(cfg.tol)) throw ConfigError("tol must be positive");
  if (cfg.max_iters && *cfg.max_iters == 0) throw ConfigError("max_iters must be positive");
}

/// 100·n sweeps plus the number a γ-contraction needs to shrink a unit error below tol.
inline std::size_t default_max_iters(std::size_t state_count, double gamma, double tol) {
  double contraction = std::ceil(std::log(tol) / std::log(gamma));
  return 100 * state_count + static_cast<std::size_t>(std::max(0.0, contraction));
}

struct Solution {
  double gamma = 0.0;
  std::vector<Table> values;
  std::vector<Table> reach;         // reach table used in the final backups (empty for Avoid)
  std::vector<Table> loop_targets;  // undiscounted phase values (coupled loop method only)
  std::vector<std::size_t> iterations;
  std::vector<double> residuals;
  std::vector<bool> solved;
  std::vector<std::pair<double, std::vector<Table>>> schedule;  // when record_schedule is set

  explicit Solution(std::size_t nodes = 0)
      : values(nodes), reach(nodes), loop_targets(nodes), iterations(nodes, 0), residuals(nodes, 0.0),
        solved(nodes, false) {}

  std::size_t node_count() const { return values.size(); }

  const Table& table(std::size_t id) const {
    if (id >= values.size() || !solved[id]) throw DependencyError("node " + std::to_string(id) + " is not solved");
    return values[id];
  }
};

/// Pointwise fold of a value expression over solved node tables.
inline Table eval_value_expr(const ValueExpr& e, const Solution& sol, const PredicateRegistry& reg, const Mdp& mdp) {
  switch (e->kind) {
    case VKind::kConst: return eval_state(e->state, reg);
    case VKind::kValueRef: return sol.table(e->ref);
    case VKind::kNextValueRef: return successor_max(mdp, sol.table(e->ref));
    case VKind::kMin:
    case VKind::kMax: {
      Table acc = eval_value_expr(e->children[0], sol, reg, mdp);
      for (std::size_t k = 1; k < e->children.size(); ++k) {
        Table t = eval_value_expr(e->children[k], sol, reg, mdp);
        for (std::size_t x = 0; x < acc.size(); ++x)
          acc[x] = e->kind == VKind::kMin ? std::min(acc[x], t[x]) : std::max(acc[x], t[x]);
      }
      return acc;
    }
  }
  throw InvariantError("value expression kind");
}

struct LoopParts {
  StateExpr reach;  // r̃_j
  std::size_t next;
};

/// Splits a loop node reach Min(Const r̃, NextValueRef next).
inline LoopParts loop_parts(const DvgNode& v) {
  const ValueExpr& e = v.reach;
  if (v.kind != NodeKind::kReachAvoidLoop || !e || e->kind != VKind::kMin || e->children.size() != 2 ||
      e->children[0]->kind != VKind::kConst || e->children[1]->kind != VKind::kNextValueRef ||
      !v.loop_next || e->children[1]->ref != *v.loop_next)
    throw DomainError("node " + std::to_string(v.id) + " is not a well-formed loop node");
  return {e->children[0]->state, *v.loop_next};
}

namespace detail {

class Solver {
 public:
  Solver(const Dvg& g, const Mdp& mdp, const PredicateRegistry& reg, const SolveConfig& cfg)
      : g_(g), mdp_(mdp), reg_(reg), cfg_(cfg), sol_(g.nodes.size()) {
    if (reg.state_count() != mdp.state_count())
      throw DomainError("registry covers " + std::to_string(reg.state_count()) + " states, MDP has " +
                        std::to_string(mdp.state_count()));
    validate(cfg_);
  }

  Solution run() {
    std::vector<Table> previous;
    for (double gamma : cfg_.gamma_schedule) {
      sol_.gamma = gamma;
      std::fill(sol_.solved.begin(), sol_.solved.end(), false);
      limit_ = cfg_.max_iters ? *cfg_.max_iters : default_max_iters(mdp_.state_count(), gamma, cfg_.tol);
      for (const auto& scc : g_.topo_order) {
        if (g_.nodes[scc[0]].kind == NodeKind::kReachAvoidLoop)
          solve_loop(scc, gamma, previous);
        else
          solve_single(g_.nodes[scc[0]], gamma, previous);
      }
      if (cfg_.warm_start) previous = sol_.values;
      if (cfg_.record_schedule) sol_.schedule.emplace_back(gamma, sol_.values);
      log::debug("solved ", g_.nodes.size(), " nodes at gamma ", gamma);
    }
    return std::move(sol_);
  }

 private:
  Table initial(const std::vector<Table>& previous, std::size_t id, const Table& fallback) const {
    return previous.empty() ? fallback : previous[id];
  }

  template <typename Step>
  Table iterate(Table v, std::size_t id, double gamma, Step step) {
    double delta = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= limit_; ++it) {
      Table w = step(v);
      delta = sup_distance(v, w);
      v = std::move(w);
      ++sol_.iterations[id];
      if (delta < cfg_.tol) {
        sol_.residuals[id] = delta;
        return v;
      }
    }
    throw ConvergenceError("node " + std::to_string(id) + " did not converge at gamma " + std::to_string(gamma) +
                               " within " + std::to_string(limit_) + " sweeps",
                           delta);
  }

  void finish(std::size_t id, Table v) {
    sol_.values[id] = std::move(v);
    sol_.solved[id] = true;
  }

  void solve_single(const DvgNode& v, double gamma, const std::vector<Table>& previous) {
    const unsigned jobs = cfg_.jobs;
    switch (v.kind) {
      case NodeKind::kAvoid: {
        Table q = eval_state(v.avoid, reg_);
        Table out = iterate(initial(previous, v.id, q), v.id, gamma,
                            [&](const Table& t) { return backup_avoid(t, q, mdp_, gamma, jobs); });
        finish(v.id, std::move(out));
        return;
      }
      case NodeKind::kReachAvoid: {
        Table q = eval_state(v.avoid, reg_);
        Table r = eval_value_expr(v.reach, sol_, reg_, mdp_);
        Table start(q.size());
        for (std::size_t x = 0; x < q.size(); ++x) start[x] = std::min(r[x], q[x]);
        Table out = iterate(initial(previous, v.id, start), v.id, gamma,
                            [&](const Table& t) { return backup_reach_avoid(t, r, q, mdp_, gamma, jobs); });
        sol_.reach[v.id] = std::move(r);
        finish(v.id, std::move(out));
        return;
      }
      case NodeKind::kMaxCombine:
      case NodeKind::kOneStep: {
        Table r = eval_value_expr(v.reach, sol_, reg_, mdp_);
        sol_.reach[v.id] = r;
        sol_.residuals[v.id] = 0.0;
        finish(v.id, std::move(r));
        return;
      }
      case NodeKind::kReachAvoidLoop: break;
    }
    throw InvariantError("loop node outside a loop component");
  }

  void solve_loop(const std::vector<std::size_t>& scc, double gamma, const std::vector<Table>& previous) {
    // Order the cycle by following loop_next from the smallest id.
    std::vector<std::size_t> cycle{scc[0]};
    while (true) {
      std::size_t nxt = loop_parts(g_.nodes[cycle.back()]).next;
      if (nxt == cycle[0]) break;
      if (cycle.size() > scc.size()) throw DomainError("loop component is not a simple cycle");
      cycle.push_back(nxt);
    }
    if (cycle.size() != scc.size()) throw DomainError("loop component is not a simple cycle");
    const std::size_t J = cycle.size();
    std::vector<Table> r(J), q(J);
    for (std::size_t j = 0; j < J; ++j) {
      r[j] = eval_state(loop_parts(g_.nodes[cycle[j]]).reach, reg_);
      q[j] = eval_state(g_.nodes[cycle[j]].avoid, reg_);
    }
    if (cfg_.loop_method == LoopMethod::kJacobi)
      solve_loop_jacobi(cycle, r, q, gamma, previous);
    else
      solve_loop_coupled(cycle, r, q, gamma, previous);
  }

  void solve_loop_jacobi(const std::vector<std::size_t>& cycle, const std::vector<Table>& r,
                         const std::vector<Table>& q, double gamma, const std::vector<Table>& previous) {
    const std::size_t J = cycle.size(), n = mdp_.state_count();
    std::vector<Table> vs(J);
    for (std::size_t j = 0; j < J; ++j) {
      Table start(n);
      for (std::size_t x = 0; x < n; ++x) start[x] = std::min(r[j][x], q[j][x]);
      vs[j] = initial(previous, cycle[j], start);
    }
    double delta = std::numeric_limits<double>::infinity();
    for (std::size_t it = 1; it <= limit_; ++it) {
      std::vector<Table> next(J);
      delta = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        next[j] = backup_reach_avoid_loop(vs, j, r[j], q[j], mdp_, gamma, cfg_.jobs);
        delta = std::max(delta, sup_distance(vs[j], next[j]));
      }
      vs = std::move(next);
      for (std::size_t id : cycle) ++sol_.iterations[id];
      if (delta < cfg_.tol) {
        for (std::size_t j = 0; j < J; ++j) {
          Table hand_over = successor_max(mdp_, vs[(j + 1) % J]);
          for (std::size_t x = 0; x < n; ++x) hand_over[x] = std::min(hand_over[x], r[j][x]);
          sol_.reach[cycle[j]] = std::move(hand_over);
          sol_.residuals[cycle[j]] = delta;
        }
        for (std::size_t j = 0; j < J; ++j) finish(cycle[j], std::move(vs[j]));
        return;
      }
    }
    throw ConvergenceError("loop component at node " + std::to_string(cycle[0]) + " did not converge", delta);
  }

  void solve_loop_coupled(const std::vector<std::size_t>& cycle, const std::vector<Table>& r,
                          const std::vector<Table>& q, double gamma, const std::vector<Table>& previous) {
    const std::size_t J = cycle.size(), n = mdp_.state_count();
    if (sol_.loop_targets[cycle[0]].empty()) {
      // Greatest fixpoint over phases of the undiscounted reach-avoid values.
      std::vector<Table> u(J, Table(n, reg_.bound()));
      for (std::size_t round = 0;; ++round) {
        if (round > (J + 1) * (n + 1) * (n + 1) * 4) throw InvariantError("loop fixpoint did not stabilize");
        std::vector<Table> next(J);
        for (std::size_t j = 0; j < J; ++j) next[j] = reach_avoid_fixpoint(hand_over(r[j], u[(j + 1) % J]), q[j], mdp_);
        if (next == u) break;
        u = std::move(next);
      }
      for (std::size_t j = 0; j < J; ++j) sol_.loop_targets[cycle[j]] = u[j];
    }
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t id = cycle[j];
      Table reach = hand_over(r[j], sol_.loop_targets[cycle[(j + 1) % J]]);
      Table start(n);
      for (std::size_t x = 0; x < n; ++x) start[x] = std::min(reach[x], q[j][x]);
      Table out = iterate(initial(previous, id, start), id, gamma, [&](const Table& t) {
        return backup_reach_avoid(t, reach, q[j], mdp_, gamma, cfg_.jobs);
      });
      sol_.reach[id] = std::move(reach);
      finish(id, std::move(out));
    }
  }

  // min(r̃_j, U⁺_{j+1})
  Table hand_over(const Table& r, const Table& next) const {
    Table out = successor_max(mdp_, next);
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = std::min(out[x], r[x]);
    return out;
  }

  const Dvg& g_;
  const Mdp& mdp_;
  const PredicateRegistry& reg_;
  SolveConfig cfg_;
  Solution sol_;
  std::size_t limit_ = 0;
};

}  // namespace detail

inline Solution solve(const Dvg& g, const Mdp& mdp, const PredicateRegistry& reg, const SolveConfig& cfg = {}) {
  return detail::Solver(g, mdp, reg, cfg).run();
}

/// ‖B[V] − V‖∞ for one node, using the backup and reach table of the final solve.
inline double fixed_point_residual(const Dvg& g, const Solution& sol, const Mdp& mdp, const PredicateRegistry& reg,
                                   std::size_t id, LoopMethod method = LoopMethod::kCoupledReach) {
  const DvgNode& v = g.node(id);
  const Table& val = sol.table(id);
  Table q = eval_state(v.avoid, reg);
  switch (v.kind) {
    case NodeKind::kAvoid: return sup_distance(val, backup_avoid(val, q, mdp, sol.gamma));
    case NodeKind::kReachAvoid: return sup_distance(val, backup_reach_avoid(val, sol.reach[id], q, mdp, sol.gamma));
    case NodeKind::kMaxCombine:
    case NodeKind::kOneStep: return sup_distance(val, eval_value_expr(v.reach, sol, reg, mdp));
    case NodeKind::kReachAvoidLoop: {
      if (method == LoopMethod::kCoupledReach)
        return sup_distance(val, backup_reach_avoid(val, sol.reach[id], q, mdp, sol.gamma));
      std::vector<Table> vs{val, sol.table(loop_parts(v).next)};
      Table r = eval_state(loop_parts(v).reach, reg);
      return sup_distance(val, backup_reach_avoid_loop(vs, 0, r, q, mdp, sol.gamma));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Export

inline std::string values_csv(const Solution& sol) {
  std::ostringstream os;
  os << std::setprecision(17) << "node,state,value\n";
  for (std::size_t id = 0; id < sol.node_count(); ++id)
    for (std::size_t x = 0; x < sol.values[id].size(); ++x) os << id << ',' << x << ',' << sol.values[id][x] << '\n';
  return os.str();
}

/// Grid heatmap rows (row, col, value); wall cells are omitted.
inline std::string heatmap_csv(const Mdp& mdp, const Table& t) {
  if (!mdp.has_coordinates()) throw DomainError("heatmap needs a grid environment");
  std::ostringstream os;
  os << std::setprecision(17) << "row,col,value\n";
  for (std::size_t x = 0; x < t.size(); ++x) os << mdp.cell(x).row << ',' << mdp.cell(x).col << ',' << t[x] << '\n';
  return os.str();
}

inline constexpr std::uint32_t kBlobVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}
inline void put_f64(std::string& out, double d) {
  auto bits = std::bit_cast<std::uint64_t>(d);
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}
inline std::uint64_t get_le(const std::string& in, std::size_t& pos, int bytes) {
  if (pos + bytes > in.size()) throw SchemaError("value blob is truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < bytes; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  pos += bytes;
  return v;
}

}  // namespace detail

/// Layout: "DVGV", u32 version, u32 node count, then per node u32 state count
/// followed by that many f64. All integers and floats little-endian.
inline std::string to_blob(const std::vector<Table>& tables) {
  std::string out = "DVGV";
  detail::put_u32(out, kBlobVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(tables.size()));
  for (const auto& t : tables) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.size()));
    for (double d : t) detail::put_f64(out, d);
  }
  return out;
}

inline std::vector<Table> from_blob(const std::string& in) {
  if (in.size() < 4 || in.compare(0, 4, "DVGV") != 0) throw SchemaError("value blob has bad magic");
  std::size_t pos = 4;
  if (detail::get_le(in, pos, 4) != kBlobVersion) throw SchemaError("unsupported value blob version");
  auto nodes = detail::get_le(in, pos, 4);
  std::vector<Table> out;
  for (std::uint64_t i = 0; i < nodes; ++i) {
    auto n = detail::get_le(in, pos, 4);
    if (n * 8 > in.size() - pos) throw SchemaError("value blob is truncated");
    Table t(n);
    for (auto& d : t) d = std::bit_cast<double>(detail::get_le(in, pos, 8));
    out.push_back(std::move(t));
  }
  if (pos != in.size()) throw SchemaError("trailing bytes in value blob");
  return out;
}

}  // namespace tlvc
