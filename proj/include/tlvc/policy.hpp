#pragma once

#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tlvc/dvg.hpp"
#include "tlvc/logic.hpp"
#include "tlvc/mdp.hpp"
#include "tlvc/solver.hpp"

namespace tlvc {

/// Active-node marker once every obligation has been discharged.
inline constexpr std::size_t kDone = std::numeric_limits<std::size_t>::max();

struct AugState {
  std::size_t env_state = 0;
  std::size_t active = 0;
  std::size_t loop_phase = 0;
  bool operator==(const AugState&) const = default;
};

struct SwitchEvent {
  std::size_t t = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  bool operator==(const SwitchEvent&) const = default;
};

struct PolicyStep {
  std::size_t action = 0;
  std::size_t next_active = 0;
  std::size_t next_phase = 0;
  bool trigger_fired = false;
  double stay_value = 0.0;
  double switch_value = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::size_t, std::size_t>> switches;  // (from, to) in firing order
};

namespace detail {

inline double state_at(const StateExpr& e, const PredicateRegistry& reg, std::size_t x) {
  switch (e->kind) {
    case SKind::kAtom: return reg.value(e->atom, x);
    case SKind::kNegAtom: return -reg.value(e->atom, x);
    case SKind::kTop: return reg.bound();
    case SKind::kBottom: return -reg.bound();
    case SKind::kMin:
    case SKind::kMax: {
      double acc = state_at(e->children[0], reg, x);
      for (std::size_t k = 1; k < e->children.size(); ++k) {
        double v = state_at(e->children[k], reg, x);
        acc = e->kind == SKind::kMin ? std::min(acc, v) : std::max(acc, v);
      }
      return acc;
    }
  }
  throw InvariantError("state expression kind");
}

inline double value_at(const ValueExpr& e, const Solution& sol, const PredicateRegistry& reg, const Mdp& mdp,
                       std::size_t x) {
  switch (e->kind) {
    case VKind::kConst: return state_at(e->state, reg, x);
    case VKind::kValueRef: return sol.table(e->ref)[x];
    case VKind::kNextValueRef: return mdp.best_successor(sol.table(e->ref), x);
    case VKind::kMin:
    case VKind::kMax: {
      double acc = value_at(e->children[0], sol, reg, mdp, x);
      for (std::size_t k = 1; k < e->children.size(); ++k) {
        double v = value_at(e->children[k], sol, reg, mdp, x);
        acc = e->kind == VKind::kMin ? std::min(acc, v) : std::max(acc, v);
      }
      return acc;
    }
  }
  throw InvariantError("value expression kind");
}

// Child a reach disjunct hands over to, or kDone for a terminal disjunct.
inline std::size_t term_child(const ValueExpr& e) {
  std::vector<std::size_t> refs;
  collect_refs(e, refs);
  return refs.empty() ? kDone : refs.front();
}

inline std::vector<ValueExpr> disjuncts(const ValueExpr& e) {
  if (e->kind == VKind::kMax) return e->children;
  return {e};
}

// Table the policy maximizes after handing over to `next` across a time step.
inline const Table& hand_over_table(const Solution& sol, std::size_t next) {
  return sol.loop_targets.at(next).empty() ? sol.table(next) : sol.loop_targets[next];
}

inline std::size_t phase_of(const Dvg& g, std::size_t node) {
  // Position within the loop cycle, counted from the smallest id.
  for (const auto& scc : g.topo_order) {
    if (std::find(scc.begin(), scc.end(), node) == scc.end()) continue;
    std::size_t cur = scc[0], k = 0;
    while (cur != node) {
      cur = *g.nodes[cur].loop_next;
      ++k;
    }
    return k;
  }
  return 0;
}

}  // namespace detail

/// Greedy augmented-state decision. Switches along ValueRef edges fire within the
/// current step and cascade; loop and one-step hand-overs consume the step.
inline PolicyStep act(const AugState& s, const Solution& sol, const Dvg& g, const Mdp& mdp,
                      const PredicateRegistry& reg) {
  constexpr double kNone = -std::numeric_limits<double>::infinity();
  PolicyStep out;
  const std::size_t x = s.env_state;
  std::size_t node = s.active;
  if (node != kDone && (node >= g.nodes.size() || s.loop_phase != detail::phase_of(g, node)))
    throw DomainError("augmented state does not name a node and its loop phase");
  bool first = true;
  auto record = [&](double stay, double sw, bool fired) {
    if (!first) return;
    out.stay_value = stay;
    out.switch_value = sw;
    out.trigger_fired = fired;
    first = false;
  };
  auto fire = [&](std::size_t from, std::size_t to) { out.switches.emplace_back(from, to); };
  while (true) {
    if (node == kDone) {
      record(0.0, kNone, false);
      out.action = 0;
      out.next_active = kDone;
      out.next_phase = 0;
      return out;
    }
    const DvgNode& v = g.node(node);
    switch (v.kind) {
      case NodeKind::kAvoid: {
        const Table& t = sol.table(node);
        record(mdp.best_successor(t, x), kNone, false);
        out.action = mdp.argmax_successor(t, x);
        out.next_active = node;
        out.next_phase = detail::phase_of(g, node);
        return out;
      }
      case NodeKind::kReachAvoid: {
        const Table& t = sol.table(node);
        double stay = mdp.best_successor(t, x);
        double best = kNone;
        std::size_t best_child = kDone;
        for (const auto& term : detail::disjuncts(v.reach)) {
          double val = detail::value_at(term, sol, reg, mdp, x);
          if (val > best) {
            best = val;
            best_child = detail::term_child(term);
          }
        }
        if (best >= stay) {
          record(stay, best, true);
          fire(node, best_child);
          node = best_child;
          continue;
        }
        record(stay, best, false);
        out.action = mdp.argmax_successor(t, x);
        out.next_active = node;
        out.next_phase = detail::phase_of(g, node);
        return out;
      }
      case NodeKind::kReachAvoidLoop: {
        const Table& t = sol.table(node);
        double stay = mdp.best_successor(t, x);
        double sw = sol.reach.at(node).empty() ? detail::value_at(v.reach, sol, reg, mdp, x) : sol.reach[node][x];
        const std::size_t nxt = *v.loop_next;
        if (sw >= stay) {
          record(stay, sw, true);
          fire(node, nxt);
          out.action = mdp.argmax_successor(detail::hand_over_table(sol, nxt), x);
          out.next_active = nxt;
          out.next_phase = detail::phase_of(g, nxt);
          return out;
        }
        record(stay, sw, false);
        out.action = mdp.argmax_successor(t, x);
        out.next_active = node;
        out.next_phase = detail::phase_of(g, node);
        return out;
      }
      case NodeKind::kMaxCombine: {
        double best = kNone;
        std::size_t best_child = kDone;
        for (const auto& term : detail::disjuncts(v.reach)) {
          double val = detail::value_at(term, sol, reg, mdp, x);
          if (val > best) {
            best = val;
            best_child = detail::term_child(term);
          }
        }
        record(kNone, best, true);
        fire(node, best_child);
        node = best_child;
        continue;
      }
      case NodeKind::kOneStep: {
        const std::size_t child = detail::term_child(v.reach);
        double sw = detail::value_at(v.reach, sol, reg, mdp, x);
        record(kNone, sw, true);
        fire(node, child);
        out.action = mdp.argmax_successor(sol.table(child), x);
        out.next_active = child;
        out.next_phase = detail::phase_of(g, child);
        return out;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Rollouts

struct PolicyRollout {
  RolloutLog log;                     // memory column holds the active node at entry
  std::vector<std::size_t> active;    // node active after the step's switches
  std::vector<bool> trigger;          // whether any switch fired at step t
  std::vector<SwitchEvent> events;
};

inline std::uint64_t encode_node(std::size_t node) { return static_cast<std::uint64_t>(node); }
inline std::size_t decode_node(std::uint64_t mem) { return static_cast<std::size_t>(mem); }

inline PolicyRollout policy_rollout(std::size_t x0, const Solution& sol, const Dvg& g, const Mdp& mdp,
                                    const PredicateRegistry& reg, std::size_t horizon) {
  PolicyRollout out;
  std::size_t t = 0;
  ActionChooser chooser = [&](std::size_t x, std::uint64_t mem) {
    std::size_t node = decode_node(mem);
    AugState s{x, node, node == kDone ? 0 : detail::phase_of(g, node)};
    PolicyStep step = act(s, sol, g, mdp, reg);
    for (const auto& [from, to] : step.switches) out.events.push_back({t, from, to});
    out.trigger.push_back(!step.switches.empty());
    std::size_t after = step.switches.empty() ? node : step.switches.back().second;
    out.active.push_back(after);
    ++t;
    return std::make_pair(step.action, encode_node(step.next_active));
  };
  out.log = rollout_log(mdp, chooser, x0, horizon, encode_node(g.root));
  return out;
}

/// Precomputed switch schedule from (x0, root), and its open-loop replay.
struct ComparisonTree {
  std::size_t x0 = 0;
  std::vector<SwitchEvent> events;
  std::vector<std::size_t> states;
  std::vector<std::size_t> actions;
  std::optional<std::size_t> loop_start;
};

inline ComparisonTree build_comparison_tree(std::size_t x0, const Solution& sol, const Dvg& g, const Mdp& mdp,
                                            const PredicateRegistry& reg, std::size_t horizon) {
  PolicyRollout r = policy_rollout(x0, sol, g, mdp, reg, horizon);
  return {x0, r.events, r.log.states, r.log.actions, r.log.loop_start};
}

/// Replays a schedule without any stay/switch comparison: the active node follows
/// the recorded events and the action is the greedy action of that node.
inline RolloutLog replay(const ComparisonTree& tree, const Solution& sol, const Dvg& g, const Mdp& mdp,
                         std::size_t horizon) {
  std::size_t t = 0, next_event = 0;
  ActionChooser chooser = [&](std::size_t x, std::uint64_t mem) {
    std::size_t node = decode_node(mem);
    const Table* step_table = nullptr;
    while (next_event < tree.events.size() && tree.events[next_event].t == t) {
      const SwitchEvent& e = tree.events[next_event++];
      if (e.from != node) throw InvariantError("schedule does not match the replayed node");
      const NodeKind from_kind = g.node(node).kind;
      node = e.to;
      if (from_kind == NodeKind::kReachAvoidLoop) step_table = &detail::hand_over_table(sol, node);
      if (from_kind == NodeKind::kOneStep) step_table = &sol.table(node);
    }
    ++t;
    std::size_t action = 0;
    if (step_table) action = mdp.argmax_successor(*step_table, x);
    else if (node != kDone) action = mdp.argmax_successor(sol.table(node), x);
    return std::make_pair(action, encode_node(node));
  };
  return rollout_log(mdp, chooser, tree.x0, horizon, encode_node(g.root));
}

struct ScoredRollout {
  Trace trace;
  double robustness = 0.0;
  PolicyRollout detail;
};

inline ScoredRollout score_rollout(std::size_t x0, const Solution& sol, const Dvg& g, const Mdp& mdp,
                                   const PredicateRegistry& reg, const Predicate& spec, std::size_t horizon) {
  PolicyRollout r = policy_rollout(x0, sol, g, mdp, reg, horizon);
  Trace tr = r.log.trace();
  double rho = robustness(spec, tr, 0, reg);
  return {std::move(tr), rho, std::move(r)};
}

/// CSV columns t,state,row,col,active,action,trigger; row/col empty off-grid,
/// active "done" after completion, action empty on the final row.
inline std::string rollout_csv(const PolicyRollout& r, const Mdp& mdp) {
  std::ostringstream os;
  os << "t,state,row,col,active,action,trigger\n";
  const auto& st = r.log.states;
  for (std::size_t t = 0; t < st.size(); ++t) {
    os << t << ',' << st[t] << ',';
    if (mdp.has_coordinates()) os << mdp.cell(st[t]).row << ',' << mdp.cell(st[t]).col;
    else os << ',';
    os << ',';
    if (t < r.active.size()) {
      if (r.active[t] == kDone) os << "done";
      else os << r.active[t];
    }
    os << ',';
    if (t < r.log.actions.size()) os << r.log.actions[t];
    os << ',';
    if (t < r.trigger.size()) os << (r.trigger[t] ? 1 : 0);
    os << '\n';
  }
  return os.str();
}

}  // namespace tlvc
