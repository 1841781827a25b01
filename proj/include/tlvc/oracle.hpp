#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tlvc/dvg.hpp"
#include "tlvc/error.hpp"
#include "tlvc/mdp.hpp"
#include "tlvc/parallel.hpp"
#include "tlvc/rewrite.hpp"

// Ground-truth optimal values on deterministic finite MDPs. Works on boolean
// winning sets per threshold and never touches the Bellman machinery.
namespace tlvc::oracle {

using Table = std::vector<double>;
using StateSet = std::vector<bool>;

/// Sorted distinct values any state expression of the spec can take, plus ±B.
struct ThresholdLadder {
  std::vector<double> values;
};

struct WinningSet {
  double threshold = 0.0;
  StateSet states;
};

namespace detail {

inline void collect_exprs(const NormalizedSpec& s, std::vector<StateExpr>& out) {
  for (const auto& a : s.alternatives) {
    if (a.is_step()) {
      out.push_back(a.guard);
      collect_exprs(*a.next, out);
      continue;
    }
    const NormalForm& f = a.form;
    out.push_back(f.safety);
    for (const auto& u : f.untils) {
      out.push_back(u.avoid);
      out.push_back(u.reach.now);
      if (u.reach.nested) collect_exprs(*u.reach.nested, out);
    }
    for (const auto& l : f.loops) {
      out.push_back(l.avoid);
      out.push_back(l.reach);
    }
  }
}

/// Backward closure: states in `allowed` that can reach `target` through `allowed`.
inline StateSet backward_reach(const Mdp& mdp, const StateSet& allowed, const StateSet& target) {
  const std::size_t n = mdp.state_count();
  StateSet in(n, false);
  for (std::size_t x = 0; x < n; ++x) in[x] = allowed[x] && target[x];
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t x = 0; x < n; ++x) {
      if (in[x] || !allowed[x]) continue;
      for (std::size_t a = 0; a < mdp.action_count(); ++a)
        if (in[mdp.successor(x, a)]) {
          in[x] = true;
          changed = true;
          break;
        }
    }
  }
  return in;
}

/// States inside `allowed` with an infinite path that stays in `allowed` and
/// visits every set in `targets` infinitely often. SCC decomposition of the
/// subgraph induced by `allowed`.
inline StateSet recurrence(const Mdp& mdp, const StateSet& allowed, const std::vector<StateSet>& targets) {
  const std::size_t n = mdp.state_count();
  std::vector<long> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  long counter = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t a = 0; a < mdp.action_count(); ++a) {
      std::size_t w = mdp.successor(v, a);
      if (!allowed[w]) continue;
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> c;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = static_cast<long>(comps.size());
        c.push_back(w);
      } while (w != v);
      comps.push_back(std::move(c));
    }
  };
  for (std::size_t x = 0; x < n; ++x)
    if (allowed[x] && index[x] < 0) visit(x);

  StateSet accepting(n, false);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const auto& c = comps[k];
    bool cyclic = c.size() > 1;
    if (!cyclic)
      for (std::size_t a = 0; a < mdp.action_count(); ++a)
        if (mdp.successor(c[0], a) == c[0]) cyclic = true;
    if (!cyclic) continue;
    bool hits_all = std::all_of(targets.begin(), targets.end(), [&](const StateSet& t) {
      return std::any_of(c.begin(), c.end(), [&](std::size_t x) { return static_cast<bool>(t[x]); });
    });
    if (hits_all)
      for (std::size_t x : c) accepting[x] = true;
  }
  return backward_reach(mdp, allowed, accepting);
}

/// Boolean semantics of a normalized spec at one threshold.
class Game {
 public:
  Game(const Mdp& mdp, const PredicateRegistry& reg, double lambda) : mdp_(mdp), reg_(reg), lambda_(lambda) {}

  StateSet spec(const NormalizedSpec& s) {
    const std::size_t n = mdp_.state_count();
    if (s.alternatives.empty()) return StateSet(n, true);
    std::string key = spec_key(s);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    StateSet out(n, false);
    for (const auto& a : s.alternatives) {
      StateSet w = a.is_step() ? step(a) : form(a.form);
      for (std::size_t x = 0; x < n; ++x) out[x] = out[x] || w[x];
    }
    memo_[key] = out;
    return out;
  }

  StateSet holds(const StateExpr& e) {
    auto it = tables_.find(e->key);
    if (it == tables_.end()) it = tables_.emplace(e->key, eval_state(e, reg_)).first;
    StateSet out(it->second.size());
    for (std::size_t x = 0; x < out.size(); ++x) out[x] = it->second[x] >= lambda_;
    return out;
  }

 private:
  StateSet step(const Alternative& a) {
    StateSet guard = holds(a.guard), next = spec(*a.next);
    StateSet out(mdp_.state_count(), false);
    for (std::size_t x = 0; x < out.size(); ++x) {
      if (!guard[x]) continue;
      for (std::size_t act = 0; act < mdp_.action_count() && !out[x]; ++act) out[x] = next[mdp_.successor(x, act)];
    }
    return out;
  }

  StateSet form(const NormalForm& f) {
    const std::size_t n = mdp_.state_count();
    // Everything that must hold at every step before the last until completes.
    StateSet allowed = holds(f.safety);
    auto restrict = [&](const StateExpr& e) {
      StateSet h = holds(e);
      for (std::size_t x = 0; x < n; ++x) allowed[x] = allowed[x] && h[x];
    };
    for (const auto& l : f.loops) restrict(l.avoid);
    if (f.untils.empty()) {
      std::vector<StateSet> targets;
      for (const auto& l : f.loops) {
        StateSet t = holds(l.reach);
        for (std::size_t x = 0; x < n; ++x) t[x] = t[x] && allowed[x];
        targets.push_back(std::move(t));
      }
      return recurrence(mdp_, allowed, targets);
    }
    for (const auto& u : f.untils) restrict(u.avoid);
    StateSet target(n, false);
    for (std::size_t i = 0; i < f.untils.size(); ++i) {
      StateSet now = holds(f.untils[i].reach.now);
      StateSet rest = spec(residual(f, i));
      for (std::size_t x = 0; x < n; ++x) target[x] = target[x] || (now[x] && rest[x]);
    }
    return backward_reach(mdp_, allowed, target);
  }

  const Mdp& mdp_;
  const PredicateRegistry& reg_;
  double lambda_;
  std::map<std::string, StateSet> memo_;
  std::map<std::string, Table> tables_;
};

}  // namespace detail

inline ThresholdLadder ladder(const NormalizedSpec& s, const PredicateRegistry& reg) {
  std::vector<StateExpr> exprs;
  detail::collect_exprs(s, exprs);
  std::set<double> vals{-reg.bound(), reg.bound()};
  for (const auto& e : exprs)
    for (double v : eval_state(e, reg)) vals.insert(v);
  return {{vals.begin(), vals.end()}};
}

inline StateSet winning_set(const NormalizedSpec& s, const Mdp& mdp, const PredicateRegistry& reg, double lambda) {
  if (reg.state_count() != mdp.state_count()) throw DomainError("registry and MDP disagree on state count");
  return detail::Game(mdp, reg, lambda).spec(s);
}

/// Winning sets at every ladder threshold, ascending.
inline std::vector<WinningSet> winning_sets(const NormalizedSpec& s, const Mdp& mdp, const PredicateRegistry& reg,
                                            unsigned jobs = 1) {
  ThresholdLadder lad = ladder(s, reg);
  std::vector<WinningSet> out(lad.values.size());
  parallel_for(out.size(), jobs, [&](std::size_t k) {
    out[k] = {lad.values[k], winning_set(s, mdp, reg, lad.values[k])};
  });
  return out;
}

/// V*(x) = max{λ in the ladder : x wins at λ}.
inline Table oracle_value(const NormalizedSpec& s, const Mdp& mdp, const PredicateRegistry& reg, unsigned jobs = 1) {
  auto sets = winning_sets(s, mdp, reg, jobs);
  Table v(mdp.state_count(), -reg.bound());
  for (const auto& w : sets)
    for (std::size_t x = 0; x < v.size(); ++x)
      if (w.states[x]) v[x] = w.threshold;
  return v;
}

// ---------------------------------------------------------------------------
// Recurrence iterations

struct IterationResult {
  std::vector<Table> phases;  // stabilized table per phase; phases[0] is the starting phase
  std::size_t k = 0;          // first index with V_{k+1} = V_k
};

namespace detail {

/// Undiscounted max_path value of avoid U reach (inclusive), by Kleene iteration.
inline Table until_value(const Table& avoid, const Table& reach, const Mdp& mdp) {
  const std::size_t n = mdp.state_count();
  Table w(n);
  for (std::size_t x = 0; x < n; ++x) w[x] = std::min(avoid[x], reach[x]);
  while (true) {
    Table next(n);
    for (std::size_t x = 0; x < n; ++x) {
      double succ = w[mdp.successor(x, 0)];
      for (std::size_t a = 1; a < mdp.action_count(); ++a) succ = std::max(succ, w[mdp.successor(x, a)]);
      next[x] = std::min(avoid[x], std::max(reach[x], succ));
    }
    if (next == w) return w;
    w = std::move(next);
  }
}

inline Table pointwise_min(Table a, const Table& b) {
  for (std::size_t x = 0; x < a.size(); ++x) a[x] = std::min(a[x], b[x]);
  return a;
}

inline Table successor_best(const Table& v, const Mdp& mdp) {
  Table out(mdp.state_count());
  for (std::size_t x = 0; x < out.size(); ++x) {
    out[x] = v[mdp.successor(x, 0)];
    for (std::size_t a = 1; a < mdp.action_count(); ++a) out[x] = std::max(out[x], v[mdp.successor(x, a)]);
  }
  return out;
}

}  // namespace detail

/// V_0 = +B; V_{k+1} = value of F(r & X V_k). Returns the stabilized table.
inline IterationResult gf_iteration(const Table& r, const Mdp& mdp, double bound, std::size_t k_max) {
  const std::size_t n = mdp.state_count();
  Table v(n, bound), avoid(n, bound);
  for (std::size_t k = 0; k < k_max; ++k) {
    Table next = detail::until_value(avoid, detail::pointwise_min(r, detail::successor_best(v, mdp)), mdp);
    if (next == v) return {{v}, k};
    v = std::move(next);
  }
  throw IterationError("gf iteration did not stabilize within " + std::to_string(k_max) + " rounds");
}

/// Coupled phase iteration for G(q_1 U r_1 & ... & q_J U r_J) & G safety:
/// V_{j,k+1} = value of g_j U (r_j & g_j & X V_{j+1,k}), all phases updated
/// together. With LoopGuard::kInclusive, g_j is every q and the safety term;
/// with kWeak, g_j = q_j & safety & (q_{j+1} | r_{j+1}). `first` picks the
/// starting phase; phases are reported starting from it.
inline IterationResult loop_iteration(const std::vector<std::pair<Table, Table>>& pairs, const Table& safety,
                                      const Mdp& mdp, double bound, std::size_t k_max,
                                      LoopGuard guard = LoopGuard::kInclusive, std::size_t first = 0) {
  const std::size_t J = pairs.size(), n = mdp.state_count();
  if (J == 0) throw DomainError("loop iteration needs at least one pair");
  std::vector<Table> g(J), reach(J);
  Table all = safety;
  for (const auto& [q, r] : pairs) all = detail::pointwise_min(all, q);
  for (std::size_t i = 0; i < J; ++i) {
    const std::size_t j = (first + i) % J, nx = (j + 1) % J;
    if (guard == LoopGuard::kInclusive) {
      g[i] = all;
    } else {
      Table w(n);
      for (std::size_t x = 0; x < n; ++x) w[x] = std::max(pairs[nx].first[x], pairs[nx].second[x]);
      g[i] = detail::pointwise_min(detail::pointwise_min(pairs[j].first, safety), w);
    }
    reach[i] = detail::pointwise_min(pairs[j].second, g[i]);
  }
  std::vector<Table> v(J, Table(n, bound));
  for (std::size_t k = 0; k < k_max; ++k) {
    std::vector<Table> next(J);
    for (std::size_t i = 0; i < J; ++i)
      next[i] = detail::until_value(g[i], detail::pointwise_min(reach[i], detail::successor_best(v[(i + 1) % J], mdp)),
                                    mdp);
    if (next == v) return {v, k};
    v = std::move(next);
  }
  throw IterationError("loop iteration did not stabilize within " + std::to_string(k_max) + " rounds");
}

}  // namespace tlvc::oracle
