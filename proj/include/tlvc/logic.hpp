#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tlvc/error.hpp"
#include "tlvc/log.hpp"

namespace tlvc {

enum class Op { kAtom, kTrue, kFalse, kNot, kAnd, kOr, kNext, kFinally, kGlobally, kUntil };

struct PredicateNode;
using Predicate = std::shared_ptr<const PredicateNode>;

struct PredicateNode {
  Op op;
  std::string name;                 // atom id, kAtom only
  std::vector<Predicate> children;  // Until: {left, right}
};

namespace ltl {

inline Predicate make(Op op, std::string name, std::vector<Predicate> children) {
  return std::make_shared<const PredicateNode>(PredicateNode{op, std::move(name), std::move(children)});
}
inline Predicate atom(std::string name) { return make(Op::kAtom, std::move(name), {}); }
inline Predicate top() { return make(Op::kTrue, "", {}); }
inline Predicate bot() { return make(Op::kFalse, "", {}); }
inline Predicate neg(Predicate p) { return make(Op::kNot, "", {std::move(p)}); }
inline Predicate next(Predicate p) { return make(Op::kNext, "", {std::move(p)}); }
inline Predicate finally(Predicate p) { return make(Op::kFinally, "", {std::move(p)}); }
inline Predicate globally(Predicate p) { return make(Op::kGlobally, "", {std::move(p)}); }
inline Predicate until(Predicate a, Predicate b) {
  return make(Op::kUntil, "", {std::move(a), std::move(b)});
}
inline Predicate conj(std::vector<Predicate> ps) {
  if (ps.empty()) throw DomainError("conjunction needs at least one child");
  return make(Op::kAnd, "", std::move(ps));
}
inline Predicate disj(std::vector<Predicate> ps) {
  if (ps.empty()) throw DomainError("disjunction needs at least one child");
  return make(Op::kOr, "", std::move(ps));
}

}  // namespace ltl

inline bool is_temporal_op(Op op) {
  return op == Op::kNext || op == Op::kFinally || op == Op::kGlobally || op == Op::kUntil;
}

// True when p contains any temporal operator.
inline bool is_temporal(const Predicate& p) {
  if (is_temporal_op(p->op)) return true;
  return std::any_of(p->children.begin(), p->children.end(),
                     [](const Predicate& c) { return is_temporal(c); });
}

inline void collect_atoms(const Predicate& p, std::set<std::string>& out) {
  if (p->op == Op::kAtom) out.insert(p->name);
  for (const auto& c : p->children) collect_atoms(c, out);
}

inline std::set<std::string> atoms_of(const Predicate& p) {
  std::set<std::string> out;
  collect_atoms(p, out);
  return out;
}

/// Named bounded state functions over a finite state space, stored as tables.
class PredicateRegistry {
 public:
  explicit PredicateRegistry(std::size_t state_count = 0, double bound = 1.0)
      : state_count_(state_count), bound_(bound) {}

  std::size_t state_count() const { return state_count_; }
  double bound() const { return bound_; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  /// Registers `values` under `name`, clipping into [-B, B] with a warning.
  std::size_t add(const std::string& name, std::vector<double> values) {
    if (index_.count(name)) throw RegistryError("duplicate atom '" + name + "'");
    if (values.size() != state_count_)
      throw RegistryError("atom '" + name + "' has " + std::to_string(values.size()) +
                          " values, expected " + std::to_string(state_count_));
    bool clipped = false;
    for (double& v : values) {
      if (!std::isfinite(v)) throw RegistryError("atom '" + name + "' has a non-finite value");
      double c = std::clamp(v, -bound_, bound_);
      clipped |= c != v;
      v = c;
    }
    if (clipped) log::warn("atom '", name, "' clipped to [", -bound_, ", ", bound_, "]");
    index_[name] = names_.size();
    names_.push_back(name);
    tables_.push_back(std::move(values));
    return names_.size() - 1;
  }

  template <typename Fn>
  std::size_t add_fn(const std::string& name, Fn&& fn) {
    std::vector<double> values(state_count_);
    for (std::size_t x = 0; x < state_count_; ++x) values[x] = fn(x);
    return add(name, std::move(values));
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }

  const std::vector<double>& table(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw RegistryError("unknown atom '" + std::string(name) + "'");
    return tables_[it->second];
  }

  double value(std::string_view name, std::size_t state) const {
    const auto& t = table(name);
    if (state >= t.size()) throw DomainError("state " + std::to_string(state) + " out of range");
    return t[state];
  }

  /// Throws RegistryError when p mentions an unregistered atom.
  void check_bound(const Predicate& p) const {
    for (const auto& a : atoms_of(p)) table(a);
  }

 private:
  std::size_t state_count_;
  double bound_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> tables_;
  std::map<std::string, std::size_t> index_;
};

/// Finite(states) when cycle is empty, otherwise Lasso(prefix, cycle).
struct Trace {
  std::vector<std::size_t> prefix;
  std::vector<std::size_t> cycle;

  static Trace finite(std::vector<std::size_t> states) { return Trace{std::move(states), {}}; }
  static Trace lasso(std::vector<std::size_t> prefix, std::vector<std::size_t> cycle) {
    if (cycle.empty()) throw DomainError("lasso cycle must be non-empty");
    return Trace{std::move(prefix), std::move(cycle)};
  }

  bool is_lasso() const { return !cycle.empty(); }
  std::size_t positions() const { return prefix.size() + cycle.size(); }

  /// Canonical position of time t (folds lasso times onto the cycle).
  std::size_t position(std::size_t t) const {
    if (!is_lasso() || t < positions()) return t;
    return prefix.size() + (t - prefix.size()) % cycle.size();
  }

  std::size_t state_at(std::size_t t) const {
    std::size_t pos = position(t);
    return pos < prefix.size() ? prefix[pos] : cycle[pos - prefix.size()];
  }

  bool operator==(const Trace&) const = default;
};

/// Real-valued robustness lattice: meet = min, join = max, negation = minus.
struct ScalarDomain {
  using Value = double;
  double bound = 1.0;
  Value top() const { return bound; }
  Value bottom() const { return -bound; }
  static Value neg(Value v) { return -v; }
  static Value meet(Value a, Value b) { return std::min(a, b); }
  static Value join(Value a, Value b) { return std::max(a, b); }
};

/// Evaluates robustness at every canonical position of a trace shape.
///
/// Positions are 0..len-1. For a lasso, the successor of len-1 is loop_start;
/// for a finite trace (loop_start empty) temporal extrema are truncated at the
/// end and X at the last position evaluates to the domain bottom.
template <typename Domain, typename AtomFn>
class Evaluator {
 public:
  using V = typename Domain::Value;

  Evaluator(std::size_t len, std::optional<std::size_t> loop_start, Domain dom, AtomFn atom)
      : len_(len), loop_(loop_start), dom_(std::move(dom)), atom_(std::move(atom)) {
    if (len_ == 0) throw DomainError("empty trace");
    if (loop_ && *loop_ >= len_) throw DomainError("loop start outside trace");
  }

  std::vector<V> eval(const Predicate& p) const {
    switch (p->op) {
      case Op::kAtom: {
        std::vector<V> out;
        out.reserve(len_);
        for (std::size_t i = 0; i < len_; ++i) out.push_back(atom_(p->name, i));
        return out;
      }
      case Op::kTrue:
        return std::vector<V>(len_, dom_.top());
      case Op::kFalse:
        return std::vector<V>(len_, dom_.bottom());
      case Op::kNot: {
        auto v = eval(p->children[0]);
        for (std::size_t i = 0; i < len_; ++i) v[i] = dom_.neg(v[i]);
        return v;
      }
      case Op::kAnd:
      case Op::kOr: {
        auto acc = eval(p->children[0]);
        for (std::size_t k = 1; k < p->children.size(); ++k) {
          auto v = eval(p->children[k]);
          for (std::size_t i = 0; i < len_; ++i)
            acc[i] = p->op == Op::kAnd ? dom_.meet(acc[i], v[i]) : dom_.join(acc[i], v[i]);
        }
        return acc;
      }
      case Op::kNext: {
        auto v = eval(p->children[0]);
        std::vector<V> out;
        out.reserve(len_);
        for (std::size_t i = 0; i < len_; ++i) {
          if (i + 1 < len_) out.push_back(v[i + 1]);
          else if (loop_) out.push_back(v[*loop_]);
          else out.push_back(dom_.bottom());
        }
        return out;
      }
      case Op::kFinally:
        return extremum(eval(p->children[0]), /*join=*/true);
      case Op::kGlobally:
        return extremum(eval(p->children[0]), /*join=*/false);
      case Op::kUntil:
        return until(eval(p->children[0]), eval(p->children[1]));
    }
    throw InvariantError("unhandled operator");
  }

 private:
  V combine(bool join, const V& a, const V& b) const {
    return join ? dom_.join(a, b) : dom_.meet(a, b);
  }

  // Suffix extremum; on a lasso every cycle position sees the whole cycle.
  std::vector<V> extremum(std::vector<V> v, bool join) const {
    std::vector<V> out(v);
    std::size_t end = len_;
    if (loop_) {
      V cyc = v[*loop_];
      for (std::size_t i = *loop_ + 1; i < len_; ++i) cyc = combine(join, cyc, v[i]);
      for (std::size_t i = *loop_; i < len_; ++i) out[i] = cyc;
      end = *loop_;
      if (end == 0) return out;
    } else {
      end = len_ - 1;
    }
    for (std::size_t i = end; i-- > 0;) out[i] = combine(join, v[i], out[i + 1]);
    return out;
  }

  // max over tau >= t of min(b(tau), min over kappa in [t, tau] of a(kappa)).
  std::vector<V> until(const std::vector<V>& a, const std::vector<V>& b) const {
    std::vector<V> out;
    out.reserve(len_);
    std::size_t cycle = loop_ ? len_ - *loop_ : 0;
    for (std::size_t t = 0; t < len_; ++t) {
      std::size_t steps = loop_ ? len_ + cycle : len_ - t;
      std::size_t pos = t;
      V run = a[pos];
      V acc = dom_.meet(b[pos], run);
      for (std::size_t k = 1; k < steps; ++k) {
        pos = pos + 1 < len_ ? pos + 1 : *loop_;
        run = dom_.meet(run, a[pos]);
        acc = dom_.join(acc, dom_.meet(b[pos], run));
      }
      out.push_back(acc);
    }
    return out;
  }

  std::size_t len_;
  std::optional<std::size_t> loop_;
  Domain dom_;
  AtomFn atom_;
};

template <typename Domain, typename AtomFn>
Evaluator<Domain, AtomFn> make_evaluator(std::size_t len, std::optional<std::size_t> loop_start,
                                         Domain dom, AtomFn atom) {
  return Evaluator<Domain, AtomFn>(len, loop_start, std::move(dom), std::move(atom));
}

/// Robustness of p at every canonical position of the trace.
inline std::vector<double> robustness_positions(const Predicate& p, const Trace& trace,
                                                const PredicateRegistry& reg) {
  reg.check_bound(p);
  for (std::size_t i = 0; i < trace.positions(); ++i)
    if (trace.state_at(i) >= reg.state_count())
      throw DomainError("trace state " + std::to_string(trace.state_at(i)) + " out of range");
  std::optional<std::size_t> loop;
  if (trace.is_lasso()) loop = trace.prefix.size();
  auto atom = [&](const std::string& name, std::size_t pos) {
    return reg.table(name)[trace.state_at(pos)];
  };
  return make_evaluator(trace.positions(), loop, ScalarDomain{reg.bound()}, atom).eval(p);
}

inline double robustness(const Predicate& p, const Trace& trace, std::size_t t,
                         const PredicateRegistry& reg) {
  if (!trace.is_lasso() && t >= trace.positions())
    throw DomainError("time " + std::to_string(t) + " beyond finite trace of length " +
                      std::to_string(trace.positions()));
  return robustness_positions(p, trace, reg)[trace.position(t)];
}

inline bool satisfies(const Predicate& p, const Trace& trace, std::size_t t,
                      const PredicateRegistry& reg) {
  return robustness(p, trace, t, reg) >= 0.0;
}

inline const char* op_tag(Op op) {
  switch (op) {
    case Op::kAtom: return "atom";
    case Op::kTrue: return "true";
    case Op::kFalse: return "false";
    case Op::kNot: return "not";
    case Op::kAnd: return "and";
    case Op::kOr: return "or";
    case Op::kNext: return "next";
    case Op::kFinally: return "finally";
    case Op::kGlobally: return "globally";
    case Op::kUntil: return "until";
  }
  return "?";
}

/// Canonical key with And/Or children sorted; equal keys mean structurally equal trees.
inline std::string structural_key(const Predicate& p) {
  if (p->op == Op::kAtom) return "a:" + p->name;
  std::vector<std::string> parts;
  parts.reserve(p->children.size());
  for (const auto& c : p->children) parts.push_back(structural_key(c));
  if (p->op == Op::kAnd || p->op == Op::kOr) std::sort(parts.begin(), parts.end());
  std::string out = op_tag(p->op);
  out += '(';
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ',';
    out += parts[i];
  }
  out += ')';
  return out;
}

inline bool structural_eq(const Predicate& p, const Predicate& q) {
  return structural_key(p) == structural_key(q);
}

}  // namespace tlvc
