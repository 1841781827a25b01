#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tlvc/error.hpp"
#include "tlvc/logic.hpp"
#include "tlvc/mdp.hpp"
#include "tlvc/parser.hpp"

namespace tlvc {

// ---------------------------------------------------------------------------
// State expressions

enum class SKind { kAtom, kNegAtom, kMin, kMax, kTop, kBottom };

struct StateExprNode;
using StateExpr = std::shared_ptr<const StateExprNode>;

struct StateExprNode {
  SKind kind;
  std::string atom;
  std::vector<StateExpr> children;
  std::string key;  // canonical text, children sorted
};

namespace sx {

inline StateExpr leaf(SKind kind, std::string atom) {
  std::string key;
  switch (kind) {
    case SKind::kAtom: key = atom; break;
    case SKind::kNegAtom: key = "!" + atom; break;
    case SKind::kTop: key = "T"; break;
    case SKind::kBottom: key = "F"; break;
    default: throw InvariantError("leaf kind");
  }
  return std::make_shared<const StateExprNode>(StateExprNode{kind, std::move(atom), {}, std::move(key)});
}

inline StateExpr atom(std::string name) { return leaf(SKind::kAtom, std::move(name)); }
inline StateExpr neg_atom(std::string name) { return leaf(SKind::kNegAtom, std::move(name)); }
inline StateExpr top() { return leaf(SKind::kTop, ""); }
inline StateExpr bottom() { return leaf(SKind::kBottom, ""); }

inline bool is_top(const StateExpr& e) { return e->kind == SKind::kTop; }
inline bool is_bottom(const StateExpr& e) { return e->kind == SKind::kBottom; }

// Flattens, folds constants, drops duplicates and sorts children by key.
inline StateExpr lattice(SKind kind, const std::vector<StateExpr>& parts) {
  const bool is_min = kind == SKind::kMin;
  std::map<std::string, StateExpr> uniq;
  std::vector<StateExpr> stack(parts.rbegin(), parts.rend());
  while (!stack.empty()) {
    StateExpr e = stack.back();
    stack.pop_back();
    if (e->kind == kind) {
      for (auto it = e->children.rbegin(); it != e->children.rend(); ++it) stack.push_back(*it);
      continue;
    }
    if (is_min ? is_bottom(e) : is_top(e)) return e;
    if (is_min ? is_top(e) : is_bottom(e)) continue;
    uniq.emplace(e->key, e);
  }
  if (uniq.empty()) return is_min ? top() : bottom();
  if (uniq.size() == 1) return uniq.begin()->second;
  std::vector<StateExpr> kids;
  std::string key = is_min ? "min(" : "max(";
  bool first = true;
  for (auto& [k, e] : uniq) {
    key += (first ? "" : ",") + k;
    first = false;
    kids.push_back(e);
  }
  key += ")";
  return std::make_shared<const StateExprNode>(StateExprNode{kind, "", std::move(kids), std::move(key)});
}

inline StateExpr min(const std::vector<StateExpr>& parts) { return lattice(SKind::kMin, parts); }
inline StateExpr max(const std::vector<StateExpr>& parts) { return lattice(SKind::kMax, parts); }

}  // namespace sx

/// Pointwise table of a state expression over the registry's state space.
inline std::vector<double> eval_state(const StateExpr& e, const PredicateRegistry& reg) {
  const std::size_t n = reg.state_count();
  switch (e->kind) {
    case SKind::kAtom: return reg.table(e->atom);
    case SKind::kNegAtom: {
      auto t = reg.table(e->atom);
      for (auto& v : t) v = -v;
      return t;
    }
    case SKind::kTop: return std::vector<double>(n, reg.bound());
    case SKind::kBottom: return std::vector<double>(n, -reg.bound());
    case SKind::kMin:
    case SKind::kMax: {
      auto acc = eval_state(e->children[0], reg);
      for (std::size_t k = 1; k < e->children.size(); ++k) {
        auto t = eval_state(e->children[k], reg);
        for (std::size_t x = 0; x < n; ++x)
          acc[x] = e->kind == SKind::kMin ? std::min(acc[x], t[x]) : std::max(acc[x], t[x]);
      }
      return acc;
    }
  }
  throw InvariantError("state expression kind");
}

inline Predicate state_to_predicate(const StateExpr& e) {
  switch (e->kind) {
    case SKind::kAtom: return ltl::atom(e->atom);
    case SKind::kNegAtom: return ltl::neg(ltl::atom(e->atom));
    case SKind::kTop: return ltl::top();
    case SKind::kBottom: return ltl::bot();
    case SKind::kMin:
    case SKind::kMax: {
      std::vector<Predicate> kids;
      for (const auto& c : e->children) kids.push_back(state_to_predicate(c));
      return e->kind == SKind::kMin ? ltl::conj(std::move(kids)) : ltl::disj(std::move(kids));
    }
  }
  throw InvariantError("state expression kind");
}

inline std::string print_state(const StateExpr& e) { return print(state_to_predicate(e)); }

inline nlohmann::json state_to_json(const StateExpr& e) {
  switch (e->kind) {
    case SKind::kAtom: return {{"atom", e->atom}};
    case SKind::kNegAtom: return {{"neg", e->atom}};
    case SKind::kTop: return {{"const", "top"}};
    case SKind::kBottom: return {{"const", "bottom"}};
    case SKind::kMin:
    case SKind::kMax: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : e->children) arr.push_back(state_to_json(c));
      return {{e->kind == SKind::kMin ? "min" : "max", arr}};
    }
  }
  throw InvariantError("state expression kind");
}

inline StateExpr state_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 1) throw SchemaError("state expression must be a one-key object");
  auto it = j.begin();
  const std::string& k = it.key();
  if (k == "atom" && it->is_string()) return sx::atom(it->get<std::string>());
  if (k == "neg" && it->is_string()) return sx::neg_atom(it->get<std::string>());
  if (k == "const" && it->is_string()) {
    if (*it == "top") return sx::top();
    if (*it == "bottom") return sx::bottom();
  }
  if ((k == "min" || k == "max") && it->is_array() && !it->empty()) {
    std::vector<StateExpr> kids;
    for (const auto& c : *it) kids.push_back(state_from_json(c));
    return k == "min" ? sx::min(kids) : sx::max(kids);
  }
  throw SchemaError("malformed state expression under key '" + k + "'");
}

inline void collect_state_atoms(const StateExpr& e, std::set<std::string>& out) {
  if (e->kind == SKind::kAtom || e->kind == SKind::kNegAtom) out.insert(e->atom);
  for (const auto& c : e->children) collect_state_atoms(c, out);
}

// ---------------------------------------------------------------------------
// Normal forms

struct NormalizedSpec;
using SpecPtr = std::shared_ptr<const NormalizedSpec>;

/// Reach side of an until: `now` at the completion time, conjoined with the
/// value of `nested` from that time on when present.
struct ReachTerm {
  StateExpr now;
  SpecPtr nested;
};

struct Until {
  StateExpr avoid;
  ReachTerm reach;
};

struct LoopUntil {
  StateExpr avoid;
  StateExpr reach;
};

/// Conjunction of untils, G over a conjunction of loop untils, and G safety.
struct NormalForm {
  std::vector<Until> untils;
  std::vector<LoopUntil> loops;
  StateExpr safety = sx::top();
};

/// One disjunct: a NormalForm, or `guard & X next` when `next` is set.
struct Alternative {
  NormalForm form;
  StateExpr guard = sx::top();
  SpecPtr next;
  bool is_step() const { return next != nullptr; }
};

/// Max over alternatives.
struct NormalizedSpec {
  std::vector<Alternative> alternatives;
};

enum class FragmentReason { kNegatedTemporal, kDisjunctionOfTemporalUnderG, kUntilLeftTemporal, kUnsupportedNesting };

inline const char* fragment_reason_name(FragmentReason r) {
  switch (r) {
    case FragmentReason::kNegatedTemporal: return "NegatedTemporal";
    case FragmentReason::kDisjunctionOfTemporalUnderG: return "DisjunctionOfTemporalUnderG";
    case FragmentReason::kUntilLeftTemporal: return "UntilLeftTemporal";
    case FragmentReason::kUnsupportedNesting: return "UnsupportedNesting";
  }
  return "?";
}

class FragmentError : public Error {
 public:
  FragmentError(FragmentReason reason, Predicate offending, const std::string& detail)
      : Error(std::string(fragment_reason_name(reason)) + ": " + detail +
              (offending ? " in " + print(offending) : std::string())),
        reason_(reason),
        offending_(std::move(offending)) {}
  FragmentReason reason() const { return reason_; }
  const Predicate& offending() const { return offending_; }

 private:
  FragmentReason reason_;
  Predicate offending_;
};

// ---------------------------------------------------------------------------
// Canonical keys

inline std::string spec_key(const NormalizedSpec& s);

inline std::string until_key(const Until& u) {
  return "(" + u.avoid->key + "|" + u.reach.now->key + "|" + (u.reach.nested ? spec_key(*u.reach.nested) : "-") + ")";
}

inline std::string loop_key(const LoopUntil& l) { return "(" + l.avoid->key + "|" + l.reach->key + ")"; }

/// Untils are keyed as a set; loop order is kept.
inline std::string form_key(const NormalForm& f) {
  std::vector<std::string> us;
  for (const auto& u : f.untils) us.push_back(until_key(u));
  std::sort(us.begin(), us.end());
  std::string out = "NF[u:";
  for (const auto& s : us) out += s;
  out += ";l:";
  for (const auto& l : f.loops) out += loop_key(l);
  out += ";s:" + f.safety->key + "]";
  return out;
}

inline std::string alternative_key(const Alternative& a) {
  if (a.is_step()) return "X[" + a.guard->key + ";" + spec_key(*a.next) + "]";
  return form_key(a.form);
}

inline std::string spec_key(const NormalizedSpec& s) {
  std::vector<std::string> parts;
  for (const auto& a : s.alternatives) parts.push_back(alternative_key(a));
  std::sort(parts.begin(), parts.end());
  std::string out = "S{";
  for (const auto& p : parts) out += p + ";";
  return out + "}";
}

// ---------------------------------------------------------------------------
// Construction helpers

inline bool is_state_until(const Until& u) { return !u.reach.nested && u.avoid->key == u.reach.now->key; }

inline bool is_trivial(const NormalForm& f) {
  return f.untils.empty() && f.loops.empty() && sx::is_top(f.safety);
}

/// True when the form is a plain state condition c at the current time.
inline std::optional<StateExpr> pure_state(const NormalForm& f) {
  if (!f.loops.empty() || !sx::is_top(f.safety)) return std::nullopt;
  std::vector<StateExpr> parts;
  for (const auto& u : f.untils) {
    if (!is_state_until(u)) return std::nullopt;
    parts.push_back(u.avoid);
  }
  return sx::min(parts);
}

/// Cleaning: folds degenerate untils and loops, merges state conjuncts, dedups.
inline NormalForm clean(NormalForm f) {
  NormalForm out;
  std::vector<StateExpr> safety{f.safety};
  std::vector<StateExpr> state_now;
  std::set<std::string> seen;
  for (auto& u : f.untils) {
    // q U T holds exactly when q holds now.
    if (!u.reach.nested && sx::is_top(u.reach.now)) u.reach.now = u.avoid;
    if (is_state_until(u)) {
      state_now.push_back(u.avoid);
      continue;
    }
    if (seen.insert(until_key(u)).second) out.untils.push_back(std::move(u));
  }
  std::set<std::string> seen_loops;
  for (auto& l : f.loops) {
    // G(q U T) = G q.
    if (sx::is_top(l.reach)) {
      safety.push_back(l.avoid);
      continue;
    }
    if (seen_loops.insert(loop_key(l)).second) out.loops.push_back(std::move(l));
  }
  out.safety = sx::min(safety);
  StateExpr c = sx::min(state_now);
  if (!sx::is_top(c)) {
    out.untils.insert(out.untils.begin(), Until{c, ReachTerm{c, nullptr}});
  }
  if (is_trivial(out)) {
    StateExpr t = sx::top();
    out.untils.push_back(Until{t, ReachTerm{t, nullptr}});
  }
  return out;
}

inline NormalizedSpec dedup(NormalizedSpec s) {
  NormalizedSpec out;
  std::set<std::string> seen;
  for (auto& a : s.alternatives)
    if (seen.insert(alternative_key(a)).second) out.alternatives.push_back(std::move(a));
  return out;
}

inline SpecPtr make_spec(NormalizedSpec s) { return std::make_shared<const NormalizedSpec>(dedup(std::move(s))); }

inline NormalizedSpec single(NormalForm f) {
  NormalizedSpec s;
  s.alternatives.push_back(Alternative{clean(std::move(f)), sx::top(), nullptr});
  return s;
}

inline NormalizedSpec conj_specs(const NormalizedSpec& a, const NormalizedSpec& b);

inline NormalForm merge_forms(const NormalForm& a, const NormalForm& b) {
  NormalForm out = a;
  out.untils.insert(out.untils.end(), b.untils.begin(), b.untils.end());
  out.loops.insert(out.loops.end(), b.loops.begin(), b.loops.end());
  out.safety = sx::min({a.safety, b.safety});
  return clean(std::move(out));
}

/// Conjunction of two alternatives. Throws FragmentError when a step
/// alternative meets anything other than a plain state condition.
inline Alternative merge_alternatives(const Alternative& a, const Alternative& b) {
  if (!a.is_step() && !b.is_step()) return Alternative{merge_forms(a.form, b.form), sx::top(), nullptr};
  if (a.is_step() && b.is_step()) {
    return Alternative{NormalForm{}, sx::min({a.guard, b.guard}),
                       make_spec(conj_specs(*a.next, *b.next))};
  }
  const Alternative& step = a.is_step() ? a : b;
  const Alternative& other = a.is_step() ? b : a;
  auto c = pure_state(other.form);
  if (!c)
    throw FragmentError(FragmentReason::kUnsupportedNesting, nullptr,
                        "X conjoined with a temporal obligation");
  return Alternative{NormalForm{}, sx::min({step.guard, *c}), step.next};
}

inline NormalizedSpec conj_specs(const NormalizedSpec& a, const NormalizedSpec& b) {
  NormalizedSpec out;
  for (const auto& x : a.alternatives)
    for (const auto& y : b.alternatives) out.alternatives.push_back(merge_alternatives(x, y));
  return dedup(std::move(out));
}

/// Obligation left after until i of `f` completes: nested_i conjoined with the
/// rest of the form. Empty alternatives mean nothing remains (value +B).
inline NormalizedSpec residual(const NormalForm& f, std::size_t i) {
  NormalForm rest;
  for (std::size_t k = 0; k < f.untils.size(); ++k)
    if (k != i) rest.untils.push_back(f.untils[k]);
  rest.loops = f.loops;
  rest.safety = f.safety;
  const SpecPtr& nested = f.untils[i].reach.nested;
  if (is_trivial(rest)) return nested ? *nested : NormalizedSpec{};
  NormalizedSpec rest_spec = single(std::move(rest));
  return nested ? conj_specs(*nested, rest_spec) : rest_spec;
}

// ---------------------------------------------------------------------------
// normalize

namespace detail {

// Negation normal form; rejects negation over temporal operators.
inline Predicate push_negation(const Predicate& p, bool negate) {
  switch (p->op) {
    case Op::kAtom: return negate ? ltl::neg(p) : p;
    case Op::kTrue: return negate ? ltl::bot() : p;
    case Op::kFalse: return negate ? ltl::top() : p;
    case Op::kNot: return push_negation(p->children[0], !negate);
    case Op::kAnd:
    case Op::kOr: {
      std::vector<Predicate> kids;
      for (const auto& c : p->children) kids.push_back(push_negation(c, negate));
      bool conj = (p->op == Op::kAnd) != negate;
      return conj ? ltl::conj(std::move(kids)) : ltl::disj(std::move(kids));
    }
    default:
      if (negate)
        throw FragmentError(FragmentReason::kNegatedTemporal, ltl::neg(p),
                            "negation over a temporal operator");
      std::vector<Predicate> kids;
      for (const auto& c : p->children) kids.push_back(push_negation(c, false));
      return ltl::make(p->op, p->name, std::move(kids));
  }
}

// p is in negation normal form and has no temporal operator.
inline StateExpr to_state(const Predicate& p) {
  switch (p->op) {
    case Op::kAtom: return sx::atom(p->name);
    case Op::kNot: return sx::neg_atom(p->children[0]->name);
    case Op::kTrue: return sx::top();
    case Op::kFalse: return sx::bottom();
    case Op::kAnd:
    case Op::kOr: {
      std::vector<StateExpr> kids;
      for (const auto& c : p->children) kids.push_back(to_state(c));
      return p->op == Op::kAnd ? sx::min(kids) : sx::max(kids);
    }
    default: throw InvariantError("to_state on temporal predicate");
  }
}

struct GPart {
  std::vector<LoopUntil> loops;
  std::vector<StateExpr> safety;
};

inline void collect_gpart(const Predicate& p, GPart& out) {
  if (!is_temporal(p)) {
    out.safety.push_back(to_state(p));
    return;
  }
  switch (p->op) {
    case Op::kAnd:
      for (const auto& c : p->children) collect_gpart(c, out);
      return;
    case Op::kOr:
      throw FragmentError(FragmentReason::kDisjunctionOfTemporalUnderG, p, "temporal disjunction under G");
    case Op::kGlobally:
      collect_gpart(p->children[0], out);
      return;
    case Op::kFinally:
      if (is_temporal(p->children[0]))
        throw FragmentError(FragmentReason::kUnsupportedNesting, p, "temporal operand of F under G");
      out.loops.push_back(LoopUntil{sx::top(), to_state(p->children[0])});
      return;
    case Op::kUntil:
      if (is_temporal(p->children[0]))
        throw FragmentError(FragmentReason::kUntilLeftTemporal, p, "temporal left operand of U");
      if (is_temporal(p->children[1]))
        throw FragmentError(FragmentReason::kUnsupportedNesting, p, "temporal right operand of U under G");
      out.loops.push_back(LoopUntil{to_state(p->children[0]), to_state(p->children[1])});
      return;
    case Op::kNext:
      throw FragmentError(FragmentReason::kUnsupportedNesting, p, "X under G");
    default:
      throw InvariantError("collect_gpart");
  }
}

inline NormalizedSpec normalize_nnf(const Predicate& p) {
  if (!is_temporal(p)) {
    StateExpr c = to_state(p);
    NormalForm f;
    f.untils.push_back(Until{c, ReachTerm{c, nullptr}});
    return single(std::move(f));
  }
  switch (p->op) {
    case Op::kAnd: {
      NormalizedSpec acc = normalize_nnf(p->children[0]);
      for (std::size_t k = 1; k < p->children.size(); ++k) {
        try {
          acc = conj_specs(acc, normalize_nnf(p->children[k]));
        } catch (const FragmentError& e) {
          if (e.offending()) throw;
          throw FragmentError(e.reason(), p, "X conjoined with a temporal obligation");
        }
      }
      return acc;
    }
    case Op::kOr: {
      NormalizedSpec out;
      for (const auto& c : p->children) {
        auto part = normalize_nnf(c);
        out.alternatives.insert(out.alternatives.end(), part.alternatives.begin(), part.alternatives.end());
      }
      return dedup(std::move(out));
    }
    case Op::kFinally:
    case Op::kUntil: {
      const bool is_until = p->op == Op::kUntil;
      if (is_until && is_temporal(p->children[0]))
        throw FragmentError(FragmentReason::kUntilLeftTemporal, p, "temporal left operand of U");
      StateExpr avoid = is_until ? to_state(p->children[0]) : sx::top();
      const Predicate& right = p->children[is_until ? 1 : 0];
      NormalForm f;
      if (is_temporal(right))
        f.untils.push_back(Until{avoid, ReachTerm{sx::top(), make_spec(normalize_nnf(right))}});
      else
        f.untils.push_back(Until{avoid, ReachTerm{to_state(right), nullptr}});
      return single(std::move(f));
    }
    case Op::kNext: {
      NormalizedSpec s;
      s.alternatives.push_back(Alternative{NormalForm{}, sx::top(), make_spec(normalize_nnf(p->children[0]))});
      return s;
    }
    case Op::kGlobally: {
      GPart g;
      collect_gpart(p->children[0], g);
      NormalForm f;
      f.loops = std::move(g.loops);
      f.safety = sx::min(g.safety);
      return single(std::move(f));
    }
    default:
      throw InvariantError("normalize_nnf");
  }
}

// Every residual the compiler will request must itself be representable.
inline void check_residuals(const NormalizedSpec& s, std::set<std::string>& done, const Predicate& origin) {
  if (!done.insert(spec_key(s)).second) return;
  for (const auto& a : s.alternatives) {
    if (a.is_step()) {
      check_residuals(*a.next, done, origin);
      continue;
    }
    for (std::size_t i = 0; i < a.form.untils.size(); ++i) {
      NormalizedSpec r;
      try {
        r = residual(a.form, i);
      } catch (const FragmentError& e) {
        throw FragmentError(e.reason(), origin, "X conjoined with a temporal obligation");
      }
      if (!r.alternatives.empty()) check_residuals(r, done, origin);
    }
  }
}

}  // namespace detail

/// Normalizes p into a Max over NormalForms (and guarded X steps).
inline NormalizedSpec normalize(const Predicate& p) {
  Predicate n = detail::push_negation(p, false);
  NormalizedSpec s = detail::normalize_nnf(n);
  std::set<std::string> done;
  detail::check_residuals(s, done, p);
  return s;
}

// ---------------------------------------------------------------------------
// Back to predicates

inline Predicate as_predicate(const NormalizedSpec& s);

inline Predicate reach_predicate(const ReachTerm& r) {
  if (!r.nested) return state_to_predicate(r.now);
  Predicate nested = as_predicate(*r.nested);
  if (sx::is_top(r.now)) return nested;
  return ltl::conj({state_to_predicate(r.now), nested});
}

inline Predicate until_predicate(const StateExpr& avoid, Predicate reach) {
  if (sx::is_top(avoid)) return ltl::finally(std::move(reach));
  return ltl::until(state_to_predicate(avoid), std::move(reach));
}

inline Predicate form_predicate(const NormalForm& f) {
  std::vector<Predicate> parts;
  for (const auto& u : f.untils) {
    if (is_state_until(u)) parts.push_back(state_to_predicate(u.avoid));
    else parts.push_back(until_predicate(u.avoid, reach_predicate(u.reach)));
  }
  std::vector<Predicate> g;
  for (const auto& l : f.loops) g.push_back(until_predicate(l.avoid, state_to_predicate(l.reach)));
  if (!sx::is_top(f.safety)) g.push_back(state_to_predicate(f.safety));
  if (!g.empty()) parts.push_back(ltl::globally(g.size() == 1 ? g[0] : ltl::conj(std::move(g))));
  if (parts.empty()) return ltl::top();
  return parts.size() == 1 ? parts[0] : ltl::conj(std::move(parts));
}

inline Predicate alternative_predicate(const Alternative& a) {
  if (!a.is_step()) return form_predicate(a.form);
  Predicate step = ltl::next(as_predicate(*a.next));
  if (sx::is_top(a.guard)) return step;
  return ltl::conj({state_to_predicate(a.guard), step});
}

/// Predicate denoted by a normalized spec; an empty spec denotes true.
inline Predicate as_predicate(const NormalizedSpec& s) {
  if (s.alternatives.empty()) return ltl::top();
  std::vector<Predicate> parts;
  for (const auto& a : s.alternatives) parts.push_back(alternative_predicate(a));
  return parts.size() == 1 ? parts[0] : ltl::disj(std::move(parts));
}

inline std::string print_spec(const NormalizedSpec& s) { return print(as_predicate(s)); }

inline nlohmann::json spec_to_json(const NormalizedSpec& s);

inline nlohmann::json form_to_json(const NormalForm& f) {
  nlohmann::json j;
  j["untils"] = nlohmann::json::array();
  for (const auto& u : f.untils) {
    nlohmann::json reach = {{"now", state_to_json(u.reach.now)}};
    if (u.reach.nested) reach["nested"] = spec_to_json(*u.reach.nested);
    j["untils"].push_back({{"avoid", state_to_json(u.avoid)}, {"reach", reach}});
  }
  j["loop_untils"] = nlohmann::json::array();
  for (const auto& l : f.loops)
    j["loop_untils"].push_back({{"avoid", state_to_json(l.avoid)}, {"reach", state_to_json(l.reach)}});
  j["safety"] = state_to_json(f.safety);
  return j;
}

inline nlohmann::json spec_to_json(const NormalizedSpec& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : s.alternatives) {
    if (a.is_step()) arr.push_back({{"step", {{"guard", state_to_json(a.guard)}, {"next", spec_to_json(*a.next)}}}});
    else arr.push_back({{"form", form_to_json(a.form)}});
  }
  return {{"max", arr}};
}

/// Reorders the loop untils of every alternative's form (top level only).
inline NormalizedSpec permute_loops(NormalizedSpec s, const std::vector<std::size_t>& order) {
  for (auto& a : s.alternatives) {
    if (a.is_step() || a.form.loops.size() != order.size()) continue;
    std::vector<LoopUntil> loops;
    for (std::size_t k : order) loops.push_back(a.form.loops.at(k));
    a.form.loops = std::move(loops);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Sampled equivalence check

struct EquivalenceReport {
  std::size_t samples = 0;
  std::size_t mismatches = 0;
  std::optional<Trace> counterexample;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Random lasso from a random deterministic controller with up to `memory` modes.
inline Trace random_lasso(const Mdp& mdp, std::mt19937_64& rng, std::size_t memory = 3) {
  std::uniform_int_distribution<std::size_t> modes(1, std::max<std::size_t>(memory, 1));
  const std::size_t m = modes(rng);
  const std::size_t n = mdp.state_count();
  std::vector<std::size_t> action(n * m), next_mode(n * m);
  std::uniform_int_distribution<std::size_t> pick_a(0, mdp.action_count() - 1), pick_m(0, m - 1);
  for (std::size_t k = 0; k < n * m; ++k) {
    action[k] = pick_a(rng);
    next_mode[k] = pick_m(rng);
  }
  std::uniform_int_distribution<std::size_t> pick_x(0, n - 1);
  std::size_t x0 = pick_x(rng);
  ActionChooser policy = [&](std::size_t x, std::uint64_t mode) {
    std::size_t k = x * m + static_cast<std::size_t>(mode);
    return std::make_pair(action[k], static_cast<std::uint64_t>(next_mode[k]));
  };
  return rollout(mdp, policy, x0, n * m + 1);
}

/// Compares robustness of p and as_predicate(n) at t = 0 on random lassos.
inline EquivalenceReport check_equivalence(const Predicate& p, const NormalizedSpec& n, std::size_t samples,
                                           const Mdp& mdp, const PredicateRegistry& reg,
                                           std::uint64_t seed = 1) {
  EquivalenceReport rep;
  Predicate q = as_predicate(n);
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    Trace tr = random_lasso(mdp, rng);
    double a = robustness(p, tr, 0, reg);
    double b = robustness(q, tr, 0, reg);
    ++rep.samples;
    if (a != b) {
      if (rep.mismatches++ == 0) {
        rep.counterexample = tr;
        rep.lhs = a;
        rep.rhs = b;
      }
    }
  }
  return rep;
}

}  // namespace tlvc
