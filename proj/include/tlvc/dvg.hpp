#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tlvc/error.hpp"
#include "tlvc/rewrite.hpp"

namespace tlvc {

enum class NodeKind { kAvoid, kReachAvoid, kReachAvoidLoop, kMaxCombine, kOneStep };

inline const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kAvoid: return "Avoid";
    case NodeKind::kReachAvoid: return "ReachAvoid";
    case NodeKind::kReachAvoidLoop: return "ReachAvoidLoop";
    case NodeKind::kMaxCombine: return "MaxCombine";
    case NodeKind::kOneStep: return "OneStep";
  }
  return "?";
}

inline NodeKind node_kind_from_name(const std::string& s) {
  for (auto k : {NodeKind::kAvoid, NodeKind::kReachAvoid, NodeKind::kReachAvoidLoop, NodeKind::kMaxCombine,
                 NodeKind::kOneStep})
    if (s == node_kind_name(k)) return k;
  throw SchemaError("unknown node kind '" + s + "'");
}

enum class VKind { kConst, kMin, kMax, kValueRef, kNextValueRef };

struct ValueExprNode;
using ValueExpr = std::shared_ptr<const ValueExprNode>;

struct ValueExprNode {
  VKind kind;
  StateExpr state;                  // kConst
  std::vector<ValueExpr> children;  // kMin / kMax
  std::size_t ref = 0;              // kValueRef / kNextValueRef
};

namespace vx {

inline ValueExpr constant(StateExpr e) {
  return std::make_shared<const ValueExprNode>(ValueExprNode{VKind::kConst, std::move(e), {}, 0});
}
inline ValueExpr ref(std::size_t id) {
  return std::make_shared<const ValueExprNode>(ValueExprNode{VKind::kValueRef, nullptr, {}, id});
}
inline ValueExpr next_ref(std::size_t id) {
  return std::make_shared<const ValueExprNode>(ValueExprNode{VKind::kNextValueRef, nullptr, {}, id});
}
inline ValueExpr lattice(VKind kind, std::vector<ValueExpr> kids) {
  if (kids.empty()) throw InvariantError("empty value lattice");
  if (kids.size() == 1) return kids[0];
  return std::make_shared<const ValueExprNode>(ValueExprNode{kind, nullptr, std::move(kids), 0});
}
inline ValueExpr min(std::vector<ValueExpr> kids) { return lattice(VKind::kMin, std::move(kids)); }
inline ValueExpr max(std::vector<ValueExpr> kids) { return lattice(VKind::kMax, std::move(kids)); }

}  // namespace vx

inline std::string value_key(const ValueExpr& e) {
  switch (e->kind) {
    case VKind::kConst: return e->state->key;
    case VKind::kValueRef: return "V" + std::to_string(e->ref);
    case VKind::kNextValueRef: return "XV" + std::to_string(e->ref);
    case VKind::kMin:
    case VKind::kMax: {
      std::string out = e->kind == VKind::kMin ? "min(" : "max(";
      for (std::size_t i = 0; i < e->children.size(); ++i) out += (i ? "," : "") + value_key(e->children[i]);
      return out + ")";
    }
  }
  return "?";
}

inline void collect_refs(const ValueExpr& e, std::vector<std::size_t>& out) {
  if (e->kind == VKind::kValueRef || e->kind == VKind::kNextValueRef) {
    if (std::find(out.begin(), out.end(), e->ref) == out.end()) out.push_back(e->ref);
  }
  for (const auto& c : e->children) collect_refs(c, out);
}

inline bool has_next_ref(const ValueExpr& e) {
  if (e->kind == VKind::kNextValueRef) return true;
  return std::any_of(e->children.begin(), e->children.end(), [](const ValueExpr& c) { return has_next_ref(c); });
}

struct DvgNode {
  std::size_t id = 0;
  NodeKind kind = NodeKind::kAvoid;
  StateExpr avoid = sx::top();
  ValueExpr reach;  // null for Avoid
  std::optional<std::size_t> loop_next;
  std::vector<std::size_t> children;
  std::string label;
};

struct Dvg {
  std::vector<DvgNode> nodes;
  std::size_t root = 0;
  std::vector<std::vector<std::size_t>> topo_order;  // SCCs, dependencies first

  const DvgNode& node(std::size_t id) const { return nodes.at(id); }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& v : nodes) n += v.children.size();
    return n;
  }
  std::size_t count(NodeKind k) const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [k](const DvgNode& v) { return v.kind == k; }));
  }
  /// Nodes backed by a reach-avoid style Bellman problem.
  std::size_t value_node_count() const { return count(NodeKind::kReachAvoid) + count(NodeKind::kReachAvoidLoop); }
  std::size_t loop_scc_count() const {
    std::size_t n = 0;
    for (const auto& scc : topo_order)
      if (nodes[scc[0]].kind == NodeKind::kReachAvoidLoop) ++n;
    return n;
  }
};

/// Tarjan SCCs of the child relation, emitted with dependencies first.
inline std::vector<std::vector<std::size_t>> strongly_connected(const Dvg& g) {
  const std::size_t n = g.nodes.size();
  std::vector<long> index(n, -1), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> out;
  long counter = 0;
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : g.nodes[v].children) {
      if (index[w] < 0) {
        visit(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::size_t> scc;
      std::size_t w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        scc.push_back(w);
      } while (w != v);
      std::sort(scc.begin(), scc.end());
      out.push_back(std::move(scc));
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] < 0) visit(v);
  return out;
}

/// Throws SchemaError when references dangle or the SCC structure is invalid.
inline void validate(const Dvg& g) {
  const std::size_t n = g.nodes.size();
  if (n == 0) throw SchemaError("graph has no nodes");
  if (g.root >= n) throw SchemaError("root " + std::to_string(g.root) + " does not exist");
  for (std::size_t i = 0; i < n; ++i) {
    const DvgNode& v = g.nodes[i];
    if (v.id != i) throw SchemaError("node ids must be dense and ordered");
    std::vector<std::size_t> refs;
    if (v.reach) collect_refs(v.reach, refs);
    if (v.loop_next && std::find(refs.begin(), refs.end(), *v.loop_next) == refs.end()) refs.push_back(*v.loop_next);
    for (std::size_t r : refs)
      if (r >= n) throw SchemaError("node " + std::to_string(i) + " references missing node " + std::to_string(r));
    for (std::size_t c : v.children)
      if (c >= n) throw SchemaError("node " + std::to_string(i) + " has missing child " + std::to_string(c));
    std::set<std::size_t> a(refs.begin(), refs.end()), b(v.children.begin(), v.children.end());
    if (a != b) throw SchemaError("node " + std::to_string(i) + " children disagree with its references");
    const bool is_loop = v.kind == NodeKind::kReachAvoidLoop;
    if ((v.kind == NodeKind::kAvoid) != !v.reach) throw SchemaError("node " + std::to_string(i) + " reach mismatch");
    if (is_loop != v.loop_next.has_value()) throw SchemaError("loop_next only on loop nodes");
    if (is_loop && g.nodes[*v.loop_next].kind != NodeKind::kReachAvoidLoop)
      throw SchemaError("loop_next of node " + std::to_string(i) + " is not a loop node");
    if (v.reach && has_next_ref(v.reach) && !is_loop && v.kind != NodeKind::kOneStep)
      throw SchemaError("next reference outside loop/one-step node " + std::to_string(i));
  }
  std::vector<long> where(n, -1);
  for (std::size_t k = 0; k < g.topo_order.size(); ++k) {
    const auto& scc = g.topo_order[k];
    if (scc.empty()) throw SchemaError("empty component in topo_order");
    for (std::size_t v : scc) {
      if (v >= n || where[v] >= 0) throw SchemaError("topo_order is not a partition of the nodes");
      where[v] = static_cast<long>(k);
    }
    if (scc.size() > 1)
      for (std::size_t v : scc)
        if (g.nodes[v].kind != NodeKind::kReachAvoidLoop) throw SchemaError("cycle through a non-loop node");
  }
  for (long w : where)
    if (w < 0) throw SchemaError("topo_order misses a node");
  for (const auto& v : g.nodes)
    for (std::size_t c : v.children) {
      if (where[c] > where[v.id]) throw SchemaError("topo_order lists a dependent before its dependency");
      if (where[c] == where[v.id] && v.kind != NodeKind::kReachAvoidLoop)
        throw SchemaError("self dependency on a non-loop node");
    }
  auto sccs = strongly_connected(g);
  if (sccs.size() != g.topo_order.size()) throw SchemaError("topo_order components are not the SCCs");
}

/// Guard used on loop nodes. kInclusive keeps every loop avoid active at all
/// times; kWeak is the q_{j+1} | r_{j+1} relaxation (see README).
enum class LoopGuard { kInclusive, kWeak };

struct CompileOptions {
  bool dedup = true;
  LoopGuard guard = LoopGuard::kInclusive;
};

namespace detail {

class Compiler {
 public:
  explicit Compiler(CompileOptions opt) : opt_(opt) {}

  Dvg finish(std::size_t root) {
    g_.root = root;
    g_.topo_order = strongly_connected(g_);
    validate(g_);
    return std::move(g_);
  }

  std::size_t spec(const NormalizedSpec& s) {
    if (s.alternatives.empty()) throw InvariantError("compiling an empty spec");
    std::string key = spec_key(s);
    if (opt_.dedup)
      if (auto it = spec_memo_.find(key); it != spec_memo_.end()) return it->second;
    std::size_t id;
    if (s.alternatives.size() == 1) {
      id = alternative(s.alternatives[0]);
    } else {
      std::vector<ValueExpr> kids;
      for (const auto& a : s.alternatives) kids.push_back(vx::ref(alternative(a)));
      id = add(NodeKind::kMaxCombine, sx::top(), vx::max(std::move(kids)), std::nullopt, print_spec(s));
    }
    if (opt_.dedup) spec_memo_[key] = id;
    return id;
  }

 private:
  std::size_t alternative(const Alternative& a) {
    if (!a.is_step()) return form(a.form);
    std::size_t child = spec(*a.next);
    ValueExpr reach = vx::next_ref(child);
    if (!sx::is_top(a.guard)) reach = vx::min({vx::constant(a.guard), reach});
    NormalizedSpec self;
    self.alternatives.push_back(a);
    return add(NodeKind::kOneStep, sx::top(), reach, std::nullopt, print_spec(self));
  }

  std::size_t form(const NormalForm& f) {
    std::string key = form_key(f);
    if (opt_.dedup)
      if (auto it = form_memo_.find(key); it != form_memo_.end()) return it->second;
    NormalizedSpec self;
    self.alternatives.push_back(Alternative{f, sx::top(), nullptr});
    std::string label = print_spec(self);
    std::size_t id;
    if (!f.untils.empty()) {
      std::vector<StateExpr> avoid{f.safety};
      for (const auto& u : f.untils) avoid.push_back(u.avoid);
      for (const auto& l : f.loops) avoid.push_back(loop_guard_term(l));
      std::vector<ValueExpr> terms;
      for (std::size_t i = 0; i < f.untils.size(); ++i) {
        NormalizedSpec rest = residual(f, i);
        const StateExpr& now = f.untils[i].reach.now;
        if (rest.alternatives.empty()) {
          terms.push_back(vx::constant(now));
          continue;
        }
        ValueExpr child = vx::ref(spec(rest));
        terms.push_back(sx::is_top(now) ? child : vx::min({vx::constant(now), child}));
      }
      id = add(NodeKind::kReachAvoid, sx::min(avoid), vx::max(std::move(terms)), std::nullopt, label);
    } else if (!f.loops.empty()) {
      id = loop_cycle(f, label);
    } else {
      id = add(NodeKind::kAvoid, f.safety, nullptr, std::nullopt, label);
    }
    if (opt_.dedup) form_memo_[key] = id;
    return id;
  }

  StateExpr loop_guard_term(const LoopUntil& l) const {
    return opt_.guard == LoopGuard::kInclusive ? l.avoid : sx::max({l.avoid, l.reach});
  }

  // One ReachAvoidLoop node per loop until; node j hands over to node j+1.
  std::size_t loop_cycle(const NormalForm& f, const std::string& label) {
    const std::size_t J = f.loops.size();
    const std::size_t first = g_.nodes.size();
    std::vector<StateExpr> all_avoid{f.safety};
    for (const auto& l : f.loops) all_avoid.push_back(l.avoid);
    StateExpr inclusive = sx::min(all_avoid);
    for (std::size_t j = 0; j < J; ++j) {
      const LoopUntil& nxt = f.loops[(j + 1) % J];
      StateExpr guard = opt_.guard == LoopGuard::kInclusive
                            ? inclusive
                            : sx::min({f.loops[j].avoid, sx::max({nxt.avoid, nxt.reach}), f.safety});
      StateExpr reach = sx::min({f.loops[j].reach, guard});
      std::size_t next_id = first + (j + 1) % J;
      DvgNode v;
      v.id = first + j;
      v.kind = NodeKind::kReachAvoidLoop;
      v.avoid = guard;
      v.reach = vx::min({vx::constant(reach), vx::next_ref(next_id)});
      v.loop_next = next_id;
      v.children = {next_id};
      v.label = J == 1 ? label : label + " [phase " + std::to_string(j + 1) + "/" + std::to_string(J) + "]";
      g_.nodes.push_back(std::move(v));
    }
    return first;
  }

  std::size_t add(NodeKind kind, StateExpr avoid, ValueExpr reach, std::optional<std::size_t> loop_next,
                  std::string label) {
    std::string key = std::string(node_kind_name(kind)) + "|" + avoid->key + "|" + (reach ? value_key(reach) : "-");
    if (opt_.dedup)
      if (auto it = node_memo_.find(key); it != node_memo_.end()) return it->second;
    DvgNode v;
    v.id = g_.nodes.size();
    v.kind = kind;
    v.avoid = std::move(avoid);
    v.reach = std::move(reach);
    v.loop_next = loop_next;
    if (v.reach) collect_refs(v.reach, v.children);
    v.label = std::move(label);
    g_.nodes.push_back(v);
    if (opt_.dedup) node_memo_[key] = v.id;
    return v.id;
  }

  CompileOptions opt_;
  Dvg g_;
  std::map<std::string, std::size_t> spec_memo_, form_memo_, node_memo_;
};

}  // namespace detail

inline Dvg compile(const NormalizedSpec& spec, CompileOptions opt = {}) {
  detail::Compiler c(opt);
  std::size_t root = c.spec(spec);
  return c.finish(root);
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

inline const char* dot_shape(NodeKind k) {
  switch (k) {
    case NodeKind::kAvoid: return "box";
    case NodeKind::kReachAvoid: return "ellipse";
    case NodeKind::kReachAvoidLoop: return "doubleoctagon";
    case NodeKind::kMaxCombine: return "diamond";
    case NodeKind::kOneStep: return "hexagon";
  }
  return "ellipse";
}

}  // namespace detail

inline std::string to_dot(const Dvg& g) {
  std::ostringstream os;
  os << "digraph dvg {\n";
  for (const auto& v : g.nodes) {
    os << "  n" << v.id << " [label=\"" << v.id << ": " << detail::dot_escape(v.label) << "\\n"
       << node_kind_name(v.kind) << "\", shape=" << detail::dot_shape(v.kind);
    if (v.id == g.root) os << ", penwidth=2";
    os << "];\n";
  }
  for (const auto& v : g.nodes)
    for (std::size_t c : v.children) {
      os << "  n" << v.id << " -> n" << c;
      if (v.loop_next && *v.loop_next == c) os << " [style=dashed]";
      os << ";\n";
    }
  os << "}\n";
  return os.str();
}

inline constexpr int kDvgSchemaVersion = 1;

inline nlohmann::json value_to_json(const ValueExpr& e) {
  switch (e->kind) {
    case VKind::kConst: return {{"const", state_to_json(e->state)}};
    case VKind::kValueRef: return {{"ref", e->ref}};
    case VKind::kNextValueRef: return {{"next_ref", e->ref}};
    case VKind::kMin:
    case VKind::kMax: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : e->children) arr.push_back(value_to_json(c));
      return {{e->kind == VKind::kMin ? "min" : "max", arr}};
    }
  }
  throw InvariantError("value expression kind");
}

inline ValueExpr value_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != 1) throw SchemaError("value expression must be a one-key object");
  auto it = j.begin();
  const std::string& k = it.key();
  if (k == "const") return vx::constant(state_from_json(*it));
  if ((k == "ref" || k == "next_ref") && it->is_number_unsigned()) {
    auto id = it->get<std::size_t>();
    return k == "ref" ? vx::ref(id) : vx::next_ref(id);
  }
  if ((k == "min" || k == "max") && it->is_array() && it->size() >= 2) {
    std::vector<ValueExpr> kids;
    for (const auto& c : *it) kids.push_back(value_from_json(c));
    return k == "min" ? vx::min(std::move(kids)) : vx::max(std::move(kids));
  }
  throw SchemaError("malformed value expression under key '" + k + "'");
}

inline nlohmann::json dvg_to_json_value(const Dvg& g) {
  nlohmann::json j;
  j["schema"] = "tlvc-dvg";
  j["version"] = kDvgSchemaVersion;
  j["root"] = g.root;
  j["nodes"] = nlohmann::json::array();
  for (const auto& v : g.nodes) {
    nlohmann::json n;
    n["id"] = v.id;
    n["kind"] = node_kind_name(v.kind);
    n["label"] = v.label;
    n["avoid"] = state_to_json(v.avoid);
    n["reach"] = v.reach ? value_to_json(v.reach) : nlohmann::json();
    n["loop_next"] = v.loop_next ? nlohmann::json(*v.loop_next) : nlohmann::json();
    n["children"] = v.children;
    j["nodes"].push_back(n);
  }
  j["topo_order"] = g.topo_order;
  return j;
}

inline std::string to_json(const Dvg& g) { return dvg_to_json_value(g).dump(2) + "\n"; }

inline Dvg from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed DVG JSON: ") + e.what());
  }
  try {
    if (!j.is_object() || j.value("schema", "") != "tlvc-dvg") throw SchemaError("not a DVG document");
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kDvgSchemaVersion)
      throw SchemaError("unsupported DVG schema version");
    Dvg g;
    g.root = j.at("root").get<std::size_t>();
    for (const auto& n : j.at("nodes")) {
      DvgNode v;
      v.id = n.at("id").get<std::size_t>();
      v.kind = node_kind_from_name(n.at("kind").get<std::string>());
      v.label = n.at("label").get<std::string>();
      v.avoid = state_from_json(n.at("avoid"));
      if (!n.at("reach").is_null()) v.reach = value_from_json(n.at("reach"));
      if (!n.at("loop_next").is_null()) v.loop_next = n.at("loop_next").get<std::size_t>();
      v.children = n.at("children").get<std::vector<std::size_t>>();
      g.nodes.push_back(std::move(v));
    }
    g.topo_order = j.at("topo_order").get<std::vector<std::vector<std::size_t>>>();
    validate(g);
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed DVG JSON: ") + e.what());
  }
}

inline bool structurally_equal(const Dvg& a, const Dvg& b) { return dvg_to_json_value(a) == dvg_to_json_value(b); }

}  // namespace tlvc
