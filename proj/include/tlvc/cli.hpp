#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tlvc/dvg.hpp"
#include "tlvc/error.hpp"
#include "tlvc/log.hpp"
#include "tlvc/mdp.hpp"
#include "tlvc/oracle.hpp"
#include "tlvc/parser.hpp"
#include "tlvc/policy.hpp"
#include "tlvc/rewrite.hpp"
#include "tlvc/solver.hpp"

namespace tlvc::cli {

struct Options {
  std::string spec_path;
  std::string expr;
  std::string env_path;
  std::string out_dir = "tlvc_out";
  std::vector<double> gamma{0.9, 0.99, 0.999};
  double tol = 1e-9;
  unsigned jobs = 1;
  std::uint64_t seed = 1;
  // parse
  bool normalize = false;
  std::string emit = "ast";
  // compile
  bool dot = false;
  // rollout
  std::string x0;
  std::size_t horizon = 200;
  // verify
  double margin = 0.05;
  std::size_t samples = 1000;
  bool contraction = false;
  bool permute_loops = false;
};

namespace detail {

struct Loaded {
  std::string text;
  std::string origin;
  Predicate spec;
};

inline Loaded load_spec(const Options& o) {
  Loaded l;
  if (!o.expr.empty()) {
    l.text = o.expr;
    l.origin = "<expr>";
  } else if (!o.spec_path.empty()) {
    l.text = load_spec_text(o.spec_path);
    l.origin = o.spec_path;
  } else {
    throw ConfigError("no spec given: pass a spec file or --expr");
  }
  l.spec = parse(l.text);
  return l;
}

inline Grid load_env(const Options& o) {
  if (o.env_path.empty()) throw ConfigError("this command needs --env");
  return build_grid(parse_grid_config(read_text_file(o.env_path)));
}

inline SolveConfig solve_config(const Options& o) {
  SolveConfig cfg;
  cfg.gamma_schedule = o.gamma;
  cfg.tol = o.tol;
  cfg.jobs = o.jobs;
  return cfg;
}

inline std::filesystem::path out_file(const Options& o, const std::string& name) {
  std::filesystem::path dir(o.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + o.out_dir + "': " + ec.message());
  return dir / name;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << content;
}

inline std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

inline std::size_t parse_x0(const std::string& text, const Mdp& mdp) {
  if (text.empty()) throw ConfigError("rollout needs --x0");
  auto comma = text.find(',');
  try {
    if (comma == std::string::npos) {
      std::size_t used = 0;
      long long v = std::stoll(text, &used);
      if (used != text.size() || v < 0 || static_cast<std::size_t>(v) >= mdp.state_count())
        throw DomainError("start state " + text + " out of range");
      return static_cast<std::size_t>(v);
    }
    Cell c{std::stoi(text.substr(0, comma)), std::stoi(text.substr(comma + 1))};
    auto x = mdp.state_at(c);
    if (!x) throw DomainError("cell " + text + " is not a playable grid cell");
    return *x;
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad --x0 '" + text + "': expected a state index or row,col");
  } catch (const std::out_of_range&) {
    throw ConfigError("bad --x0 '" + text + "'");
  }
}

inline std::size_t sign_disagreements(const Table& v, const Table& truth, double margin) {
  std::size_t bad = 0;
  for (std::size_t x = 0; x < v.size(); ++x)
    if (std::abs(truth[x]) >= margin && ((v[x] >= 0) != (truth[x] >= 0))) ++bad;
  return bad;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_parse(const Options& o, std::ostream& out) {
  Loaded l = load_spec(o);
  if (o.normalize || o.emit == "normal") {
    NormalizedSpec n = normalize(l.spec);
    out << "normal form: " << print_spec(n) << "\n";
    out << spec_to_json(n).dump(2) << "\n";
    return 0;
  }
  out << ast_to_json(l.spec).dump(2) << "\n";
  return 0;
}

inline int cmd_compile(const Options& o, std::ostream& out) {
  Loaded l = load_spec(o);
  if (!o.env_path.empty()) load_env(o).registry.check_bound(l.spec);
  Dvg g = compile(normalize(l.spec));
  std::vector<std::size_t> loop_sizes;
  for (const auto& scc : g.topo_order)
    if (g.nodes[scc[0]].kind == NodeKind::kReachAvoidLoop) loop_sizes.push_back(scc.size());
  out << "nodes: " << g.nodes.size() << "\n";
  out << "value nodes: " << g.value_node_count() << "\n";
  out << "edges: " << g.edge_count() << "\n";
  out << "sccs: " << g.topo_order.size() << "\n";
  out << "loop sccs: " << loop_sizes.size();
  if (!loop_sizes.empty()) {
    out << " (sizes";
    for (std::size_t s : loop_sizes) out << ' ' << s;
    out << ')';
  }
  out << "\n";
  auto json_path = out_file(o, "dvg.json");
  write_file(json_path, to_json(g));
  out << "wrote " << json_path.string() << "\n";
  if (o.dot) {
    auto dot_path = out_file(o, "dvg.dot");
    write_file(dot_path, to_dot(g));
    out << "wrote " << dot_path.string() << "\n";
  }
  return 0;
}

inline int cmd_solve(const Options& o, std::ostream& out) {
  Loaded l = load_spec(o);
  Grid env = load_env(o);
  env.registry.check_bound(l.spec);
  Dvg g = compile(normalize(l.spec));
  Solution sol = solve(g, env.mdp, env.registry, solve_config(o));
  out << "# tlvc solve gamma=" << join(o.gamma) << " tol=" << o.tol << "\n";
  out << "node,kind,iterations,residual,label\n";
  out << std::setprecision(6);
  for (const auto& v : g.nodes) {
    double res = fixed_point_residual(g, sol, env.mdp, env.registry, v.id);
    out << v.id << ',' << node_kind_name(v.kind) << ',' << sol.iterations[v.id] << ',' << res << ",\"" << v.label
        << "\"\n";
  }
  auto csv = out_file(o, "values.csv");
  write_file(csv, values_csv(sol));
  auto blob = out_file(o, "values.bin");
  write_file(blob, to_blob(sol.values));
  auto heat = out_file(o, "heatmap_root.csv");
  write_file(heat, heatmap_csv(env.mdp, sol.table(g.root)));
  out << "wrote " << csv.string() << ", " << blob.string() << ", " << heat.string() << "\n";
  return 0;
}

inline int cmd_rollout(const Options& o, std::ostream& out) {
  Loaded l = load_spec(o);
  Grid env = load_env(o);
  env.registry.check_bound(l.spec);
  std::size_t x0 = parse_x0(o.x0, env.mdp);
  if (o.horizon < 1) throw ConfigError("horizon must be at least 1");
  Dvg g = compile(normalize(l.spec));
  Solution sol = solve(g, env.mdp, env.registry, solve_config(o));
  ScoredRollout r = score_rollout(x0, sol, g, env.mdp, env.registry, l.spec, o.horizon);
  auto csv = out_file(o, "rollout.csv");
  write_file(csv, rollout_csv(r.detail, env.mdp));
  out << std::setprecision(17);
  out << "value: " << sol.table(g.root)[x0] << "\n";
  out << "robustness: " << r.robustness << "\n";
  out << "satisfied: " << (r.robustness >= 0.0 ? "true" : "false") << "\n";
  out << "trace: " << (r.trace.is_lasso() ? "lasso" : "finite") << " prefix " << r.trace.prefix.size() << " cycle "
      << r.trace.cycle.size() << "\n";
  out << "switches: " << r.detail.events.size() << "\n";
  out << "wrote " << csv.string() << "\n";
  return 0;
}

inline int cmd_verify(const Options& o, std::ostream& out) {
  Loaded l = load_spec(o);
  Grid env = load_env(o);
  env.registry.check_bound(l.spec);
  NormalizedSpec normal = normalize(l.spec);
  Dvg g = compile(normal);
  SolveConfig cfg = solve_config(o);
  cfg.record_schedule = true;
  Solution sol = solve(g, env.mdp, env.registry, cfg);
  Table truth = oracle::oracle_value(normal, env.mdp, env.registry, o.jobs);
  bool pass = true;

  out << std::setprecision(6);
  out << "# tlvc verify seed=" << o.seed << " gamma=" << join(o.gamma) << " tol=" << o.tol << " margin=" << o.margin
      << "\n";
  out << "spec: " << print(l.spec) << "\n";
  out << "normal form: " << print_spec(normal) << "\n";
  out << "states: " << env.mdp.state_count() << "\n";
  out << "nodes: " << g.nodes.size() << " (value nodes " << g.value_node_count() << ")\n";
  for (const auto& [gamma, tables] : sol.schedule)
    out << "gamma " << gamma << ": max |V - V*| = " << sup_distance(tables[g.root], truth) << "\n";
  std::size_t signs = sign_disagreements(sol.table(g.root), truth, o.margin);
  out << "sign disagreements: " << signs << "\n";
  pass &= signs == 0;

  EquivalenceReport eq = check_equivalence(l.spec, normal, o.samples, env.mdp, env.registry, o.seed);
  out << "rewrite equivalence: " << eq.mismatches << " mismatches over " << eq.samples << " lassos\n";
  pass &= eq.mismatches == 0;

  if (o.contraction) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t n = env.mdp.state_count();
    auto table = [&] {
      Table t(n);
      for (auto& v : t) v = u(rng);
      return t;
    };
    std::size_t violations[3] = {0, 0, 0};
    for (std::size_t s = 0; s < o.samples; ++s) {
      double gamma = o.gamma[s % o.gamma.size()];
      Table v = table(), w = table(), r = table(), q = table(), v2 = table(), w2 = table();
      double d = sup_distance(v, w);
      double d2 = std::max(d, sup_distance(v2, w2));
      const double slack = 1e-12;
      if (sup_distance(backup_avoid(v, q, env.mdp, gamma), backup_avoid(w, q, env.mdp, gamma)) > gamma * d + slack)
        ++violations[0];
      if (sup_distance(backup_reach_avoid(v, r, q, env.mdp, gamma), backup_reach_avoid(w, r, q, env.mdp, gamma)) >
          gamma * d + slack)
        ++violations[1];
      if (sup_distance(backup_reach_avoid_loop({v, v2}, 0, r, q, env.mdp, gamma),
                       backup_reach_avoid_loop({w, w2}, 0, r, q, env.mdp, gamma)) > gamma * d2 + slack)
        ++violations[2];
    }
    out << "contraction: avoid " << violations[0] << ", reach-avoid " << violations[1] << ", loop " << violations[2]
        << " violations over " << o.samples << " samples each\n";
    pass &= violations[0] + violations[1] + violations[2] == 0;
  }

  if (o.permute_loops) {
    std::size_t J = 0;
    for (const auto& a : normal.alternatives)
      if (!a.is_step()) J = std::max(J, a.form.loops.size());
    if (J < 2) {
      out << "permute-loops: nothing to permute\n";
    } else {
      std::vector<std::size_t> order(J);
      std::iota(order.begin(), order.end(), 0);
      std::size_t orderings = 0, mismatches = 0, sign_bad = 0;
      double max_diff = 0.0;
      do {
        NormalizedSpec p = permute_loops(normal, order);
        mismatches += check_equivalence(l.spec, p, o.samples, env.mdp, env.registry, o.seed).mismatches;
        Dvg pg = compile(p);
        Solution ps = solve(pg, env.mdp, env.registry, solve_config(o));
        sign_bad += sign_disagreements(ps.table(pg.root), truth, o.margin);
        max_diff = std::max(max_diff, sup_distance(ps.table(pg.root), sol.table(g.root)));
        ++orderings;
      } while (std::next_permutation(order.begin(), order.end()));
      out << "permute-loops: " << orderings << " orderings, " << mismatches << " equivalence mismatches, " << sign_bad
          << " sign disagreements, max root difference " << max_diff << "\n";
      pass &= mismatches == 0 && sign_bad == 0;
    }
  }

  out << "result: " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? 0 : 1;
}

}  // namespace detail

/// Runs the command line; returns the process exit code (0 ok, 1 user error, 2 internal).
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"tlvc: temporal-logic value compiler"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--expr", o.expr, "Spec text instead of a spec file");
  app.add_option("--env", o.env_path, "Grid environment config");
  app.add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  app.add_option("--gamma", o.gamma, "Ascending discount schedule")->delimiter(',')->capture_default_str();
  app.add_option("--tol", o.tol, "Sup-norm stopping tolerance")->capture_default_str();
  app.add_option("--jobs", o.jobs, "Worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();
  app.add_option("--seed", o.seed, "Sampling seed")->capture_default_str();

  auto spec_arg = [&](CLI::App* sub) { sub->add_option("spec", o.spec_path, "Spec file (# comments allowed)"); };
  CLI::App* parse_cmd = app.add_subcommand("parse", "Parse a spec and print its AST or normal form");
  spec_arg(parse_cmd);
  parse_cmd->add_flag("--normalize", o.normalize, "Print the normal form");
  parse_cmd->add_option("--emit", o.emit, "ast or normal")->check(CLI::IsMember({"ast", "normal"}));
  CLI::App* compile_cmd = app.add_subcommand("compile", "Compile a spec into a value graph");
  spec_arg(compile_cmd);
  compile_cmd->add_flag("--dot", o.dot, "Also write dvg.dot");
  CLI::App* solve_cmd = app.add_subcommand("solve", "Solve every value node on a grid");
  spec_arg(solve_cmd);
  CLI::App* rollout_cmd = app.add_subcommand("rollout", "Roll out the greedy policy");
  spec_arg(rollout_cmd);
  rollout_cmd->add_option("--x0", o.x0, "Start state index or row,col");
  rollout_cmd->add_option("--horizon", o.horizon, "Step limit")->capture_default_str();
  CLI::App* verify_cmd = app.add_subcommand("verify", "Compare solver values against the oracle");
  spec_arg(verify_cmd);
  verify_cmd->add_option("--margin", o.margin, "Oracle margin for sign checks")->capture_default_str();
  verify_cmd->add_option("--samples", o.samples, "Sampled lassos / table pairs")->capture_default_str();
  verify_cmd->add_flag("--contraction", o.contraction, "Sample the contraction bound");
  verify_cmd->add_flag("--permute-loops", o.permute_loops, "Re-solve under every loop ordering");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*parse_cmd) return detail::cmd_parse(o, out);
    if (*compile_cmd) return detail::cmd_compile(o, out);
    if (*solve_cmd) return detail::cmd_solve(o, out);
    if (*rollout_cmd) return detail::cmd_rollout(o, out);
    if (*verify_cmd) return detail::cmd_verify(o, out);
  } catch (const ParseError& e) {
    std::string text = o.expr.empty() ? (o.spec_path.empty() ? "" : load_spec_text(o.spec_path)) : o.expr;
    err << format_diagnostic(text, e, o.expr.empty() ? o.spec_path : "<expr>");
    return 1;
  } catch (const FragmentError& e) {
    err << "error: spec outside the supported fragment: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace tlvc::cli
