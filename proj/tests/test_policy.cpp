#include <gtest/gtest.h>

#include <random>

#include "support/instances.hpp"
#include "tlvc/oracle.hpp"
#include "tlvc/policy.hpp"

namespace tlvc {
namespace {

struct Solved {
  Dvg g;
  Solution sol;
};

Solved solve_text(const std::string& text, const Mdp& mdp, const PredicateRegistry& reg) {
  Dvg g = compile(normalize(parse(text)));
  Solution sol = solve(g, mdp, reg);
  return {std::move(g), std::move(sol)};
}

// States 0..n-1 on a line; actions stay, left, right.
Mdp line(std::size_t n) {
  std::vector<std::size_t> succ;
  for (std::size_t x = 0; x < n; ++x) {
    succ.push_back(x);
    succ.push_back(x == 0 ? 0 : x - 1);
    succ.push_back(x + 1 == n ? x : x + 1);
  }
  return Mdp(n, 3, succ);
}

std::size_t horizon_for(const Mdp& mdp, const Dvg& g) { return 4 * mdp.state_count() * (g.nodes.size() + 1); }

TEST(Act, AvoidTieBreaksToLowestAction) {
  PredicateRegistry reg(4);
  reg.add("q", {1, 1, 1, 1});
  Mdp mdp = line(4);
  auto s = solve_text("G q", mdp, reg);
  PolicyStep step = act({2, s.g.root, 0}, s.sol, s.g, mdp, reg);
  EXPECT_EQ(step.action, 0u);
  EXPECT_FALSE(step.trigger_fired);
  EXPECT_EQ(step.next_active, s.g.root);
}

TEST(Act, SwitchesToTerminalChild) {
  PredicateRegistry reg(3);
  reg.add("a", {0.5, -0.5, -1});
  reg.add("b", {1, 1, 1});
  Mdp mdp = line(3);
  auto s = solve_text("F(a & G b)", mdp, reg);
  PolicyStep step = act({0, s.g.root, 0}, s.sol, s.g, mdp, reg);
  EXPECT_TRUE(step.trigger_fired);
  EXPECT_GE(step.switch_value, step.stay_value);
  // Root hands over to the a & G b node, which hands over to G b in the same step.
  ASSERT_EQ(step.switches.size(), 2u);
  EXPECT_EQ(s.g.node(step.next_active).kind, NodeKind::kAvoid);
  PolicyStep away = act({2, s.g.root, 0}, s.sol, s.g, mdp, reg);
  EXPECT_FALSE(away.trigger_fired);
  EXPECT_EQ(away.action, 1u);
}

TEST(Act, Errors) {
  PredicateRegistry reg(2);
  reg.add("r", {0.5, -0.5});
  Mdp mdp(2, 1, {1, 0});
  auto s = solve_text("G(F r & F !r)", mdp, reg);
  EXPECT_THROW(act({0, s.g.root, 1}, s.sol, s.g, mdp, reg), DomainError);
  EXPECT_THROW(act({0, 99, 0}, s.sol, s.g, mdp, reg), DomainError);
  Solution empty(s.g.nodes.size());
  EXPECT_THROW(act({0, s.g.root, 0}, empty, s.g, mdp, reg), DependencyError);
}

TEST(ComparisonTree, AvoidHasNoEvents) {
  PredicateRegistry reg(3);
  reg.add("q", {0.5, 0.5, -0.5});
  Mdp mdp = line(3);
  auto s = solve_text("G q", mdp, reg);
  EXPECT_TRUE(build_comparison_tree(1, s.sol, s.g, mdp, reg, 20).events.empty());
}

TEST(ComparisonTree, TwoGoalsTwoEvents) {
  PredicateRegistry reg(4);
  reg.add("r1", {0.5, -0.5, -1, -1});
  reg.add("r2", {-1, -1, -0.5, 0.5});
  Mdp mdp = line(4);
  auto s = solve_text("F r1 & F r2", mdp, reg);
  auto tree = build_comparison_tree(1, s.sol, s.g, mdp, reg, 50);
  ASSERT_EQ(tree.events.size(), 2u);
  EXPECT_EQ(tree.events[0].from, s.g.root);
  EXPECT_EQ(tree.events[1].to, kDone);
  auto replayed = replay(tree, s.sol, s.g, mdp, 50);
  EXPECT_EQ(replayed.states, tree.states);
  auto scored = score_rollout(1, s.sol, s.g, mdp, reg, parse("F r1 & F r2"), 50);
  EXPECT_DOUBLE_EQ(scored.robustness, 0.5);
}

TEST(ComparisonTree, GloballyFinallyIsPeriodic) {
  PredicateRegistry reg(2);
  reg.add("r", {0.5, -0.5});
  Mdp mdp(2, 1, {1, 0});
  auto s = solve_text("G F r", mdp, reg);
  auto tree = build_comparison_tree(0, s.sol, s.g, mdp, reg, 50);
  ASSERT_TRUE(tree.loop_start.has_value());
  EXPECT_EQ(tree.states.size() - *tree.loop_start, 2u);
  std::size_t in_cycle = 0;
  for (const auto& e : tree.events)
    if (e.t >= *tree.loop_start) ++in_cycle;
  EXPECT_EQ(in_cycle, 1u);
  auto scored = score_rollout(0, s.sol, s.g, mdp, reg, parse("G F r"), 50);
  EXPECT_DOUBLE_EQ(scored.robustness, 0.5);
}

TEST(ScoreRollout, Examples) {
  GridSpec spec{1, 3, {}, {{"goal", Rect{0, 0, 0, 0}}, {"safe", Rect{0, 1, 0, 2}}}, 0.25};
  Grid env = build_grid(spec);
  std::size_t x0 = *env.mdp.state_at({0, 1});
  auto reach = solve_text("F goal", env.mdp, env.registry);
  EXPECT_DOUBLE_EQ(score_rollout(x0, reach.sol, reach.g, env.mdp, env.registry, parse("F goal"), 20).robustness,
                   0.125);
  auto safe = solve_text("G safe", env.mdp, env.registry);
  double rho = score_rollout(x0, safe.sol, safe.g, env.mdp, env.registry, parse("G safe"), 20).robustness;
  EXPECT_GT(rho, 0.0);
  auto both = solve_text("F goal & G safe", env.mdp, env.registry);
  double bad = score_rollout(x0, both.sol, both.g, env.mdp, env.registry, parse("F goal & G safe"), 20).robustness;
  EXPECT_LT(bad, 0.0);
  EXPECT_GE(bad, -1.0);
}

class PolicyProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(PolicyProperty, ReplayAndTriggerStability) {
  std::mt19937_64 rng(GetParam());
  for (int i = 0; i < 20; ++i) {
    auto inst = testing::grid_instance(rng(), 5);
    Dvg g = compile(inst.normal);
    Solution sol = solve(g, inst.env.mdp, inst.env.registry);
    const std::size_t h = horizon_for(inst.env.mdp, g);
    for (std::size_t x0 = 0; x0 < inst.env.mdp.state_count(); ++x0) {
      auto tree = build_comparison_tree(x0, sol, g, inst.env.mdp, inst.env.registry, h);
      auto again = build_comparison_tree(x0, sol, g, inst.env.mdp, inst.env.registry, h);
      EXPECT_EQ(tree.events, again.events);
      auto log = replay(tree, sol, g, inst.env.mdp, h);
      EXPECT_EQ(log.states, tree.states) << inst.text << " x0=" << x0;
      auto run = policy_rollout(x0, sol, g, inst.env.mdp, inst.env.registry, h);
      for (std::size_t t = 0; t < run.log.actions.size(); ++t) {
        std::size_t node = decode_node(run.log.memory[t]);
        AugState s{run.log.states[t], node, node == kDone ? 0 : detail::phase_of(g, node)};
        PolicyStep step = act(s, sol, g, inst.env.mdp, inst.env.registry);
        EXPECT_EQ(step.trigger_fired && !step.switches.empty(), static_cast<bool>(run.trigger[t]));
        EXPECT_EQ(step.action, run.log.actions[t]);
      }
    }
  }
}

TEST_P(PolicyProperty, NearOptimal) {
  std::mt19937_64 rng(GetParam());
  std::size_t checked = 0, failed = 0;
  for (int i = 0; i < 20; ++i) {
    auto inst = testing::grid_instance(rng(), 6);
    Dvg g = compile(inst.normal);
    Solution sol = solve(g, inst.env.mdp, inst.env.registry);
    Table truth = oracle::oracle_value(inst.normal, inst.env.mdp, inst.env.registry);
    const std::size_t h = horizon_for(inst.env.mdp, g);
    for (std::size_t x0 = 0; x0 < truth.size(); ++x0) {
      if (truth[x0] < 0.05) continue;
      ++checked;
      double rho = score_rollout(x0, sol, g, inst.env.mdp, inst.env.registry, inst.spec, h).robustness;
      if (rho < 0.0) {
        ++failed;
        ADD_FAILURE() << inst.text << " seed " << inst.seed << " x0=" << x0 << " rho=" << rho;
      }
    }
  }
  EXPECT_GT(checked, 0u);
  EXPECT_EQ(failed, 0u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, PolicyProperty, ::testing::Values(1u, 2u, 3u));

TEST(RolloutCsv, Columns) {
  PredicateRegistry reg(3);
  reg.add("r", {-0.5, -0.5, 0.5});
  Grid env = build_grid(GridSpec{1, 3, {}, {{"r", Rect{0, 2, 0, 2}}}, 0.25});
  auto s = solve_text("F r", env.mdp, env.registry);
  auto run = policy_rollout(0, s.sol, s.g, env.mdp, env.registry, 10);
  std::string csv = rollout_csv(run, env.mdp);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,state,row,col,active,action,trigger");
  EXPECT_NE(csv.find("done"), std::string::npos);
}

}  // namespace
}  // namespace tlvc
