#include <gtest/gtest.h>

#include <random>

#include "support/instances.hpp"
#include "tlvc/mdp.hpp"

namespace tlvc {
namespace {

TEST(BuildGrid, SingleCell) {
  Grid g = build_grid(GridSpec{1, 1, {}, {}, 0.25});
  EXPECT_EQ(g.mdp.state_count(), 1u);
  EXPECT_EQ(g.mdp.action_count(), kGridActions);
  for (std::size_t a = 0; a < kGridActions; ++a) EXPECT_EQ(g.mdp.successor(0, a), 0u);
}

TEST(BuildGrid, RegionSigns) {
  GridSpec spec{2, 2, {}, {{"r", Rect{0, 0, 0, 0}}}, 0.25};
  Grid g = build_grid(spec);
  std::size_t inside = *g.mdp.state_at({0, 0});
  std::size_t far = *g.mdp.state_at({1, 1});
  EXPECT_DOUBLE_EQ(g.registry.value("r", inside), 0.5 * 0.25);
  EXPECT_LT(g.registry.value("r", far), 0.0);
}

TEST(BuildGrid, CenterWall) {
  GridSpec spec{3, 3, {{1, 1}}, {}, 0.25};
  Grid g = build_grid(spec);
  EXPECT_EQ(g.mdp.state_count(), 8u);
  EXPECT_FALSE(g.mdp.state_at({1, 1}).has_value());
  std::size_t top = *g.mdp.state_at({0, 1});
  EXPECT_EQ(g.mdp.successor(top, kDown), top);
  EXPECT_EQ(g.mdp.successor(top, kUp), top);
  EXPECT_EQ(g.mdp.successor(top, kLeft), *g.mdp.state_at({0, 0}));
}

TEST(BuildGrid, Errors) {
  EXPECT_THROW(build_grid(GridSpec{1, 1, {{0, 0}}, {}, 0.25}), Error);
  EXPECT_THROW(build_grid(GridSpec{2, 2, {}, {{"r", Rect{0, 0, 2, 2}}}, 0.25}), Error);
  EXPECT_THROW(build_grid(GridSpec{2, 2, {}, {{"r", Rect{0, 0, 0, 0}}, {"r", Rect{1, 1, 1, 1}}}, 0.25}), Error);
  EXPECT_THROW(build_grid(GridSpec{0, 2, {}, {}, 0.25}), Error);
}

TEST(Mdp, RejectsBadTables) {
  EXPECT_THROW(Mdp(2, 1, {0}), DomainError);
  EXPECT_THROW(Mdp(2, 1, {0, 2}), DomainError);
  EXPECT_THROW(Mdp(0, 1, {}), DomainError);
}

TEST(Mdp, BestSuccessorTiesPickLowestAction) {
  Mdp mdp(3, 3, {1, 2, 1, 0, 0, 0, 0, 0, 0});
  std::vector<double> v{0.0, 0.5, 0.5};
  EXPECT_DOUBLE_EQ(mdp.best_successor(v, 0), 0.5);
  EXPECT_EQ(mdp.argmax_successor(v, 0), 0u);
}

class GridProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GridProperty, AtomSignMatchesMembership) {
  std::mt19937_64 rng(GetParam());
  for (int i = 0; i < 30; ++i) {
    GridSpec spec = testing::random_grid(rng);
    Grid g = build_grid(spec);
    for (std::size_t x = 0; x < g.mdp.state_count(); ++x) {
      for (const auto& [name, rect] : spec.regions) {
        double v = g.registry.value(name, x);
        EXPECT_NE(v, 0.0);
        EXPECT_EQ(v > 0.0, rect.contains(g.mdp.cell(x)));
        EXPECT_LE(std::abs(v), 1.0);
      }
      for (std::size_t a = 0; a < kGridActions; ++a) {
        std::size_t y = g.mdp.successor(x, a);
        Cell c = g.mdp.cell(x), d = g.mdp.cell(y);
        EXPECT_LE(std::abs(c.row - d.row) + std::abs(c.col - d.col), 1);
      }
      EXPECT_EQ(g.mdp.successor(x, kStay), x);
    }
  }
}

TEST_P(GridProperty, ConfigRoundTrip) {
  std::mt19937_64 rng(GetParam());
  for (int i = 0; i < 20; ++i) {
    GridSpec spec = testing::random_grid(rng);
    GridSpec back = parse_grid_config(to_config(spec));
    EXPECT_EQ(back.rows, spec.rows);
    EXPECT_EQ(back.cols, spec.cols);
    EXPECT_EQ(back.walls, spec.walls);
    ASSERT_EQ(back.regions.size(), spec.regions.size());
    Grid a = build_grid(spec), b = build_grid(back);
    EXPECT_EQ(a.mdp.successor_table(), b.mdp.successor_table());
    for (const auto& [name, rect] : spec.regions) EXPECT_EQ(a.registry.table(name), b.registry.table(name));
  }
}

TEST_P(GridProperty, LassoReproducesRawSequence) {
  std::mt19937_64 rng(GetParam());
  for (int i = 0; i < 30; ++i) {
    std::size_t n = testing::pick(rng, 1, 8);
    Mdp mdp = testing::random_mdp(rng, n, 3);
    std::vector<std::size_t> choice(n * 2);
    for (auto& a : choice) a = testing::pick(rng, 0, 2);
    ActionChooser policy = [&](std::size_t x, std::uint64_t mem) {
      return std::make_pair(choice[x * 2 + mem], static_cast<std::uint64_t>(1 - mem));
    };
    std::size_t x0 = testing::pick(rng, 0, n - 1);
    Trace tr = rollout(mdp, policy, x0, 100);
    ASSERT_TRUE(tr.is_lasso());
    std::size_t x = x0;
    std::uint64_t mem = 0;
    for (std::size_t t = 0; t < tr.prefix.size() + 3 * tr.cycle.size(); ++t) {
      EXPECT_EQ(tr.state_at(t), x);
      auto [a, next] = policy(x, mem);
      x = mdp.successor(x, a);
      mem = next;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GridProperty, ::testing::Values(1u, 2u, 3u));

TEST(Rollout, StayPolicyIsSelfLoop) {
  Grid g = build_grid(GridSpec{2, 2, {}, {}, 0.25});
  ActionChooser stay = [](std::size_t, std::uint64_t) { return std::make_pair(std::size_t{kStay}, std::uint64_t{0}); };
  Trace tr = rollout(g.mdp, stay, 3, 10);
  EXPECT_EQ(tr, Trace::lasso({}, {3}));
}

TEST(Rollout, PeriodTwoCycle) {
  Mdp mdp(3, 1, {1, 2, 1});
  ActionChooser only = [](std::size_t, std::uint64_t) { return std::make_pair(std::size_t{0}, std::uint64_t{0}); };
  EXPECT_EQ(rollout(mdp, only, 0, 10), Trace::lasso({0}, {1, 2}));
}

TEST(Rollout, FiniteWhenNoRepeat) {
  std::vector<std::size_t> succ(20);
  for (std::size_t x = 0; x < 20; ++x) succ[x] = std::min<std::size_t>(x + 1, 19);
  Mdp path(20, 1, succ);
  ActionChooser only = [](std::size_t, std::uint64_t) { return std::make_pair(std::size_t{0}, std::uint64_t{0}); };
  Trace tr = rollout(path, only, 0, 10);
  EXPECT_FALSE(tr.is_lasso());
  EXPECT_EQ(tr.positions(), 11u);
  EXPECT_THROW(rollout(path, only, 0, 0), DomainError);
  EXPECT_THROW(rollout(path, only, 25, 3), DomainError);
}

TEST(GridConfig, ParsesCommentsAndRejectsBadLines) {
  GridSpec g = parse_grid_config("# rooms\nrows = 3\ncols = 4 # wide\nwalls = 1 1; 1 2\nregion.goal = 0 3 0 3\n");
  EXPECT_EQ(g.rows, 3);
  EXPECT_EQ(g.cols, 4);
  EXPECT_EQ(g.walls.size(), 2u);
  ASSERT_EQ(g.regions.size(), 1u);
  EXPECT_EQ(g.regions[0].first, "goal");
  EXPECT_THROW(parse_grid_config("rows = 3\n"), ConfigError);
  EXPECT_THROW(parse_grid_config("rows = 3\ncols = 3\ncolour = red\n"), ConfigError);
  EXPECT_THROW(parse_grid_config("rows = 3\ncols = 3\nregion.1x = 0 0 0 0\n"), ConfigError);
  EXPECT_THROW(parse_grid_config("rows = 3\ncols = x\n"), ConfigError);
}

}  // namespace
}  // namespace tlvc
