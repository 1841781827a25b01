#include <gtest/gtest.h>

#include <random>

#include "support/instances.hpp"
#include "tlvc/logic.hpp"
#include "tlvc/parser.hpp"

namespace tlvc {
namespace {

using testing::random_predicate;
using testing::random_registry;
using testing::random_trace;

// One state per time step so atom values can be listed directly.
PredicateRegistry per_step(std::vector<std::pair<std::string, std::vector<double>>> atoms,
                           double bound = 10.0) {
  std::size_t n = atoms.front().second.size();
  PredicateRegistry reg(n, bound);
  for (auto& [name, values] : atoms) reg.add(name, values);
  return reg;
}

std::size_t temporal_depth(const Predicate& p) {
  std::size_t d = 0;
  for (const auto& c : p->children) d = std::max(d, temporal_depth(c));
  return d + (is_temporal_op(p->op) ? 1 : 0);
}

TEST(Robustness, FinallyOnFiniteTrace) {
  auto reg = per_step({{"a", {-1, 2, 0}}});
  EXPECT_DOUBLE_EQ(robustness(parse("F a"), Trace::finite({0, 1, 2}), 0, reg), 2.0);
}

TEST(Robustness, GloballyOnLasso) {
  auto reg = per_step({{"a", {5, 3, 4}}});
  EXPECT_DOUBLE_EQ(robustness(parse("G a"), Trace::lasso({0}, {1, 2}), 0, reg), 3.0);
}

TEST(Robustness, UntilOnFiniteTrace) {
  auto reg = per_step({{"a", {1, 1, -2}}, {"b", {-1, 3, 9}}});
  EXPECT_DOUBLE_EQ(robustness(parse("a U b"), Trace::finite({0, 1, 2}), 0, reg), 1.0);
}

TEST(Robustness, UntilIncludesReachTime) {
  // a fails exactly when b peaks, so the inclusive min caps the score.
  auto reg = per_step({{"a", {1, -3}}, {"b", {-1, 5}}});
  EXPECT_DOUBLE_EQ(robustness(parse("a U b"), Trace::finite({0, 1}), 0, reg), -1.0);
}

TEST(Robustness, NextAtFiniteEndIsBottom) {
  auto reg = per_step({{"a", {1, 1}}});
  EXPECT_DOUBLE_EQ(robustness(parse("X a"), Trace::finite({0, 1}), 1, reg), -10.0);
  EXPECT_DOUBLE_EQ(robustness(parse("X a"), Trace::lasso({0}, {1}), 1, reg), 1.0);
}

TEST(Robustness, LassoTimesFoldOntoCycle) {
  auto reg = per_step({{"a", {0, 1, 2, 3}}});
  Trace tr = Trace::lasso({0}, {1, 2, 3});
  for (std::size_t t = 1; t < 20; ++t)
    EXPECT_DOUBLE_EQ(robustness(parse("a"), tr, t, reg), static_cast<double>(1 + (t - 1) % 3));
  EXPECT_DOUBLE_EQ(robustness(parse("F G a"), tr, 0, reg), 1.0);
  EXPECT_DOUBLE_EQ(robustness(parse("G F a"), tr, 0, reg), 3.0);
}

TEST(Robustness, ConstantsUseRegistryBound) {
  PredicateRegistry reg(1, 1.0);
  reg.add("a", {0.5});
  Trace tr = Trace::finite({0});
  EXPECT_DOUBLE_EQ(robustness(ltl::top(), tr, 0, reg), 1.0);
  EXPECT_DOUBLE_EQ(robustness(ltl::bot(), tr, 0, reg), -1.0);
}

TEST(Robustness, Errors) {
  auto reg = per_step({{"a", {1, 2}}});
  EXPECT_THROW(robustness(parse("F zz"), Trace::finite({0}), 0, reg), RegistryError);
  EXPECT_THROW(robustness(parse("a"), Trace::finite({0, 1}), 2, reg), DomainError);
  EXPECT_THROW(robustness(parse("a"), Trace::finite({5}), 0, reg), DomainError);
  EXPECT_THROW(Trace::lasso({0}, {}), DomainError);
  EXPECT_NO_THROW(robustness(parse("a"), Trace::lasso({0}, {1}), 1000, reg));
}

TEST(Satisfies, BoundaryIsInclusive) {
  auto reg = per_step({{"a", {0.0}}});
  Trace tr = Trace::finite({0});
  EXPECT_TRUE(satisfies(parse("a"), tr, 0, reg));
  EXPECT_TRUE(satisfies(ltl::top(), tr, 0, reg));
  EXPECT_FALSE(satisfies(ltl::neg(ltl::top()), tr, 0, reg));
}

TEST(Registry, ClipsAndRejects) {
  PredicateRegistry reg(2);
  reg.add("a", {3.0, -0.5});
  EXPECT_DOUBLE_EQ(reg.value("a", 0), 1.0);
  EXPECT_DOUBLE_EQ(reg.value("a", 1), -0.5);
  EXPECT_THROW(reg.add("a", {0, 0}), RegistryError);
  EXPECT_THROW(reg.add("b", {0}), RegistryError);
  EXPECT_THROW(reg.add("c", {0, std::nan("")}), RegistryError);
  EXPECT_THROW(reg.value("a", 2), DomainError);
  reg.add_fn("d", [](std::size_t x) { return x == 0 ? -2.0 : 0.25; });
  EXPECT_DOUBLE_EQ(reg.value("d", 0), -1.0);
  EXPECT_EQ(reg.names(), (std::vector<std::string>{"a", "d"}));
}

TEST(StructuralEq, Examples) {
  EXPECT_TRUE(structural_eq(parse("a & b"), parse("b & a")));
  EXPECT_FALSE(structural_eq(parse("a U b"), parse("b U a")));
  EXPECT_FALSE(structural_eq(parse("F a"), parse("true U a")));
  EXPECT_TRUE(structural_eq(parse("G(a | (b & c))"), parse("G((c & b) | a)")));
}

class RobustnessProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RobustnessProperty, AlgebraicIdentities) {
  std::mt19937_64 rng(GetParam());
  const std::size_t states = 5;
  auto reg = random_registry(rng, states, 2);
  for (int i = 0; i < 50; ++i) {
    Predicate p = random_predicate(rng, 3);
    Predicate q = random_predicate(rng, 3);
    Trace tr = random_trace(rng, states, rng() % 2 == 0);
    auto at = [&](const Predicate& f) { return robustness_positions(f, tr, reg); };
    EXPECT_EQ(at(ltl::neg(ltl::neg(p))), at(p));
    EXPECT_EQ(at(ltl::neg(ltl::conj({p, q}))), at(ltl::disj({ltl::neg(p), ltl::neg(q)})));
    EXPECT_EQ(at(ltl::finally(p)), at(ltl::until(ltl::top(), p)));
    EXPECT_EQ(at(ltl::globally(p)), at(ltl::neg(ltl::finally(ltl::neg(p)))));
  }
}

// G(a U b) only drops constraints as t advances, and is constant on the cycle.
TEST_P(RobustnessProperty, LassoMonotoneAndStationaryOnCycle) {
  std::mt19937_64 rng(GetParam());
  const std::size_t states = 5;
  auto reg = random_registry(rng, states, 2);
  Predicate p = parse("G(a U b)");
  for (int i = 0; i < 50; ++i) {
    Trace tr = random_trace(rng, states, true);
    const double on_cycle = robustness(p, tr, tr.prefix.size(), reg);
    for (std::size_t t = 1; t < 12; ++t) {
      EXPECT_GE(robustness(p, tr, t, reg), robustness(p, tr, t - 1, reg));
      if (t >= tr.prefix.size()) {
        EXPECT_EQ(robustness(p, tr, t, reg), on_cycle);
      }
    }
  }
}

// Temporal depth 1: the finite unrolling prefix + k cycles already attains
// every extremum of the lasso at t = 0.
TEST_P(RobustnessProperty, DepthOneAgreesWithFiniteUnrolling) {
  std::mt19937_64 rng(GetParam());
  const std::size_t states = 5;
  auto reg = random_registry(rng, states, 2);
  int checked = 0;
  while (checked < 50) {
    Predicate p = random_predicate(rng, 3);
    if (temporal_depth(p) > 1) continue;
    ++checked;
    Trace tr = random_trace(rng, states, true);
    double lasso = robustness(p, tr, 0, reg);
    for (std::size_t k = 2; k <= 4; ++k) {
      std::vector<std::size_t> flat = tr.prefix;
      for (std::size_t r = 0; r < k; ++r) flat.insert(flat.end(), tr.cycle.begin(), tr.cycle.end());
      EXPECT_EQ(robustness(p, Trace::finite(flat), 0, reg), lasso) << print(p);
    }
  }
}

// Depth 2: truncation breaks agreement (G F a sees only the tail), so we check
// that rerolling the lasso as (prefix + cycle^k, cycle) leaves every score unchanged.
TEST_P(RobustnessProperty, DepthTwoInvariantUnderReroll) {
  std::mt19937_64 rng(GetParam());
  const std::size_t states = 5;
  auto reg = random_registry(rng, states, 2);
  int checked = 0;
  while (checked < 50) {
    Predicate p = random_predicate(rng, 4);
    if (temporal_depth(p) > 2) continue;
    ++checked;
    Trace tr = random_trace(rng, states, true);
    for (std::size_t k = 1; k <= 3; ++k) {
      std::vector<std::size_t> prefix = tr.prefix;
      for (std::size_t r = 0; r < k; ++r) prefix.insert(prefix.end(), tr.cycle.begin(), tr.cycle.end());
      Trace rerolled = Trace::lasso(prefix, tr.cycle);
      for (std::size_t t = 0; t < tr.positions() + 2; ++t)
        EXPECT_EQ(robustness(p, rerolled, t, reg), robustness(p, tr, t, reg)) << print(p);
    }
  }
}

TEST(RobustnessFiniteUnrolling, DepthTwoCounterexample) {
  auto reg = per_step({{"a", {-1, 1}}});
  Trace tr = Trace::lasso({}, {0, 1});
  EXPECT_DOUBLE_EQ(robustness(parse("G F a"), tr, 0, reg), 1.0);
  EXPECT_DOUBLE_EQ(robustness(parse("G F a"), Trace::finite({0, 1, 0, 1, 0}), 0, reg), -1.0);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RobustnessProperty, ::testing::Values(1u, 2u, 3u, 4u, 5u));

TEST(Evaluator, GenericDomain) {
  // Boolean lattice through the same evaluator template.
  struct BoolDomain {
    using Value = bool;
    Value top() const { return true; }
    Value bottom() const { return false; }
    static Value neg(Value v) { return !v; }
    static Value meet(Value a, Value b) { return a && b; }
    static Value join(Value a, Value b) { return a || b; }
  };
  std::vector<bool> a{false, true, false};
  auto ev = make_evaluator(3, std::optional<std::size_t>(1), BoolDomain{},
                           [&](const std::string&, std::size_t i) -> bool { return a[i]; });
  auto gf = ev.eval(parse("G F a"));
  EXPECT_TRUE(gf[0]);
  auto g = ev.eval(parse("G a"));
  EXPECT_FALSE(g[1]);
  EXPECT_THROW(make_evaluator(0, std::nullopt, BoolDomain{}, [](const std::string&, std::size_t) { return true; }),
               DomainError);
}

}  // namespace
}  // namespace tlvc
