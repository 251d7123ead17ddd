#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "grid_oracle.hpp"
#include "linkinfer/error.hpp"
#include "linkinfer/hlmrf.hpp"
#include "random_problems.hpp"

namespace {

using namespace linkinfer;
using namespace linkinfer::hlmrf;
using linkinfer::testing::grid_minimum;
using linkinfer::testing::RandomProblems;

double max_violation(const HlMrfProblem& p, const std::vector<double>& y) {
  double worst = 0.0;
  for (const auto& c : p.constraints()) {
    double lhs = 0.0;
    for (const auto& t : c.coeffs) lhs += t.coeff * y[t.var];
    worst = std::max(worst, c.kind == ConstraintKind::equality ? std::abs(lhs - c.rhs) : lhs - c.rhs);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Lukasiewicz operators

TEST(Lukasiewicz, ExamplesFromTheFormulas) {
  EXPECT_DOUBLE_EQ(luk_and(1.0, 1.0), 1.0);
  EXPECT_NEAR(luk_and(0.3, 0.9), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(luk_or(0.3, 0.9), 1.0);
  EXPECT_NEAR(luk_neg(luk_neg(0.42)), 0.42, 1e-15);
  EXPECT_DOUBLE_EQ(luk_and(0.2, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(luk_or(0.2, 0.3), 0.5);
}

TEST(Lukasiewicz, RejectsInputsOutsideTheUnitInterval) {
  EXPECT_THROW(luk_and(-0.1, 0.5), InvalidInput);
  EXPECT_THROW(luk_or(0.5, 1.5), InvalidInput);
  EXPECT_THROW(luk_neg(2.0), InvalidInput);
  EXPECT_THROW(luk_and(std::nan(""), 0.5), InvalidInput);
}

TEST(Lukasiewicz, AlgebraicLawsOnRandomPairs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    EXPECT_EQ(luk_and(a, b), luk_and(b, a));
    EXPECT_EQ(luk_or(a, b), luk_or(b, a));
    EXPECT_NEAR(luk_and(a, 1.0), a, 1e-12);
    EXPECT_EQ(luk_or(a, 0.0), a);
    if (b <= c) {
      EXPECT_LE(luk_and(a, b), luk_and(a, c));
      EXPECT_LE(luk_or(a, b), luk_or(a, c));
    }
    // De Morgan under the Lukasiewicz negation.
    EXPECT_NEAR(luk_neg(luk_and(a, b)), luk_or(luk_neg(a), luk_neg(b)), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Terms, constraints and grounding

TEST(HingeTerm, PenaltyOfLinearAndSquaredHinges) {
  const HingeTerm lin{2.0, {{0, 1.0}, {1, -1.0}}, 0.1, 1};
  const std::vector<double> y{0.7, 0.3};
  EXPECT_NEAR(lin.linear_value(y), 0.5, 1e-15);
  EXPECT_NEAR(lin.penalty(y), 1.0, 1e-15);
  const HingeTerm sq{2.0, {{0, 1.0}}, -0.2, 2};
  EXPECT_NEAR(sq.penalty(y), 2.0 * 0.25, 1e-15);
  const HingeTerm inactive{5.0, {{0, -1.0}}, 0.2, 1};
  EXPECT_EQ(inactive.penalty(y), 0.0);
}

TEST(GroundRule, DistanceToSatisfactionOfAnImplication) {
  HlMrfProblem p(2);
  p.set_evidence(0, 0.8);
  const VarIndex body[] = {0};
  const VarIndex head[] = {1};
  const auto term = ground_rule(3.0, body, head);
  EXPECT_EQ(term.exponent, 1);
  EXPECT_NEAR(term.linear_value(std::vector<double>{0.8, 0.5}), 0.3, 1e-15);
  EXPECT_NEAR(term.penalty(std::vector<double>{0.8, 0.5}), 0.9, 1e-15);
  EXPECT_EQ(term.penalty(std::vector<double>{0.8, 1.0}), 0.0);
}

TEST(GroundRule, ConjunctiveBodyFullyViolated) {
  const VarIndex body[] = {0, 1};
  const VarIndex head[] = {2};
  const auto term = ground_rule(1.0, body, head);
  EXPECT_NEAR(term.linear_value(std::vector<double>{1.0, 1.0, 0.0}), 1.0, 1e-15);
  EXPECT_EQ(term.penalty(std::vector<double>{1.0, 0.0, 0.0}), 0.0);
}

TEST(GroundRule, MergesRepeatedVariablesAndValidates) {
  const VarIndex body[] = {0, 0};
  const VarIndex head[] = {1};
  const auto term = ground_rule(1.0, body, head);
  ASSERT_EQ(term.coeffs.size(), 2u);
  EXPECT_EQ(term.coeffs[0].coeff, 2.0);
  EXPECT_THROW(ground_rule(-1.0, body, head), InvalidInput);
  EXPECT_THROW(ground_rule(1.0, {}, {}), InvalidInput);
}

TEST(Problem, ValidatesTermsConstraintsAndEvidence) {
  HlMrfProblem p(2);
  EXPECT_THROW(p.add_term({-1.0, {{0, 1.0}}, 0.0, 1}), InvalidInput);
  EXPECT_THROW(p.add_term({1.0, {{0, 1.0}}, 0.0, 3}), InvalidInput);
  EXPECT_THROW(p.add_term({1.0, {{5, 1.0}}, 0.0, 1}), InvalidInput);
  EXPECT_THROW(p.add_constraint({{}, 1.0, ConstraintKind::leq}), InvalidInput);
  EXPECT_THROW(p.set_evidence(0, 1.5), InvalidInput);
  EXPECT_THROW(p.set_evidence(9, 0.5), std::exception);
  EXPECT_EQ(p.add_variable(), 2u);
  EXPECT_TRUE(p.is_free(2));
}

TEST(Objective, InactiveSquaredAndPerTermSum) {
  HlMrfProblem p(2);
  p.add_term({1.0, {{0, -1.0}}, 0.0, 1});
  EXPECT_EQ(objective(p, std::vector<double>{0.5, 0.5}), 0.0);
  HlMrfProblem q(1);
  q.add_term({2.0, {{0, 1.0}}, 0.0, 2});
  EXPECT_NEAR(objective(q, std::vector<double>{0.5}), 0.5, 1e-15);
  EXPECT_THROW(objective(q, std::vector<double>{0.5, 0.5}), DimensionMismatch);

  RandomProblems gen(11);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto r = gen.next();
    std::vector<double> y(r.num_vars());
    for (auto& v : y) v = u(rng);
    double expected = 0.0;
    for (const auto& t : r.terms()) {
      double l = t.offset;
      for (const auto& c : t.coeffs) l += c.coeff * y[c.var];
      l = std::max(l, 0.0);
      expected += t.weight * (t.exponent == 2 ? l * l : l);
    }
    EXPECT_NEAR(objective(r, y), expected, 1e-12);
  }
}

TEST(Objective, MidpointConvexity) {
  RandomProblems gen(12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const auto p = gen.next();
    std::vector<double> a(p.num_vars()), b(p.num_vars()), m(p.num_vars());
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] = u(rng);
      b[k] = u(rng);
      m[k] = 0.5 * (a[k] + b[k]);
    }
    EXPECT_LE(objective(p, m), 0.5 * objective(p, a) + 0.5 * objective(p, b) + 1e-9);
  }
}

// ---------------------------------------------------------------------------
// Solver

TEST(Solve, SingleHingeReportsMinimumNormPoint) {
  HlMrfProblem p(1);
  p.add_term({1.0, {{0, -1.0}}, 0.7, 1});
  const auto a = solve(p);
  EXPECT_NEAR(a.objective, 0.0, 1e-4);
  EXPECT_NEAR(a.values[0], 0.7, 1e-4);
}

TEST(Solve, SymmetricCompetitionUnderSumConstraint) {
  HlMrfProblem p(2);
  p.add_term({1.0, {{0, -1.0}}, 0.9, 1});
  p.add_term({1.0, {{1, -1.0}}, 0.9, 1});
  p.add_constraint({{{0, 1.0}, {1, 1.0}}, 1.0, ConstraintKind::leq});
  const auto a = solve(p);
  EXPECT_NEAR(a.values[0], 0.5, 1e-4);
  EXPECT_NEAR(a.values[1], 0.5, 1e-4);
  EXPECT_NEAR(a.objective, 0.8, 1e-4);
  const auto g = grid_minimum(p);
  EXPECT_NEAR(g.value, 0.8, 1e-9);
}

TEST(Solve, FlatOptimalFaceResolvesToItsMinimumNormPoint) {
  // Every point with y0 + y1 >= 1 and y0 <= 0.3 is optimal; the smallest
  // one is (0.3, 0.7).
  HlMrfProblem p(2);
  p.add_term({1.0, {{0, -1.0}, {1, -1.0}}, 1.0, 1});
  p.add_constraint({{{0, 1.0}}, 0.3, ConstraintKind::leq});
  const auto a = solve(p);
  EXPECT_NEAR(a.values[0], 0.3, 1e-4);
  EXPECT_NEAR(a.values[1], 0.7, 1e-4);
}

TEST(Solve, NoActiveTermsGivesProjectionOfOrigin) {
  HlMrfProblem p(3);
  p.add_constraint({{{0, 1.0}, {1, 1.0}, {2, 1.0}}, 1.0, ConstraintKind::equality});
  const auto a = solve(p);
  for (double v : a.values) EXPECT_NEAR(v, 1.0 / 3.0, 1e-6);
  EXPECT_EQ(a.objective, 0.0);
}

TEST(Solve, EvidenceIsCopiedAndSquaredHingeTracksIt) {
  HlMrfProblem p(2);
  p.set_evidence(0, 0.8);
  p.add_term({2.0, {{0, 1.0}, {1, -1.0}}, 0.0, 2});
  const auto a = solve(p);
  EXPECT_EQ(a.values[0], 0.8);
  EXPECT_NEAR(a.values[1], 0.8, 1e-4);
}

TEST(Solve, AllEvidenceProblemIsEvaluatedAsIs) {
  HlMrfProblem p(2);
  p.set_evidence(0, 0.6);
  p.set_evidence(1, 0.1);
  p.add_term({1.5, {{0, 1.0}, {1, -1.0}}, 0.0, 1});
  const auto a = solve(p);
  EXPECT_NEAR(a.objective, 0.75, 1e-12);
}

TEST(Solve, ReportsInfeasibleConstraints) {
  HlMrfProblem p(2);
  p.add_constraint({{{0, 1.0}, {1, 1.0}}, 2.5, ConstraintKind::equality});
  p.add_term({1.0, {{0, 1.0}}, 0.0, 1});
  EXPECT_THROW(solve(p), InfeasibleProblem);
}

TEST(Solve, RejectsBadOptions) {
  HlMrfProblem p(1);
  EXPECT_THROW(solve(p, 0.0, 100), InvalidInput);
  EXPECT_THROW(solve(p, 1e-4, 0), InvalidInput);
}

TEST(Solve, IterationCapRaisesNotConverged) {
  HlMrfProblem p(3);
  p.add_term({1.0, {{0, -1.0}, {1, 1.0}}, 0.5, 1});
  p.add_term({1.0, {{1, -1.0}, {2, 1.0}}, 0.3, 1});
  p.add_term({1.0, {{2, -1.0}}, 0.9, 1});
  p.add_constraint({{{0, 1.0}, {1, 1.0}, {2, 1.0}}, 1.2, ConstraintKind::leq});
  try {
    solve(p, 1e-4, 1);
    FAIL() << "expected NotConverged";
  } catch (const NotConverged& e) {
    EXPECT_LE(e.iterations(), 1);
    EXPECT_GT(std::max(e.primal_residual(), e.dual_residual()), 0.0);
  }
}

TEST(Solve, MatchesGridOracleOnRandomInstances) {
  RandomProblems gen(2024);
  for (int i = 0; i < 120; ++i) {
    const auto p = gen.next();
    const auto g = grid_minimum(p);
    ASSERT_TRUE(g.feasible);
    const auto a = solve(p);
    EXPECT_NEAR(a.objective, g.value, 2e-2) << "instance " << i;
    // The grid can only do worse than the continuous optimum.
    EXPECT_LE(a.objective, g.value + 1e-4) << "instance " << i;
    EXPECT_LE(max_violation(p, a.values), 1e-6);
    for (double v : a.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Solve, WeightScalingScalesObjectiveAndKeepsArgmin) {
  RandomProblems gen(99);
  for (int i = 0; i < 100; ++i) {
    const auto p = gen.next();
    const auto base = solve(p);
    for (double c : {0.5, 3.0}) {
      HlMrfProblem q(p.num_vars());
      for (VarIndex v = 0; v < p.num_vars(); ++v)
        if (auto e = p.evidence(v)) q.set_evidence(v, *e);
      for (auto t : p.terms()) {
        t.weight *= c;
        q.add_term(std::move(t));
      }
      for (const auto& k : p.constraints()) q.add_constraint(k);
      const auto scaled = solve(q);
      EXPECT_NEAR(scaled.objective, c * base.objective, 2e-2);
      for (std::size_t k = 0; k < base.values.size(); ++k) EXPECT_NEAR(scaled.values[k], base.values[k], 2e-4);
    }
  }
}

TEST(Solve, IsDeterministic) {
  RandomProblems gen(5);
  for (int i = 0; i < 20; ++i) {
    const auto p = gen.next();
    const auto a = solve(p), b = solve(p);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.objective, b.objective);
  }
}

TEST(Projection, ProjectsOntoBoxAndConstraints) {
  const std::vector<LinearConstraint> cons{{{{0, 1.0}, {1, 1.0}}, 1.0, ConstraintKind::leq}};
  const auto r = project_feasible(std::vector<double>{0.9, 0.9}, cons);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.point[0], 0.5, 1e-8);
  EXPECT_NEAR(r.point[1], 0.5, 1e-8);
  const auto box = project_feasible(std::vector<double>{-1.0, 2.0}, {});
  EXPECT_EQ(box.point, (std::vector<double>{0.0, 1.0}));
}

// ---------------------------------------------------------------------------
// Debug dump

TEST(Dump, WritesTheLineFormat) {
  HlMrfProblem p(2);
  p.set_evidence(0, 0.5);
  p.add_term({1.5, {{0, 1.0}, {1, -1.0}}, 0.0, 1});
  p.add_constraint({{{1, 1.0}}, 1.0, ConstraintKind::leq});
  std::ostringstream out;
  write_dump(out, p);
  const std::string text = out.str();
  EXPECT_NE(text.find("VARS 2\n"), std::string::npos);
  EXPECT_NE(text.find("VAR 0 = 0.5"), std::string::npos);
  EXPECT_NE(text.find("VAR 1\n"), std::string::npos);
  EXPECT_NE(text.find("TERM 1.5 1 0 0:1 1:-1\n"), std::string::npos);
  EXPECT_NE(text.find("CON leq 1 1:1\n"), std::string::npos);
}

TEST(Dump, RoundTripsRandomProblems) {
  RandomProblems gen(77);
  for (int i = 0; i < 50; ++i) {
    const auto p = gen.next();
    std::stringstream s;
    write_dump(s, p);
    const auto q = read_dump(s);
    ASSERT_EQ(q.num_vars(), p.num_vars());
    for (VarIndex v = 0; v < p.num_vars(); ++v) EXPECT_EQ(q.evidence(v), p.evidence(v));
    ASSERT_EQ(q.terms().size(), p.terms().size());
    for (std::size_t j = 0; j < p.terms().size(); ++j) {
      EXPECT_EQ(q.terms()[j].weight, p.terms()[j].weight);
      EXPECT_EQ(q.terms()[j].offset, p.terms()[j].offset);
      EXPECT_EQ(q.terms()[j].exponent, p.terms()[j].exponent);
      EXPECT_EQ(q.terms()[j].coeffs, p.terms()[j].coeffs);
    }
    ASSERT_EQ(q.constraints().size(), p.constraints().size());
    for (std::size_t k = 0; k < p.constraints().size(); ++k) {
      EXPECT_EQ(q.constraints()[k].rhs, p.constraints()[k].rhs);
      EXPECT_EQ(q.constraints()[k].kind, p.constraints()[k].kind);
      EXPECT_EQ(q.constraints()[k].coeffs, p.constraints()[k].coeffs);
    }
  }
}

TEST(Dump, RejectsMalformedInput) {
  std::istringstream bad1("VARS 2\nTERM x 1 0 0:1\n");
  EXPECT_THROW(read_dump(bad1), InvalidInput);
  std::istringstream bad2("VARS 1\nCON maybe 1 0:1\n");
  EXPECT_THROW(read_dump(bad2), InvalidInput);
  std::istringstream bad3("TERM 1 1 0 0:1\n");
  EXPECT_THROW(read_dump(bad3), InvalidInput);
}

}  // namespace
