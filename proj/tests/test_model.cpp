#include <gtest/gtest.h>

#include <set>

#include "nsteams/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace nst;

TEST(Model, RandomOrderFixtureShape) {
  auto m = test::load("random_order.nst");
  EXPECT_EQ(m.n(), 3u);
  EXPECT_EQ(m.signal_count(), 32u);
  EXPECT_EQ(m.action_count(), 8u);
  EXPECT_EQ(m.support().size(), 32u);
  PolicySpace space(m);
  EXPECT_EQ(space.size(), 512u);
  EXPECT_EQ(m.info_field(2).atom_count(), 3u);
}

TEST(Model, ZeroPolicyCostsOneHalf) {
  auto m = test::load("random_order.nst");
  EXPECT_EQ(m.expected_cost(constant_policy(m, 0)), ratio(1, 2));
}

TEST(Model, ExpectedCostMatchesClosedFormOracleOnEveryPolicy) {
  auto m = test::load("random_order.nst");
  PolicySpace space(m);
  Rational sum = 0, best = 100, worst = 0;
  std::set<std::string> distinct;
  std::vector<std::uint64_t> argmin;
  for (std::uint64_t k = 0; k < space.size(); ++k) {
    Rational v = m.expected_cost(space.decode(k));
    ASSERT_EQ(v, oracle::RandomOrder::value(static_cast<unsigned>(k))) << "policy " << k;
    sum += v;
    distinct.insert(to_string(v));
    if (v < best) {
      best = v;
      argmin.clear();
    }
    if (v == best) argmin.push_back(k);
    if (v > worst) worst = v;
  }
  EXPECT_EQ(best, ratio(1, 2));
  EXPECT_EQ(argmin, (std::vector<std::uint64_t>{0, 1, 2, 3, 256, 257, 258, 259}));
  EXPECT_EQ(sum, Rational(1024));
  EXPECT_EQ(worst, ratio(7, 2));
  EXPECT_EQ(distinct.size(), 37u);
}

TEST(Model, ForwardSolveAgreesWithExhaustiveSearch) {
  auto m = test::load("random_order.nst");
  PolicySpace space(m);
  for (std::uint64_t k = 0; k < space.size(); ++k) {
    auto g = space.decode(k);
    for (std::size_t s = 0; s < m.signal_count(); ++s) {
      auto fwd = m.forward_solve(g, s);
      auto all = m.solve_closed_loop(g, s);
      ASSERT_TRUE(fwd.has_value());
      ASSERT_EQ(all.size(), 1u);
      EXPECT_EQ(*fwd, all.front());
    }
  }
}

TEST(Model, CopyPolicyHasTwoSolutions) {
  auto m = test::load("mutual.nst");
  auto g = dsl::parse_policy(test::read_file(test::model_path("mutual_copy.policy")), m);
  for (std::size_t s = 0; s < 2; ++s) {
    auto fps = m.solve_closed_loop(g, s);
    ASSERT_EQ(fps.size(), 2u);
    EXPECT_EQ(m.action_label(fps[0]), "0 0");
    EXPECT_EQ(m.action_label(fps[1]), "1 1");
  }
  try {
    m.expected_cost(g);
    FAIL() << "expected NotSolvable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSolvable);
  }
}

TEST(Model, PolicySpaceRoundTrips) {
  auto m = test::load("mutual.nst");
  PolicySpace space(m);
  EXPECT_EQ(space.size(), 256u);
  for (std::uint64_t k = 0; k < space.size(); ++k) EXPECT_EQ(space.encode(space.decode(k)), k);
  EXPECT_EQ(space.decode(0), constant_policy(m, 0));
  EXPECT_EQ(space.decode(255), constant_policy(m, 1));
}

TEST(Model, UnnormalizedPriorIsRejected) {
  auto spec = test::load_spec("mutual.nst");
  spec.prior.marginals[0] = {ratio(1, 2), ratio(1, 3)};
  try {
    Model m(spec);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    ASSERT_EQ(e.diagnostics().size(), 1u);
    EXPECT_EQ(e.diagnostics()[0].code, ErrorCode::NormalizationError);
  }
}

TEST(Model, MissingObservationRowIsNamed) {
  auto spec = test::load_spec("mutual.nst");
  spec.dms[1].obs.cells[3].reset();
  auto diags = Model::diagnose(spec);
  ASSERT_EQ(diags.size(), 1u);
  EXPECT_EQ(diags[0].code, ErrorCode::MissingEntry);
  EXPECT_NE(diags[0].message.find("(1 1)"), std::string::npos) << diags[0].message;
}

TEST(Model, EveryViolationGetsItsOwnDiagnostic) {
  auto spec = test::load_spec("mutual.nst");
  spec.dms[0].obs.cells[0].reset();
  spec.cost.cells[2].reset();
  spec.prior.marginals[0] = {Rational(1), Rational(1)};
  EXPECT_EQ(Model::diagnose(spec).size(), 3u);
}

TEST(Model, CostIsInvariantUnderMeasurementRelabeling) {
  auto spec = test::load_spec("random_order.nst");
  auto m = Model(spec);
  auto relabeled = Model(relabel_measurements(spec, 0, {2, 0, 1}));
  PolicySpace space(m);
  for (std::uint64_t k = 0; k < space.size(); k += 7) {
    auto g = space.decode(k);
    auto h = g;
    // New symbol j is old symbol perm[j].
    std::vector<int> perm{2, 0, 1};
    for (int j = 0; j < 3; ++j) h.table[0][j] = g.table[0][perm[j]];
    EXPECT_EQ(m.expected_cost(g), relabeled.expected_cost(h));
  }
}

TEST(Model, CostIsInvariantUnderDmRelabeling) {
  auto spec = test::load_spec("random_order.nst");
  auto m = Model(spec);
  std::vector<int> perm{2, 0, 1};
  auto relabeled = Model(relabel_dms(spec, perm));
  PolicySpace space(m);
  for (std::uint64_t k = 0; k < space.size(); k += 5) {
    auto g = space.decode(k);
    EXPECT_EQ(m.expected_cost(g), relabeled.expected_cost(relabel_policy(g, perm)));
  }
}

TEST(Model, OrderingTreeMatchesHandTable) {
  auto m = test::load("random_order.nst");
  ASSERT_TRUE(m.spec().ordering.has_value());
  for (std::size_t x = 0; x < m.outcome_count(); ++x) {
    auto seq = ordering_at(m, *m.spec().ordering, x);
    int ws0 = m.signal_digit(m.signal_of(x), 1);
    int u1 = m.action_digit(m.action_of(x), 0);
    std::vector<int> expected = ws0 == 1 ? std::vector<int>{1, 0, 2}
                                         : (u1 == 1 ? std::vector<int>{0, 2, 1} : std::vector<int>{0, 1, 2});
    EXPECT_EQ(seq, expected);
  }
}
