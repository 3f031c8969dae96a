#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "nsteams/generate.hpp"
#include "nsteams/optimize.hpp"
#include "nsteams/properties.hpp"
#include "nsteams/reduction.hpp"
#include "support.hpp"

using namespace nst;

namespace {

// One DM sees w0 in {0, 1} and pays (u - w0)^2.
IntrinsicModel squared_error() {
  IntrinsicModel m;
  m.signals = {Alphabet{{"0", "1"}}, Alphabet{{"-"}}, Alphabet{{"-"}}};
  m.prior.form = Prior::Form::Product;
  m.prior.marginals = {{ratio(1, 2), ratio(1, 2)}, {Rational(1)}, {Rational(1)}};
  DmSpec d;
  d.actions = Alphabet{{"0", "1"}};
  d.measurements = Alphabet{{"0", "1"}};
  d.obs.args = {0};
  d.obs.cells = {0, 1};
  m.dms.push_back(d);
  m.cost.args = {0, 3};
  m.cost.cells = {Rational(0), Rational(1), Rational(1), Rational(0)};
  return m;
}

}  // namespace

TEST(Optimize, WorkedExampleOptimumIsOneHalfAtZeroPolicy) {
  auto m = test::load("random_order.nst");
  auto r = enumerate_optimal(m);
  EXPECT_EQ(r.optimum, ratio(1, 2));
  EXPECT_EQ(r.evaluated, 512u);
  // Frozen from the closed-form brute force in test_model.
  EXPECT_EQ(r.argmin, (std::vector<std::uint64_t>{0, 1, 2, 3, 256, 257, 258, 259}));
  EXPECT_EQ(r.representative, constant_policy(m));
}

TEST(Optimize, ValueTableIsKeptOnRequest) {
  auto m = test::load("random_order.nst");
  OptimizeOptions opt;
  opt.keep_values = true;
  auto r = enumerate_optimal(m, opt);
  ASSERT_EQ(r.values.size(), 512u);
  PolicySpace space(m);
  for (std::uint64_t k = 0; k < 512; k += 31) EXPECT_EQ(r.values[k], m.expected_cost(space.decode(k)));
  for (auto k : r.argmin) EXPECT_EQ(r.values[k], r.optimum);
  EXPECT_EQ(*std::min_element(r.values.begin(), r.values.end()), r.optimum);
}

TEST(Optimize, ZeroCostMakesEveryPolicyOptimal) {
  auto spec = test::load_spec("random_order.nst");
  for (auto& c : spec.cost.cells) c = Rational(0);
  Model m(spec);
  auto r = enumerate_optimal(m);
  EXPECT_EQ(r.optimum, 0);
  EXPECT_EQ(r.argmin.size(), 512u);
}

TEST(Optimize, SquaredErrorIsSolvedByTheIdentity) {
  Model m(squared_error());
  auto r = enumerate_optimal(m);
  EXPECT_EQ(r.optimum, 0);
  ASSERT_EQ(r.argmin.size(), 1u);
  EXPECT_EQ(r.representative.table, (std::vector<std::vector<int>>{{0, 1}}));
}

TEST(Optimize, ResultDoesNotDependOnWorkerCount) {
  auto m = test::load("random_order.nst");
  OptimizeOptions one, four;
  four.jobs = 4;
  auto a = enumerate_optimal(m, one), b = enumerate_optimal(m, four);
  EXPECT_EQ(a.optimum, b.optimum);
  EXPECT_EQ(a.argmin, b.argmin);
}

TEST(Optimize, BudgetIsEnforced) {
  auto m = test::load("random_order.nst");
  OptimizeOptions opt;
  opt.budget = 100;
  try {
    enumerate_optimal(m, opt);
    FAIL() << "expected BudgetExceeded";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BudgetExceeded);
    EXPECT_NE(std::string(e.what()).find("512"), std::string::npos);
  }
}

TEST(Optimize, UnsolvableModelIsReported) {
  auto m = test::load("mutual.nst");
  try {
    enumerate_optimal(m);
    FAIL() << "expected NotSolvable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotSolvable);
  }
}

TEST(Optimize, OptimumIsInvariantUnderDmRelabeling) {
  auto spec = test::load_spec("random_order.nst");
  Model m(spec);
  const std::vector<int> perm{2, 0, 1};
  Model p(relabel_dms(spec, perm));
  auto a = enumerate_optimal(m), b = enumerate_optimal(p);
  EXPECT_EQ(a.optimum, b.optimum);
  PolicySpace sm(m), sp(p);
  std::set<std::uint64_t> mapped;
  for (auto k : a.argmin) mapped.insert(sp.encode(relabel_policy(sm.decode(k), perm)));
  EXPECT_EQ(mapped, std::set<std::uint64_t>(b.argmin.begin(), b.argmin.end()));
}

TEST(Optimize, StaticReductionHasTheSameArgmin) {
  auto m = test::load("random_order.nst");
  for (auto labels : {LabelMode::Union, LabelMode::Tagged}) {
    StaticOptions opt;
    opt.labels = labels;
    auto r = static_reduce(m, opt);
    auto st = enumerate_optimal(r);
    EXPECT_EQ(st.optimum, ratio(1, 2));
    auto cmp = compare_argmin(m, r);
    EXPECT_TRUE(cmp.applicable);
    EXPECT_TRUE(cmp.equal);
    EXPECT_EQ(cmp.difference_count, 0u);
    EXPECT_EQ(cmp.dynamic_argmin, cmp.static_argmin);
  }
}

TEST(Optimize, CorruptedStaticCostShowsUpInTheDiff) {
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  for (auto& [h, c] : r.cost) c = c / 2;
  auto cmp = compare_argmin(m, r);
  EXPECT_FALSE(cmp.equal);
  ASSERT_FALSE(cmp.differences.empty());
  EXPECT_NE(cmp.differences[0].dynamic, cmp.differences[0].reduced);
}

TEST(Optimize, PolicyParameterizedReductionIsComparedAtItsPolicyOnly) {
  auto m = test::load("random_order.nst");
  auto g = constant_policy(m);
  auto r = sm_reduce(m, g);
  auto cmp = compare_argmin(m, r);
  EXPECT_FALSE(cmp.applicable);
  EXPECT_TRUE(cmp.equal);
  EXPECT_EQ(cmp.static_optimum, ratio(1, 2));
  try {
    enumerate_optimal(r);
    FAIL() << "expected NotApplicable";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotApplicable);
  }
}

TEST(Optimize, MismatchedModelsAreRejected) {
  auto m = test::load("random_order.nst");
  auto other = test::load("nested_chain.nst");
  auto r = static_reduce(other);
  try {
    compare_argmin(m, r);
    FAIL() << "expected ModelMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModelMismatch);
  }
}

TEST(Optimize, ArgminSurvivesReductionOnGeneratedCausalModels) {
  std::size_t compared = 0;
  OptimizeOptions opt;
  opt.budget = 20000;
  for (auto& spec : generate_batch(2024, 120)) {
    Model m(spec);
    if (!check_c(m).verdict) continue;
    PolicySpace space(m);
    if (space.overflow() || space.size() > opt.budget) continue;
    auto cmp = compare_argmin(m, static_reduce(m), opt);
    EXPECT_TRUE(cmp.equal);
    ++compared;
  }
  EXPECT_GT(compared, 20u);
}
