#include <gtest/gtest.h>

#include <map>
#include <set>

#include "nsteams/dsl.hpp"
#include "nsteams/dsl_static.hpp"
#include "nsteams/generate.hpp"
#include "nsteams/properties.hpp"
#include "nsteams/reduction.hpp"
#include "support.hpp"

using namespace nst;

namespace {

// Conditional law of each stage label given the realized history, tallied
// directly from closed-loop solutions under one fixed policy.
std::map<History, std::vector<Rational>> kernels_under(const Model& m, const Ordering& psi, const ImaginaryModel& im,
                                                       const PolicyProfile& g) {
  std::map<History, std::vector<Rational>> rows;
  for (std::size_t s : m.support()) {
    std::size_t a = m.solution(g, s);
    std::size_t x = m.outcome(s, a);
    auto perm = ordering_at(m, psi, x);
    History h{m.signal_digit(s, 0), m.signal_digit(s, 1)};
    for (int dm : perm) {
      auto& row = rows[h];
      row.resize(im.stage_y.size());
      int lab = im.y_label[dm][m.eta(dm, x)];
      row[lab] += m.prior(s);
      h.push_back(lab);
      h.push_back(im.u_label[dm][m.action_digit(a, dm)]);
    }
  }
  for (auto& [h, row] : rows) {
    Rational total = 0;
    for (const auto& v : row) total += v;
    for (auto& v : row) v /= total;
  }
  return rows;
}

std::vector<Model> causal_batch(std::size_t want) {
  std::vector<Model> out;
  for (auto& spec : generate_batch(2024, 200)) {
    Model m(spec);
    if (check_c(m).verdict) out.emplace_back(std::move(spec));
    if (out.size() == want) break;
  }
  return out;
}

IntrinsicModel one_dm_guessing_a_bit() {
  IntrinsicModel m;
  m.signals = {Alphabet{{"0", "1"}}, Alphabet{{"-"}}, Alphabet{{"-"}}};
  m.prior.form = Prior::Form::Product;
  m.prior.marginals = {{ratio(1, 3), ratio(2, 3)}, {Rational(1)}, {Rational(1)}};
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

TEST(Reduction, WorkedExampleKernelRows) {
  auto m = test::load("random_order.nst");
  auto im = build_imaginary(m, declared_ordering(m));
  EXPECT_EQ(im.labels, StageLabels::Union);
  EXPECT_EQ(im.kernel.size(), 36u);
  const int y0 = *im.stage_y.index("0"), yhalf = *im.stage_y.index("1/2"), y1 = *im.stage_y.index("1");
  // At ws0 = 1, w0 = 1 the first DM to act reads 1 with certainty.
  EXPECT_EQ(im.kernel.at(History{1, 1})[y1], 1);
  // After stage 1 reads 1 and acts 1 there, the next label is 0 or 1/2
  // with equal weight.
  const int v1 = *im.stage_u.index("1");
  const auto& row = im.kernel.at(History{1, 1, y1, v1});
  EXPECT_EQ(row[y0] + row[yhalf], 1);
  EXPECT_EQ(row[y0], ratio(1, 2));
}

TEST(Reduction, KernelsDoNotDependOnThePolicy) {
  auto m = test::load("random_order.nst");
  const auto& psi = declared_ordering(m);
  auto im = build_imaginary(m, psi);
  PolicySpace space(m);
  std::size_t rows_seen = 0;
  for (std::uint64_t k = 0; k < space.size(); k += 7) {
    for (const auto& [h, row] : kernels_under(m, psi, im, space.decode(k))) {
      ASSERT_TRUE(im.kernel.count(h)) << "policy " << k;
      ASSERT_EQ(im.kernel.at(h), row) << "policy " << k;
      ++rows_seen;
    }
  }
  EXPECT_GT(rows_seen, 0u);
}

TEST(Reduction, KernelCertificateOnGeneratedCausalModels) {
  for (const auto& m : causal_batch(40)) {
    auto psi = causal_witness(m);
    auto im = build_imaginary(m, psi, {LabelMode::Auto, 0});
    auto cert = certify_kernels(m, psi, im, distinct_random_policies(m, 3, 11));
    EXPECT_TRUE(cert.ok) << cert.detail;
  }
}

TEST(Reduction, ValueConditionHoldsForEveryPolicyInEveryLabelMode) {
  auto m = test::load("random_order.nst");
  for (auto labels : {LabelMode::Union, LabelMode::Tagged}) {
    for (auto ref : {ReferenceKind::Uniform, ReferenceKind::Dyadic}) {
      StaticOptions opt;
      opt.labels = labels;
      opt.reference = ref;
      auto r = static_reduce(m, opt);
      auto cert = certify_values(m, r);
      EXPECT_TRUE(cert.ok);
      EXPECT_TRUE(cert.exhaustive);
      EXPECT_EQ(cert.policies, 512u);
    }
  }
}

TEST(Reduction, PerDmFormAgreesWithStagedEvaluation) {
  auto m = test::load("random_order.nst");
  PolicySpace space(m);
  for (auto labels : {LabelMode::Union, LabelMode::Tagged}) {
    StaticOptions opt;
    opt.labels = labels;
    auto r = static_reduce(m, opt);
    for (std::uint64_t k = 0; k < space.size(); ++k) {
      auto g = space.decode(k);
      ASSERT_EQ(static_value_identity(r, g), static_value(r, g)) << "policy " << k;
    }
  }
}

TEST(Reduction, ExplicitReferenceMustBeADistribution) {
  auto m = test::load("random_order.nst");
  StaticOptions opt;
  opt.reference = ReferenceKind::Explicit;
  opt.explicit_reference = {{ratio(1, 2), ratio(1, 2), Rational(0)}};
  EXPECT_THROW(static_reduce(m, opt), Error);
}

TEST(Reduction, ZeroPolicyValueIsOneHalfAfterReduction) {
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  EXPECT_EQ(static_value(r, constant_policy(m)), ratio(1, 2));
}

TEST(Reduction, ValueConditionOnGeneratedCausalModels) {
  auto batch = causal_batch(50);
  ASSERT_EQ(batch.size(), 50u);
  for (const auto& m : batch) {
    auto r = static_reduce(m);
    auto cert = certify_values(m, r, 1, 0, 1000, 5);
    EXPECT_FALSE(cert.exhaustive);
    EXPECT_EQ(cert.policies, 1000u);
    EXPECT_TRUE(cert.ok);
  }
}

TEST(Reduction, CorruptedCostBreaksTheValueCondition) {
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  for (auto& [h, c] : r.cost) {
    if (c != 0) {
      c += 1;
      break;
    }
  }
  auto cert = certify_values(m, r);
  EXPECT_FALSE(cert.ok);
  ASSERT_FALSE(cert.mismatches.empty());
  EXPECT_NE(cert.mismatches[0].dynamic, cert.mismatches[0].reduced);
}

TEST(Reduction, NonCausalModelIsRejectedByPolicyFreeReduction) {
  auto m = dsl::load_model(test::read_file(test::data_path("sm_not_ci.nst")));
  try {
    static_reduce(m);
    FAIL() << "expected NotCausal";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotCausal);
  }
}

TEST(Reduction, SolvableNonCausalModelReducesAtEachPolicy) {
  auto m = dsl::load_model(test::read_file(test::data_path("sm_not_ci.nst")));
  ASSERT_TRUE(check_sm(m).verdict);
  ASSERT_FALSE(check_ci(m).verdict);
  PolicySpace space(m);
  for (std::uint64_t k = 0; k < space.size(); ++k) {
    auto g = space.decode(k);
    auto r = sm_reduce(m, g);
    ASSERT_EQ(r.mode, ReducedStaticModel::Mode::PolicyParameterized);
    ASSERT_EQ(static_value(r, g), m.expected_cost(g)) << "policy " << k;
  }
}

TEST(Reduction, SmReductionAtZeroPolicyOnWorkedExample) {
  auto m = test::load("random_order.nst");
  auto g = constant_policy(m);
  auto r = sm_reduce(m, g);
  EXPECT_EQ(static_value(r, g), ratio(1, 2));
  EXPECT_TRUE(certify_values(m, r).ok);
}

TEST(Reduction, SmReductionRequiresSolvability) {
  auto m = test::load("mutual.nst");
  auto g = dsl::parse_policy(test::read_file(test::model_path("mutual_copy.policy")), m);
  EXPECT_THROW(sm_reduce(m, g), Error);
}

TEST(Reduction, SmReductionRejectsABadStageOrder) {
  auto m = test::load("random_order.nst");
  EXPECT_THROW(sm_reduce(m, constant_policy(m), {0, 0, 1}), Error);
}

TEST(Reduction, CausalEquivalentOfWorkedExample) {
  auto m = test::load("random_order.nst");
  auto eq = ci_to_c_equivalent(m);
  EXPECT_EQ(eq.leaves, 6u);
  Model m2(eq.spec);
  EXPECT_TRUE(check_c(m2).verdict);
  auto cert = certify_equivalence(m, eq);
  EXPECT_TRUE(cert.ok()) << cert.detail;
  EXPECT_TRUE(cert.exhaustive);
  EXPECT_EQ(cert.policies, 512u);
}

TEST(Reduction, CausalEquivalentOfGeneratedCiModels) {
  std::size_t seen = 0;
  for (auto& spec : generate_batch(2024, 120)) {
    Model m(spec);
    if (!check_ci(m).verdict) continue;
    ++seen;
    auto eq = ci_to_c_equivalent(m);
    EXPECT_TRUE(check_c(Model(eq.spec)).verdict);
    auto cert = certify_equivalence(m, eq, 1, 100000, 200);
    EXPECT_TRUE(cert.ok()) << cert.detail;
  }
  EXPECT_GT(seen, 50u);
}

TEST(Reduction, CausalEquivalentNeedsCi) {
  auto m = test::load("deadlock.nst");
  EXPECT_THROW(ci_to_c_equivalent(m), Error);
}

TEST(Reduction, NestedChainAgreesOnEveryDynamicPolicy) {
  auto m = test::load("nested_chain.nst");
  auto r = nested_reduce(m);
  auto cert = certify_nested(m, r);
  EXPECT_TRUE(cert.ok()) << cert.detail;
  EXPECT_TRUE(cert.exhaustive);
  EXPECT_EQ(cert.dynamic_policies, 531441u);
}

TEST(Reduction, NestedBijectionsAreMutuallyInverse) {
  auto m = test::load("nested_chain.nst");
  auto r = nested_reduce(m);
  Model st(r.static_spec);
  PolicySpace space(st);
  SplitMix64 rng(3);
  for (int k = 0; k < 200; ++k) {
    auto gs = space.decode(rng.below(space.size()));
    ASSERT_EQ(to_static(r, to_dynamic(r, gs)), gs);
  }
}

TEST(Reduction, StaticMeasurementsIgnoreActions) {
  auto m = test::load("nested_chain.nst");
  auto r = nested_reduce(m);
  for (const auto& d : r.static_spec.dms) {
    for (int arg : d.obs.args) EXPECT_LT(arg, static_cast<int>(r.static_spec.signals.size()));
  }
}

TEST(Reduction, NonclassicalModelIsNotPartiallyNested) {
  auto m = test::load("random_order.nst");
  try {
    nested_reduce(m);
    FAIL() << "expected NotPartiallyNested";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotPartiallyNested);
  }
}

TEST(Reduction, NonInvertibleDecompositionIsRejected) {
  // h(ghat, u1) = ghat + u1 mod 3 except that ghat 0 and 1 collide; the
  // measurement table is edited to match, so only invertibility fails.
  auto spec = test::load_spec("nested_chain.nst");
  auto& h = spec.nested.at(1).h;
  h[{1, 0}] = 0;
  h[{0, 1}] = 0;
  auto& obs = spec.dms[1].obs;
  for (int w1 = 0; w1 < 3; ++w1) {
    obs.cells[w1 * 9 + 1 * 3 + 0] = 3 * w1;
    obs.cells[w1 * 9 + 0 * 3 + 1] = 3 * w1;
  }
  try {
    nested_reduce(Model(spec));
    FAIL() << "expected NotInvertible";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotInvertible) << e.what();
  }
}

TEST(Reduction, DecouplingSingleDmAddsARedundantSimulator) {
  Model m(one_dm_guessing_a_bit());
  auto dec = decouple(m);
  EXPECT_EQ(dec.spec.dms.size(), 2u);
  auto cert = certify_decoupling(m, dec);
  EXPECT_TRUE(cert.exhaustive);
  EXPECT_EQ(cert.original_optimum, 0);
  EXPECT_TRUE(cert.ok());
}

TEST(Reduction, WrongSimulationEarnsNoPayoff) {
  Model m(one_dm_guessing_a_bit());
  auto dec = decouple(m);
  Model d(dec.spec);
  // The simulator always guesses 0 while the identity policy plays 1 at
  // w0 = 1, and the always-1 policy disagrees with the guess everywhere.
  PolicyProfile always_one;
  always_one.table = {std::vector<int>(d.measurement_size(0), 0), {1, 1}};
  EXPECT_EQ(d.expected_cost(always_one), dec.c_max);
}

TEST(Reduction, DecouplingPreservesTheOptimumOnSmallCiModels) {
  GeneratorOptions opt;
  opt.max_signal_alphabet = 2;
  opt.max_action_alphabet = 2;
  opt.max_measurement_alphabet = 3;
  std::size_t fixtures = 0;
  for (std::uint64_t k = 0; k < 2000 && fixtures < 20; ++k) {
    auto rng = SplitMix64::stream(7, k);
    Model m(generate_model(rng, opt));
    if (m.support().size() > 4 || m.action_count() > 8 || !check_ci(m).verdict) continue;
    ++fixtures;
    auto cert = certify_decoupling(m, decouple(m));
    EXPECT_TRUE(cert.exhaustive);
    EXPECT_TRUE(cert.ok()) << cert.original_optimum << " vs " << cert.decoupled_optimum;
  }
  EXPECT_EQ(fixtures, 20u);
}

TEST(Reduction, DecouplingNeedsCi) {
  auto m = test::load("deadlock.nst");
  try {
    decouple(m);
    FAIL() << "expected NotCi";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotCi);
  }
}

TEST(Reduction, StaticDocumentRoundTripsAndReverifies) {
  auto m = test::load("random_order.nst");
  for (auto labels : {LabelMode::Union, LabelMode::Tagged}) {
    StaticOptions opt;
    opt.labels = labels;
    auto r = static_reduce(m, opt);
    auto text = dsl::serialize_static(r);
    auto back = dsl::parse_static(text);
    EXPECT_EQ(dsl::serialize_static(back), text);
    EXPECT_TRUE(certify_values(m, back).ok);
  }
  auto sm = sm_reduce(m, constant_policy(m));
  auto back = dsl::parse_static(dsl::serialize_static(sm));
  ASSERT_TRUE(back.policy.has_value());
  EXPECT_EQ(*back.policy, *sm.policy);
}
