#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "nsteams/dsl.hpp"
#include "nsteams/dsl_static.hpp"
#include "nsteams/generate.hpp"
#include "nsteams/reduction.hpp"
#include "corpus.hpp"
#include "support.hpp"

using namespace nst;

namespace {

using namespace nst::test;

// Every mutant must be rejected with a diagnostic on an acceptable line.
void expect_located(const std::vector<Mutant>& mutants, const std::function<void(const std::string&)>& parse,
                    const std::string& name) {
  for (const auto& mu : mutants) {
    try {
      parse(mu.text);
      ADD_FAILURE() << name << ": " << mu.what << " at line " << mu.lines[0] << " was accepted";
    } catch (const Error& e) {
      EXPECT_NE(std::find(mu.lines.begin(), mu.lines.end(), e.line()), mu.lines.end())
          << name << ": " << mu.what << " at line " << mu.lines[0] << " reported " << e.what();
    }
  }
}

}  // namespace

TEST(Dsl, WorkedExampleParsesAndValidates) {
  auto text = test::read_file(test::model_path("random_order.nst"));
  EXPECT_EQ(dsl::document_kind(text), "intrinsic");
  Model m = dsl::load_model(text);
  EXPECT_EQ(m.spec().dms[0].measurements[1], "1/2");
}

TEST(Dsl, CorpusRoundTripsExactly) {
  auto files = corpus_files();
  ASSERT_GE(files.size(), 5u);
  for (const auto& f : files) {
    auto spec = dsl::parse_intrinsic(test::read_file(f));
    auto text = dsl::serialize(spec);
    auto back = dsl::parse_intrinsic(text);
    EXPECT_EQ(back, spec) << f;
    EXPECT_EQ(dsl::serialize(back), text) << f;
  }
}

TEST(Dsl, GeneratedModelsRoundTripExactly) {
  for (const auto& spec : generate_batch(2024, 500)) {
    auto text = dsl::serialize(spec);
    auto back = dsl::parse_intrinsic(text);
    ASSERT_EQ(back, spec) << text;
    ASSERT_EQ(dsl::serialize(back), text);
  }
}

TEST(Dsl, ShuffledRowsSerializeIdentically) {
  for (const auto& f : corpus_files()) {
    auto canonical = dsl::serialize(dsl::parse_intrinsic(test::read_file(f)));
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto shuffled = shuffle_rows(canonical, seed);
      EXPECT_EQ(dsl::serialize(dsl::parse_intrinsic(shuffled)), canonical) << f;
    }
  }
}

TEST(Dsl, ArgumentOrderIsCanonicalized) {
  auto spec = test::load_spec("random_order.nst");
  auto text = dsl::serialize(spec);
  // Write DM 3's table with its arguments reversed.
  auto lines = split_lines(text);
  std::vector<std::string> out;
  bool inside = false;
  for (const auto& l : lines) {
    if (l == "  obs (w0 ws0 w3 u1 u2)") {
      out.push_back("  obs (u2 u1 w3 ws0 w0)");
      inside = true;
      continue;
    }
    if (inside && l == "  end") inside = false;
    if (inside) {
      std::istringstream in(l);
      std::vector<std::string> key(5);
      std::string colon, v;
      for (auto& k : key) in >> k;
      in >> colon >> v;
      std::string row = "   ";
      for (auto it = key.rbegin(); it != key.rend(); ++it) row += " " + *it;
      out.push_back(row + " : " + v);
      continue;
    }
    out.push_back(l);
  }
  ASSERT_NE(join_lines(out), text);
  EXPECT_EQ(dsl::parse_intrinsic(join_lines(out)), spec);
}

TEST(Dsl, ZeroDenominatorIsASyntaxErrorWithLocation) {
  auto lines = split_lines(test::read_file(test::model_path("random_order.nst")));
  auto it = std::find(lines.begin(), lines.end(), "  w0 : 1/2 1/2");
  ASSERT_NE(it, lines.end());
  *it = "  w0 : 1/0 1/2";
  try {
    dsl::parse_intrinsic(join_lines(lines));
    FAIL() << "expected ZeroDenominator";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroDenominator);
    EXPECT_EQ(e.line(), static_cast<std::size_t>(it - lines.begin() + 1));
    EXPECT_EQ(e.column(), 8u);
  }
}

TEST(Dsl, UnnormalizedPriorFailsValidationNotParsing) {
  auto lines = split_lines(test::read_file(test::model_path("random_order.nst")));
  auto it = std::find(lines.begin(), lines.end(), "  w0 : 1/2 1/2");
  *it = "  w0 : 1/31 1/2";
  auto spec = dsl::parse_intrinsic(join_lines(lines));
  EXPECT_THROW(Model{spec}, ValidationError);
}

TEST(Dsl, DuplicateRowIsRejected) {
  auto text = test::read_file(test::model_path("nested_chain.nst"));
  auto lines = split_lines(text);
  auto it = std::find(lines.begin(), lines.end(), "  0 0 1 : 1");
  ASSERT_NE(it, lines.end());
  const auto at = static_cast<std::size_t>(it - lines.begin());
  lines.insert(it + 1, "  0 0 1 : 2");
  try {
    dsl::parse_intrinsic(join_lines(lines));
    FAIL() << "expected DuplicateRow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateRow);
    EXPECT_EQ(e.line(), at + 2);
  }
}

TEST(Dsl, UnknownSectionIsRejected) {
  auto text = test::read_file(test::model_path("deadlock.nst")) + "extras\n  1 : 2\nend\n";
  try {
    dsl::parse_intrinsic(text);
    FAIL() << "expected UnknownSection";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownSection);
  }
}

TEST(Dsl, MutatedModelsGiveLocatedDiagnostics) {
  for (const auto& f : corpus_files()) {
    auto mutants = mutants_of(test::read_file(f));
    ASSERT_GT(mutants.size(), 10u);
    expect_located(mutants, [](const std::string& t) { dsl::parse_intrinsic(t); }, f);
  }
}

TEST(Dsl, MutatedPoliciesGiveLocatedDiagnostics) {
  auto m = test::load("mutual.nst");
  auto mutants = mutants_of(test::read_file(test::model_path("mutual_copy.policy")));
  expect_located(mutants, [&](const std::string& t) { dsl::parse_policy(t, m); }, "mutual_copy.policy");
}

TEST(Dsl, MutatedStaticDocumentsGiveLocatedDiagnostics) {
  auto m = test::load("random_order.nst");
  for (auto labels : {LabelMode::Union, LabelMode::Tagged}) {
    StaticOptions opt;
    opt.labels = labels;
    auto text = dsl::serialize_static(static_reduce(m, opt));
    auto mutants = mutants_of(text);
    // Keep the run short: every fifth mutant still touches every section.
    std::vector<Mutant> some;
    for (std::size_t k = 0; k < mutants.size(); k += 5) some.push_back(mutants[k]);
    some.push_back(mutants.back());
    expect_located(some, [](const std::string& t) { dsl::parse_static(t); }, "static");
  }
}

TEST(Dsl, PolicyRoundTrips) {
  auto m = test::load("random_order.nst");
  PolicySpace space(m);
  for (std::uint64_t k = 0; k < space.size(); k += 17) {
    auto g = space.decode(k);
    EXPECT_EQ(dsl::parse_policy(dsl::serialize_policy(g, m), m), g);
  }
}

TEST(Dsl, PolicyMustCoverEveryMeasurement) {
  auto m = test::load("mutual.nst");
  auto text = test::read_file(test::model_path("mutual_copy.policy"));
  auto lines = split_lines(text);
  lines.erase(std::find(lines.begin(), lines.end(), "  01 : 1"));
  try {
    dsl::parse_policy(join_lines(lines), m);
    FAIL() << "expected MissingEntry";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingEntry);
  }
}

TEST(Dsl, StaticDocumentReparsesAndKeepsTheValueCondition) {
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  auto text = dsl::serialize_static(r);
  EXPECT_EQ(dsl::document_kind(text), "static-reduced");
  auto back = dsl::parse_static(shuffle_rows(text, 4));
  EXPECT_EQ(dsl::serialize_static(back), text);
  auto cert = certify_values(m, back);
  EXPECT_TRUE(cert.ok);
  EXPECT_EQ(cert.policies, 512u);
}

TEST(Dsl, StaticDensityMustIntegrateToOne) {
  auto m = test::load("random_order.nst");
  auto r = static_reduce(m);
  r.density.begin()->second[0] += 1;
  EXPECT_THROW(dsl::parse_static(dsl::serialize_static(r)), ValidationError);
}

TEST(Dsl, ShippedStaticDocumentsAreCanonical) {
  auto files = corpus_files("static-reduced");
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) {
    auto text = test::read_file(f);
    EXPECT_EQ(dsl::serialize_static(dsl::parse_static(text)), text) << f;
  }
}
