#include <gtest/gtest.h>

#include <random>

#include "nsteams/sigma.hpp"

using namespace nst;
using namespace nst::sigma;

namespace {

PartitionField random_partition(const GroundPtr& g, std::mt19937_64& rng, std::uint32_t blocks) {
  std::vector<std::uint32_t> labels(g->size());
  for (auto& l : labels) l = static_cast<std::uint32_t>(rng() % blocks);
  return PartitionField(g, labels);
}

// A coarsening of f obtained by merging atoms through a random map.
PartitionField random_coarsening(const PartitionField& f, std::mt19937_64& rng, std::uint32_t blocks) {
  std::vector<std::uint32_t> merge(f.atom_count());
  for (auto& m : merge) m = static_cast<std::uint32_t>(rng() % blocks);
  std::vector<std::uint32_t> labels(f.size());
  for (std::size_t x = 0; x < f.size(); ++x) labels[x] = merge[f.label(x)];
  return PartitionField(f.ground(), labels);
}

}  // namespace

TEST(Sigma, ThirdMeasurementOfWorkedExampleHasThreeAtoms) {
  // eta3 on (w0, ws0, w3, u1, u2): 1 if w3*u1 = 1, 0 if u1 + u2 = 0, else 1/2.
  auto g = make_ground({"w0", "ws0", "w3", "u1", "u2"}, {2, 2, 2, 2, 2});
  auto f = field_from_map(g, [&](std::size_t x) {
    auto t = g->decode(x);
    int w3 = t[2], u1 = t[3], u2 = t[4];
    int v = (w3 * u1 == 1) ? 2 : (u1 + u2 == 0 ? 0 : 1);
    return std::optional<int>(v);
  });
  ASSERT_EQ(f.atom_count(), 3u);
  std::vector<std::size_t> sizes;
  for (const auto& a : f.atoms()) sizes.push_back(a.size());
  std::sort(sizes.begin(), sizes.end());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{8, 8, 16}));
}

TEST(Sigma, ConstantMapGivesTrivialField) {
  auto g = make_ground({"a", "b"}, {3, 2});
  auto f = field_from_map(g, [](std::size_t) { return std::optional<int>(7); });
  EXPECT_EQ(f, trivial_field(g));
  EXPECT_EQ(f.atom_count(), 1u);
}

TEST(Sigma, MissingMapEntryIsReported) {
  auto g = make_ground({"a"}, {3});
  try {
    field_from_map(g, [](std::size_t x) { return x == 1 ? std::nullopt : std::optional<int>(0); });
    FAIL() << "expected MissingEntry";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingEntry);
  }
}

TEST(Sigma, TrivialFieldIsCoarserThanAnything) {
  std::mt19937_64 rng(11);
  auto g = make_ground({"a", "b", "c"}, {2, 3, 2});
  for (int rep = 0; rep < 50; ++rep) {
    auto f = random_partition(g, rng, 1 + rep % 5);
    EXPECT_TRUE(is_coarser(trivial_field(g), f));
    EXPECT_TRUE(is_coarser(f, discrete_field(g)));
  }
}

TEST(Sigma, CoarserIsAPartialOrder) {
  std::mt19937_64 rng(5);
  auto g = make_ground({"a", "b", "c"}, {2, 3, 3});
  for (int rep = 0; rep < 200; ++rep) {
    auto a = random_partition(g, rng, 2 + rep % 6);
    auto b = random_coarsening(a, rng, 3);
    auto c = random_coarsening(b, rng, 2);
    EXPECT_TRUE(is_coarser(a, a));
    EXPECT_TRUE(is_coarser(b, a));
    EXPECT_TRUE(is_coarser(c, b));
    EXPECT_TRUE(is_coarser(c, a));
    if (is_coarser(a, b)) {
      EXPECT_EQ(a, b);
    }
    auto d = random_partition(g, rng, 3);
    EXPECT_EQ(is_coarser(a, d) && is_coarser(d, a), a == d);
  }
}

TEST(Sigma, JoinIsLeastUpperBound) {
  std::mt19937_64 rng(17);
  auto g = make_ground({"a", "b"}, {4, 3});
  for (int rep = 0; rep < 200; ++rep) {
    auto a = random_partition(g, rng, 2 + rep % 3);
    auto b = random_partition(g, rng, 2 + rep % 4);
    auto j = join(a, b);
    EXPECT_TRUE(is_coarser(a, j));
    EXPECT_TRUE(is_coarser(b, j));
    // Any refinement of j has a and b below it; any field above both is above j.
    auto c = random_partition(g, rng, 4);
    auto upper = join(join(a, b), c);
    EXPECT_TRUE(is_coarser(j, upper));
    EXPECT_EQ(join(a, b), join(b, a));
    EXPECT_EQ(join(a, a), a);
  }
}

TEST(Sigma, MismatchedGroundsAreRejected) {
  auto g1 = make_ground({"a"}, {2});
  auto g2 = make_ground({"a"}, {3});
  try {
    is_coarser(trivial_field(g1), trivial_field(g2));
    FAIL() << "expected GroundMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GroundMismatch);
  }
  EXPECT_THROW(join(trivial_field(g1), trivial_field(g2)), Error);
}

TEST(Sigma, CylindricalExtensionPreservesOrder) {
  std::mt19937_64 rng(23);
  auto src = make_ground({"w", "v"}, {3, 2});
  auto dst = make_ground({"u1", "w", "u2", "v"}, {2, 3, 2, 2});
  for (int rep = 0; rep < 100; ++rep) {
    auto a = random_partition(src, rng, 3);
    auto b = random_coarsening(a, rng, 2);
    auto ea = cylindrical_extension(a, dst, {1, 3});
    auto eb = cylindrical_extension(b, dst, {1, 3});
    EXPECT_TRUE(is_coarser(eb, ea));
    EXPECT_EQ(ea.atom_count(), a.atom_count());
    EXPECT_EQ(is_coarser(a, b), is_coarser(ea, eb));
  }
}

TEST(Sigma, CylindricalExtensionNeedsAFactor) {
  auto src = make_ground({"w"}, {3});
  auto dst = make_ground({"w", "u"}, {2, 2});
  try {
    cylindrical_extension(trivial_field(src), dst, {0});
    FAIL() << "expected NotAFactor";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotAFactor);
  }
}

TEST(Sigma, ProjectionFieldHasOneAtomPerKeptTuple) {
  auto g = make_ground({"a", "b", "c"}, {2, 3, 4});
  auto f = projection_field(g, {0, 2});
  EXPECT_EQ(f.atom_count(), 8u);
  for (const auto& atom : f.atoms()) EXPECT_EQ(atom.size(), 3u);
}

TEST(Sigma, EventsGenerateTheirField) {
  auto g = make_ground({"a"}, {4});
  std::vector<bool> e1{true, true, false, false};
  std::vector<bool> e2{true, false, true, false};
  auto f = field_from_events(g, {e1});
  EXPECT_EQ(f.atom_count(), 2u);
  EXPECT_TRUE(contains_event(f, e1));
  EXPECT_FALSE(contains_event(f, e2));
  auto f2 = field_from_events(g, {e1, e2});
  EXPECT_EQ(f2, discrete_field(g));
}

TEST(Sigma, CoarserOnRestrictsToTheEvent) {
  auto g = make_ground({"a"}, {4});
  PartitionField a(g, {0, 0, 1, 1});
  PartitionField b(g, {0, 1, 1, 2});
  EXPECT_FALSE(is_coarser(a, b));
  EXPECT_TRUE(is_coarser_on(a, b, {0, 1}));
  EXPECT_FALSE(is_coarser_on(a, b, {1, 2}));
  EXPECT_TRUE(is_constant_on(a, {2, 3}));
}

TEST(Sigma, CylinderEnumeratesCompletions) {
  auto g = make_ground({"a", "b", "c"}, {2, 3, 2});
  std::size_t anchor = g->encode({1, 2, 0});
  auto cyl = cylinder(*g, anchor, {0, 2});
  ASSERT_EQ(cyl.size(), 3u);
  for (auto x : cyl) {
    EXPECT_EQ(g->digit(x, 0), 1u);
    EXPECT_EQ(g->digit(x, 2), 0u);
  }
}
