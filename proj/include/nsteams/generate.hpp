#pragma once

// Seeded random generation of small intrinsic models, and the SplitMix64
// stream used for all library randomness.
//
// SplitMix64 is fully specified by its constants, so a seed reproduces the
// same models and samples on every platform.  Bounded integers are drawn by
// rejection, never by floating point.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"
#include "rational.hpp"

namespace nst {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform on [0, bound) for bound >= 1.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    while (true) {
      std::uint64_t r = next();
      if (r < limit) return r % bound;
    }
  }

  // True with probability num/den.
  bool chance(std::uint64_t num, std::uint64_t den) { return below(den) < num; }

  // Independent stream for item k of a batch seeded with `seed`.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t k) {
    return SplitMix64(mix(seed ^ mix(k + 0x632BE59BD9B4E019ULL)));
  }

 private:
  std::uint64_t state_;
};

// Uniformly random deterministic policy profile.
inline PolicyProfile random_policy(const Model& m, SplitMix64& rng) {
  PolicyProfile g;
  for (std::size_t i = 0; i < m.n(); ++i) {
    std::vector<int> row(m.measurement_size(i));
    for (auto& u : row) u = static_cast<int>(rng.below(m.action_size(i)));
    g.table.push_back(std::move(row));
  }
  return g;
}

struct GeneratorOptions {
  std::size_t min_dms = 1;
  std::size_t max_dms = 3;
  std::size_t max_signal_alphabet = 3;
  std::size_t max_action_alphabet = 3;
  std::size_t max_measurement_alphabet = 3;
  // Probability, in percent, that a measurement reads another DM's action.
  unsigned action_dependence_pct = 35;
  // Probability, in percent, that a measurement reads a given signal.
  unsigned signal_dependence_pct = 50;
  // Largest integer prior weight; weights are at least one, so the prior
  // has full support.
  unsigned max_weight = 4;
  unsigned max_cost = 4;
};

namespace detail {

inline Alphabet numbered(std::size_t n) {
  Alphabet a;
  for (std::size_t k = 0; k < n; ++k) a.symbols.push_back(std::to_string(k));
  return a;
}

}  // namespace detail

// Draws one model.  Signal alphabets have 1..max symbols with a bias
// toward small sizes; each measurement reads a random subset of the
// signals and of the other DMs' actions and takes uniform random values.
inline IntrinsicModel generate_model(SplitMix64& rng, const GeneratorOptions& opt = {}) {
  IntrinsicModel m;
  const std::size_t n = opt.min_dms + rng.below(opt.max_dms - opt.min_dms + 1);
  auto small_size = [&](std::size_t max, std::size_t min) {
    // Sizes min..max, the smaller ones twice as likely as the largest.
    std::size_t span = max - min + 1;
    std::size_t r = rng.below(2 * span - 1);
    return min + (r < 2 * (span - 1) ? r / 2 : span - 1);
  };
  for (std::size_t k = 0; k < n + 2; ++k) m.signals.push_back(detail::numbered(small_size(opt.max_signal_alphabet, 1)));
  for (std::size_t i = 0; i < n; ++i) {
    DmSpec d;
    d.actions = detail::numbered(small_size(opt.max_action_alphabet, 2));
    d.measurements = detail::numbered(small_size(opt.max_measurement_alphabet, 2));
    m.dms.push_back(std::move(d));
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& d = m.dms[i];
    for (std::size_t k = 0; k < n + 2; ++k) {
      unsigned pct = (k == i + 2) ? 80 : (k >= 2 ? opt.signal_dependence_pct / 2 : opt.signal_dependence_pct);
      if (m.signals[k].size() > 1 && rng.chance(pct, 100)) d.obs.args.push_back(static_cast<int>(k));
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && rng.chance(opt.action_dependence_pct, 100)) d.obs.args.push_back(static_cast<int>(n + 2 + j));
    }
    std::size_t extent = table_extent(m, d.obs.args);
    for (std::size_t r = 0; r < extent; ++r) d.obs.cells.emplace_back(static_cast<int>(rng.below(d.measurements.size())));
  }
  m.cost.args = {0, 1};
  for (std::size_t i = 0; i < n; ++i) m.cost.args.push_back(static_cast<int>(n + 2 + i));
  std::size_t extent = table_extent(m, m.cost.args);
  for (std::size_t r = 0; r < extent; ++r) m.cost.cells.emplace_back(Rational(static_cast<long>(rng.below(opt.max_cost + 1))));
  std::vector<int> all;
  for (std::size_t k = 0; k < n + 2; ++k) all.push_back(static_cast<int>(k));
  std::size_t total = table_extent(m, all);
  std::vector<long> weights(total);
  long sum = 0;
  for (auto& w : weights) {
    w = 1 + static_cast<long>(rng.below(opt.max_weight));
    sum += w;
  }
  m.prior.form = Prior::Form::Joint;
  for (long w : weights) m.prior.joint.emplace_back(ratio(w, sum));
  return m;
}

inline std::vector<IntrinsicModel> generate_batch(std::uint64_t seed, std::size_t count, const GeneratorOptions& opt = {}) {
  std::vector<IntrinsicModel> out;
  for (std::size_t k = 0; k < count; ++k) {
    auto rng = SplitMix64::stream(seed, k);
    out.push_back(generate_model(rng, opt));
  }
  return out;
}

}  // namespace nst
