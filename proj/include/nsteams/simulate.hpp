#pragma once

// Forward realization of solution paths and seeded Monte-Carlo estimation.
//
// A path is built stage by stage: the ordering names the next DM from the
// signals and the actions already taken, that DM's measurement is read off
// its table (it must not depend on the actions still open) and its policy
// fixes its action.  When no ordering is given, the lowest-numbered DM
// whose measurement is already determined acts next.
//
// Sampling maps SplitMix64 output to outcomes by inverse CDF over the
// canonical signal order: with L the common denominator of the prior and
// integer weights W_s = L * P(s), a uniform r in [0, L) selects the first
// s whose cumulative weight exceeds r.  Samples are drawn in blocks of
// kSampleBlock; block b uses SplitMix64::stream(seed, b), so estimates do
// not depend on the number of worker threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "generate.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rational.hpp"

namespace nst {

enum class PathStatus { Completed, Deadlock, Ambiguous };

inline std::string path_status_name(PathStatus s) {
  switch (s) {
    case PathStatus::Completed: return "completed";
    case PathStatus::Deadlock: return "deadlock";
    case PathStatus::Ambiguous: return "ambiguous";
  }
  return "?";
}

struct PathTrace {
  std::size_t signal = 0;
  std::vector<int> order;         // DMs in acting order, 0-based
  std::vector<int> measurements;  // per stage, local to the acting DM
  std::vector<int> actions;       // per stage, local to the acting DM
  std::optional<std::size_t> action_index;  // joint action when completed
  Rational cost;
  PathStatus status = PathStatus::Completed;
  std::size_t failed_stage = 0;  // 1-based; 0 when completed
  std::string message;

  bool completed() const { return status == PathStatus::Completed; }
};

namespace detail {

// Joint action indices that agree with the fixed actions.
inline std::vector<std::size_t> completions(const Model& m, const std::vector<int>& fixed) {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < m.action_count(); ++a) {
    bool ok = true;
    for (std::size_t j = 0; j < m.n() && ok; ++j) ok = fixed[j] < 0 || m.action_digit(a, j) == fixed[j];
    if (ok) out.push_back(a);
  }
  return out;
}

// DM named by psi at stage k, if the realized prefix decides it.
inline std::optional<int> next_dm(const Model& m, const Ordering& psi, std::size_t s, const std::vector<int>& order,
                                  const std::vector<int>& fixed, std::string& why) {
  const std::size_t k = order.size();
  if (auto* tree = std::get_if<OrderingTree>(&psi)) {
    if (k >= tree->stages.size()) {
      why = "ordering has no stage " + std::to_string(k + 1);
      return std::nullopt;
    }
    const auto& rule = tree->stages[k];
    std::vector<int> key;
    for (int c : rule.signal_args) key.push_back(m.signal_digit(s, c));
    for (int dm : order) key.push_back(m.union_id(dm, fixed[dm]));
    auto it = rule.rows.find(key);
    if (it == rule.rows.end()) {
      why = "ordering has no row for this prefix";
      return std::nullopt;
    }
    return it->second;
  }
  const auto& flat = std::get<FlatOrdering>(psi);
  std::optional<int> dm;
  for (std::size_t a : completions(m, fixed)) {
    const auto& p = flat.perm.at(m.outcome(s, a));
    if (!std::equal(order.begin(), order.end(), p.begin()) || (dm && *dm != p[k])) {
      why = "the stage is not decided by the earlier actions";
      return std::nullopt;
    }
    dm = p[k];
  }
  return dm;
}

inline PathTrace realize(const Model& m, const Ordering* psi, const PolicyProfile& g, std::size_t s) {
  const std::size_t n = m.n();
  PathTrace t;
  t.signal = s;
  std::vector<int> fixed(n, -1);
  auto fail = [&](PathStatus st, std::string msg) {
    t.status = st;
    t.failed_stage = t.order.size() + 1;
    t.message = "stage " + std::to_string(t.failed_stage) + ": " + msg;
    return t;
  };
  auto any_ready = [&] {
    for (std::size_t j = 0; j < n; ++j) {
      if (fixed[j] < 0 && m.determined_measurement(j, s, fixed)) return true;
    }
    return false;
  };
  for (std::size_t k = 0; k < n; ++k) {
    std::optional<int> dm;
    std::optional<int> y;
    if (psi) {
      std::string why;
      dm = next_dm(m, *psi, s, t.order, fixed, why);
      if (!dm) return fail(PathStatus::Ambiguous, why);
      if (*dm < 0 || static_cast<std::size_t>(*dm) >= n || fixed[*dm] >= 0) {
        return fail(PathStatus::Ambiguous, "ordering names DM " + std::to_string(*dm + 1) + " twice");
      }
      y = m.determined_measurement(*dm, s, fixed);
      if (!y) {
        if (any_ready()) {
          return fail(PathStatus::Ambiguous,
                      "measurement of DM " + std::to_string(*dm + 1) + " depends on actions not yet taken");
        }
        return fail(PathStatus::Deadlock, "no remaining DM has a determined measurement");
      }
    } else {
      for (std::size_t j = 0; j < n && !dm; ++j) {
        if (fixed[j] >= 0) continue;
        if ((y = m.determined_measurement(j, s, fixed))) dm = static_cast<int>(j);
      }
      if (!dm) return fail(PathStatus::Deadlock, "no remaining DM has a determined measurement");
    }
    int u = g.table[*dm][*y];
    fixed[*dm] = u;
    t.order.push_back(*dm);
    t.measurements.push_back(*y);
    t.actions.push_back(u);
  }
  std::size_t a = 0;
  for (std::size_t j = 0; j < n; ++j) a += static_cast<std::size_t>(fixed[j]) * m.action_stride(j);
  t.action_index = a;
  t.cost = m.cost(s, a);
  return t;
}

}  // namespace detail

// Path at signal s under ordering psi.  Failures are reported in the
// status, never thrown.
inline PathTrace realize_path(const Model& m, const Ordering& psi, const PolicyProfile& g, std::size_t s) {
  m.check_policy(g);
  return detail::realize(m, &psi, g, s);
}

// Path at signal s with the greedy self-ordering.
inline PathTrace realize_path(const Model& m, const PolicyProfile& g, std::size_t s) {
  m.check_policy(g);
  return detail::realize(m, nullptr, g, s);
}

// Replays a completed trace through the measurement tables and the policy.
inline bool replays(const Model& m, const PolicyProfile& g, const PathTrace& t) {
  if (!t.completed() || !t.action_index) return false;
  const std::size_t x = m.outcome(t.signal, *t.action_index);
  for (std::size_t k = 0; k < t.order.size(); ++k) {
    int dm = t.order[k];
    if (m.eta(dm, x) != t.measurements[k] || g.table[dm][t.measurements[k]] != t.actions[k]) return false;
    if (m.action_digit(*t.action_index, dm) != t.actions[k]) return false;
  }
  return t.cost == m.cost(t.signal, *t.action_index);
}

namespace detail {

inline void require_completed(const Model& m, const PathTrace& t) {
  if (t.completed()) return;
  throw Error(t.status == PathStatus::Deadlock ? ErrorCode::DeadlockEncountered : ErrorCode::NotCausal,
              "path at omega = (" + m.signal_label(t.signal) + ") ends in " + path_status_name(t.status) + " at " +
                  t.message);
}

inline std::vector<PathTrace> support_paths(const Model& m, const Ordering* psi, const PolicyProfile& g) {
  m.check_policy(g);
  std::vector<PathTrace> paths(m.signal_count());
  for (std::size_t s : m.support()) {
    paths[s] = realize(m, psi, g, s);
    require_completed(m, paths[s]);
  }
  return paths;
}

}  // namespace detail

// Prior-weighted cost over every supported signal, computed from realized
// paths.  Equals expected_cost whenever every path completes.
inline Rational full_sweep(const Model& m, const Ordering* psi, const PolicyProfile& g) {
  auto paths = detail::support_paths(m, psi, g);
  Rational total = 0;
  for (std::size_t s : m.support()) total += m.prior(s) * paths[s].cost;
  return total;
}

inline constexpr std::uint64_t kSampleBlock = 4096;

// Inverse-CDF sampler over the canonical signal order.
class SignalSampler {
 public:
  explicit SignalSampler(const Model& m) {
    std::vector<Rational> p;
    for (std::size_t s = 0; s < m.signal_count(); ++s) p.push_back(m.prior(s));
    denominator_ = lcm_of_denominators(p);
    Integer acc = 0;
    for (std::size_t s = 0; s < p.size(); ++s) {
      Rational w = p[s] * denominator_;
      if (w == 0) continue;
      acc += w.get_num();
      cumulative_.push_back(acc);
      signal_.push_back(s);
    }
    words_ = (mpz_sizeinbase(denominator_.get_mpz_t(), 2) + 63) / 64;
    Integer span = Integer(1) << static_cast<mp_bitcnt_t>(64 * words_);
    limit_ = span - span % denominator_;
  }

  const Integer& denominator() const { return denominator_; }

  // Uniform r in [0, L) by rejection over whole 64-bit words, high word first.
  Integer uniform(SplitMix64& rng) const {
    while (true) {
      Integer r = 0;
      for (std::size_t w = 0; w < words_; ++w) {
        std::uint64_t v = rng.next();
        r <<= 32;
        r += static_cast<unsigned long>(v >> 32);
        r <<= 32;
        r += static_cast<unsigned long>(v & 0xFFFFFFFFULL);
      }
      if (r < limit_) return r % denominator_;
    }
  }

  std::size_t signal_for(const Integer& r) const {
    std::size_t lo = 0, hi = cumulative_.size() - 1;
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (cumulative_[mid] > r) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    return signal_[lo];
  }

  std::size_t draw(SplitMix64& rng) const { return signal_for(uniform(rng)); }

 private:
  Integer denominator_, limit_;
  std::size_t words_ = 1;
  std::vector<Integer> cumulative_;
  std::vector<std::size_t> signal_;
};

struct MonteCarloOptions {
  std::uint64_t samples = 100000;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  std::size_t trace_samples = 0;  // traces kept for the first samples
};

struct MonteCarloEstimate {
  std::uint64_t samples = 0;
  Rational mean;  // exact sample mean
  double standard_error = 0;
  std::vector<std::pair<std::uint64_t, PathTrace>> traces;

  double mean_value() const { return to_double(mean); }
};

// Estimates J(gamma) from i.i.d. prior samples of realized paths.  Paths
// are realized once per supported signal, so a deadlock anywhere on the
// support is reported even if it would not be sampled.
inline MonteCarloEstimate monte_carlo(const Model& m, const Ordering* psi, const PolicyProfile& g,
                                      const MonteCarloOptions& opt) {
  if (opt.samples == 0) throw Error(ErrorCode::EmptySample, "sample count must be positive");
  auto paths = detail::support_paths(m, psi, g);
  SignalSampler sampler(m);
  const std::uint64_t blocks = (opt.samples + kSampleBlock - 1) / kSampleBlock;
  struct Tally {
    Rational sum, squares;
  };
  std::vector<Tally> tallies(blocks);
  std::vector<std::vector<std::size_t>> drawn(blocks);
  parallel_for(blocks, opt.jobs, [&](std::size_t b) {
    auto rng = SplitMix64::stream(opt.seed, b);
    const std::uint64_t lo = b * kSampleBlock, hi = std::min<std::uint64_t>(opt.samples, lo + kSampleBlock);
    for (std::uint64_t k = lo; k < hi; ++k) {
      std::size_t s = sampler.draw(rng);
      const Rational& c = paths[s].cost;
      tallies[b].sum += c;
      tallies[b].squares += c * c;
      if (k < opt.trace_samples) drawn[b].push_back(s);
    }
  });
  Rational sum = 0, squares = 0;
  for (const auto& t : tallies) {
    sum += t.sum;
    squares += t.squares;
  }
  MonteCarloEstimate est;
  est.samples = opt.samples;
  const Rational n(static_cast<unsigned long>(opt.samples));
  est.mean = sum / n;
  if (opt.samples > 1) {
    Rational var = (squares - n * est.mean * est.mean) / (n - 1);
    est.standard_error = std::sqrt(to_double(var) / to_double(n));
  }
  std::uint64_t k = 0;
  for (const auto& block : drawn) {
    for (std::size_t s : block) est.traces.push_back({k++, paths[s]});
  }
  return est;
}

// Trace dump: one tab-separated line per stage,
//   sample  stage  omega  dm  measurement  action  cost
// with symbols from the model's alphabets, DMs 1-based and the path cost
// repeated on every line.  Failed paths end with a line whose dm column is
// the status name.
inline void write_trace(std::ostream& os, const Model& m, std::uint64_t sample, const PathTrace& t) {
  const auto omega = m.signal_label(t.signal);
  for (std::size_t k = 0; k < t.order.size(); ++k) {
    const auto& d = m.spec().dms[t.order[k]];
    os << sample << '\t' << (k + 1) << '\t' << omega << '\t' << (t.order[k] + 1) << '\t'
       << d.measurements[t.measurements[k]] << '\t' << d.actions[t.actions[k]] << '\t'
       << (t.completed() ? to_string(t.cost) : std::string("-")) << '\n';
  }
  if (!t.completed()) {
    os << sample << '\t' << t.failed_stage << '\t' << omega << '\t' << path_status_name(t.status) << "\t-\t-\t-\n";
  }
}

}  // namespace nst
