#pragma once

// Decision procedures for the information-structure properties of finite
// intrinsic models:
//
//   SM  solvability: every policy has exactly one closed-loop solution;
//   DF  deadlock freeness: under every policy the DMs can be ordered so that
//       nobody's measurement depends on later actions;
//   CI  causal implementability: pointwise in (omega, u), some order lets
//       each measurement be pinned down by the actions already taken;
//   C   causality: a single ordering function does this with each stage
//       decided by the signals and the earlier stage actions.
//
// SM and DF quantify over the support of the prior unless `strict` is set;
// CI and C are prior-free.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "sigma.hpp"

namespace nst {

enum class Property { SM, DF, CI, C };

inline std::string property_name(Property p) {
  switch (p) {
    case Property::SM: return "sm";
    case Property::DF: return "df";
    case Property::CI: return "ci";
    case Property::C: return "c";
  }
  return "?";
}

struct Counterexample {
  std::size_t signal = 0;
  std::optional<PolicyProfile> policy;
  std::optional<std::size_t> action;
  std::string reason;
};

struct PropertyReport {
  Property property = Property::SM;
  bool verdict = false;
  std::optional<Ordering> ordering;
  std::optional<Counterexample> counterexample;
};

struct CheckOptions {
  bool strict = false;
};

namespace detail {

inline std::vector<std::size_t> signals_to_check(const Model& m, const CheckOptions& opt) {
  if (!opt.strict) return m.support();
  std::vector<std::size_t> all(m.signal_count());
  for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
  return all;
}

// The joint measurement profile at one signal, for memoizing per-slice work.
inline std::vector<int> slice_signature(const Model& m, std::size_t s) {
  std::vector<int> sig;
  sig.reserve(m.action_count() * m.n());
  for (std::size_t a = 0; a < m.action_count(); ++a) {
    for (std::size_t i = 0; i < m.n(); ++i) sig.push_back(m.eta(i, s, a));
  }
  return sig;
}

// Partial policy: -1 marks entries left free.
using PartialPolicy = std::vector<std::vector<int>>;

inline PartialPolicy empty_partial(const Model& m) {
  PartialPolicy p;
  for (std::size_t i = 0; i < m.n(); ++i) p.emplace_back(m.measurement_size(i), -1);
  return p;
}

inline PolicyProfile complete(const PartialPolicy& p) {
  PolicyProfile g;
  for (const auto& row : p) {
    g.table.emplace_back();
    for (int v : row) g.table.back().push_back(v < 0 ? 0 : v);
  }
  return g;
}

// Two distinct action profiles that can both be fixed points of one policy
// at signal s: whenever a DM sees the same value at both, it acts the same.
inline std::optional<std::pair<std::size_t, std::size_t>> ambiguous_pair(const Model& m, std::size_t s,
                                                                         const PartialPolicy* constraints) {
  const std::size_t A = m.action_count();
  auto compatible = [&](std::size_t a) {
    if (!constraints) return true;
    for (std::size_t i = 0; i < m.n(); ++i) {
      int c = (*constraints)[i][m.eta(i, s, a)];
      if (c >= 0 && c != m.action_digit(a, i)) return false;
    }
    return true;
  };
  for (std::size_t a = 0; a < A; ++a) {
    if (!compatible(a)) continue;
    for (std::size_t b = a + 1; b < A; ++b) {
      if (!compatible(b)) continue;
      bool ok = true;
      for (std::size_t i = 0; i < m.n() && ok; ++i) {
        if (m.eta(i, s, a) == m.eta(i, s, b) && m.action_digit(a, i) != m.action_digit(b, i)) ok = false;
      }
      if (ok) return std::make_pair(a, b);
    }
  }
  return std::nullopt;
}

// Searches the policies restricted to measurements reachable at s for one
// without any fixed point.
inline std::optional<PartialPolicy> solutionless_policy(const Model& m, std::size_t s) {
  const std::size_t A = m.action_count(), n = m.n();
  struct Slot {
    std::size_t dm;
    int y;
  };
  std::vector<Slot> slots;
  std::vector<std::vector<int>> slot_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    slot_of[i].assign(m.measurement_size(i), -1);
    for (std::size_t a = 0; a < A; ++a) {
      int y = m.eta(i, s, a);
      if (slot_of[i][y] < 0) {
        slot_of[i][y] = static_cast<int>(slots.size());
        slots.push_back({i, y});
      }
    }
  }
  // Each action profile is checked once its last slot has been assigned.
  std::vector<std::vector<std::size_t>> closes(slots.size());
  for (std::size_t a = 0; a < A; ++a) {
    int last = 0;
    for (std::size_t i = 0; i < n; ++i) last = std::max(last, slot_of[i][m.eta(i, s, a)]);
    closes[last].push_back(a);
  }
  std::vector<int> value(slots.size(), -1);
  auto is_fixed = [&](std::size_t a) {
    for (std::size_t i = 0; i < n; ++i) {
      if (value[slot_of[i][m.eta(i, s, a)]] != m.action_digit(a, i)) return false;
    }
    return true;
  };
  std::function<bool(std::size_t)> dfs = [&](std::size_t t) -> bool {
    if (t == slots.size()) return true;
    for (std::size_t v = 0; v < m.action_size(slots[t].dm); ++v) {
      value[t] = static_cast<int>(v);
      bool dead = false;
      for (std::size_t a : closes[t]) {
        if (is_fixed(a)) {
          dead = true;
          break;
        }
      }
      if (!dead && dfs(t + 1)) return true;
    }
    value[t] = -1;
    return false;
  };
  if (!dfs(0)) return std::nullopt;
  PartialPolicy p = empty_partial(m);
  for (std::size_t t = 0; t < slots.size(); ++t) p[slots[t].dm][slots[t].y] = value[t];
  return p;
}

}  // namespace detail

// SM: decided per signal.  A signal fails when two action profiles can be
// fixed points of one policy, or some policy restricted to the measurements
// reachable there admits no fixed point.  The witness policy is extended
// greedily so that it exhibits multiple solutions at as many further
// signals as its constraints allow; remaining entries take the first action.
inline PropertyReport check_sm(const Model& m, const CheckOptions& opt = {}) {
  PropertyReport r{Property::SM, true, std::nullopt, std::nullopt};
  struct SliceResult {
    bool ok;
    bool ambiguous;
  };
  std::map<std::vector<int>, SliceResult> memo;
  auto signals = detail::signals_to_check(m, opt);
  for (std::size_t s : signals) {
    auto sig = detail::slice_signature(m, s);
    auto it = memo.find(sig);
    if (it != memo.end() && it->second.ok) continue;
    auto pair = detail::ambiguous_pair(m, s, nullptr);
    if (pair) {
      auto p = detail::empty_partial(m);
      auto pin = [&](std::size_t sig_idx, std::pair<std::size_t, std::size_t> ab) {
        for (std::size_t a : {ab.first, ab.second}) {
          for (std::size_t i = 0; i < m.n(); ++i) p[i][m.eta(i, sig_idx, a)] = m.action_digit(a, i);
        }
      };
      pin(s, *pair);
      for (std::size_t t : signals) {
        if (t == s) continue;
        if (auto more = detail::ambiguous_pair(m, t, &p)) pin(t, *more);
      }
      auto g = detail::complete(p);
      r.verdict = false;
      r.counterexample = Counterexample{s, g, pair->first,
                                        "policy admits at least two closed-loop solutions (" +
                                            m.action_label(pair->first) + ") and (" + m.action_label(pair->second) + ")"};
      return r;
    }
    if (auto p = detail::solutionless_policy(m, s)) {
      r.verdict = false;
      r.counterexample = Counterexample{s, detail::complete(*p), std::nullopt, "policy admits no closed-loop solution"};
      return r;
    }
    memo[sig] = {true, false};
  }
  return r;
}

namespace detail {

// Adversarial exploration of DF at one signal: the lowest-numbered DM
// whose measurement is pinned down acts, with every possible action.
// Returns the path to a deadlock as (dm, measurement, action) triples.
struct DfStep {
  std::size_t dm;
  int y;
  int action;
};

inline std::optional<std::vector<DfStep>> df_deadlock(const Model& m, std::size_t s, std::vector<int>& fixed,
                                                      std::vector<DfStep>& path) {
  std::size_t unfixed = 0;
  for (int v : fixed) unfixed += v < 0;
  if (unfixed == 0) return std::nullopt;
  for (std::size_t i = 0; i < m.n(); ++i) {
    if (fixed[i] >= 0) continue;
    auto y = m.determined_measurement(i, s, fixed);
    if (!y) continue;
    for (std::size_t a = 0; a < m.action_size(i); ++a) {
      fixed[i] = static_cast<int>(a);
      path.push_back({i, *y, static_cast<int>(a)});
      auto found = df_deadlock(m, s, fixed, path);
      path.pop_back();
      fixed[i] = -1;
      if (found) return found;
    }
    return std::nullopt;
  }
  return path;
}

}  // namespace detail

// DF: decided per signal by exploring every action the acting DM could take.
// A DM's action is realizable by some policy since each DM acts once.
inline PropertyReport check_df(const Model& m, const CheckOptions& opt = {}) {
  PropertyReport r{Property::DF, true, std::nullopt, std::nullopt};
  std::map<std::vector<int>, bool> memo;
  for (std::size_t s : detail::signals_to_check(m, opt)) {
    auto sig = detail::slice_signature(m, s);
    if (memo.count(sig)) continue;
    std::vector<int> fixed(m.n(), -1);
    std::vector<detail::DfStep> path;
    auto dead = detail::df_deadlock(m, s, fixed, path);
    if (dead) {
      auto p = detail::empty_partial(m);
      for (const auto& st : *dead) p[st.dm][st.y] = st.action;
      std::string who;
      for (const auto& st : *dead) who += " " + std::to_string(st.dm + 1);
      r.verdict = false;
      r.counterexample = Counterexample{s, detail::complete(p), std::nullopt,
                                        "no DM can act after" + (who.empty() ? std::string(" the start") : who)};
      return r;
    }
    memo[sig] = true;
  }
  return r;
}

namespace detail {

inline std::vector<std::size_t> prefix_coordinates(const Model& m, const std::vector<int>& dms) {
  std::vector<std::size_t> coords;
  for (std::size_t k = 0; k < m.n() + 2; ++k) coords.push_back(k);
  for (int d : dms) coords.push_back(m.n() + 2 + static_cast<std::size_t>(d));
  return coords;
}

// Pointwise CI search at outcome x: the k-th DM must have its measurement
// constant on the cylinder of outcomes sharing x's signals and the actions
// of the first k-1 DMs.
inline std::optional<std::vector<int>> ci_sequence(const Model& m, std::size_t x) {
  const auto& g = *m.ground();
  std::vector<int> seq;
  std::vector<bool> used(m.n(), false);
  std::function<bool()> extend = [&]() -> bool {
    if (seq.size() == m.n()) return true;
    auto cyl = sigma::cylinder(g, x, prefix_coordinates(m, seq));
    for (std::size_t i = 0; i < m.n(); ++i) {
      if (used[i] || !sigma::is_constant_on(m.info_field(i), cyl)) continue;
      used[i] = true;
      seq.push_back(static_cast<int>(i));
      if (extend()) return true;
      seq.pop_back();
      used[i] = false;
    }
    return false;
  };
  if (!extend()) return std::nullopt;
  return seq;
}

}  // namespace detail

inline PropertyReport check_ci(const Model& m, const CheckOptions& = {}) {
  PropertyReport r{Property::CI, true, std::nullopt, std::nullopt};
  FlatOrdering flat;
  flat.perm.resize(m.outcome_count());
  for (std::size_t x = 0; x < m.outcome_count(); ++x) {
    auto seq = detail::ci_sequence(m, x);
    if (!seq) {
      r.verdict = false;
      r.counterexample = Counterexample{m.signal_of(x), std::nullopt, m.action_of(x),
                                        "no DM ordering is implementable at this outcome"};
      return r;
    }
    flat.perm[x] = *seq;
  }
  r.ordering = std::move(flat);
  return r;
}

struct OrderingCheck {
  bool ok = true;
  std::size_t stage = 0;
  std::vector<int> prefix;
  std::string message;
};

namespace detail {

// Realized stage prefixes: for each k, the map from a length-k DM prefix to
// the outcomes where the ordering starts with it.
inline std::vector<std::map<std::vector<int>, std::vector<std::size_t>>> prefix_events(const Model& m,
                                                                                       const FlatOrdering& flat) {
  std::vector<std::map<std::vector<int>, std::vector<std::size_t>>> out(m.n());
  for (std::size_t x = 0; x < m.outcome_count(); ++x) {
    const auto& p = flat.perm[x];
    for (std::size_t k = 0; k < m.n(); ++k) out[k][std::vector<int>(p.begin(), p.begin() + k + 1)].push_back(x);
  }
  return out;
}

class PrefixFields {
 public:
  explicit PrefixFields(const Model& m) : m_(m) {}
  const sigma::PartitionField& get(const std::vector<int>& dms) {
    std::vector<int> key = dms;
    std::sort(key.begin(), key.end());
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      it = cache_.emplace(key, sigma::projection_field(m_.ground(), prefix_coordinates(m_, key))).first;
    }
    return it->second;
  }

 private:
  const Model& m_;
  std::map<std::vector<int>, sigma::PartitionField> cache_;
};

inline std::vector<bool> mask_of(std::size_t size, const std::vector<std::size_t>& event) {
  std::vector<bool> mask(size, false);
  for (auto x : event) mask[x] = true;
  return mask;
}

inline std::string prefix_text(const std::vector<int>& p) {
  std::string out;
  for (int d : p) out += (out.empty() ? "" : " ") + std::to_string(d + 1);
  return "(" + out + ")";
}

}  // namespace detail

// Whether each stage prefix of psi is decided by the signals and the
// actions of the earlier stages.
inline OrderingCheck check_rcs(const Model& m, const Ordering& psi) {
  auto flat = flatten(m, psi);
  auto events = detail::prefix_events(m, flat);
  detail::PrefixFields fields(m);
  for (std::size_t k = 0; k < m.n(); ++k) {
    for (const auto& [prefix, ev] : events[k]) {
      std::vector<int> before(prefix.begin(), prefix.end() - 1);
      if (!sigma::contains_event(fields.get(before), detail::mask_of(m.outcome_count(), ev))) {
        return {false, k + 1, prefix,
                "stage " + std::to_string(k + 1) + " prefix " + detail::prefix_text(prefix) +
                    " is not decided by the earlier stage actions"};
      }
    }
  }
  return {};
}

// The causality condition itself: on the event that the first k stages are
// s_1..s_k, every event observed by DM s_k lies in the field generated by
// the signals and the actions of s_1..s_(k-1).
inline OrderingCheck check_causal_ordering(const Model& m, const Ordering& psi) {
  auto flat = flatten(m, psi);
  auto events = detail::prefix_events(m, flat);
  detail::PrefixFields fields(m);
  for (std::size_t k = 0; k < m.n(); ++k) {
    for (const auto& [prefix, ev] : events[k]) {
      std::vector<int> before(prefix.begin(), prefix.end() - 1);
      const auto& f = fields.get(before);
      if (!sigma::contains_event(f, detail::mask_of(m.outcome_count(), ev)) ||
          !sigma::is_coarser_on(m.info_field(prefix.back()), f, ev)) {
        return {false, k + 1, prefix,
                "DM " + std::to_string(prefix.back() + 1) + " at stage " + std::to_string(k + 1) + " after " +
                    detail::prefix_text(before) + " observes events not fixed by the earlier actions"};
      }
    }
  }
  return {};
}

// Same condition in join form on the relabeled stage space: the field of
// (stage-k DM, its measurement) joined with the field of the first k stage
// indices must lie below the field of (signals, first k-1 stage actions).
// All fields are represented through their pullbacks to the outcome set.
inline OrderingCheck check_causal_join_form(const Model& m, const Ordering& psi) {
  auto flat = flatten(m, psi);
  const auto& g = m.ground();
  for (std::size_t k = 0; k < m.n(); ++k) {
    auto observed = sigma::field_from_map(g, [&](std::size_t x) {
      int dm = flat.perm[x][k];
      return std::optional<std::pair<int, int>>({dm, m.eta(dm, x)});
    });
    auto stages = sigma::field_from_map(g, [&](std::size_t x) {
      return std::optional<std::vector<int>>(std::vector<int>(flat.perm[x].begin(), flat.perm[x].begin() + k + 1));
    });
    auto past = sigma::field_from_map(g, [&](std::size_t x) {
      std::vector<int> key{static_cast<int>(m.signal_of(x))};
      for (std::size_t j = 0; j < k; ++j) {
        int dm = flat.perm[x][j];
        key.push_back(m.union_id(dm, m.action_digit(m.action_of(x), dm)));
      }
      return std::optional<std::vector<int>>(key);
    });
    if (!sigma::is_coarser(sigma::join(observed, stages), past)) {
      return {false, k + 1, {}, "join-form condition fails at stage " + std::to_string(k + 1)};
    }
  }
  return {};
}

namespace detail {

// Signal-coordinate subsets in search order: fewer noise coordinates first,
// then smaller, then lexicographic.
inline std::vector<std::vector<int>> dependency_subsets(std::size_t n_signals) {
  std::vector<std::vector<int>> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n_signals); ++mask) {
    std::vector<int> d;
    for (std::size_t k = 0; k < n_signals; ++k) {
      if (mask & (std::size_t{1} << k)) d.push_back(static_cast<int>(k));
    }
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    auto noise = [](const std::vector<int>& d) { return std::count_if(d.begin(), d.end(), [](int c) { return c >= 2; }); };
    if (noise(a) != noise(b)) return noise(a) < noise(b);
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  return out;
}

struct TreeSearch {
  const Model& m;
  std::vector<int> d;
  PrefixFields fields;
  OrderingTree tree;
  std::optional<std::pair<std::size_t, std::size_t>> stuck;  // (signal, action) at a dead end

  TreeSearch(const Model& model, std::vector<int> coords) : m(model), d(std::move(coords)), fields(model) {
    tree.stages.resize(m.n());
    for (auto& st : tree.stages) st.signal_args = d;
  }

  // Grows the tree below a node whose event holds the signals matching
  // `dval` on D and the listed DMs' actions.
  bool grow(const std::vector<int>& dval, std::vector<int>& dms, std::vector<int>& acts,
            const std::vector<std::size_t>& event) {
    std::size_t k = dms.size();
    if (k == m.n()) return true;
    const auto& f = fields.get(dms);
    for (std::size_t i = 0; i < m.n(); ++i) {
      if (std::find(dms.begin(), dms.end(), static_cast<int>(i)) != dms.end()) continue;
      if (!sigma::is_coarser_on(m.info_field(i), f, event)) continue;
      std::vector<int> key = dval;
      for (std::size_t j = 0; j < k; ++j) key.push_back(m.union_id(dms[j], acts[j]));
      tree.stages[k].rows[key] = static_cast<int>(i);
      bool ok = true;
      for (std::size_t a = 0; a < m.action_size(i) && ok; ++a) {
        std::vector<std::size_t> sub;
        for (auto x : event) {
          if (m.action_digit(m.action_of(x), i) == static_cast<int>(a)) sub.push_back(x);
        }
        dms.push_back(static_cast<int>(i));
        acts.push_back(static_cast<int>(a));
        ok = grow(dval, dms, acts, sub);
        dms.pop_back();
        acts.pop_back();
      }
      if (ok) return true;
      erase_below(k, key);
    }
    if (!stuck && !event.empty()) stuck = std::make_pair(m.signal_of(event.front()), m.action_of(event.front()));
    return false;
  }

  void erase_below(std::size_t k, const std::vector<int>& key) {
    for (std::size_t j = k; j < m.n(); ++j) {
      auto& rows = tree.stages[j].rows;
      for (auto it = rows.begin(); it != rows.end();) {
        bool below = it->first.size() >= key.size() && std::equal(key.begin(), key.end(), it->first.begin());
        it = below ? rows.erase(it) : std::next(it);
      }
    }
  }

  bool run() {
    std::map<std::vector<int>, std::vector<std::size_t>> by_value;
    for (std::size_t x = 0; x < m.outcome_count(); ++x) {
      std::vector<int> v;
      for (int c : d) v.push_back(m.signal_digit(m.signal_of(x), c));
      by_value[v].push_back(x);
    }
    for (const auto& [v, ev] : by_value) {
      std::vector<int> dms, acts;
      if (!grow(v, dms, acts, ev)) return false;
    }
    return true;
  }
};

}  // namespace detail

// C: searches ordering trees whose stages read a subset D of the signal
// coordinates, trying the subsets in a fixed order.  Within a tree the
// lowest-numbered DM whose measurement is pinned down on the node's event
// is taken first.  The witness is replayed through the literal causality
// condition before it is returned.
inline PropertyReport check_c(const Model& m, const CheckOptions& = {}) {
  PropertyReport r{Property::C, false, std::nullopt, std::nullopt};
  std::optional<std::pair<std::size_t, std::size_t>> stuck;
  for (const auto& d : detail::dependency_subsets(m.n() + 2)) {
    detail::TreeSearch search(m, d);
    if (search.run()) {
      Ordering psi = search.tree;
      if (!check_rcs(m, psi).ok || !check_causal_ordering(m, psi).ok) {
        throw Error(ErrorCode::NotCausal, "internal error: ordering tree failed its replay");
      }
      r.verdict = true;
      r.ordering = std::move(psi);
      return r;
    }
    if (d.size() == m.n() + 2) stuck = search.stuck;
  }
  Counterexample ce;
  if (stuck) {
    ce.signal = stuck->first;
    ce.action = stuck->second;
  }
  ce.reason = "no ordering function is causal; the search stalls at this outcome";
  r.counterexample = ce;
  return r;
}

enum class InfoClass { Classical, PartiallyNested, Nonclassical };

inline std::string info_class_name(InfoClass c) {
  switch (c) {
    case InfoClass::Classical: return "classical";
    case InfoClass::PartiallyNested: return "partially_nested";
    case InfoClass::Nonclassical: return "nonclassical";
  }
  return "?";
}

struct Classification {
  InfoClass cls = InfoClass::Classical;
  std::string reason;
};

// Classifies a model along a causal ordering.  On each realized ordering
// event, an earlier DM "affects" a later one when changing the earlier
// action at some point of the event changes the later measurement.  The
// structure is classical when every earlier measurement is recoverable
// from every later one on the event, and partially nested when that holds
// at least wherever the earlier DM affects the later one.
inline Classification classify(const Model& m, const Ordering& psi) {
  if (auto c = check_causal_ordering(m, psi); !c.ok) throw Error(ErrorCode::NotCausal, c.message);
  auto flat = flatten(m, psi);
  std::map<std::vector<int>, std::vector<std::size_t>> by_perm;
  for (std::size_t x = 0; x < m.outcome_count(); ++x) by_perm[flat.perm[x]].push_back(x);
  bool classical = true, nested = true;
  std::string why_not_classical, why_not_nested;
  for (const auto& [perm, ev] : by_perm) {
    for (std::size_t k = 0; k < perm.size(); ++k) {
      for (std::size_t i = k + 1; i < perm.size(); ++i) {
        int early = perm[k], late = perm[i];
        bool contains = sigma::is_coarser_on(m.info_field(early), m.info_field(late), ev);
        if (contains) continue;
        std::string where = "on ordering " + detail::prefix_text(perm) + ", DM " + std::to_string(late + 1) +
                            " cannot recover DM " + std::to_string(early + 1) + "'s measurement";
        if (classical) why_not_classical = where;
        classical = false;
        bool affects = false;
        for (std::size_t x : ev) {
          std::size_t s = m.signal_of(x), a = m.action_of(x);
          for (std::size_t v = 0; v < m.action_size(early) && !affects; ++v) {
            if (m.eta(late, s, m.with_action(a, early, static_cast<int>(v))) != m.eta(late, x)) affects = true;
          }
          if (affects) break;
        }
        if (affects) {
          if (nested) why_not_nested = where + " although it is affected by DM " + std::to_string(early + 1);
          nested = false;
        }
      }
    }
  }
  if (classical) return {InfoClass::Classical, "every later DM knows what earlier DMs knew"};
  if (nested) return {InfoClass::PartiallyNested, why_not_classical + ", but it is not affected by that DM"};
  return {InfoClass::Nonclassical, why_not_nested};
}

struct Verdicts {
  bool sm = false, df = false, ci = false, c = false;
};

inline Verdicts all_verdicts(const Model& m, const CheckOptions& opt = {}) {
  return {check_sm(m, opt).verdict, check_df(m, opt).verdict, check_ci(m, opt).verdict, check_c(m, opt).verdict};
}

struct AuditViolation {
  std::size_t model = 0;
  std::string relation;
  Verdicts verdicts;
};

// Checks C => CI, CI <=> DF and DF => SM on each model.  The CI/DF relation
// compares a prior-free property with one taken over the support, so the
// batch is meaningful for full-support priors.
inline std::vector<AuditViolation> audit_implications(const std::vector<const Model*>& batch, unsigned jobs = 1,
                                                      std::vector<Verdicts>* verdicts_out = nullptr) {
  std::vector<Verdicts> verdicts(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t k) { verdicts[k] = all_verdicts(*batch[k]); });
  std::vector<AuditViolation> out;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& v = verdicts[k];
    if (v.c && !v.ci) out.push_back({k, "C => CI", v});
    if (v.ci != v.df) out.push_back({k, "CI <=> DF", v});
    if (v.df && !v.sm) out.push_back({k, "DF => SM", v});
  }
  if (verdicts_out) *verdicts_out = std::move(verdicts);
  return out;
}

}  // namespace nst
