#pragma once

// Exhaustive team-optimal policy search on dynamic and reduced static
// models, and comparison of their optimal sets.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rational.hpp"
#include "static_model.hpp"

namespace nst {

struct OptimizeOptions {
  unsigned jobs = 1;
  std::uint64_t budget = enumeration_budget();
  bool keep_values = false;
};

struct OptimizationResult {
  Rational optimum;
  std::vector<std::uint64_t> argmin;  // canonical policy indices, ascending
  PolicyProfile representative;       // least canonical index in the argmin
  std::uint64_t evaluated = 0;
  std::vector<Rational> values;       // per policy, when requested
};

namespace detail {

inline void check_budget(const PolicySpace& space, std::uint64_t budget) {
  if (space.overflow() || space.size() > budget) {
    throw Error(ErrorCode::BudgetExceeded,
                "policy space has " + (space.overflow() ? std::string("more than 2^64") : std::to_string(space.size())) +
                    " profiles, above the budget of " + std::to_string(budget));
  }
}

// Minimizes `value` over the whole space.  Chunks are reduced in index
// order, so the result does not depend on the number of workers.
inline OptimizationResult minimize(const PolicySpace& space, const std::function<Rational(const PolicyProfile&)>& value,
                                   const OptimizeOptions& opt) {
  check_budget(space, opt.budget);
  const std::uint64_t total = space.size();
  const std::uint64_t chunks = std::min<std::uint64_t>(total, 256);
  struct Partial {
    Rational best;
    std::vector<std::uint64_t> at;
  };
  std::vector<Partial> parts(chunks);
  OptimizationResult res;
  if (opt.keep_values) res.values.resize(total);
  parallel_for(chunks, opt.jobs, [&](std::size_t c) {
    const std::uint64_t lo = total * c / chunks, hi = total * (c + 1) / chunks;
    auto& p = parts[c];
    for (std::uint64_t k = lo; k < hi; ++k) {
      Rational v = value(space.decode(k));
      if (p.at.empty() || v < p.best) {
        p.best = v;
        p.at = {k};
      } else if (v == p.best) {
        p.at.push_back(k);
      }
      if (opt.keep_values) res.values[k] = v;
    }
  });
  bool first = true;
  for (auto& p : parts) {
    if (p.at.empty()) continue;
    if (first || p.best < res.optimum) {
      res.optimum = p.best;
      res.argmin = p.at;
      first = false;
    } else if (p.best == res.optimum) {
      res.argmin.insert(res.argmin.end(), p.at.begin(), p.at.end());
    }
  }
  res.evaluated = total;
  res.representative = space.decode(res.argmin.front());
  return res;
}

inline PolicySpace static_space(const ReducedStaticModel& r) {
  std::vector<std::pair<std::size_t, std::size_t>> shape;
  for (std::size_t i = 0; i < r.n; ++i) shape.push_back({r.measurements[i].size(), r.actions[i].size()});
  return PolicySpace(shape);
}

}  // namespace detail

// Exact optimum and full argmin by enumerating every policy profile.
inline OptimizationResult enumerate_optimal(const Model& m, const OptimizeOptions& opt = {}) {
  return detail::minimize(PolicySpace(m), [&](const PolicyProfile& g) { return m.expected_cost(g); }, opt);
}

inline OptimizationResult enumerate_optimal(const ReducedStaticModel& r, const OptimizeOptions& opt = {}) {
  if (r.mode == ReducedStaticModel::Mode::PolicyParameterized) {
    throw Error(ErrorCode::NotApplicable, "a policy-parameterized reduction is only valid at its own policy");
  }
  return detail::minimize(detail::static_space(r), [&](const PolicyProfile& g) { return static_value(r, g); }, opt);
}

struct ArgminComparison {
  bool applicable = true;
  bool equal = false;
  Rational dynamic_optimum, static_optimum;
  std::vector<std::uint64_t> dynamic_argmin, static_argmin;
  struct Difference {
    std::uint64_t policy;
    Rational dynamic, reduced;
  };
  std::vector<Difference> differences;  // first few policies whose values differ
  std::uint64_t difference_count = 0;
  std::string note;
};

// Equal optima and identical argmin sets.  Policy-parameterized reductions
// are compared at their own policy only and flagged as not applicable.
inline ArgminComparison compare_argmin(const Model& m, const ReducedStaticModel& r, const OptimizeOptions& opt = {}) {
  check_static_shape(m, r);
  ArgminComparison cmp;
  if (r.mode == ReducedStaticModel::Mode::PolicyParameterized) {
    cmp.applicable = false;
    cmp.dynamic_optimum = m.expected_cost(*r.policy);
    cmp.static_optimum = static_value(r, *r.policy);
    cmp.equal = cmp.dynamic_optimum == cmp.static_optimum;
    cmp.note = "argmin comparison is not applicable to a policy-parameterized reduction; values compared at its policy";
    return cmp;
  }
  OptimizeOptions keep = opt;
  keep.keep_values = true;
  auto dyn = enumerate_optimal(m, keep);
  auto st = enumerate_optimal(r, keep);
  cmp.dynamic_optimum = dyn.optimum;
  cmp.static_optimum = st.optimum;
  cmp.dynamic_argmin = dyn.argmin;
  cmp.static_argmin = st.argmin;
  for (std::uint64_t k = 0; k < dyn.values.size(); ++k) {
    if (dyn.values[k] == st.values[k]) continue;
    ++cmp.difference_count;
    if (cmp.differences.size() < 16) cmp.differences.push_back({k, dyn.values[k], st.values[k]});
  }
  cmp.equal = dyn.optimum == st.optimum && dyn.argmin == st.argmin;
  return cmp;
}

}  // namespace nst
