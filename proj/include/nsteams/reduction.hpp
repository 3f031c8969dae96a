#pragma once

// Constructions on intrinsic models: the imaginary sequential model, the
// policy-independent static reduction of a causal model, the
// policy-parameterized reduction of a solvable one, the causal equivalent
// of a causally implementable model, the reduction of partially nested
// models through invertible measurement decompositions, and the
// simulator-based decoupling.  Every construction comes with an exact
// certificate routine.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "error.hpp"
#include "generate.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "properties.hpp"
#include "rational.hpp"
#include "static_model.hpp"

namespace nst {

enum class LabelMode { Auto, Union, Tagged };

// Stage-indexed view of a causal model.  Stage k's measurement and action
// are written in the union (or DM-tagged) label alphabets; the maps y_label
// and u_label relabel DM i's symbols into stage labels.
struct ImaginaryModel {
  StageLabels labels = StageLabels::Union;
  std::size_t n = 0;
  std::vector<Alphabet> actions, measurements;
  Alphabet stage_y, stage_u;
  std::vector<std::vector<int>> y_label, u_label;
  std::vector<std::pair<int, int>> y_owner;

  std::map<std::pair<int, int>, Rational> base;
  std::map<History, int> order;  // acting DM after each supported history; union labels only
  std::map<History, std::vector<Rational>> kernel;
  std::map<History, Rational> mass;
  std::map<History, std::size_t> leaf_action;  // full histories -> joint action index
  std::vector<std::vector<int>> permutations;
};

struct ImaginaryOptions {
  LabelMode labels = LabelMode::Auto;
  // Number of random policies under which the kernels are recomputed and
  // compared; zero skips the check.
  std::size_t certify_policies = 2;
  std::uint64_t seed = 1;
};

struct KernelCertificate {
  bool ok = true;
  std::size_t policies = 0;
  std::size_t rows_compared = 0;
  std::string detail;
};

namespace detail {

// DM acting at stage dms.size() given the DMs and actions fixed so far.
inline int stage_dm(const Model& m, const Ordering& psi, std::size_t s, const std::vector<int>& dms,
                    const std::vector<int>& acts) {
  const std::size_t k = dms.size();
  if (auto* tree = std::get_if<OrderingTree>(&psi)) {
    const auto& rule = tree->stages.at(k);
    std::vector<int> key;
    for (int c : rule.signal_args) key.push_back(m.signal_digit(s, c));
    for (std::size_t j = 0; j < k; ++j) key.push_back(m.union_id(dms[j], acts[j]));
    auto it = rule.rows.find(key);
    if (it == rule.rows.end()) {
      throw Error(ErrorCode::MissingEntry, "ordering stage " + std::to_string(k + 1) + " has no row at signal (" +
                                               m.signal_label(s) + ")");
    }
    return it->second;
  }
  const auto& flat = std::get<FlatOrdering>(psi);
  std::size_t a = 0;
  for (std::size_t j = 0; j < k; ++j) a += static_cast<std::size_t>(acts[j]) * m.action_stride(dms[j]);
  const auto& perm = flat.perm.at(m.outcome(s, a));
  if (!std::equal(dms.begin(), dms.end(), perm.begin())) {
    throw Error(ErrorCode::NotCausal, "ordering prefix is not determined by earlier actions");
  }
  return perm[k];
}

inline void require_causal(const Model& m, const Ordering& psi) {
  if (auto c = check_rcs(m, psi); !c.ok) throw Error(ErrorCode::NotCausal, c.message);
  if (auto c = check_causal_ordering(m, psi); !c.ok) throw Error(ErrorCode::NotCausal, c.message);
}

template <class T>
void copy_alphabets(T& t, const Model& m, StageLabels labels) {
  t.n = m.n();
  t.labels = labels;
  t.actions.clear();
  t.measurements.clear();
  for (const auto& d : m.spec().dms) {
    t.actions.push_back(d.actions);
    t.measurements.push_back(d.measurements);
  }
  assign_labels(t);
}

// Stage tables with the given labels, or nullopt when union labels do not
// determine the acting DM.
inline std::optional<ImaginaryModel> stage_tables(const Model& m, const Ordering& psi, StageLabels labels) {
  ImaginaryModel im;
  copy_alphabets(im, m, labels);
  const std::size_t n = m.n();
  std::map<History, std::vector<Rational>> weight;
  std::set<std::vector<int>> perms;
  bool conflict = false;
  std::vector<int> fixed(n, -1), dms, acts;
  History h;
  std::function<void(std::size_t, const Rational&, std::size_t)> visit = [&](std::size_t s, const Rational& p,
                                                                           std::size_t a_acc) {
    if (conflict) return;
    im.mass[h] += p;
    const std::size_t k = dms.size();
    if (k == n) {
      im.leaf_action[h] = a_acc;
      perms.insert(dms);
      return;
    }
    int dm = stage_dm(m, psi, s, dms, acts);
    auto y = m.determined_measurement(dm, s, fixed);
    if (!y) {
      throw Error(ErrorCode::NotCausal, "measurement of DM " + std::to_string(dm + 1) + " at stage " +
                                            std::to_string(k + 1) + " is not determined by earlier actions");
    }
    int lab = im.y_label[dm][*y];
    if (labels == StageLabels::Union) {
      auto [it, inserted] = im.order.emplace(h, dm);
      if (!inserted && it->second != dm) {
        conflict = true;
        return;
      }
    }
    auto& row = weight[h];
    if (row.empty()) row.assign(im.stage_y.size(), Rational(0));
    row[lab] += p;
    for (std::size_t a = 0; a < m.action_size(dm); ++a) {
      fixed[dm] = static_cast<int>(a);
      dms.push_back(dm);
      acts.push_back(static_cast<int>(a));
      h.push_back(lab);
      h.push_back(im.u_label[dm][a]);
      visit(s, p, a_acc + a * m.action_stride(dm));
      h.resize(h.size() - 2);
      dms.pop_back();
      acts.pop_back();
    }
    fixed[dm] = -1;
  };
  for (std::size_t s : m.support()) {
    const int w0 = m.signal_digit(s, 0), ws0 = m.signal_digit(s, 1);
    im.base[{w0, ws0}] += m.prior(s);
    h = {w0, ws0};
    visit(s, m.prior(s), 0);
    if (conflict) return std::nullopt;
  }
  for (auto& [key, row] : weight) {
    const Rational& total = im.mass.at(key);
    for (auto& v : row) v /= total;
    im.kernel[key] = std::move(row);
  }
  im.permutations.assign(perms.begin(), perms.end());
  return im;
}

}  // namespace detail

// Recomputes the stage kernels by forward simulation under each policy and
// compares every supported row with the policy-free table.
inline KernelCertificate certify_kernels(const Model& m, const Ordering& psi, const ImaginaryModel& im,
                                         const std::vector<PolicyProfile>& policies) {
  KernelCertificate cert;
  for (const auto& g : policies) {
    m.check_policy(g);
    std::map<History, std::vector<Rational>> rows;
    std::map<History, Rational> mass;
    for (std::size_t s : m.support()) {
      History h{m.signal_digit(s, 0), m.signal_digit(s, 1)};
      std::vector<int> fixed(m.n(), -1), dms, acts;
      for (std::size_t k = 0; k < m.n(); ++k) {
        int dm = detail::stage_dm(m, psi, s, dms, acts);
        auto y = m.determined_measurement(dm, s, fixed);
        if (!y) throw Error(ErrorCode::NotCausal, "stage measurement is not determined along a policy path");
        int lab = im.y_label[dm][*y];
        mass[h] += m.prior(s);
        auto& row = rows[h];
        if (row.empty()) row.assign(im.stage_y.size(), Rational(0));
        row[lab] += m.prior(s);
        int u = g.table[dm][*y];
        fixed[dm] = u;
        dms.push_back(dm);
        acts.push_back(u);
        h.push_back(lab);
        h.push_back(im.u_label[dm][u]);
      }
    }
    for (auto& [key, row] : rows) {
      for (auto& v : row) v /= mass.at(key);
      auto it = im.kernel.find(key);
      ++cert.rows_compared;
      if (it == im.kernel.end() || it->second != row) {
        if (cert.ok) cert.detail = "kernel row after a history of length " + std::to_string(key.size()) + " differs";
        cert.ok = false;
      }
    }
    ++cert.policies;
  }
  return cert;
}

// Distinct random policies; fewer when the policy space is smaller.
inline std::vector<PolicyProfile> distinct_random_policies(const Model& m, std::size_t count, std::uint64_t seed) {
  PolicySpace space(m);
  std::vector<PolicyProfile> out;
  std::set<PolicyProfile> seen;
  if (!space.overflow() && space.size() <= count) {
    for (std::uint64_t k = 0; k < space.size(); ++k) out.push_back(space.decode(k));
    return out;
  }
  SplitMix64 rng(seed);
  while (out.size() < count) {
    auto g = random_policy(m, rng);
    if (seen.insert(g).second) out.push_back(std::move(g));
  }
  return out;
}

// Builds the imaginary model along a causal ordering.  Kernels are obtained
// by aggregating over every action branch, so they do not refer to any
// policy; the certificate then recomputes them under random policies.
inline ImaginaryModel build_imaginary(const Model& m, const Ordering& psi, const ImaginaryOptions& opt = {}) {
  detail::require_causal(m, psi);
  std::optional<ImaginaryModel> im;
  if (opt.labels != LabelMode::Tagged) {
    im = detail::stage_tables(m, psi, StageLabels::Union);
    if (!im && opt.labels == LabelMode::Union) {
      throw Error(ErrorCode::NotCausal, "union stage labels do not determine the acting DM; use tagged labels");
    }
  }
  if (!im) im = detail::stage_tables(m, psi, StageLabels::Tagged);
  if (opt.certify_policies > 0) {
    auto cert = certify_kernels(m, psi, *im, distinct_random_policies(m, opt.certify_policies, opt.seed));
    if (!cert.ok) throw Error(ErrorCode::PolicyDependenceDetected, cert.detail);
  }
  return std::move(*im);
}

// Ordering used when none is passed: the declared one, else the witness of
// the causality search.
inline Ordering causal_witness(const Model& m) {
  if (m.spec().ordering) return *m.spec().ordering;
  auto rep = check_c(m);
  if (!rep.verdict) throw Error(ErrorCode::NotCausal, "the model does not have property C");
  return *rep.ordering;
}

struct StaticOptions {
  LabelMode labels = LabelMode::Auto;
  ReferenceKind reference = ReferenceKind::Uniform;
  // Explicit reference: one row per stage, or a single row used at every stage.
  std::vector<std::vector<Rational>> explicit_reference;
  std::size_t certify_policies = 2;
  std::uint64_t seed = 1;
};

namespace detail {

inline std::vector<std::vector<Rational>> stage_references(const StaticOptions& opt, std::size_t n, std::size_t size) {
  std::vector<std::vector<Rational>> out;
  if (opt.reference == ReferenceKind::Explicit) {
    if (opt.explicit_reference.size() != 1 && opt.explicit_reference.size() != n) {
      throw Error(ErrorCode::InvalidArgument, "explicit reference needs one row or one row per stage");
    }
    for (std::size_t k = 0; k < n; ++k) {
      const auto& row = opt.explicit_reference[opt.explicit_reference.size() == 1 ? 0 : k];
      Rational sum = 0;
      for (const auto& q : row) {
        if (q < 0) throw Error(ErrorCode::NormalizationError, "reference weights must be nonnegative");
        sum += q;
      }
      if (row.size() != size || sum != 1) {
        throw Error(ErrorCode::NormalizationError, "explicit reference row is not a distribution on the stage alphabet");
      }
      out.push_back(row);
    }
    return out;
  }
  out.assign(n, reference_distribution(opt.reference, size));
  return out;
}

// Densities f = kernel / Q and the reduced cost c~ = c * prod f on every
// full supported history.
inline void fill_densities(ReducedStaticModel& r, const Model& m, const std::map<History, std::vector<Rational>>& kernel,
                           const std::map<History, std::size_t>& leaves) {
  for (const auto& [h, row] : kernel) {
    const std::size_t k = (h.size() - 2) / 2;
    std::vector<Rational> f(row.size());
    for (std::size_t y = 0; y < row.size(); ++y) {
      if (row[y] == 0) continue;
      if (r.reference[k][y] == 0) {
        throw Error(ErrorCode::InvalidArgument, "reference measure of stage " + std::to_string(k + 1) +
                                                    " gives zero mass to the realized label '" + r.stage_y[y] + "'");
      }
      f[y] = row[y] / r.reference[k][y];
    }
    r.density[h] = std::move(f);
  }
  for (const auto& [h, a] : leaves) {
    Rational c = m.cost_at(h[0], h[1], a);
    History prefix{h[0], h[1]};
    for (std::size_t k = 0; k < r.n; ++k) {
      c *= r.density.at(prefix)[h[2 + 2 * k]];
      prefix.push_back(h[2 + 2 * k]);
      prefix.push_back(h[3 + 2 * k]);
    }
    r.cost[h] = c;
  }
}

inline ReducedStaticModel static_frame(const Model& m, StageLabels labels) {
  ReducedStaticModel r;
  detail::copy_alphabets(r, m, labels);
  r.w0 = m.spec().signals[0];
  r.ws0 = m.spec().signals[1];
  return r;
}

}  // namespace detail

// Policy-independent static reduction of a causal model.
inline ReducedStaticModel static_reduce(const Model& m, const Ordering& psi, const StaticOptions& opt = {}) {
  auto im = build_imaginary(m, psi, {opt.labels, opt.certify_policies, opt.seed});
  auto r = detail::static_frame(m, im.labels);
  r.mode = ReducedStaticModel::Mode::PolicyFree;
  r.reference_kind = opt.reference;
  r.reference = detail::stage_references(opt, m.n(), r.stage_y.size());
  r.base = im.base;
  r.order = im.order;
  r.permutations = im.permutations;
  detail::fill_densities(r, m, im.kernel, im.leaf_action);
  return r;
}

inline ReducedStaticModel static_reduce(const Model& m, const StaticOptions& opt = {}) {
  return static_reduce(m, causal_witness(m), opt);
}

// Policy-parameterized reduction of a solvable model at one policy.  The
// stages follow a fixed DM order (1..N unless given); stage labels are
// DM-tagged and stage k's reference is uniform on DM order[k]'s symbols.
inline ReducedStaticModel sm_reduce(const Model& m, const PolicyProfile& g, std::vector<int> stage_order = {}) {
  m.check_policy(g);
  const std::size_t n = m.n();
  if (stage_order.empty()) {
    for (std::size_t i = 0; i < n; ++i) stage_order.push_back(static_cast<int>(i));
  }
  {
    auto sorted = stage_order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
      if (sorted.size() != n || sorted[i] != static_cast<int>(i)) {
        throw Error(ErrorCode::InvalidArgument, "stage order must be a permutation of the DMs");
      }
    }
  }
  auto r = detail::static_frame(m, StageLabels::Tagged);
  r.mode = ReducedStaticModel::Mode::PolicyParameterized;
  r.reference_kind = ReferenceKind::Uniform;
  r.policy = g;
  r.permutations = {stage_order};
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<Rational> q(r.stage_y.size());
    int dm = stage_order[k];
    for (int lab : r.y_label[dm]) q[lab] = ratio(1, static_cast<long>(m.measurement_size(dm)));
    r.reference.push_back(std::move(q));
  }
  std::map<History, std::vector<Rational>> rows;
  std::map<History, Rational> mass;
  std::map<History, std::size_t> leaves;
  for (std::size_t s : m.support()) {
    const std::size_t a = m.solution(g, s);
    const int w0 = m.signal_digit(s, 0), ws0 = m.signal_digit(s, 1);
    r.base[{w0, ws0}] += m.prior(s);
    History h{w0, ws0};
    for (std::size_t k = 0; k < n; ++k) {
      int dm = stage_order[k];
      int lab = r.y_label[dm][m.eta(dm, s, a)];
      r.order[h] = dm;
      mass[h] += m.prior(s);
      auto& row = rows[h];
      if (row.empty()) row.assign(r.stage_y.size(), Rational(0));
      row[lab] += m.prior(s);
      h.push_back(lab);
      h.push_back(r.u_label[dm][m.action_digit(a, dm)]);
    }
    leaves[h] = a;
  }
  for (auto& [h, row] : rows) {
    for (auto& v : row) v /= mass.at(h);
  }
  detail::fill_densities(r, m, rows, leaves);
  return r;
}

struct ValueCertificate {
  bool ok = true;
  bool exhaustive = true;
  std::uint64_t policies = 0;
  std::uint64_t mismatch_count = 0;
  struct Mismatch {
    std::uint64_t index;
    Rational dynamic, reduced;
  };
  std::vector<Mismatch> mismatches;  // at most a handful are kept
};

// Value condition: J(gamma) on the dynamic model equals the reduced value,
// over every policy profile when the space fits in `limit`, otherwise over
// `samples` seeded random profiles.  Policy-parameterized reductions are
// only checked at their own policy.
inline ValueCertificate certify_values(const Model& m, const ReducedStaticModel& r, unsigned jobs = 1,
                                       std::uint64_t limit = enumeration_budget(), std::uint64_t samples = 1000,
                                       std::uint64_t seed = 1) {
  check_static_shape(m, r);
  ValueCertificate cert;
  PolicySpace space(m);
  std::vector<std::uint64_t> indices;
  if (r.mode == ReducedStaticModel::Mode::PolicyParameterized) {
    indices.push_back(space.overflow() ? 0 : space.encode(*r.policy));
  } else if (!space.overflow() && space.size() <= limit) {
    indices.resize(space.size());
    for (std::uint64_t k = 0; k < space.size(); ++k) indices[k] = k;
  } else {
    cert.exhaustive = false;
    SplitMix64 rng(seed);
    for (std::uint64_t k = 0; k < samples; ++k) indices.push_back(space.overflow() ? k : rng.below(space.size()));
  }
  std::vector<char> ok(indices.size(), 1);
  std::vector<Rational> dyn(indices.size()), red(indices.size());
  SplitMix64 fallback(seed);
  std::vector<PolicyProfile> overflow_policies;
  if (space.overflow() && r.mode == ReducedStaticModel::Mode::PolicyFree) {
    for (std::size_t k = 0; k < indices.size(); ++k) overflow_policies.push_back(random_policy(m, fallback));
  }
  parallel_for(indices.size(), jobs, [&](std::size_t k) {
    PolicyProfile g = r.mode == ReducedStaticModel::Mode::PolicyParameterized ? *r.policy
                      : space.overflow()                                    ? overflow_policies[k]
                                                                            : space.decode(indices[k]);
    dyn[k] = m.expected_cost(g);
    red[k] = static_value(r, g);
    ok[k] = dyn[k] == red[k];
  });
  cert.policies = indices.size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (ok[k]) continue;
    cert.ok = false;
    ++cert.mismatch_count;
    if (cert.mismatches.size() < 8) cert.mismatches.push_back({indices[k], dyn[k], red[k]});
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Causal equivalent of a causally implementable model.

struct CiEquivalence {
  IntrinsicModel spec;
  OrderingTree ordering;
  std::size_t leaves = 0;  // symbols of the new ws0 coordinate
};

namespace detail {

// Inverse-CDF realization of the tagged stage kernels.  At every stage the
// unit interval is cut at the cumulative sums of all kernel rows that can
// occur in the current context, so that one uniform cell index selects a
// label for each of those rows at once.
struct InverseCdf {
  const ImaginaryModel& im;
  std::map<std::vector<int>, std::vector<Rational>> cuts;  // context -> sorted cut points in [0, 1]

  explicit InverseCdf(const ImaginaryModel& model) : im(model) {}

  int label_at(const History& h, const Rational& point) const {
    const auto& row = im.kernel.at(h);
    Rational cum = 0;
    for (std::size_t y = 0; y < row.size(); ++y) {
      cum += row[y];
      if (row[y] != 0 && point < cum) return static_cast<int>(y);
    }
    throw Error(ErrorCode::NormalizationError, "kernel row does not reach one");
  }

  // Histories that can follow `h` once the stage label is drawn.
  std::vector<History> children(const History& h, int lab) const {
    std::vector<History> out;
    auto [dm, local] = im.y_owner[lab];
    for (int u : im.u_label[dm]) {
      History c = h;
      c.push_back(lab);
      c.push_back(u);
      if (im.mass.count(c)) out.push_back(std::move(c));
    }
    return out;
  }

  void expand(std::vector<int>& context, const std::vector<History>& histories, std::size_t k,
              const std::function<void(const std::vector<int>&, const Rational&)>& leaf, const Rational& weight) {
    if (k == im.n) {
      leaf(context, weight);
      return;
    }
    std::set<Rational> points{Rational(0), Rational(1)};
    for (const auto& h : histories) {
      Rational cum = 0;
      for (const auto& p : im.kernel.at(h)) {
        cum += p;
        points.insert(cum);
      }
    }
    std::vector<Rational> cut(points.begin(), points.end());
    cuts[context] = cut;
    for (std::size_t j = 0; j + 1 < cut.size(); ++j) {
      std::vector<History> next;
      for (const auto& h : histories) {
        for (auto& c : children(h, label_at(h, cut[j]))) next.push_back(std::move(c));
      }
      context.push_back(static_cast<int>(j));
      expand(context, next, k + 1, leaf, weight * (cut[j + 1] - cut[j]));
      context.pop_back();
    }
  }
};

}  // namespace detail

// Builds a model with property C whose ordering reads only (w0, ws0') and
// earlier actions.  The new ws0' coordinate packs the old ws0 together with
// one inverse-CDF cell index per stage; the other noise coordinates become
// trivial.  Every DM keeps its alphabets, and for every policy the joint
// law of (w0, ws0, measurements, actions) is unchanged.
inline CiEquivalence ci_to_c_equivalent(const Model& m) {
  if (!check_ci(m).verdict) throw Error(ErrorCode::NotCi, "the model is not causally implementable");
  const std::size_t n = m.n();
  std::vector<int> all;
  for (std::size_t k = 0; k < n + 2; ++k) all.push_back(static_cast<int>(k));
  detail::TreeSearch search(m, all);
  if (!search.run()) throw Error(ErrorCode::NotCausal, "internal error: no pointwise ordering tree");
  Ordering psi = search.tree;
  auto im = detail::stage_tables(m, psi, StageLabels::Tagged);
  detail::InverseCdf cdf(*im);

  // Leaves: (w0, ws0, cells...) with their conditional weights.
  const auto& sig = m.spec().signals;
  std::map<std::pair<int, std::vector<int>>, Rational> leaf_weight;  // (w0, [ws0, cells...]) -> P(leaf | w0, ws0)
  std::set<std::vector<int>> leaf_keys;
  for (const auto& [key, mass] : im->base) {
    std::vector<int> context{key.first, key.second};
    std::vector<History> start{History{key.first, key.second}};
    cdf.expand(context, start, 0,
               [&](const std::vector<int>& ctx, const Rational& w) {
                 std::vector<int> tail(ctx.begin() + 1, ctx.end());
                 leaf_weight[{ctx[0], tail}] = w;
                 leaf_keys.insert(tail);
               },
               Rational(1));
  }
  std::vector<std::vector<int>> leaves(leaf_keys.begin(), leaf_keys.end());
  IntrinsicModel out;
  out.signals.push_back(sig[0]);
  Alphabet packed;
  for (const auto& leaf : leaves) {
    std::string sym = sig[1][leaf[0]];
    for (std::size_t k = 1; k < leaf.size(); ++k) sym += "." + std::to_string(leaf[k]);
    packed.symbols.push_back(sym);
  }
  out.signals.push_back(packed);
  for (std::size_t i = 0; i < n; ++i) out.signals.push_back(Alphabet{{"0"}});
  out.prior.form = Prior::Form::Joint;
  for (std::size_t w0 = 0; w0 < sig[0].size(); ++w0) {
    for (const auto& leaf : leaves) {
      Rational p = 0;
      auto it = leaf_weight.find({static_cast<int>(w0), leaf});
      if (it != leaf_weight.end()) p = im->base.at({static_cast<int>(w0), leaf[0]}) * it->second;
      out.prior.joint.emplace_back(p);
    }
  }

  // Walks the stages at (w0, leaf, a): returns the DM sequence and the
  // measurements, or nullopt once the path leaves the realized histories.
  struct Walk {
    std::vector<int> perm;
    std::vector<int> y;
  };
  auto walk = [&](int w0, const std::vector<int>& leaf, std::size_t a) {
    Walk w;
    w.y.assign(n, 0);
    if (!leaf_weight.count({w0, leaf})) return std::optional<Walk>();
    History h{w0, leaf[0]};
    std::vector<int> context{w0, leaf[0]};
    for (std::size_t k = 0; k < n; ++k) {
      auto cut = cdf.cuts.find(context);
      if (cut == cdf.cuts.end() || !im->kernel.count(h)) return std::optional<Walk>();
      int lab = cdf.label_at(h, cut->second[leaf[k + 1]]);
      auto [dm, local] = im->y_owner[lab];
      w.perm.push_back(dm);
      w.y[dm] = local;
      h.push_back(lab);
      h.push_back(im->u_label[dm][m.action_digit(a, dm)]);
      context.push_back(leaf[k + 1]);
    }
    return std::optional<Walk>(w);
  };

  for (std::size_t i = 0; i < n; ++i) {
    DmSpec d;
    d.actions = m.spec().dms[i].actions;
    d.measurements = m.spec().dms[i].measurements;
    d.obs.args = {0, 1};
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.obs.args.push_back(static_cast<int>(n + 2 + j));
    }
    out.dms.push_back(std::move(d));
  }
  out.cost.args = {0, 1};
  for (std::size_t j = 0; j < n; ++j) out.cost.args.push_back(static_cast<int>(n + 2 + j));

  OrderingTree tree;
  tree.stages.resize(n);
  for (auto& st : tree.stages) st.signal_args = {0, 1};
  std::vector<std::vector<int>> default_perm{std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) default_perm[0][i] = static_cast<int>(i);

  std::vector<int> coords(2 * n + 2, 0);
  for (std::size_t i = 0; i < n; ++i) out.dms[i].obs.cells.assign(table_extent(out, out.dms[i].obs.args), std::nullopt);
  out.cost.cells.assign(table_extent(out, out.cost.args), std::nullopt);
  for (std::size_t w0 = 0; w0 < sig[0].size(); ++w0) {
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      coords[0] = static_cast<int>(w0);
      coords[1] = static_cast<int>(li);
      for (std::size_t a = 0; a < m.action_count(); ++a) {
        for (std::size_t j = 0; j < n; ++j) coords[n + 2 + j] = m.action_digit(a, j);
        auto w = walk(static_cast<int>(w0), leaves[li], a);
        // Off the realized paths every DM sees a constant and DMs act in
        // index order; those outcomes carry no probability.
        std::vector<int> perm = w ? w->perm : default_perm[0];
        for (std::size_t i = 0; i < n; ++i) {
          int y = w ? w->y[i] : 0;
          auto off = detail::table_offset(out, out.dms[i].obs.args, coords);
          if (out.dms[i].obs.cells[off] && *out.dms[i].obs.cells[off] != y) {
            throw Error(ErrorCode::NotCausal, "internal error: realized measurement depends on the DM's own action");
          }
          out.dms[i].obs.cells[off] = y;
        }
        std::vector<int> key{static_cast<int>(w0), static_cast<int>(li)};
        for (std::size_t k = 0; k < n; ++k) {
          tree.stages[k].rows[key] = perm[k];
          key.push_back(m.union_id(perm[k], m.action_digit(a, perm[k])));
        }
        out.cost.cells[detail::table_offset(out, out.cost.args, coords)] =
            m.cost_at(w0, static_cast<std::size_t>(leaves[li][0]), a);
      }
    }
  }
  out.ordering = Ordering(tree);
  CiEquivalence eq;
  eq.spec = std::move(out);
  eq.ordering = std::move(tree);
  eq.leaves = leaves.size();
  return eq;
}

struct EquivalenceCertificate {
  bool causal = false;
  bool values_equal = true;
  bool laws_equal = true;
  bool exhaustive = true;
  std::uint64_t policies = 0;
  std::string detail;
  bool ok() const { return causal && values_equal && laws_equal; }
};

namespace detail {

// Law of (w0, ws0, measurements, actions) under a policy; the ws0 of the
// equivalent model is mapped back through `ws0_of`.
inline std::map<std::vector<int>, Rational> observable_law(const Model& m, const PolicyProfile& g,
                                                           const std::vector<int>& ws0_of) {
  std::map<std::vector<int>, Rational> law;
  for (std::size_t s : m.support()) {
    std::size_t a = m.solution(g, s);
    int ws = m.signal_digit(s, 1);
    std::vector<int> key{m.signal_digit(s, 0), ws0_of.empty() ? ws : ws0_of[ws]};
    for (std::size_t i = 0; i < m.n(); ++i) key.push_back(m.eta(i, s, a));
    for (std::size_t i = 0; i < m.n(); ++i) key.push_back(m.action_digit(a, i));
    law[key] += m.prior(s);
  }
  return law;
}

}  // namespace detail

// Checks the causal equivalent: its tree passes the causality replay, and
// J(gamma) and the observable law agree with the original for every policy
// (or `samples` random ones when the space exceeds `limit`).
inline EquivalenceCertificate certify_equivalence(const Model& original, const CiEquivalence& eq, unsigned jobs = 1,
                                                  std::uint64_t limit = 100000, std::uint64_t samples = 1000,
                                                  std::uint64_t seed = 1) {
  EquivalenceCertificate cert;
  Model m2(eq.spec);
  Ordering psi = eq.ordering;
  cert.causal = check_rcs(m2, psi).ok && check_causal_ordering(m2, psi).ok;
  std::vector<int> ws0_of;
  for (const auto& sym : m2.spec().signals[1].symbols) {
    auto base = sym.substr(0, sym.find('.'));
    ws0_of.push_back(*original.spec().signals[1].index(base));
  }
  PolicySpace space(original);
  std::vector<PolicyProfile> policies;
  if (!space.overflow() && space.size() <= limit) {
    for (std::uint64_t k = 0; k < space.size(); ++k) policies.push_back(space.decode(k));
  } else {
    cert.exhaustive = false;
    SplitMix64 rng(seed);
    for (std::uint64_t k = 0; k < samples; ++k) policies.push_back(random_policy(original, rng));
  }
  std::vector<char> value_ok(policies.size(), 1), law_ok(policies.size(), 1);
  parallel_for(policies.size(), jobs, [&](std::size_t k) {
    const auto& g = policies[k];
    value_ok[k] = original.expected_cost(g) == m2.expected_cost(g);
    law_ok[k] = detail::observable_law(original, g, {}) == detail::observable_law(m2, g, ws0_of);
  });
  for (std::size_t k = 0; k < policies.size(); ++k) {
    if (!value_ok[k] && cert.values_equal) cert.detail = "J differs at policy " + std::to_string(k);
    if (!law_ok[k] && cert.laws_equal && cert.detail.empty()) cert.detail = "law differs at policy " + std::to_string(k);
    cert.values_equal = cert.values_equal && value_ok[k];
    cert.laws_equal = cert.laws_equal && law_ok[k];
  }
  cert.policies = policies.size();
  if (!cert.causal && cert.detail.empty()) cert.detail = "ordering tree of the equivalent model fails the causality replay";
  return cert;
}

// ---------------------------------------------------------------------------
// Partially nested reduction.

struct NestedReduction {
  std::size_t n = 0;
  std::map<int, NestedPart> parts;          // one per DM, implicit parts filled in
  std::vector<std::vector<int>> closure;    // DMs whose g enters DM i's static label, ascending
  std::vector<std::vector<std::vector<int>>> labels;  // per DM: static symbol -> ghat per closure member
  IntrinsicModel static_spec;
  std::vector<Alphabet> dynamic_measurements, dynamic_actions;
};

namespace detail {

inline std::vector<int> signal_digits(const Model& m, std::size_t s) {
  std::vector<int> v;
  for (std::size_t k = 0; k < m.n() + 2; ++k) v.push_back(m.signal_digit(s, k));
  return v;
}

inline int g_value(const Model& m, const NestedPart& part, const std::vector<int>& coords) {
  std::vector<int> full(2 * m.n() + 2, 0);
  std::copy(coords.begin(), coords.end(), full.begin());
  return *part.g.cells[table_offset(m.spec(), part.g.args, full)];
}

// Implicit decomposition of a DM whose measurement ignores all actions.
inline NestedPart identity_part(const Model& m, std::size_t i) {
  const auto& d = m.spec().dms[i];
  for (int c : d.obs.args) {
    if (c >= static_cast<int>(m.n() + 2)) {
      // Semantic check: the measurement may list an action argument it ignores.
      for (std::size_t x = 0; x < m.outcome_count(); ++x) {
        if (m.eta(i, x) != m.eta(i, m.signal_of(x), 0)) {
          throw Error(ErrorCode::NotPartiallyNested, "DM " + std::to_string(i + 1) +
                                                         " reads actions but has no nested decomposition");
        }
      }
      break;
    }
  }
  NestedPart p;
  p.ghat = d.measurements;
  p.yhat = d.measurements;
  for (int c : d.obs.args) {
    if (c < static_cast<int>(m.n() + 2)) p.g.args.push_back(c);
  }
  p.g.cells.assign(table_extent(m.spec(), p.g.args), std::nullopt);
  for (std::size_t s = 0; s < m.signal_count(); ++s) {
    std::vector<int> full(2 * m.n() + 2, 0);
    auto sd = signal_digits(m, s);
    std::copy(sd.begin(), sd.end(), full.begin());
    p.g.cells[table_offset(m.spec(), p.g.args, full)] = m.eta(i, s, 0);
  }
  for (std::size_t y = 0; y < d.measurements.size(); ++y) {
    p.h[{static_cast<int>(y)}] = static_cast<int>(y);
    p.compose[{static_cast<int>(y)}] = static_cast<int>(y);
  }
  return p;
}

}  // namespace detail

// Validates a nested decomposition and builds the static team whose DM i
// observes g_j(omega) for every j in the downward closure of i.  The cost
// table is the original one.
inline NestedReduction nested_reduce(const Model& m, const std::map<int, NestedPart>& decomposition,
                                     std::optional<Ordering> psi = std::nullopt) {
  const std::size_t n = m.n();
  Ordering order = psi ? *psi : causal_witness(m);
  auto cls = classify(m, order);
  if (cls.cls == InfoClass::Nonclassical) throw Error(ErrorCode::NotPartiallyNested, cls.reason);

  NestedReduction red;
  red.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    auto it = decomposition.find(static_cast<int>(i));
    red.parts[static_cast<int>(i)] = it != decomposition.end() ? it->second : detail::identity_part(m, i);
    for (int c : red.parts[static_cast<int>(i)].g.args) {
      if (c >= static_cast<int>(n + 2)) {
        throw Error(ErrorCode::NotPartiallyNested, "g of DM " + std::to_string(i + 1) + " must read signals only");
      }
    }
  }

  // Downward closures, rejecting cycles.
  red.closure.assign(n, {});
  std::vector<int> state(n, 0);
  std::function<void(int)> close = [&](int i) {
    if (state[i] == 2) return;
    if (state[i] == 1) throw Error(ErrorCode::NotPartiallyNested, "nested decomposition is cyclic at DM " + std::to_string(i + 1));
    state[i] = 1;
    std::set<int> c{i};
    for (int j : red.parts[i].down) {
      close(j);
      c.insert(red.closure[j].begin(), red.closure[j].end());
    }
    red.closure[i].assign(c.begin(), c.end());
    state[i] = 2;
  };
  for (std::size_t i = 0; i < n; ++i) close(static_cast<int>(i));

  // The decomposition must reproduce every measurement.
  for (std::size_t x = 0; x < m.outcome_count(); ++x) {
    std::size_t s = m.signal_of(x), a = m.action_of(x);
    auto sd = detail::signal_digits(m, s);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = red.parts[static_cast<int>(i)];
      std::vector<int> hkey{detail::g_value(m, p, sd)}, ckey;
      for (int j : p.down) {
        hkey.push_back(m.action_digit(a, j));
        ckey.push_back(m.eta(j, x));
      }
      auto hv = p.h.find(hkey);
      std::optional<int> y;
      if (hv != p.h.end()) {
        ckey.push_back(hv->second);
        if (auto cv = p.compose.find(ckey); cv != p.compose.end()) y = cv->second;
      }
      if (!y || *y != m.eta(i, x)) {
        throw Error(ErrorCode::NotPartiallyNested, "decomposition of DM " + std::to_string(i + 1) +
                                                       " does not reproduce its measurement at (" + m.signal_label(s) +
                                                       " | " + m.action_label(a) + ")");
      }
    }
  }

  // Invertibility of h in ghat for each fixed u_down, and of compose.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = red.parts[static_cast<int>(i)];
    std::set<int> image;
    for (const auto& c : p.g.cells) {
      if (c) image.insert(*c);
    }
    std::map<std::vector<int>, std::map<int, int>> seen;  // u_down -> yhat -> ghat
    for (const auto& [key, yhat] : p.h) {
      if (!image.count(key[0])) continue;
      std::vector<int> ud(key.begin() + 1, key.end());
      auto [it, inserted] = seen[ud].emplace(yhat, key[0]);
      if (!inserted && it->second != key[0]) {
        std::string w;
        for (std::size_t j = 0; j < ud.size(); ++j) {
          w += (j ? " " : "") + m.spec().dms[p.down[j]].actions[ud[j]];
        }
        throw Error(ErrorCode::NotInvertible, "h of DM " + std::to_string(i + 1) +
                                                  " is not invertible in ghat at u_down = (" + w + ")");
      }
    }
    std::map<int, std::vector<int>> inverse;
    for (const auto& [key, y] : p.compose) {
      auto [it, inserted] = inverse.emplace(y, key);
      if (!inserted && it->second != key) {
        throw Error(ErrorCode::NotInvertible, "compose of DM " + std::to_string(i + 1) + " is not injective");
      }
    }
  }

  // Static labels: ghat tuples over the closure, realized somewhere in the
  // signal space.
  IntrinsicModel st;
  st.signals = m.spec().signals;
  st.prior = m.spec().prior;
  st.cost = m.spec().cost;
  red.labels.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    red.dynamic_actions.push_back(m.spec().dms[i].actions);
    red.dynamic_measurements.push_back(m.spec().dms[i].measurements);
    std::set<int> args;
    for (int j : red.closure[i]) args.insert(red.parts[j].g.args.begin(), red.parts[j].g.args.end());
    DmSpec d;
    d.actions = m.spec().dms[i].actions;
    d.obs.args.assign(args.begin(), args.end());
    std::map<std::vector<int>, int> index;
    std::vector<std::vector<int>> tuple_of_cell(table_extent(m.spec(), d.obs.args));
    std::vector<int> full(2 * n + 2, 0);
    for (std::size_t s = 0; s < m.signal_count(); ++s) {
      auto sd = detail::signal_digits(m, s);
      std::vector<int> t;
      for (int j : red.closure[i]) t.push_back(detail::g_value(m, red.parts[j], sd));
      std::copy(sd.begin(), sd.end(), full.begin());
      tuple_of_cell[detail::table_offset(m.spec(), d.obs.args, full)] = t;
      index.emplace(t, 0);
    }
    int next = 0;
    for (auto& [t, id] : index) {
      id = next++;
      red.labels[i].push_back(t);
      std::string sym;
      for (std::size_t k = 0; k < t.size(); ++k) {
        if (k) sym += ".";
        sym += red.parts[red.closure[i][k]].ghat[t[k]];
      }
      d.measurements.symbols.push_back(sym);
    }
    for (const auto& t : tuple_of_cell) d.obs.cells.emplace_back(index.at(t));
    st.dms.push_back(std::move(d));
  }
  red.static_spec = std::move(st);
  return red;
}

inline NestedReduction nested_reduce(const Model& m, std::optional<Ordering> psi = std::nullopt) {
  return nested_reduce(m, m.spec().nested, std::move(psi));
}

namespace detail {

// ghat of DM j inside DM i's static label.
inline int ghat_in(const NestedReduction& r, std::size_t i, const std::vector<int>& label, int j) {
  const auto& c = r.closure[i];
  return label[std::find(c.begin(), c.end(), j) - c.begin()];
}

inline std::vector<int> restrict_label(const NestedReduction& r, std::size_t i, const std::vector<int>& label, int j) {
  std::vector<int> out;
  for (int k : r.closure[j]) out.push_back(ghat_in(r, i, label, k));
  return out;
}

inline std::optional<int> label_index(const NestedReduction& r, std::size_t i, const std::vector<int>& t) {
  const auto& v = r.labels[i];
  auto it = std::lower_bound(v.begin(), v.end(), t);
  if (it == v.end() || *it != t) return std::nullopt;
  return static_cast<int>(it - v.begin());
}

// Dynamic measurement that DM i would see given its static label when the
// DMs below it follow gd.
inline int dynamic_measurement(const NestedReduction& r, const PolicyProfile& gd, std::size_t i,
                               const std::vector<int>& label, std::map<std::pair<int, std::vector<int>>, int>& memo) {
  auto key = std::make_pair(static_cast<int>(i), label);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  const auto& p = r.parts.at(static_cast<int>(i));
  std::vector<int> hkey{ghat_in(r, i, label, static_cast<int>(i))}, ckey;
  for (int j : p.down) {
    int yj = dynamic_measurement(r, gd, j, restrict_label(r, i, label, j), memo);
    ckey.push_back(yj);
    hkey.push_back(gd.table[j][yj]);
  }
  auto hv = p.h.find(hkey);
  if (hv == p.h.end()) throw Error(ErrorCode::MissingEntry, "h has no row for a realized argument");
  ckey.push_back(hv->second);
  auto cv = p.compose.find(ckey);
  if (cv == p.compose.end()) throw Error(ErrorCode::MissingEntry, "compose has no row for a realized argument");
  memo[key] = cv->second;
  return cv->second;
}

// Static label recovered from a dynamic measurement of DM i when the DMs
// below it follow gs, or nullopt if the measurement cannot occur.
inline std::optional<std::vector<int>> static_label(const NestedReduction& r, const PolicyProfile& gs, std::size_t i,
                                                    int y) {
  const auto& p = r.parts.at(static_cast<int>(i));
  const std::vector<int>* args = nullptr;
  for (const auto& [key, v] : p.compose) {
    if (v == y) args = &key;
  }
  if (!args) return std::nullopt;
  std::map<int, int> ghat;  // DM -> ghat
  std::vector<int> ud;
  for (std::size_t k = 0; k < p.down.size(); ++k) {
    int j = p.down[k];
    auto lj = static_label(r, gs, j, (*args)[k]);
    if (!lj) return std::nullopt;
    auto idx = label_index(r, j, *lj);
    if (!idx) return std::nullopt;
    for (std::size_t t = 0; t < r.closure[j].size(); ++t) {
      auto [it, inserted] = ghat.emplace(r.closure[j][t], (*lj)[t]);
      if (!inserted && it->second != (*lj)[t]) return std::nullopt;
    }
    ud.push_back(gs.table[j][*idx]);
  }
  std::optional<int> gi;
  for (const auto& [key, yhat] : p.h) {
    if (yhat == args->back() && std::equal(ud.begin(), ud.end(), key.begin() + 1)) {
      gi = key[0];
      break;
    }
  }
  if (!gi) return std::nullopt;
  if (auto [it, inserted] = ghat.emplace(static_cast<int>(i), *gi); !inserted && it->second != *gi) return std::nullopt;
  std::vector<int> out;
  for (int j : r.closure[i]) out.push_back(ghat.at(j));
  if (!label_index(r, i, out)) return std::nullopt;
  return out;
}

}  // namespace detail

// gamma^S = gamma^D o F: each static label is turned into the dynamic
// measurement the DM would see under gamma^D.
inline PolicyProfile to_static(const NestedReduction& r, const PolicyProfile& gd) {
  PolicyProfile gs;
  std::map<std::pair<int, std::vector<int>>, int> memo;
  for (std::size_t i = 0; i < r.n; ++i) {
    std::vector<int> row;
    for (const auto& label : r.labels[i]) row.push_back(gd.table[i][detail::dynamic_measurement(r, gd, i, label, memo)]);
    gs.table.push_back(std::move(row));
  }
  return gs;
}

// gamma^D = gamma^S o G: each dynamic measurement is decoded into a static
// label; measurements that cannot occur map to the first action.
inline PolicyProfile to_dynamic(const NestedReduction& r, const PolicyProfile& gs) {
  PolicyProfile gd;
  for (std::size_t i = 0; i < r.n; ++i) {
    std::vector<int> row(r.dynamic_measurements[i].size(), 0);
    for (std::size_t y = 0; y < row.size(); ++y) {
      if (auto l = detail::static_label(r, gs, i, static_cast<int>(y))) {
        row[y] = gs.table[i][*detail::label_index(r, i, *l)];
      }
    }
    gd.table.push_back(std::move(row));
  }
  return gd;
}

struct NestedCertificate {
  bool actions_agree = true;
  bool static_round_trip = true;
  bool dynamic_round_trip = true;
  bool values_equal = true;
  bool exhaustive = true;
  std::uint64_t dynamic_policies = 0, static_policies = 0;
  std::string detail;
  bool ok() const { return actions_agree && static_round_trip && dynamic_round_trip && values_equal; }
};

// For every dynamic policy (or a sample when the space exceeds `limit`),
// the static policy obtained through F produces the same actions at every
// supported signal, and G maps it back to the starting table on every
// measurement that occurs under the policy.  Sampled static policies are
// checked the other way round.
inline NestedCertificate certify_nested(const Model& m, const NestedReduction& r, unsigned jobs = 1,
                                        std::uint64_t limit = 2000000, std::uint64_t samples = 1000,
                                        std::uint64_t seed = 1) {
  NestedCertificate cert;
  Model st(r.static_spec);
  PolicySpace dyn_space(m);
  auto pick = [&](const PolicySpace& space, const Model& model, std::uint64_t salt) {
    std::vector<PolicyProfile> out;
    if (!space.overflow() && space.size() <= limit) {
      for (std::uint64_t k = 0; k < space.size(); ++k) out.push_back(space.decode(k));
    } else {
      cert.exhaustive = false;
      SplitMix64 rng(seed ^ salt);
      for (std::uint64_t k = 0; k < samples; ++k) out.push_back(random_policy(model, rng));
    }
    return out;
  };
  auto dyn_policies = pick(dyn_space, m, 0);
  // Static tables are sampled: the dynamic sweep already visits the image
  // of F, and the round trip G then F is checked on the sample.
  std::vector<PolicyProfile> st_policies;
  {
    SplitMix64 rng(seed ^ 0x5eed);
    for (std::uint64_t k = 0; k < samples; ++k) st_policies.push_back(random_policy(st, rng));
  }
  std::vector<std::uint8_t> flags(dyn_policies.size() + st_policies.size(), 0);
  // Equal actions on the support already force equal cost, so the values
  // are recomputed only on a bounded subset as an independent check.
  auto compare = [&](const PolicyProfile& gd, const PolicyProfile& gs, bool values) -> std::uint8_t {
    std::uint8_t f = 0;
    for (std::size_t s : m.support()) {
      std::size_t ad = m.solution(gd, s), as = st.solution(gs, s);
      if (ad != as) f |= 1;
    }
    if (values && m.expected_cost(gd) != st.expected_cost(gs)) f |= 8;
    return f;
  };
  parallel_for(flags.size(), jobs, [&](std::size_t k) {
    if (k < dyn_policies.size()) {
      const auto& gd = dyn_policies[k];
      auto gs = to_static(r, gd);
      std::uint8_t f = compare(gd, gs, k < samples);
      auto back = to_dynamic(r, gs);
      for (std::size_t s : m.support()) {
        std::size_t a = m.solution(gd, s);
        for (std::size_t i = 0; i < m.n(); ++i) {
          int y = m.eta(i, s, a);
          if (back.table[i][y] != gd.table[i][y]) f |= 4;
        }
      }
      flags[k] = f;
    } else {
      const auto& gs = st_policies[k - dyn_policies.size()];
      auto gd = to_dynamic(r, gs);
      std::uint8_t f = compare(gd, gs, true);
      if (to_static(r, gd) != gs) f |= 2;
      flags[k] = f;
    }
  });
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (flags[k] && cert.detail.empty()) {
      cert.detail = std::string(k < dyn_policies.size() ? "dynamic" : "static") + " policy " +
                    std::to_string(k < dyn_policies.size() ? k : k - dyn_policies.size()) + " fails";
    }
    if (flags[k] & 1) cert.actions_agree = false;
    if (flags[k] & 2) cert.static_round_trip = false;
    if (flags[k] & 4) cert.dynamic_round_trip = false;
    if (flags[k] & 8) cert.values_equal = false;
  }
  cert.dynamic_policies = dyn_policies.size();
  cert.static_policies = st_policies.size();
  return cert;
}

// ---------------------------------------------------------------------------
// Decoupling through a simulator DM.

struct Decoupled {
  IntrinsicModel spec;  // DM 1 is the simulator; DM i+1 is the original DM i
  Rational c_max;
};

// The simulator observes the full signal and proposes a joint action;
// every original DM measures as if the proposal had been played.  The cost
// is the original one when the proposal matches the realized actions and
// c_max otherwise, i.e. the payoff c_max - cost is zeroed.
inline Decoupled decouple(const Model& m) {
  if (!check_ci(m).verdict) throw Error(ErrorCode::NotCi, "decoupling requires a causally implementable model");
  const std::size_t n = m.n(), n2 = n + 1;
  const auto& spec = m.spec();
  IntrinsicModel out;
  auto new_signal = [&](int c) { return c < 2 ? c : c + 1; };
  out.signals = {spec.signals[0], spec.signals[1], Alphabet{{"0"}}};
  for (std::size_t k = 2; k < n + 2; ++k) out.signals.push_back(spec.signals[k]);
  out.prior.form = Prior::Form::Joint;
  for (std::size_t s = 0; s < m.signal_count(); ++s) out.prior.joint.emplace_back(m.prior(s));

  const int sim_action = static_cast<int>(n2 + 2);
  DmSpec sim;
  for (std::size_t a = 0; a < m.action_count(); ++a) {
    std::string sym;
    for (std::size_t i = 0; i < n; ++i) sym += (i ? "." : "") + spec.dms[i].actions[m.action_digit(a, i)];
    sim.actions.symbols.push_back(sym);
  }
  for (std::size_t s = 0; s < m.signal_count(); ++s) {
    std::string sym;
    for (std::size_t k = 0; k < n + 2; ++k) sym += (k ? "." : "") + spec.signals[k][m.signal_digit(s, k)];
    sim.measurements.symbols.push_back(sym);
  }
  for (std::size_t k = 0; k < n + 2; ++k) sim.obs.args.push_back(new_signal(static_cast<int>(k)));
  for (std::size_t s = 0; s < m.signal_count(); ++s) sim.obs.cells.emplace_back(static_cast<int>(s));
  out.dms.push_back(std::move(sim));

  std::vector<int> coords(2 * n2 + 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    DmSpec d;
    d.actions = spec.dms[i].actions;
    d.measurements = spec.dms[i].measurements;
    for (int c : spec.dms[i].obs.args) {
      if (c < static_cast<int>(n + 2)) d.obs.args.push_back(new_signal(c));
    }
    d.obs.args.push_back(sim_action);
    out.dms.push_back(std::move(d));
  }
  for (std::size_t i = 1; i < n2; ++i) out.dms[i].obs.cells.assign(table_extent(out, out.dms[i].obs.args), std::nullopt);
  for (std::size_t s = 0; s < m.signal_count(); ++s) {
    for (std::size_t k = 0; k < n + 2; ++k) coords[new_signal(static_cast<int>(k))] = m.signal_digit(s, k);
    for (std::size_t a = 0; a < m.action_count(); ++a) {
      coords[sim_action] = static_cast<int>(a);
      for (std::size_t i = 0; i < n; ++i) {
        auto& d = out.dms[i + 1];
        d.obs.cells[detail::table_offset(out, d.obs.args, coords)] = m.eta(i, s, a);
      }
    }
  }
  Decoupled dec;
  dec.c_max = m.max_cost();
  out.cost.args = {0, 1};
  for (std::size_t j = 0; j < n2; ++j) out.cost.args.push_back(static_cast<int>(n2 + 2 + j));
  out.cost.cells.assign(table_extent(out, out.cost.args), std::nullopt);
  for (std::size_t w0 = 0; w0 < spec.signals[0].size(); ++w0) {
    for (std::size_t ws = 0; ws < spec.signals[1].size(); ++ws) {
      coords[0] = static_cast<int>(w0);
      coords[1] = static_cast<int>(ws);
      for (std::size_t guess = 0; guess < m.action_count(); ++guess) {
        coords[sim_action] = static_cast<int>(guess);
        for (std::size_t a = 0; a < m.action_count(); ++a) {
          for (std::size_t i = 0; i < n; ++i) coords[n2 + 3 + i] = m.action_digit(a, i);
          out.cost.cells[detail::table_offset(out, out.cost.args, coords)] =
              guess == a ? m.cost_at(w0, ws, a) : dec.c_max;
        }
      }
    }
  }
  dec.spec = std::move(out);
  return dec;
}

struct DecouplingCertificate {
  Rational original_optimum;   // min over gamma of J
  Rational decoupled_optimum;  // min over (theta, gamma) of the decoupled cost
  Rational c_max;
  bool exhaustive = true;      // theta enumerated jointly rather than minimized per signal
  std::uint64_t pairs = 0;
  bool ok() const { return original_optimum == decoupled_optimum; }
};

// Optimum of the decoupled problem with theta ranging over functions of the
// supported signals.  Within `limit` evaluations every (theta, gamma) pair
// is enumerated; beyond it theta is minimized separately at each signal,
// which is exact because the decoupled cost is a sum over signals.
inline DecouplingCertificate certify_decoupling(const Model& m, const Decoupled& dec, unsigned jobs = 1,
                                                std::uint64_t limit = enumeration_budget()) {
  Model d(dec.spec);
  PolicySpace space(m);
  if (space.overflow() || space.size() > limit) {
    throw Error(ErrorCode::BudgetExceeded, "policy space has " + (space.overflow() ? std::string("too many") : std::to_string(space.size())) + " profiles");
  }
  const auto& support = m.support();
  const std::size_t A = m.action_count();
  DecouplingCertificate cert;
  cert.c_max = dec.c_max;
  long double thetas = std::pow(static_cast<long double>(A), static_cast<long double>(support.size()));
  cert.exhaustive = thetas * static_cast<long double>(space.size()) <= static_cast<long double>(limit);
  std::vector<Rational> orig(space.size()), best(space.size());
  parallel_for(space.size(), jobs, [&](std::size_t k) {
    PolicyProfile g = space.decode(k);
    orig[k] = m.expected_cost(g);
    PolicyProfile g2;
    g2.table.push_back(std::vector<int>(m.signal_count(), 0));
    for (const auto& row : g.table) g2.table.push_back(row);
    // Decoupled cost of guess a at supported signal s, read off the
    // decoupled model's own tables.
    std::vector<std::vector<Rational>> term(support.size(), std::vector<Rational>(A));
    for (std::size_t t = 0; t < support.size(); ++t) {
      std::size_t s = support[t];
      for (std::size_t a = 0; a < A; ++a) {
        std::size_t joint = a * d.action_stride(0);
        for (std::size_t i = 0; i < m.n(); ++i) {
          int y = d.eta(i + 1, s, a * d.action_stride(0));
          joint += static_cast<std::size_t>(g.table[i][y]) * d.action_stride(i + 1);
        }
        term[t][a] = d.prior(s) * d.cost(s, joint);
      }
    }
    Rational value;
    if (cert.exhaustive) {
      std::vector<std::size_t> theta(support.size(), 0);
      bool first = true;
      while (true) {
        Rational v = 0;
        for (std::size_t t = 0; t < support.size(); ++t) v += term[t][theta[t]];
        if (first || v < value) value = v;
        first = false;
        std::size_t t = support.size();
        while (t > 0 && ++theta[t - 1] == A) theta[--t] = 0;
        if (t == 0) break;
      }
    } else {
      value = 0;
      for (const auto& row : term) value += *std::min_element(row.begin(), row.end());
    }
    best[k] = value;
  });
  cert.original_optimum = *std::min_element(orig.begin(), orig.end());
  cert.decoupled_optimum = *std::min_element(best.begin(), best.end());
  cert.pairs = cert.exhaustive ? static_cast<std::uint64_t>(thetas) * space.size() : space.size();
  return cert;
}

}  // namespace nst
