#pragma once

// Static reductions of intrinsic models.
//
// A reduced model replaces the closed-loop measurement channel by stage
// measurements drawn independently from reference distributions Q_k.  The
// correlation that the channel used to create is moved into the cost:
//
//   J(gamma) = sum_{w0,ws0} P(w0,ws0) sum_{y_1..y_N} prod_k Q_k(y_k)
//              * c~(w0, ws0, y_1, v_1, ..., y_N, v_N),   v_k = gamma(y_k),
//
// where c~ is the original cost times the product of the densities
// f_k = P(y_k | history) / Q_k(y_k).  Stage labels are either the union of
// the DMs' symbols, in which case an order table names the DM acting after
// each history, or DM-tagged labels "i:sym" that carry the acting DM.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "rational.hpp"

namespace nst {

enum class ReferenceKind { Uniform, Dyadic, Explicit };

inline std::string reference_name(ReferenceKind r) {
  switch (r) {
    case ReferenceKind::Uniform: return "uniform";
    case ReferenceKind::Dyadic: return "dyadic";
    case ReferenceKind::Explicit: return "explicit";
  }
  return "?";
}

enum class StageLabels { Union, Tagged };

// History keys: [w0, ws0, y_1, v_1, ..., y_(k-1), v_(k-1)] with stage
// label ids for measurements and actions.
using History = std::vector<int>;

struct ReducedStaticModel {
  enum class Mode { PolicyFree, PolicyParameterized };
  using Labels = StageLabels;

  Mode mode = Mode::PolicyFree;
  Labels labels = Labels::Union;
  ReferenceKind reference_kind = ReferenceKind::Uniform;
  std::size_t n = 0;
  Alphabet w0, ws0;
  std::vector<Alphabet> actions, measurements;
  Alphabet stage_y, stage_u;
  std::map<std::pair<int, int>, Rational> base;
  std::vector<std::vector<Rational>> reference;
  std::map<History, int> order;
  std::map<History, std::vector<Rational>> density;
  std::map<History, Rational> cost;
  std::vector<std::vector<int>> permutations;
  std::optional<PolicyProfile> policy;

  // Label bookkeeping derived from the alphabets; see assign_labels.
  std::vector<std::vector<int>> y_label, u_label;
  std::vector<std::pair<int, int>> y_owner;  // tagged labels only: (dm, local index)
};

inline std::string tagged_symbol(std::size_t dm, const std::string& sym) { return std::to_string(dm + 1) + ":" + sym; }

// Fills stage alphabets and label maps from the DM alphabets.
template <class T>
void assign_labels(T& r) {
  r.stage_y = {};
  r.stage_u = {};
  r.y_label.assign(r.n, {});
  r.u_label.assign(r.n, {});
  r.y_owner.clear();
  auto add = [](Alphabet& a, const std::string& s) {
    if (auto k = a.index(s)) return *k;
    a.symbols.push_back(s);
    return static_cast<int>(a.size() - 1);
  };
  for (std::size_t i = 0; i < r.n; ++i) {
    for (std::size_t y = 0; y < r.measurements[i].size(); ++y) {
      const auto& s = r.measurements[i][y];
      int id = add(r.stage_y, r.labels == StageLabels::Tagged ? tagged_symbol(i, s) : s);
      r.y_label[i].push_back(id);
      if (r.labels == StageLabels::Tagged) r.y_owner.push_back({static_cast<int>(i), static_cast<int>(y)});
    }
  }
  for (std::size_t i = 0; i < r.n; ++i) {
    for (const auto& s : r.actions[i].symbols) {
      r.u_label[i].push_back(add(r.stage_u, r.labels == StageLabels::Tagged ? tagged_symbol(i, s) : s));
    }
  }
}

inline std::optional<int> local_measurement(const ReducedStaticModel& r, std::size_t dm, int label) {
  const auto& v = r.y_label[dm];
  auto it = std::find(v.begin(), v.end(), label);
  if (it == v.end()) return std::nullopt;
  return static_cast<int>(it - v.begin());
}

// Reference distributions over the stage alphabet.  Dyadic weights are
// 1/2, 1/4, ... with the last label taking the remaining mass.
inline std::vector<Rational> reference_distribution(ReferenceKind kind, std::size_t size) {
  std::vector<Rational> q(size);
  if (kind == ReferenceKind::Dyadic) {
    Rational w(1, 2);
    for (std::size_t k = 0; k + 1 < size; ++k) {
      q[k] = w;
      w /= 2;
    }
    q[size - 1] = size == 1 ? Rational(1) : w * 2;
  } else {
    for (auto& v : q) v = ratio(1, static_cast<long>(size));
  }
  return q;
}

inline void check_static_shape(const Model& m, const ReducedStaticModel& r) {
  bool ok = r.n == m.n() && r.w0 == m.spec().signals[0] && r.ws0 == m.spec().signals[1];
  for (std::size_t i = 0; ok && i < r.n; ++i) {
    ok = r.actions[i] == m.spec().dms[i].actions && r.measurements[i] == m.spec().dms[i].measurements;
  }
  if (!ok) throw Error(ErrorCode::ModelMismatch, "reduced model does not match the dynamic model's alphabets");
}

// Staged evaluation of the reduced objective under a policy.
inline Rational static_value(const ReducedStaticModel& r, const PolicyProfile& g) {
  const bool tagged = r.labels == StageLabels::Tagged;
  std::function<Rational(History&, std::size_t)> walk = [&](History& h, std::size_t k) -> Rational {
    if (k == r.n) {
      auto it = r.cost.find(h);
      return it == r.cost.end() ? Rational(0) : it->second;
    }
    auto row = r.density.find(h);
    if (row == r.density.end()) return 0;
    Rational sum = 0;
    for (std::size_t y = 0; y < r.stage_y.size(); ++y) {
      if (row->second[y] == 0) continue;
      int dm;
      std::optional<int> local;
      if (tagged) {
        dm = r.y_owner[y].first;
        local = r.y_owner[y].second;
      } else {
        auto o = r.order.find(h);
        if (o == r.order.end()) throw Error(ErrorCode::MissingEntry, "order table has no row for a supported history");
        dm = o->second;
        local = local_measurement(r, dm, static_cast<int>(y));
      }
      if (!local) throw Error(ErrorCode::InvalidArgument, "density charges a label the acting DM cannot observe");
      int v = r.u_label[dm][g.table[dm][*local]];
      h.push_back(static_cast<int>(y));
      h.push_back(v);
      sum += r.reference[k][y] * walk(h, k + 1);
      h.pop_back();
      h.pop_back();
    }
    return sum;
  };
  Rational total = 0;
  for (const auto& [key, mass] : r.base) {
    if (mass == 0) continue;
    History h{key.first, key.second};
    total += mass * walk(h, 0);
  }
  return total;
}

// Evaluation in per-DM form: each DM m draws its own measurement from the
// reference restricted to its labels, and the stage bookkeeping only
// decides which cost entry is charged.  Requires that each DM's labels get
// the same reference weight at every stage where it acts.
inline Rational static_value_identity(const ReducedStaticModel& r, const PolicyProfile& g) {
  const bool tagged = r.labels == StageLabels::Tagged;
  std::vector<std::vector<Rational>> qbar(r.n);
  for (std::size_t m = 0; m < r.n; ++m) {
    std::optional<std::vector<Rational>> seen;
    for (const auto& perm : r.permutations) {
      std::size_t k = static_cast<std::size_t>(std::find(perm.begin(), perm.end(), static_cast<int>(m)) - perm.begin());
      std::vector<Rational> q;
      for (int lab : r.y_label[m]) q.push_back(r.reference[k][lab]);
      if (seen && *seen != q) {
        throw Error(ErrorCode::InvalidArgument, "per-DM form needs a stage-independent reference measure");
      }
      seen = q;
    }
    qbar[m] = seen ? *seen : std::vector<Rational>(r.measurements[m].size(), Rational(0));
  }
  std::vector<std::size_t> radix;
  std::size_t total_profiles = 1;
  for (std::size_t m = 0; m < r.n; ++m) {
    radix.push_back(r.measurements[m].size());
    total_profiles *= radix.back();
  }
  auto charge = [&](History h, const std::vector<int>& perm, const std::vector<int>& ys) -> Rational {
    for (std::size_t k = 0; k < r.n; ++k) {
      int dm = perm.empty() ? -1 : perm[k];
      if (!tagged) {
        auto o = r.order.find(h);
        if (o == r.order.end()) return 0;
        dm = o->second;
      }
      h.push_back(r.y_label[dm][ys[dm]]);
      h.push_back(r.u_label[dm][g.table[dm][ys[dm]]]);
    }
    auto it = r.cost.find(h);
    return it == r.cost.end() ? Rational(0) : it->second;
  };
  Rational total = 0;
  std::vector<int> ys(r.n);
  for (const auto& [key, mass] : r.base) {
    if (mass == 0) continue;
    for (std::size_t p = 0; p < total_profiles; ++p) {
      std::size_t rem = p;
      Rational weight = 1;
      for (std::size_t m = r.n; m-- > 0;) {
        ys[m] = static_cast<int>(rem % radix[m]);
        rem /= radix[m];
      }
      for (std::size_t m = 0; m < r.n; ++m) weight *= qbar[m][ys[m]];
      if (weight == 0) continue;
      History h{key.first, key.second};
      Rational c = 0;
      if (tagged) {
        for (const auto& perm : r.permutations) c += charge(h, perm, ys);
      } else {
        c = charge(h, {}, ys);
      }
      total += mass * weight * c;
    }
  }
  return total;
}

// Structural checks: reference rows are distributions and every supported
// density row integrates to one against the reference.
inline std::vector<Diagnostic> diagnose_static(const ReducedStaticModel& r) {
  std::vector<Diagnostic> out;
  Rational mass = 0;
  for (const auto& [k, p] : r.base) {
    if (p < 0) out.push_back({ErrorCode::NormalizationError, "negative base weight"});
    mass += p;
  }
  if (mass != 1) out.push_back({ErrorCode::NormalizationError, "base distribution sums to " + to_string(mass)});
  if (r.reference.size() != r.n) out.push_back({ErrorCode::MissingEntry, "one reference distribution per stage is required"});
  for (std::size_t k = 0; k < r.reference.size(); ++k) {
    Rational s = 0;
    for (const auto& q : r.reference[k]) s += q;
    if (r.reference[k].size() != r.stage_y.size() || s != 1) {
      out.push_back({ErrorCode::NormalizationError, "reference of stage " + std::to_string(k + 1) + " is not a distribution"});
    }
  }
  for (const auto& [h, row] : r.density) {
    std::size_t k = (h.size() - 2) / 2;
    if (k >= r.reference.size() || row.size() != r.stage_y.size()) {
      out.push_back({ErrorCode::InvalidArgument, "density row has the wrong shape"});
      continue;
    }
    Rational s = 0;
    for (std::size_t y = 0; y < row.size(); ++y) s += row[y] * r.reference[k][y];
    if (s != 1) out.push_back({ErrorCode::NormalizationError, "density row does not integrate to one"});
  }
  return out;
}

}  // namespace nst
