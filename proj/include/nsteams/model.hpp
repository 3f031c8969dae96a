#pragma once

// Finite intrinsic models of decentralized teams.
//
// Coordinates are numbered globally: signals first (w0, ws0, w1..wN), then
// the actions u1..uN.  An outcome is a signal index paired with an action
// index; both are mixed-radix with the last coordinate fastest, so the
// outcome index  s * |U| + a  enumerates the ground set lexicographically.
// DM numbers are zero-based inside the library and one-based in all text.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "rational.hpp"
#include "sigma.hpp"

namespace nst {

struct Alphabet {
  std::vector<std::string> symbols;

  std::size_t size() const noexcept { return symbols.size(); }
  const std::string& operator[](std::size_t k) const { return symbols.at(k); }
  std::optional<int> index(const std::string& s) const {
    auto it = std::find(symbols.begin(), symbols.end(), s);
    if (it == symbols.end()) return std::nullopt;
    return static_cast<int>(it - symbols.begin());
  }
  bool operator==(const Alphabet&) const = default;
};

// Dense table over the product of its argument alphabets; args are global
// coordinate ids in ascending order and cells follow mixed-radix order.
template <class V>
struct Table {
  std::vector<int> args;
  std::vector<std::optional<V>> cells;
  bool operator==(const Table&) const = default;
};

struct Prior {
  enum class Form { Product, Joint };
  Form form = Form::Joint;
  std::vector<std::vector<Rational>> marginals;
  std::vector<std::optional<Rational>> joint;
  bool operator==(const Prior&) const = default;
};

// Stage k of a causal ordering tree: the DM acting at stage k as a function
// of some signal coordinates and the k-1 earlier stage actions (written as
// ids into the union action alphabet).
struct StageRule {
  std::vector<int> signal_args;
  std::map<std::vector<int>, int> rows;
  bool operator==(const StageRule&) const = default;
};

struct OrderingTree {
  std::vector<StageRule> stages;
  bool operator==(const OrderingTree&) const = default;
};

// One permutation of DMs per outcome index.
struct FlatOrdering {
  std::vector<std::vector<int>> perm;
  bool operator==(const FlatOrdering&) const = default;
};

using Ordering = std::variant<OrderingTree, FlatOrdering>;

// Declared nested decomposition of one DM's measurement:
//   y^i = compose(y^j for j in down, h(g(omega), u_down)).
struct NestedPart {
  std::vector<int> down;
  Alphabet ghat;
  Alphabet yhat;
  Table<int> g;
  std::map<std::vector<int>, int> h;
  std::map<std::vector<int>, int> compose;
  bool operator==(const NestedPart&) const = default;
};

struct DmSpec {
  Alphabet actions;
  Alphabet measurements;
  Table<int> obs;
  bool operator==(const DmSpec&) const = default;
};

struct IntrinsicModel {
  std::vector<Alphabet> signals;
  Prior prior;
  std::vector<DmSpec> dms;
  Table<Rational> cost;
  std::optional<Ordering> ordering;
  std::map<int, NestedPart> nested;

  std::size_t n_dms() const noexcept { return dms.size(); }
  bool operator==(const IntrinsicModel&) const = default;
};

inline std::string signal_name(std::size_t k) {
  if (k == 0) return "w0";
  if (k == 1) return "ws0";
  return "w" + std::to_string(k - 1);
}

inline std::string action_name(std::size_t dm) { return "u" + std::to_string(dm + 1); }

inline std::string coordinate_name(std::size_t n_dms, std::size_t coord) {
  return coord < n_dms + 2 ? signal_name(coord) : action_name(coord - n_dms - 2);
}

inline std::optional<int> coordinate_id(std::size_t n_dms, const std::string& name) {
  for (std::size_t k = 0; k < n_dms + 2; ++k) {
    if (signal_name(k) == name) return static_cast<int>(k);
  }
  for (std::size_t i = 0; i < n_dms; ++i) {
    if (action_name(i) == name) return static_cast<int>(n_dms + 2 + i);
  }
  return std::nullopt;
}

inline std::size_t coordinate_radix(const IntrinsicModel& m, int coord) {
  std::size_t n = m.n_dms();
  if (coord < 0) throw Error(ErrorCode::InvalidArgument, "negative coordinate id");
  if (static_cast<std::size_t>(coord) < n + 2) return m.signals.at(coord).size();
  return m.dms.at(coord - n - 2).actions.size();
}

inline std::size_t table_extent(const IntrinsicModel& m, const std::vector<int>& args) {
  std::size_t total = 1;
  for (int a : args) total *= coordinate_radix(m, a);
  return total;
}

struct PolicyProfile {
  std::vector<std::vector<int>> table;
  bool operator==(const PolicyProfile&) const = default;
  bool operator<(const PolicyProfile& o) const { return table < o.table; }
};

class Model {
 public:
  explicit Model(IntrinsicModel spec) : spec_(std::move(spec)) {
    auto diags = diagnose(spec_);
    if (!diags.empty()) throw ValidationError(std::move(diags));
    compile();
  }

  // Lists every violated invariant; an empty list means the model is valid.
  static std::vector<Diagnostic> diagnose(const IntrinsicModel& m);

  const IntrinsicModel& spec() const noexcept { return spec_; }
  std::size_t n() const noexcept { return n_; }
  std::size_t signal_count() const noexcept { return signal_ground_->size(); }
  std::size_t action_count() const noexcept { return action_ground_->size(); }
  std::size_t outcome_count() const noexcept { return ground_->size(); }
  const sigma::GroundPtr& ground() const noexcept { return ground_; }
  const sigma::GroundPtr& signal_ground() const noexcept { return signal_ground_; }
  const sigma::GroundPtr& action_ground() const noexcept { return action_ground_; }

  std::size_t outcome(std::size_t s, std::size_t a) const noexcept { return s * action_count() + a; }
  std::size_t signal_of(std::size_t x) const noexcept { return x / action_count(); }
  std::size_t action_of(std::size_t x) const noexcept { return x % action_count(); }

  int signal_digit(std::size_t s, std::size_t k) const { return static_cast<int>(signal_ground_->digit(s, k)); }
  int action_digit(std::size_t a, std::size_t dm) const { return static_cast<int>(action_ground_->digit(a, dm)); }
  std::size_t action_stride(std::size_t dm) const { return action_ground_->stride(dm); }
  std::size_t with_action(std::size_t a, std::size_t dm, int v) const {
    return a + (static_cast<std::size_t>(v) - action_digit(a, dm)) * action_stride(dm);
  }

  std::size_t action_size(std::size_t dm) const { return spec_.dms.at(dm).actions.size(); }
  std::size_t measurement_size(std::size_t dm) const { return spec_.dms.at(dm).measurements.size(); }

  int eta(std::size_t dm, std::size_t x) const { return eta_[dm][x]; }
  int eta(std::size_t dm, std::size_t s, std::size_t a) const { return eta_[dm][outcome(s, a)]; }

  const Rational& prior(std::size_t s) const { return prior_[s]; }
  const std::vector<std::size_t>& support() const noexcept { return support_; }
  const Rational& cost(std::size_t s, std::size_t a) const {
    std::size_t base = static_cast<std::size_t>(signal_digit(s, 0)) * spec_.signals[1].size() + signal_digit(s, 1);
    return cost_[base * action_count() + a];
  }
  const Rational& cost_at(std::size_t w0, std::size_t ws0, std::size_t a) const {
    return cost_[(w0 * spec_.signals[1].size() + ws0) * action_count() + a];
  }
  Rational max_cost() const { return *std::max_element(cost_.begin(), cost_.end()); }

  const sigma::PartitionField& info_field(std::size_t dm) const { return fields_.at(dm); }

  // Stage actions are written in the union of all action alphabets, in
  // order of first appearance scanning DMs upward.
  const Alphabet& action_union() const noexcept { return action_union_; }
  int union_id(std::size_t dm, int action) const { return union_of_[dm][action]; }
  std::optional<int> action_from_union(std::size_t dm, int uid) const {
    const auto& v = union_of_[dm];
    auto it = std::find(v.begin(), v.end(), uid);
    if (it == v.end()) return std::nullopt;
    return static_cast<int>(it - v.begin());
  }

  std::string signal_label(std::size_t s) const {
    std::string out;
    for (std::size_t k = 0; k < n_ + 2; ++k) {
      if (k) out += ' ';
      out += spec_.signals[k][signal_digit(s, k)];
    }
    return out;
  }
  std::string action_label(std::size_t a) const {
    std::string out;
    for (std::size_t i = 0; i < n_; ++i) {
      if (i) out += ' ';
      out += spec_.dms[i].actions[action_digit(a, i)];
    }
    return out;
  }

  void check_policy(const PolicyProfile& g) const {
    if (g.table.size() != n_) throw Error(ErrorCode::InvalidArgument, "policy has the wrong number of DMs");
    for (std::size_t i = 0; i < n_; ++i) {
      if (g.table[i].size() != measurement_size(i)) {
        throw Error(ErrorCode::InvalidArgument, "policy of DM " + std::to_string(i + 1) + " has the wrong domain");
      }
      for (int u : g.table[i]) {
        if (u < 0 || static_cast<std::size_t>(u) >= action_size(i)) {
          throw Error(ErrorCode::InvalidArgument, "policy of DM " + std::to_string(i + 1) + " leaves the action set");
        }
      }
    }
  }

  // Exhaustive fixed points of u = gamma(eta(omega, u)) at one signal.
  std::vector<std::size_t> solve_closed_loop(const PolicyProfile& g, std::size_t s) const {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < action_count(); ++a) {
      if (is_fixed_point(g, s, a)) out.push_back(a);
    }
    return out;
  }

  bool is_fixed_point(const PolicyProfile& g, std::size_t s, std::size_t a) const {
    std::size_t x = outcome(s, a);
    for (std::size_t i = 0; i < n_; ++i) {
      if (g.table[i][eta_[i][x]] != action_digit(a, i)) return false;
    }
    return true;
  }

  // Value of DM dm's measurement if it is the same for every completion of
  // the unfixed actions (fixed[j] < 0 marks DM j unfixed).
  std::optional<int> determined_measurement(std::size_t dm, std::size_t s, const std::vector<int>& fixed) const {
    std::size_t base = 0;
    std::vector<std::size_t> open;
    for (std::size_t j = 0; j < n_; ++j) {
      if (fixed[j] >= 0) {
        base += static_cast<std::size_t>(fixed[j]) * action_stride(j);
      } else {
        open.push_back(j);
      }
    }
    const auto& tab = eta_[dm];
    const std::size_t row = s * action_count();
    const int value = tab[row + base];
    std::vector<int> digit(open.size(), 0);
    std::size_t a = base;
    while (true) {
      std::size_t k = open.size();
      while (true) {
        if (k == 0) return value;
        --k;
        std::size_t j = open[k];
        if (static_cast<std::size_t>(digit[k]) + 1 < action_size(j)) {
          ++digit[k];
          a += action_stride(j);
          break;
        }
        a -= static_cast<std::size_t>(digit[k]) * action_stride(j);
        digit[k] = 0;
      }
      if (tab[row + a] != value) return std::nullopt;
    }
  }

  // Greedy forward propagation: repeatedly let the lowest-numbered DM whose
  // measurement is already pinned down act.  Returns the action index if
  // every DM gets to act; the result is then the unique fixed point.
  std::optional<std::size_t> forward_solve(const PolicyProfile& g, std::size_t s) const {
    std::vector<int> fixed(n_, -1);
    for (std::size_t step = 0; step < n_; ++step) {
      bool moved = false;
      for (std::size_t i = 0; i < n_ && !moved; ++i) {
        if (fixed[i] >= 0) continue;
        if (auto y = determined_measurement(i, s, fixed)) {
          fixed[i] = g.table[i][*y];
          moved = true;
        }
      }
      if (!moved) return std::nullopt;
    }
    std::size_t a = 0;
    for (std::size_t i = 0; i < n_; ++i) a += static_cast<std::size_t>(fixed[i]) * action_stride(i);
    return a;
  }

  // Unique closed-loop action at signal s, or NotSolvable.
  std::size_t solution(const PolicyProfile& g, std::size_t s) const {
    if (auto a = forward_solve(g, s)) return *a;
    auto fps = solve_closed_loop(g, s);
    if (fps.size() != 1) {
      throw Error(ErrorCode::NotSolvable, "closed loop at signal (" + signal_label(s) + ") has " +
                                              std::to_string(fps.size()) + " solutions");
    }
    return fps.front();
  }

  Rational expected_cost(const PolicyProfile& g) const {
    check_policy(g);
    Rational total = 0;
    for (std::size_t s : support_) total += prior_[s] * cost(s, solution(g, s));
    return total;
  }

 private:
  void compile();

  IntrinsicModel spec_;
  std::size_t n_ = 0;
  sigma::GroundPtr ground_, signal_ground_, action_ground_;
  std::vector<std::vector<int>> eta_;
  std::vector<Rational> prior_;
  std::vector<std::size_t> support_;
  std::vector<Rational> cost_;
  std::vector<sigma::PartitionField> fields_;
  Alphabet action_union_;
  std::vector<std::vector<int>> union_of_;
};

using ModelPtr = std::shared_ptr<const Model>;

inline ModelPtr make_model(IntrinsicModel spec) { return std::make_shared<const Model>(std::move(spec)); }

namespace detail {

// Offset of the cell addressed by a full coordinate assignment.
inline std::size_t table_offset(const IntrinsicModel& m, const std::vector<int>& args, const std::vector<int>& coords) {
  std::size_t off = 0;
  for (int a : args) off = off * coordinate_radix(m, a) + static_cast<std::size_t>(coords[a]);
  return off;
}

inline void check_table_shape(const IntrinsicModel& m, const std::vector<int>& args, std::size_t cells,
                              const std::string& what, std::vector<Diagnostic>& out) {
  std::size_t total = m.n_dms() * 2 + 2;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] < 0 || static_cast<std::size_t>(args[k]) >= total) {
      out.push_back({ErrorCode::InvalidArgument, what + " declares an unknown coordinate"});
      return;
    }
    if (k > 0 && args[k] <= args[k - 1]) {
      out.push_back({ErrorCode::InvalidArgument, what + " arguments must be distinct and in canonical order"});
      return;
    }
  }
  if (cells != table_extent(m, args)) {
    out.push_back({ErrorCode::InvalidArgument, what + " does not cover its argument domain"});
  }
}

inline std::string row_label(const IntrinsicModel& m, const std::vector<int>& args, std::size_t off) {
  std::vector<std::string> parts(args.size());
  for (std::size_t k = args.size(); k-- > 0;) {
    std::size_t r = coordinate_radix(m, args[k]);
    std::size_t v = off % r;
    off /= r;
    std::size_t n = m.n_dms();
    const Alphabet& alpha = static_cast<std::size_t>(args[k]) < n + 2 ? m.signals[args[k]] : m.dms[args[k] - n - 2].actions;
    parts[k] = alpha[v];
  }
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k) out += ' ';
    out += parts[k];
  }
  return out;
}

inline bool duplicate_symbols(const Alphabet& a) {
  auto s = a.symbols;
  std::sort(s.begin(), s.end());
  return std::adjacent_find(s.begin(), s.end()) != s.end();
}

}  // namespace detail

inline std::vector<Diagnostic> Model::diagnose(const IntrinsicModel& m) {
  std::vector<Diagnostic> out;
  const std::size_t n = m.n_dms();
  if (n == 0) {
    out.push_back({ErrorCode::InvalidArgument, "model needs at least one DM"});
    return out;
  }
  if (m.signals.size() != n + 2) {
    out.push_back({ErrorCode::InvalidArgument, "model needs signals w0, ws0 and one noise coordinate per DM"});
    return out;
  }
  bool shapes_ok = true;
  for (std::size_t k = 0; k < m.signals.size(); ++k) {
    if (m.signals[k].size() == 0) {
      out.push_back({ErrorCode::InvalidArgument, "signal " + signal_name(k) + " has an empty alphabet"});
      shapes_ok = false;
    } else if (detail::duplicate_symbols(m.signals[k])) {
      out.push_back({ErrorCode::InvalidArgument, "signal " + signal_name(k) + " repeats a symbol"});
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = m.dms[i];
    std::string who = "DM " + std::to_string(i + 1);
    if (d.actions.size() == 0 || d.measurements.size() == 0) {
      out.push_back({ErrorCode::InvalidArgument, who + " needs nonempty action and measurement sets"});
      shapes_ok = false;
    }
    if (detail::duplicate_symbols(d.actions) || detail::duplicate_symbols(d.measurements)) {
      out.push_back({ErrorCode::InvalidArgument, who + " repeats a symbol"});
    }
  }
  if (!shapes_ok) return out;

  // Prior.
  if (m.prior.form == Prior::Form::Product) {
    if (m.prior.marginals.size() != n + 2) {
      out.push_back({ErrorCode::MissingEntry, "product prior needs one marginal per signal"});
    } else {
      for (std::size_t k = 0; k < n + 2; ++k) {
        const auto& mk = m.prior.marginals[k];
        if (mk.size() != m.signals[k].size()) {
          out.push_back({ErrorCode::MissingEntry, "marginal of " + signal_name(k) + " does not cover its alphabet"});
          continue;
        }
        Rational sum = 0;
        for (const auto& p : mk) {
          if (p < 0) out.push_back({ErrorCode::NormalizationError, "negative weight in marginal of " + signal_name(k)});
          sum += p;
        }
        if (sum != 1) {
          out.push_back({ErrorCode::NormalizationError,
                         "marginal of " + signal_name(k) + " sums to " + to_string(sum)});
        }
      }
    }
  } else {
    std::vector<int> all(n + 2);
    for (std::size_t k = 0; k < n + 2; ++k) all[k] = static_cast<int>(k);
    if (m.prior.joint.size() != table_extent(m, all)) {
      out.push_back({ErrorCode::MissingEntry, "joint prior does not cover the signal space"});
    } else {
      Rational sum = 0;
      for (std::size_t r = 0; r < m.prior.joint.size(); ++r) {
        const auto& p = m.prior.joint[r];
        if (!p) {
          out.push_back({ErrorCode::MissingEntry, "prior row (" + detail::row_label(m, all, r) + ") is missing"});
          continue;
        }
        if (*p < 0) {
          out.push_back({ErrorCode::NormalizationError, "prior row (" + detail::row_label(m, all, r) + ") is negative"});
        }
        sum += *p;
      }
      if (sum != 1) out.push_back({ErrorCode::NormalizationError, "prior sums to " + to_string(sum)});
    }
  }

  // Observations.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = m.dms[i];
    std::string who = "observation table of DM " + std::to_string(i + 1);
    std::size_t before = out.size();
    detail::check_table_shape(m, d.obs.args, d.obs.cells.size(), who, out);
    if (out.size() != before) continue;
    for (std::size_t r = 0; r < d.obs.cells.size(); ++r) {
      const auto& c = d.obs.cells[r];
      if (!c) {
        out.push_back({ErrorCode::MissingEntry, who + " has no row for (" + detail::row_label(m, d.obs.args, r) + ")"});
      } else if (*c < 0 || static_cast<std::size_t>(*c) >= d.measurements.size()) {
        out.push_back({ErrorCode::UnknownSymbol, who + " row (" + detail::row_label(m, d.obs.args, r) + ") leaves Y"});
      }
    }
  }

  // Cost.
  {
    std::size_t before = out.size();
    detail::check_table_shape(m, m.cost.args, m.cost.cells.size(), "cost table", out);
    if (out.size() == before) {
      for (int a : m.cost.args) {
        if (a >= 2 && static_cast<std::size_t>(a) < n + 2) {
          out.push_back({ErrorCode::InvalidArgument,
                         "cost may depend on w0, ws0 and actions only, not " + signal_name(a)});
        }
      }
      for (std::size_t r = 0; r < m.cost.cells.size(); ++r) {
        if (!m.cost.cells[r]) {
          out.push_back({ErrorCode::MissingEntry,
                         "cost table has no row for (" + detail::row_label(m, m.cost.args, r) + ")"});
        }
      }
    }
  }

  // Ordering structure.
  if (m.ordering) {
    if (auto* tree = std::get_if<OrderingTree>(&*m.ordering)) {
      if (tree->stages.size() != n) {
        out.push_back({ErrorCode::InvalidArgument, "ordering tree needs one stage per DM"});
      }
      for (std::size_t k = 0; k < tree->stages.size(); ++k) {
        for (int a : tree->stages[k].signal_args) {
          if (a < 0 || static_cast<std::size_t>(a) >= n + 2) {
            out.push_back({ErrorCode::InvalidArgument, "ordering stage " + std::to_string(k + 1) +
                                                           " may depend on signals and earlier stage actions only"});
          }
        }
        for (const auto& [key, dm] : tree->stages[k].rows) {
          if (dm < 0 || static_cast<std::size_t>(dm) >= n) {
            out.push_back({ErrorCode::UnknownDm, "ordering stage " + std::to_string(k + 1) + " names an unknown DM"});
          }
          if (key.size() != tree->stages[k].signal_args.size() + k) {
            out.push_back({ErrorCode::InvalidArgument, "ordering stage " + std::to_string(k + 1) + " has a malformed row"});
          }
        }
      }
    } else {
      const auto& flat = std::get<FlatOrdering>(*m.ordering);
      for (const auto& p : flat.perm) {
        auto q = p;
        std::sort(q.begin(), q.end());
        bool ok = q.size() == n;
        for (std::size_t k = 0; ok && k < n; ++k) ok = q[k] == static_cast<int>(k);
        if (!ok) {
          out.push_back({ErrorCode::InvalidArgument, "flat ordering row is not a permutation of the DMs"});
          break;
        }
      }
    }
  }
  return out;
}

inline void Model::compile() {
  n_ = spec_.n_dms();
  std::vector<std::string> sig_names, act_names, all_names;
  std::vector<std::size_t> sig_radix, act_radix, all_radix;
  for (std::size_t k = 0; k < n_ + 2; ++k) {
    sig_names.push_back(signal_name(k));
    sig_radix.push_back(spec_.signals[k].size());
  }
  for (std::size_t i = 0; i < n_; ++i) {
    act_names.push_back(action_name(i));
    act_radix.push_back(spec_.dms[i].actions.size());
  }
  all_names = sig_names;
  all_names.insert(all_names.end(), act_names.begin(), act_names.end());
  all_radix = sig_radix;
  all_radix.insert(all_radix.end(), act_radix.begin(), act_radix.end());
  signal_ground_ = sigma::make_ground(sig_names, sig_radix);
  action_ground_ = sigma::make_ground(act_names, act_radix);
  ground_ = sigma::make_ground(all_names, all_radix);

  const std::size_t S = signal_ground_->size();
  const std::size_t A = action_ground_->size();

  prior_.assign(S, Rational(0));
  for (std::size_t s = 0; s < S; ++s) {
    if (spec_.prior.form == Prior::Form::Product) {
      Rational p = 1;
      for (std::size_t k = 0; k < n_ + 2; ++k) p *= spec_.prior.marginals[k][signal_digit(s, k)];
      prior_[s] = p;
    } else {
      prior_[s] = *spec_.prior.joint[s];
    }
    if (prior_[s] > 0) support_.push_back(s);
  }

  std::vector<int> coords(2 * n_ + 2);
  eta_.assign(n_, std::vector<int>(S * A));
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t k = 0; k < n_ + 2; ++k) coords[k] = signal_digit(s, k);
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t i = 0; i < n_; ++i) coords[n_ + 2 + i] = action_digit(a, i);
      for (std::size_t i = 0; i < n_; ++i) {
        const auto& obs = spec_.dms[i].obs;
        eta_[i][s * A + a] = *obs.cells[detail::table_offset(spec_, obs.args, coords)];
      }
    }
  }

  const std::size_t W0 = spec_.signals[0].size(), WS = spec_.signals[1].size();
  cost_.assign(W0 * WS * A, Rational(0));
  for (std::size_t w0 = 0; w0 < W0; ++w0) {
    for (std::size_t ws = 0; ws < WS; ++ws) {
      coords[0] = static_cast<int>(w0);
      coords[1] = static_cast<int>(ws);
      for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t i = 0; i < n_; ++i) coords[n_ + 2 + i] = action_digit(a, i);
        cost_[(w0 * WS + ws) * A + a] = *spec_.cost.cells[detail::table_offset(spec_, spec_.cost.args, coords)];
      }
    }
  }

  fields_.clear();
  for (std::size_t i = 0; i < n_; ++i) {
    std::vector<std::uint32_t> labels(eta_[i].begin(), eta_[i].end());
    fields_.emplace_back(ground_, labels);
  }

  action_union_ = {};
  union_of_.assign(n_, {});
  for (std::size_t i = 0; i < n_; ++i) {
    for (const auto& sym : spec_.dms[i].actions.symbols) {
      auto id = action_union_.index(sym);
      if (!id) {
        action_union_.symbols.push_back(sym);
        id = static_cast<int>(action_union_.size() - 1);
      }
      union_of_[i].push_back(*id);
    }
  }
}

// Policy profiles in canonical order: DM 1's table is most significant,
// measurements ascending within a DM, the last slot varying fastest.
class PolicySpace {
 public:
  explicit PolicySpace(const Model& m) {
    std::vector<std::pair<std::size_t, std::size_t>> shape;
    for (std::size_t i = 0; i < m.n(); ++i) shape.push_back({m.measurement_size(i), m.action_size(i)});
    init(shape);
  }
  // One (|Y^i|, |U^i|) pair per DM.
  explicit PolicySpace(const std::vector<std::pair<std::size_t, std::size_t>>& shape) { init(shape); }

  const std::vector<std::pair<std::size_t, std::size_t>>& shape() const noexcept { return shape_; }
  std::uint64_t size() const noexcept { return size_; }
  bool overflow() const noexcept { return overflow_; }

  PolicyProfile decode(std::uint64_t index) const {
    std::vector<int> digits(radix_.size());
    for (std::size_t k = radix_.size(); k-- > 0;) {
      digits[k] = static_cast<int>(index % radix_[k]);
      index /= radix_[k];
    }
    PolicyProfile g;
    std::size_t pos = 0;
    for (auto [ny, nu] : shape_) {
      g.table.emplace_back(digits.begin() + pos, digits.begin() + pos + ny);
      pos += ny;
    }
    return g;
  }

  std::uint64_t encode(const PolicyProfile& g) const {
    if (overflow_) throw Error(ErrorCode::BudgetExceeded, "policy space does not fit a 64-bit index");
    std::uint64_t idx = 0;
    std::size_t pos = 0;
    for (const auto& row : g.table) {
      for (int u : row) idx = idx * radix_[pos++] + static_cast<std::uint64_t>(u);
    }
    return idx;
  }

 private:
  void init(const std::vector<std::pair<std::size_t, std::size_t>>& shape) {
    shape_ = shape;
    for (auto [ny, nu] : shape_) {
      for (std::size_t y = 0; y < ny; ++y) radix_.push_back(nu);
    }
    size_ = 1;
    for (auto r : radix_) {
      if (size_ > std::numeric_limits<std::uint64_t>::max() / r) {
        overflow_ = true;
        size_ = std::numeric_limits<std::uint64_t>::max();
        break;
      }
      size_ *= r;
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> shape_;
  std::vector<std::size_t> radix_;
  std::uint64_t size_ = 1;
  bool overflow_ = false;
};

inline PolicyProfile constant_policy(const Model& m, int action = 0) {
  PolicyProfile g;
  for (std::size_t i = 0; i < m.n(); ++i) g.table.emplace_back(m.measurement_size(i), action);
  return g;
}

// Projection of an outcome onto the signals and the actions of a DM prefix:
// (omega, u^{s_1}, ..., u^{s_k}).  The empty prefix keeps only the signals.
inline std::vector<int> project(const Model& m, const std::vector<int>& prefix, std::size_t x) {
  std::vector<bool> seen(m.n(), false);
  for (int dm : prefix) {
    if (dm < 0 || static_cast<std::size_t>(dm) >= m.n() || seen[dm]) {
      throw Error(ErrorCode::BadPrefix, "prefix entries must be distinct DMs in 1.." + std::to_string(m.n()));
    }
    seen[dm] = true;
  }
  std::vector<int> out;
  std::size_t s = m.signal_of(x), a = m.action_of(x);
  for (std::size_t k = 0; k < m.n() + 2; ++k) out.push_back(m.signal_digit(s, k));
  for (int dm : prefix) out.push_back(m.action_digit(a, dm));
  return out;
}

// The ordering declared in the model's source, or MissingOrdering.
inline const Ordering& declared_ordering(const Model& m) {
  if (!m.spec().ordering) throw Error(ErrorCode::MissingOrdering, "the model declares no ordering function");
  return *m.spec().ordering;
}

// Evaluates an ordering at one outcome, returning the DM sequence.
inline std::vector<int> ordering_at(const Model& m, const Ordering& psi, std::size_t x) {
  if (auto* flat = std::get_if<FlatOrdering>(&psi)) {
    if (flat->perm.size() != m.outcome_count()) {
      throw Error(ErrorCode::MissingEntry, "flat ordering does not cover the outcome space");
    }
    return flat->perm[x];
  }
  const auto& tree = std::get<OrderingTree>(psi);
  std::size_t s = m.signal_of(x), a = m.action_of(x);
  std::vector<int> seq;
  std::vector<int> taken(m.n(), 0);
  std::vector<int> stage_actions;
  for (std::size_t k = 0; k < tree.stages.size(); ++k) {
    const auto& rule = tree.stages[k];
    std::vector<int> key;
    for (int c : rule.signal_args) key.push_back(m.signal_digit(s, c));
    key.insert(key.end(), stage_actions.begin(), stage_actions.end());
    auto it = rule.rows.find(key);
    if (it == rule.rows.end()) {
      throw Error(ErrorCode::MissingEntry, "ordering stage " + std::to_string(k + 1) + " has no row for outcome (" +
                                               m.signal_label(s) + " | " + m.action_label(a) + ")");
    }
    int dm = it->second;
    if (taken[dm]) {
      throw Error(ErrorCode::InvalidArgument, "ordering repeats DM " + std::to_string(dm + 1));
    }
    taken[dm] = 1;
    seq.push_back(dm);
    stage_actions.push_back(m.union_id(dm, m.action_digit(a, dm)));
  }
  return seq;
}

inline FlatOrdering flatten(const Model& m, const Ordering& psi) {
  FlatOrdering out;
  out.perm.resize(m.outcome_count());
  for (std::size_t x = 0; x < m.outcome_count(); ++x) out.perm[x] = ordering_at(m, psi, x);
  return out;
}

namespace detail {

// Rebuilds a table after renaming coordinates; the new argument list is
// sorted into canonical order.
template <class V>
Table<V> remap_table(const Table<V>& t, const std::vector<std::size_t>& old_radix_of_arg,
                     const std::vector<int>& new_id_of_arg) {
  const std::size_t k = t.args.size();
  std::vector<std::size_t> order(k);
  for (std::size_t j = 0; j < k; ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return new_id_of_arg[a] < new_id_of_arg[b]; });
  Table<V> out;
  for (auto j : order) out.args.push_back(new_id_of_arg[j]);
  out.cells.resize(t.cells.size());
  std::vector<std::size_t> digit(k, 0);
  for (std::size_t off = 0; off < t.cells.size(); ++off) {
    std::size_t rem = off;
    for (std::size_t j = k; j-- > 0;) {
      digit[j] = rem % old_radix_of_arg[j];
      rem /= old_radix_of_arg[j];
    }
    std::size_t noff = 0;
    for (auto j : order) noff = noff * old_radix_of_arg[j] + digit[j];
    out.cells[noff] = t.cells[off];
  }
  return out;
}

}  // namespace detail

// Renumbers DMs: new DM j is old DM perm[j].  Noise coordinates keep their
// position; action coordinates follow their DM.
inline IntrinsicModel relabel_dms(const IntrinsicModel& m, const std::vector<int>& perm) {
  const std::size_t n = m.n_dms();
  if (perm.size() != n) throw Error(ErrorCode::InvalidArgument, "relabeling must list every DM");
  std::vector<int> inv(n, -1);
  for (std::size_t j = 0; j < n; ++j) {
    if (perm[j] < 0 || static_cast<std::size_t>(perm[j]) >= n || inv[perm[j]] >= 0) {
      throw Error(ErrorCode::InvalidArgument, "relabeling is not a permutation");
    }
    inv[perm[j]] = static_cast<int>(j);
  }
  auto new_coord = [&](int c) { return c < static_cast<int>(n + 2) ? c : static_cast<int>(n + 2) + inv[c - n - 2]; };
  auto remap = [&](const auto& t) {
    std::vector<std::size_t> radix;
    std::vector<int> ids;
    for (int a : t.args) {
      radix.push_back(coordinate_radix(m, a));
      ids.push_back(new_coord(a));
    }
    return detail::remap_table(t, radix, ids);
  };
  IntrinsicModel out;
  out.signals = m.signals;
  out.prior = m.prior;
  for (std::size_t j = 0; j < n; ++j) {
    DmSpec d = m.dms[perm[j]];
    d.obs = remap(d.obs);
    out.dms.push_back(std::move(d));
  }
  out.cost = remap(m.cost);
  return out;
}

inline PolicyProfile relabel_policy(const PolicyProfile& g, const std::vector<int>& perm) {
  PolicyProfile out;
  for (int p : perm) out.table.push_back(g.table.at(p));
  return out;
}

// Reorders DM dm's measurement alphabet: new symbol k is old symbol perm[k].
inline IntrinsicModel relabel_measurements(const IntrinsicModel& m, std::size_t dm, const std::vector<int>& perm) {
  IntrinsicModel out = m;
  auto& d = out.dms.at(dm);
  const std::size_t ny = d.measurements.size();
  if (perm.size() != ny) throw Error(ErrorCode::InvalidArgument, "relabeling must list every symbol");
  std::vector<int> inv(ny, -1);
  for (std::size_t k = 0; k < ny; ++k) inv.at(perm[k]) = static_cast<int>(k);
  Alphabet a;
  for (int p : perm) a.symbols.push_back(m.dms[dm].measurements[p]);
  d.measurements = a;
  for (auto& c : d.obs.cells) {
    if (c) c = inv[*c];
  }
  out.ordering.reset();
  out.nested.clear();
  return out;
}

}  // namespace nst
