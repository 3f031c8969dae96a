#pragma once

// Text form of reduced static models (`nst 1 static-reduced`).
//
//   nst 1 static-reduced
//   dms 3
//   mode policy-free            # or policy-parameterized
//   labels union                # or tagged
//   reference uniform           # or dyadic, explicit
//   signal w0 : 0 1
//   signal ws0 : 0 1
//   dm 1
//     actions : 0 1
//     measurements : 0 "1/2" 1
//     policy : 0 1 0            # policy-parameterized only
//   end
//   base                        # w0 ws0 : mass
//   reference                   # stage k : Q over the stage labels
//   order                       # history : acting DM (union labels only)
//   density                     # history : f over the stage labels
//   cost                        # full history : reduced cost
//   permutations                # ordinal : DM sequence
//
// Histories are written as w0 ws0 y_1 v_1 ... in stage-label symbols.  The
// stage alphabets are not stored; they follow from the DM alphabets and the
// label mode.

#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dsl.hpp"
#include "static_model.hpp"

namespace nst::dsl {

namespace detail {

inline std::string history_text(const ReducedStaticModel& r, const History& h) {
  std::string out = quote(r.w0[h[0]]) + " " + quote(r.ws0[h[1]]);
  for (std::size_t k = 2; k < h.size(); k += 2) {
    out += " " + quote(r.stage_y[h[k]]) + " " + quote(r.stage_u[h[k + 1]]);
  }
  return out;
}

inline History history_at(const ReducedStaticModel& r, const std::vector<Token>& toks, const Line& l, bool full) {
  if (toks.size() < 2 || toks.size() % 2 != 0 || toks.size() > 2 + 2 * r.n || (full && toks.size() != 2 + 2 * r.n) ||
      (!full && toks.size() == 2 + 2 * r.n)) {
    fail(ErrorCode::SyntaxError, "malformed history", l);
  }
  History h{lookup(r.w0, toks[0], "w0"), lookup(r.ws0, toks[1], "ws0")};
  for (std::size_t k = 2; k < toks.size(); k += 2) {
    h.push_back(lookup(r.stage_y, toks[k], "the stage measurement labels"));
    h.push_back(lookup(r.stage_u, toks[k + 1], "the stage action labels"));
  }
  return h;
}

inline std::vector<Rational> rational_row(const std::vector<Token>& toks, std::size_t size, const Line& l) {
  if (toks.size() != size) fail(ErrorCode::SyntaxError, "expected " + std::to_string(size) + " values", l);
  std::vector<Rational> out;
  for (const auto& t : toks) out.push_back(rational_at(t));
  return out;
}

}  // namespace detail

inline std::string serialize_static(const ReducedStaticModel& r) {
  std::ostringstream os;
  const bool param = r.mode == ReducedStaticModel::Mode::PolicyParameterized;
  os << "nst " << kFormatVersion << " static-reduced\n";
  os << "dms " << r.n << "\n";
  os << "mode " << (param ? "policy-parameterized" : "policy-free") << "\n";
  os << "labels " << (r.labels == StageLabels::Tagged ? "tagged" : "union") << "\n";
  os << "reference " << reference_name(r.reference_kind) << "\n";
  os << "signal w0 :";
  for (const auto& s : r.w0.symbols) os << " " << quote(s);
  os << "\nsignal ws0 :";
  for (const auto& s : r.ws0.symbols) os << " " << quote(s);
  os << "\n";
  for (std::size_t i = 0; i < r.n; ++i) {
    os << "dm " << i + 1 << "\n  actions :";
    for (const auto& s : r.actions[i].symbols) os << " " << quote(s);
    os << "\n  measurements :";
    for (const auto& s : r.measurements[i].symbols) os << " " << quote(s);
    os << "\n";
    if (param) {
      os << "  policy :";
      for (int u : r.policy->table[i]) os << " " << quote(r.actions[i][u]);
      os << "\n";
    }
    os << "end\n";
  }
  os << "base\n";
  for (const auto& [key, p] : r.base) os << "  " << quote(r.w0[key.first]) << " " << quote(r.ws0[key.second]) << " : " << to_string(p) << "\n";
  os << "end\nreference\n";
  for (std::size_t k = 0; k < r.reference.size(); ++k) {
    os << "  stage " << k + 1 << " :";
    for (const auto& q : r.reference[k]) os << " " << to_string(q);
    os << "\n";
  }
  os << "end\n";
  if (r.labels == StageLabels::Union) {
    os << "order\n";
    for (const auto& [h, dm] : r.order) os << "  " << detail::history_text(r, h) << " : " << dm + 1 << "\n";
    os << "end\n";
  }
  os << "density\n";
  for (const auto& [h, row] : r.density) {
    os << "  " << detail::history_text(r, h) << " :";
    for (const auto& f : row) os << " " << to_string(f);
    os << "\n";
  }
  os << "end\ncost\n";
  for (const auto& [h, c] : r.cost) os << "  " << detail::history_text(r, h) << " : " << to_string(c) << "\n";
  os << "end\npermutations\n";
  for (std::size_t k = 0; k < r.permutations.size(); ++k) {
    os << "  " << k + 1 << " :";
    for (int dm : r.permutations[k]) os << " " << dm + 1;
    os << "\n";
  }
  os << "end\n";
  return os.str();
}

inline ReducedStaticModel parse_static(std::string_view text) {
  Cursor cur(tokenize(text));
  Header head = read_header(cur);
  if (head.kind != "static-reduced") {
    throw Error(ErrorCode::SyntaxError, "expected a static-reduced document, found '" + head.kind + "'", 1, 1);
  }
  ReducedStaticModel r;
  r.n = head.n_dms;
  auto keyword = [&](std::string_view name, std::initializer_list<std::string_view> values) {
    const Line& l = cur.next();
    if (!l.is_word(0, name) || l.tokens.size() != 2) fail(ErrorCode::SyntaxError, "expected '" + std::string(name) + " <value>'", l);
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (l.tokens[1].text == values.begin()[k]) return k;
    }
    fail(ErrorCode::SyntaxError, "unknown " + std::string(name) + " '" + l.tokens[1].text + "'", l.tokens[1]);
  };
  r.mode = keyword("mode", {"policy-free", "policy-parameterized"}) == 0 ? ReducedStaticModel::Mode::PolicyFree
                                                                         : ReducedStaticModel::Mode::PolicyParameterized;
  r.labels = keyword("labels", {"union", "tagged"}) == 0 ? StageLabels::Union : StageLabels::Tagged;
  r.reference_kind = static_cast<ReferenceKind>(keyword("reference", {"uniform", "dyadic", "explicit"}));
  for (const char* name : {"w0", "ws0"}) {
    const Line& l = cur.next();
    if (!l.is_word(0, "signal") || !l.is_word(1, name)) fail(ErrorCode::SyntaxError, std::string("expected 'signal ") + name + " : ...'", l);
    auto [lhs, rhs] = split_row(l);
    (std::string(name) == "w0" ? r.w0 : r.ws0) = alphabet_from(rhs, l);
  }
  const bool param = r.mode == ReducedStaticModel::Mode::PolicyParameterized;
  PolicyProfile policy;
  for (std::size_t i = 0; i < r.n; ++i) {
    const Line& l = cur.next();
    if (!l.is_word(0, "dm") || l.tokens.size() != 2 || detail::dm_at(l.tokens[1], r.n) != static_cast<int>(i)) {
      fail(ErrorCode::SyntaxError, "expected 'dm " + std::to_string(i + 1) + "'", l);
    }
    const Line& a = cur.next();
    if (!a.is_word(0, "actions")) fail(ErrorCode::SyntaxError, "expected 'actions : ...'", a);
    r.actions.push_back(alphabet_from(split_row(a).second, a));
    const Line& y = cur.next();
    if (!y.is_word(0, "measurements")) fail(ErrorCode::SyntaxError, "expected 'measurements : ...'", y);
    r.measurements.push_back(alphabet_from(split_row(y).second, y));
    if (param) {
      const Line& p = cur.next();
      if (!p.is_word(0, "policy")) fail(ErrorCode::SyntaxError, "expected 'policy : ...'", p);
      auto rhs = split_row(p).second;
      if (rhs.size() != r.measurements[i].size()) fail(ErrorCode::SyntaxError, "policy needs one action per measurement", p);
      std::vector<int> row;
      for (const auto& t : rhs) row.push_back(lookup(r.actions[i], t, "U of DM " + std::to_string(i + 1)));
      policy.table.push_back(std::move(row));
    }
    cur.expect_end();
  }
  if (param) r.policy = policy;
  assign_labels(r);

  auto section = [&](std::string_view name, const std::function<void(const Line&)>& row) {
    const Line& l = cur.next();
    if (!l.is_word(0, name) || l.tokens.size() != 1) fail(ErrorCode::SyntaxError, "expected section '" + std::string(name) + "'", l);
    while (!cur.at_end_marker()) row(cur.next());
    cur.expect_end();
  };
  section("base", [&](const Line& l) {
    auto [lhs, rhs] = split_row(l);
    if (lhs.size() != 2 || rhs.size() != 1) fail(ErrorCode::SyntaxError, "expected '<w0> <ws0> : <mass>'", l);
    std::pair<int, int> key{lookup(r.w0, lhs[0], "w0"), lookup(r.ws0, lhs[1], "ws0")};
    if (r.base.count(key)) fail(ErrorCode::DuplicateRow, "row is given twice", l);
    r.base[key] = rational_at(rhs[0]);
  });
  std::map<long, std::vector<Rational>> refs;
  section("reference", [&](const Line& l) {
    auto [lhs, rhs] = split_row(l);
    if (lhs.size() != 2 || !l.is_word(0, "stage")) fail(ErrorCode::SyntaxError, "expected 'stage <k> : ...'", l);
    long k = integer_at(lhs[1]);
    if (k < 1 || static_cast<std::size_t>(k) > r.n) fail(ErrorCode::SyntaxError, "stage number out of range", lhs[1]);
    if (refs.count(k)) fail(ErrorCode::DuplicateRow, "stage is given twice", l);
    refs[k] = detail::rational_row(rhs, r.stage_y.size(), l);
  });
  for (auto& [k, row] : refs) r.reference.push_back(std::move(row));
  if (r.labels == StageLabels::Union) {
    section("order", [&](const Line& l) {
      auto [lhs, rhs] = split_row(l);
      History h = detail::history_at(r, lhs, l, false);
      if (rhs.size() != 1) fail(ErrorCode::SyntaxError, "expected one DM", l);
      if (r.order.count(h)) fail(ErrorCode::DuplicateRow, "row is given twice", l);
      r.order[h] = detail::dm_at(rhs[0], r.n);
    });
  }
  section("density", [&](const Line& l) {
    auto [lhs, rhs] = split_row(l);
    History h = detail::history_at(r, lhs, l, false);
    if (r.density.count(h)) fail(ErrorCode::DuplicateRow, "row is given twice", l);
    r.density[h] = detail::rational_row(rhs, r.stage_y.size(), l);
  });
  section("cost", [&](const Line& l) {
    auto [lhs, rhs] = split_row(l);
    History h = detail::history_at(r, lhs, l, true);
    if (rhs.size() != 1) fail(ErrorCode::SyntaxError, "expected one value", l);
    if (r.cost.count(h)) fail(ErrorCode::DuplicateRow, "row is given twice", l);
    r.cost[h] = rational_at(rhs[0]);
  });
  std::map<long, std::vector<int>> perms;
  section("permutations", [&](const Line& l) {
    auto [lhs, rhs] = split_row(l);
    if (lhs.size() != 1) fail(ErrorCode::SyntaxError, "expected '<number> : <DMs>'", l);
    long k = integer_at(lhs[0]);
    if (perms.count(k)) fail(ErrorCode::DuplicateRow, "permutation number is given twice", l);
    if (rhs.size() != r.n) fail(ErrorCode::SyntaxError, "a permutation lists every DM once", l);
    std::vector<int> perm;
    std::vector<bool> seen(r.n, false);
    for (const auto& t : rhs) {
      int dm = detail::dm_at(t, r.n);
      if (seen[dm]) fail(ErrorCode::DuplicateRow, "DM listed twice", t);
      seen[dm] = true;
      perm.push_back(dm);
    }
    perms[k] = std::move(perm);
  });
  long expect = 1;
  for (auto& [k, perm] : perms) {
    if (k != expect++) throw Error(ErrorCode::MissingEntry, "permutations must be numbered 1, 2, ... without gaps");
    r.permutations.push_back(std::move(perm));
  }
  if (!cur.done()) fail(ErrorCode::UnknownSection, "unexpected content after the last section", cur.peek());
  auto diags = diagnose_static(r);
  if (!diags.empty()) throw ValidationError(std::move(diags));
  return r;
}

}  // namespace nst::dsl
