#pragma once

// Text format for models, policies and reduced static models.
//
//   nst 1 intrinsic
//   dms 2
//   signal w0 : 0 1          # one line per signal: w0 ws0 w1 .. wN
//   prior product            # or `prior joint` with one row per signal tuple
//     w0 : 1/2 1/2
//   end
//   dm 1
//     actions : 0 1
//     measurements : 0 "1/2" 1
//     obs (w0 u2)            # any coordinates; rows map symbols to Y
//       0 0 : 0
//     end
//   end
//   cost (w0 u1 u2)          # w0, ws0 and actions only
//     0 0 0 : 1/3
//   end
//   ordering tree            # optional; stage k reads signals and us1..us(k-1)
//     stage 1 (ws0)
//       0 : 1
//     end
//   end
//
// Blank lines and `#` comments are ignored.  Symbols that are not plain
// words (for example "1/2") are double-quoted.  Every table row must appear
// exactly once.  Serialization is canonical: arguments and rows follow the
// coordinate order and rationals are reduced.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "model.hpp"
#include "rational.hpp"

namespace nst::dsl {

inline constexpr int kFormatVersion = 1;

enum class TokenKind { Word, Quoted, LParen, RParen, Colon };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t line;
  std::size_t column;
};

struct Line {
  std::vector<Token> tokens;
  std::size_t number = 0;

  bool is_word(std::size_t k, std::string_view w) const {
    return k < tokens.size() && tokens[k].kind == TokenKind::Word && tokens[k].text == w;
  }
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg, const Token& t) {
  throw Error(code, msg, t.line, t.column);
}

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg, const Line& l) {
  throw Error(code, msg, l.number, l.tokens.empty() ? 1 : l.tokens.front().column);
}

inline std::vector<Line> tokenize(std::string_view text) {
  std::vector<Line> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    ++line_no;
    Line line;
    line.number = line_no;
    std::size_t i = 0;
    while (i < raw.size()) {
      char c = raw[i];
      if (c == '#') break;
      if (c == ' ' || c == '\t' || c == '\r') {
        ++i;
        continue;
      }
      std::size_t col = i + 1;
      if (c == '(' || c == ')' || c == ':') {
        TokenKind k = c == '(' ? TokenKind::LParen : c == ')' ? TokenKind::RParen : TokenKind::Colon;
        line.tokens.push_back({k, std::string(1, c), line_no, col});
        ++i;
        continue;
      }
      if (c == '"') {
        std::string val;
        ++i;
        bool closed = false;
        while (i < raw.size()) {
          if (raw[i] == '\\' && i + 1 < raw.size()) {
            val += raw[i + 1];
            i += 2;
            continue;
          }
          if (raw[i] == '"') {
            closed = true;
            ++i;
            break;
          }
          val += raw[i++];
        }
        if (!closed) throw Error(ErrorCode::SyntaxError, "unterminated string", line_no, col);
        line.tokens.push_back({TokenKind::Quoted, val, line_no, col});
        continue;
      }
      std::size_t j = i;
      while (j < raw.size() && raw[j] != ' ' && raw[j] != '\t' && raw[j] != '\r' && raw[j] != '#' && raw[j] != '(' &&
             raw[j] != ')' && raw[j] != ':' && raw[j] != '"') {
        ++j;
      }
      line.tokens.push_back({TokenKind::Word, std::string(raw.substr(i, j - i)), line_no, col});
      i = j;
    }
    if (!line.tokens.empty()) out.push_back(std::move(line));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return out;
}

inline bool is_reserved(std::string_view w) {
  static const std::set<std::string, std::less<>> words{
      "end", "nst", "dms", "signal", "prior", "dm", "actions", "measurements", "obs", "cost", "ordering",
      "stage", "nested", "down", "ghat", "yhat", "g", "h", "compose", "base", "order", "density", "permutations",
      "policy", "mode", "labels", "reference", "alphabet", "identity"};
  return words.count(w) != 0;
}

inline std::string quote(const std::string& sym) {
  bool plain = !sym.empty() && !is_reserved(sym);
  for (char c : sym) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' || c == '+')) plain = false;
  }
  if (plain) return sym;
  std::string out = "\"";
  for (char c : sym) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

class Cursor {
 public:
  explicit Cursor(std::vector<Line> lines) : lines_(std::move(lines)) {}

  bool done() const { return pos_ >= lines_.size(); }
  const Line& peek() const { return lines_.at(pos_); }
  const Line& next() {
    if (done()) {
      std::size_t last = lines_.empty() ? 1 : lines_.back().number;
      throw Error(ErrorCode::SyntaxError, "unexpected end of input", last, 1);
    }
    return lines_[pos_++];
  }
  bool at_end_marker() const { return !done() && peek().tokens.size() == 1 && peek().is_word(0, "end"); }
  void expect_end() {
    const Line& l = next();
    if (!(l.tokens.size() == 1 && l.is_word(0, "end"))) fail(ErrorCode::SyntaxError, "expected 'end'", l);
  }

 private:
  std::vector<Line> lines_;
  std::size_t pos_ = 0;
};

inline const std::string& symbol_text(const Token& t) {
  if (t.kind == TokenKind::Quoted) return t.text;
  if (t.kind != TokenKind::Word) fail(ErrorCode::SyntaxError, "expected a symbol", t);
  if (t.text.find('/') != std::string::npos) fail(ErrorCode::SyntaxError, "symbols containing '/' must be quoted", t);
  return t.text;
}

inline Rational rational_at(const Token& t) {
  if (t.kind != TokenKind::Word) fail(ErrorCode::SyntaxError, "expected a rational", t);
  try {
    return parse_rational(t.text);
  } catch (const Error& e) {
    fail(e.code(), e.diagnostic().message, t);
  }
}

inline long integer_at(const Token& t) {
  if (t.kind != TokenKind::Word || t.text.empty() ||
      !std::all_of(t.text.begin(), t.text.end(), [](char c) { return c >= '0' && c <= '9'; }) || t.text.size() > 9) {
    fail(ErrorCode::SyntaxError, "expected a non-negative integer", t);
  }
  return std::stol(t.text);
}

// Splits a row `lhs... : rhs...` at its single colon.
inline std::pair<std::vector<Token>, std::vector<Token>> split_row(const Line& l) {
  std::size_t colon = l.tokens.size();
  for (std::size_t k = 0; k < l.tokens.size(); ++k) {
    if (l.tokens[k].kind == TokenKind::Colon) {
      if (colon != l.tokens.size()) fail(ErrorCode::SyntaxError, "row has more than one ':'", l.tokens[k]);
      colon = k;
    }
  }
  if (colon == l.tokens.size()) fail(ErrorCode::SyntaxError, "row needs ':'", l);
  return {std::vector<Token>(l.tokens.begin(), l.tokens.begin() + colon),
          std::vector<Token>(l.tokens.begin() + colon + 1, l.tokens.end())};
}

inline Alphabet alphabet_from(const std::vector<Token>& toks, const Line& l) {
  Alphabet a;
  for (const auto& t : toks) {
    const std::string& s = symbol_text(t);
    if (a.index(s)) fail(ErrorCode::DuplicateRow, "symbol '" + s + "' is listed twice", t);
    a.symbols.push_back(s);
  }
  if (a.size() == 0) fail(ErrorCode::SyntaxError, "alphabet is empty", l);
  return a;
}

inline int lookup(const Alphabet& a, const Token& t, const std::string& what) {
  const std::string& s = symbol_text(t);
  auto k = a.index(s);
  if (!k) fail(ErrorCode::UnknownSymbol, "'" + s + "' is not a symbol of " + what, t);
  return *k;
}

// `( name name ... )` starting at token k; returns tokens of the names.
inline std::vector<Token> paren_list(const Line& l, std::size_t k) {
  if (k >= l.tokens.size() || l.tokens[k].kind != TokenKind::LParen) fail(ErrorCode::SyntaxError, "expected '('", l);
  std::vector<Token> out;
  std::size_t j = k + 1;
  for (; j < l.tokens.size() && l.tokens[j].kind != TokenKind::RParen; ++j) {
    if (l.tokens[j].kind != TokenKind::Word) fail(ErrorCode::SyntaxError, "expected a coordinate name", l.tokens[j]);
    out.push_back(l.tokens[j]);
  }
  if (j >= l.tokens.size()) fail(ErrorCode::SyntaxError, "missing ')'", l);
  if (j + 1 != l.tokens.size()) fail(ErrorCode::SyntaxError, "unexpected tokens after ')'", l.tokens[j + 1]);
  return out;
}

struct Header {
  std::string kind;
  std::size_t n_dms = 0;
};

inline Header read_header(Cursor& cur) {
  const Line& l = cur.next();
  if (!l.is_word(0, "nst") || l.tokens.size() != 3) fail(ErrorCode::SyntaxError, "expected 'nst <version> <kind>'", l);
  if (integer_at(l.tokens[1]) != kFormatVersion) fail(ErrorCode::SyntaxError, "unsupported format version", l.tokens[1]);
  Header h;
  h.kind = l.tokens[2].text;
  const Line& d = cur.next();
  if (!d.is_word(0, "dms") || d.tokens.size() != 2) fail(ErrorCode::SyntaxError, "expected 'dms <count>'", d);
  long n = integer_at(d.tokens[1]);
  if (n < 1 || n > 16) fail(ErrorCode::SyntaxError, "DM count must be between 1 and 16", d.tokens[1]);
  h.n_dms = static_cast<std::size_t>(n);
  return h;
}

inline std::string document_kind(std::string_view text) {
  Cursor cur(tokenize(text));
  return read_header(cur).kind;
}

namespace detail {

struct ModelContext {
  IntrinsicModel* model;
  std::size_t n;

  const Alphabet& alphabet(int coord) const {
    return static_cast<std::size_t>(coord) < n + 2 ? model->signals[coord] : model->dms[coord - n - 2].actions;
  }
};

// Resolves argument names to coordinate ids; returns them sorted together
// with the permutation from declared position to sorted position.
inline std::vector<int> resolve_args(const ModelContext& ctx, const std::vector<Token>& names,
                                     std::vector<std::size_t>& sorted_pos, bool allow_actions) {
  std::vector<int> ids;
  for (const auto& t : names) {
    auto id = coordinate_id(ctx.n, t.text);
    if (!id) fail(ErrorCode::UnknownSymbol, "unknown coordinate '" + t.text + "'", t);
    if (!allow_actions && static_cast<std::size_t>(*id) >= ctx.n + 2) {
      fail(ErrorCode::SyntaxError, "coordinate '" + t.text + "' is not allowed here", t);
    }
    if (std::find(ids.begin(), ids.end(), *id) != ids.end()) {
      fail(ErrorCode::DuplicateRow, "coordinate '" + t.text + "' is listed twice", t);
    }
    ids.push_back(*id);
  }
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  sorted_pos.resize(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    sorted_pos[k] = static_cast<std::size_t>(std::find(sorted.begin(), sorted.end(), ids[k]) - sorted.begin());
  }
  return sorted;
}

template <class V, class ReadValue>
Table<V> read_table(Cursor& cur, const ModelContext& ctx, const std::vector<Token>& arg_names, bool allow_actions,
                    ReadValue&& read_value) {
  std::vector<std::size_t> pos;
  Table<V> t;
  t.args = resolve_args(ctx, arg_names, pos, allow_actions);
  t.cells.assign(table_extent(*ctx.model, t.args), std::nullopt);
  while (!cur.at_end_marker()) {
    const Line& l = cur.next();
    auto [lhs, rhs] = split_row(l);
    if (lhs.size() != t.args.size()) fail(ErrorCode::SyntaxError, "row has the wrong number of entries", l);
    std::vector<int> digits(t.args.size());
    for (std::size_t k = 0; k < lhs.size(); ++k) {
      int coord = t.args[pos[k]];
      digits[pos[k]] = lookup(ctx.alphabet(coord), lhs[k], coordinate_name(ctx.n, coord));
    }
    std::size_t off = 0;
    for (std::size_t k = 0; k < t.args.size(); ++k) off = off * coordinate_radix(*ctx.model, t.args[k]) + digits[k];
    if (rhs.size() != 1) fail(ErrorCode::SyntaxError, "row needs exactly one value", l);
    if (t.cells[off]) fail(ErrorCode::DuplicateRow, "row is given twice", l);
    t.cells[off] = read_value(rhs[0]);
  }
  cur.expect_end();
  return t;
}

inline int dm_at(const Token& t, std::size_t n) {
  long v = integer_at(t);
  if (v < 1 || static_cast<std::size_t>(v) > n) fail(ErrorCode::UnknownDm, "no DM numbered " + t.text, t);
  return static_cast<int>(v - 1);
}

inline void read_ordering(Cursor& cur, const Line& head, ModelContext& ctx, const Model* partial_union) {
  (void)partial_union;
  IntrinsicModel& m = *ctx.model;
  if (head.tokens.size() != 2) fail(ErrorCode::SyntaxError, "expected 'ordering tree' or 'ordering flat'", head);
  Alphabet uni;
  for (const auto& d : m.dms) {
    for (const auto& s : d.actions.symbols) {
      if (!uni.index(s)) uni.symbols.push_back(s);
    }
  }
  if (head.is_word(1, "tree")) {
    OrderingTree tree;
    while (!cur.at_end_marker()) {
      const Line& l = cur.next();
      if (!l.is_word(0, "stage") || l.tokens.size() < 2) fail(ErrorCode::SyntaxError, "expected 'stage <k> (...)'", l);
      long k = integer_at(l.tokens[1]);
      if (k != static_cast<long>(tree.stages.size()) + 1) fail(ErrorCode::SyntaxError, "stages must be numbered 1, 2, ...", l.tokens[1]);
      auto names = paren_list(l, 2);
      StageRule rule;
      std::vector<Token> sig_names;
      std::vector<int> stage_pos;  // declared index -> stage action number (0-based) or -1
      for (const auto& t : names) {
        if (t.text.rfind("us", 0) == 0) {
          long j = 0;
          try {
            j = std::stol(t.text.substr(2));
          } catch (...) {
            fail(ErrorCode::UnknownSymbol, "unknown coordinate '" + t.text + "'", t);
          }
          if (j < 1 || j >= k) fail(ErrorCode::UnknownSymbol, "stage " + std::to_string(k) + " cannot read '" + t.text + "'", t);
          stage_pos.push_back(static_cast<int>(j - 1));
        } else {
          sig_names.push_back(t);
          stage_pos.push_back(-1);
        }
      }
      std::vector<std::size_t> pos;
      rule.signal_args = resolve_args(ctx, sig_names, pos, false);
      std::vector<int> seen_stage;
      for (int sp : stage_pos) {
        if (sp >= 0) seen_stage.push_back(sp);
      }
      auto sorted_stage = seen_stage;
      std::sort(sorted_stage.begin(), sorted_stage.end());
      for (std::size_t j = 0; j < sorted_stage.size(); ++j) {
        if (sorted_stage[j] != static_cast<int>(j) || sorted_stage.size() != static_cast<std::size_t>(k - 1)) {
          fail(ErrorCode::SyntaxError, "stage " + std::to_string(k) + " must read us1..us" + std::to_string(k - 1), l);
        }
      }
      if (sorted_stage.size() != static_cast<std::size_t>(k - 1)) {
        fail(ErrorCode::SyntaxError, "stage " + std::to_string(k) + " must read us1..us" + std::to_string(k - 1), l);
      }
      while (!cur.at_end_marker()) {
        const Line& r = cur.next();
        auto [lhs, rhs] = split_row(r);
        if (lhs.size() != names.size() || rhs.size() != 1) fail(ErrorCode::SyntaxError, "malformed stage row", r);
        std::vector<int> key(rule.signal_args.size() + static_cast<std::size_t>(k - 1));
        std::size_t sig_k = 0;
        for (std::size_t j = 0; j < lhs.size(); ++j) {
          if (stage_pos[j] >= 0) {
            key[rule.signal_args.size() + stage_pos[j]] = lookup(uni, lhs[j], "the action symbols");
          } else {
            int coord = rule.signal_args[pos[sig_k]];
            key[pos[sig_k]] = lookup(m.signals[coord], lhs[j], signal_name(coord));
            ++sig_k;
          }
        }
        if (rule.rows.count(key)) fail(ErrorCode::DuplicateRow, "stage row is given twice", r);
        rule.rows[key] = dm_at(rhs[0], ctx.n);
      }
      cur.expect_end();
      tree.stages.push_back(std::move(rule));
    }
    cur.expect_end();
    m.ordering = tree;
  } else if (head.is_word(1, "flat")) {
    std::vector<int> all;
    for (std::size_t c = 0; c < 2 * ctx.n + 2; ++c) all.push_back(static_cast<int>(c));
    FlatOrdering flat;
    std::size_t total = table_extent(m, all);
    std::vector<std::optional<std::vector<int>>> rows(total);
    while (!cur.at_end_marker()) {
      const Line& r = cur.next();
      auto [lhs, rhs] = split_row(r);
      if (lhs.size() != all.size() || rhs.size() != ctx.n) fail(ErrorCode::SyntaxError, "malformed flat ordering row", r);
      std::size_t off = 0;
      for (std::size_t c = 0; c < all.size(); ++c) {
        off = off * coordinate_radix(m, all[c]) + lookup(ctx.alphabet(all[c]), lhs[c], coordinate_name(ctx.n, c));
      }
      if (rows[off]) fail(ErrorCode::DuplicateRow, "flat ordering row is given twice", r);
      std::vector<int> perm;
      for (const auto& t : rhs) perm.push_back(dm_at(t, ctx.n));
      rows[off] = perm;
    }
    cur.expect_end();
    for (std::size_t x = 0; x < total; ++x) {
      if (!rows[x]) throw Error(ErrorCode::MissingEntry, "flat ordering misses an outcome row", head.number, 1);
      flat.perm.push_back(*rows[x]);
    }
    m.ordering = flat;
  } else {
    fail(ErrorCode::SyntaxError, "expected 'ordering tree' or 'ordering flat'", head);
  }
}

inline void read_nested(Cursor& cur, const Line& head, ModelContext& ctx) {
  IntrinsicModel& m = *ctx.model;
  if (head.tokens.size() != 2) fail(ErrorCode::SyntaxError, "expected 'nested <dm>'", head);
  int dm = dm_at(head.tokens[1], ctx.n);
  if (m.nested.count(dm)) fail(ErrorCode::DuplicateRow, "nested decomposition of this DM is given twice", head);
  NestedPart part;
  bool have_g = false, have_h = false, have_c = false, have_down = false;
  while (!cur.at_end_marker()) {
    const Line& l = cur.next();
    if (l.is_word(0, "down")) {
      auto [lhs, rhs] = split_row(l);
      for (const auto& t : rhs) {
        int j = dm_at(t, ctx.n);
        if (std::find(part.down.begin(), part.down.end(), j) != part.down.end()) {
          fail(ErrorCode::DuplicateRow, "DM listed twice", t);
        }
        part.down.push_back(j);
      }
      std::sort(part.down.begin(), part.down.end());
      have_down = true;
    } else if (l.is_word(0, "ghat")) {
      part.ghat = alphabet_from(split_row(l).second, l);
    } else if (l.is_word(0, "yhat")) {
      part.yhat = alphabet_from(split_row(l).second, l);
    } else if (l.is_word(0, "g")) {
      if (part.ghat.size() == 0) fail(ErrorCode::SyntaxError, "declare ghat before g", l);
      auto names = paren_list(l, 1);
      part.g = read_table<int>(cur, ctx, names, false, [&](const Token& t) { return lookup(part.ghat, t, "ghat"); });
      have_g = true;
    } else if (l.is_word(0, "h") || l.is_word(0, "compose")) {
      bool is_h = l.is_word(0, "h");
      if (l.tokens.size() != 1) fail(ErrorCode::SyntaxError, "unexpected tokens", l.tokens[1]);
      if (part.ghat.size() == 0 || part.yhat.size() == 0 || !have_down) {
        fail(ErrorCode::SyntaxError, "declare down, ghat and yhat first", l);
      }
      auto& target = is_h ? part.h : part.compose;
      while (!cur.at_end_marker()) {
        const Line& r = cur.next();
        auto [lhs, rhs] = split_row(r);
        if (lhs.size() != part.down.size() + 1 || rhs.size() != 1) fail(ErrorCode::SyntaxError, "malformed row", r);
        std::vector<int> key;
        if (is_h) {
          key.push_back(lookup(part.ghat, lhs[0], "ghat"));
          for (std::size_t j = 0; j < part.down.size(); ++j) {
            key.push_back(lookup(m.dms[part.down[j]].actions, lhs[j + 1], action_name(part.down[j])));
          }
        } else {
          for (std::size_t j = 0; j < part.down.size(); ++j) {
            key.push_back(lookup(m.dms[part.down[j]].measurements, lhs[j], "Y of DM " + std::to_string(part.down[j] + 1)));
          }
          key.push_back(lookup(part.yhat, lhs.back(), "yhat"));
        }
        if (target.count(key)) fail(ErrorCode::DuplicateRow, "row is given twice", r);
        target[key] = is_h ? lookup(part.yhat, rhs[0], "yhat")
                           : lookup(m.dms[dm].measurements, rhs[0], "Y of DM " + std::to_string(dm + 1));
      }
      cur.expect_end();
      (is_h ? have_h : have_c) = true;
    } else {
      fail(ErrorCode::UnknownSection, "unknown nested entry '" + l.tokens[0].text + "'", l.tokens[0]);
    }
  }
  cur.expect_end();
  if (!have_g || !have_h || !have_c || !have_down) {
    throw Error(ErrorCode::MissingEntry, "nested decomposition needs down, g, h and compose", head.number, 1);
  }
  m.nested[dm] = std::move(part);
}

}  // namespace detail

// Parses an intrinsic model.  Syntax errors carry the offending line and
// column; semantic checks (totality, normalization) run in Model.
inline IntrinsicModel parse_intrinsic(std::string_view text) {
  Cursor cur(tokenize(text));
  Header h = read_header(cur);
  if (h.kind != "intrinsic") throw Error(ErrorCode::SyntaxError, "expected an intrinsic model, found '" + h.kind + "'", 1, 1);
  IntrinsicModel m;
  const std::size_t n = h.n_dms;
  m.signals.assign(n + 2, {});
  m.dms.assign(n, {});
  detail::ModelContext ctx{&m, n};
  std::vector<bool> have_signal(n + 2, false), have_dm(n, false), have_obs(n, false);
  bool have_prior = false, have_cost = false;
  std::optional<Line> pending_prior, pending_cost, pending_ordering;
  std::vector<std::pair<Line, std::size_t>> dm_blocks;

  // Signals and DM alphabets must be known before tables can be read, so
  // the parser records table positions and reads them in a second pass.
  std::vector<Line> lines;
  while (!cur.done()) lines.push_back(cur.next());

  auto block_end = [&](std::size_t start) {
    // Returns the index one past the matching `end` of the block at start.
    int depth = 0;
    for (std::size_t k = start; k < lines.size(); ++k) {
      const Line& l = lines[k];
      bool opener = l.is_word(0, "prior") || l.is_word(0, "dm") || l.is_word(0, "obs") || l.is_word(0, "cost") ||
                    l.is_word(0, "ordering") || l.is_word(0, "stage") || l.is_word(0, "nested") ||
                    l.is_word(0, "g") || l.is_word(0, "h") || l.is_word(0, "compose");
      bool is_row = std::any_of(l.tokens.begin(), l.tokens.end(), [](const Token& t) { return t.kind == TokenKind::Colon; });
      if (opener && !is_row) ++depth;
      if (l.tokens.size() == 1 && l.is_word(0, "end")) {
        --depth;
        if (depth == 0) return k + 1;
      }
    }
    throw Error(ErrorCode::SyntaxError, "block is not closed with 'end'", lines[start].number, 1);
  };

  std::vector<std::pair<std::size_t, std::size_t>> table_blocks;  // deferred [start, end)
  std::size_t k = 0;
  while (k < lines.size()) {
    const Line& l = lines[k];
    if (l.is_word(0, "signal")) {
      if (l.tokens.size() < 4 || l.tokens[2].kind != TokenKind::Colon) fail(ErrorCode::SyntaxError, "expected 'signal <name> : <symbols>'", l);
      auto id = coordinate_id(n, l.tokens[1].text);
      if (!id || static_cast<std::size_t>(*id) >= n + 2) fail(ErrorCode::UnknownSymbol, "unknown signal '" + l.tokens[1].text + "'", l.tokens[1]);
      if (have_signal[*id]) fail(ErrorCode::DuplicateRow, "signal '" + l.tokens[1].text + "' is declared twice", l);
      m.signals[*id] = alphabet_from(std::vector<Token>(l.tokens.begin() + 3, l.tokens.end()), l);
      have_signal[*id] = true;
      ++k;
    } else if (l.is_word(0, "dm")) {
      if (l.tokens.size() != 2) fail(ErrorCode::SyntaxError, "expected 'dm <number>'", l);
      int dm = detail::dm_at(l.tokens[1], n);
      if (have_dm[dm]) fail(ErrorCode::DuplicateRow, "DM " + l.tokens[1].text + " is declared twice", l);
      have_dm[dm] = true;
      std::size_t end = block_end(k);
      for (std::size_t j = k + 1; j + 1 < end; ++j) {
        const Line& e = lines[j];
        if (e.is_word(0, "actions") || e.is_word(0, "measurements")) {
          auto [lhs, rhs] = split_row(e);
          if (lhs.size() != 1) fail(ErrorCode::SyntaxError, "expected '" + e.tokens[0].text + " : <symbols>'", e);
          (e.is_word(0, "actions") ? m.dms[dm].actions : m.dms[dm].measurements) = alphabet_from(rhs, e);
        } else if (e.is_word(0, "obs")) {
          if (have_obs[dm]) fail(ErrorCode::DuplicateRow, "observation table given twice", e);
          have_obs[dm] = true;
          std::size_t oend = block_end(j);
          table_blocks.push_back({j, oend});
          j = oend - 1;
        } else {
          fail(ErrorCode::UnknownSection, "unknown DM entry '" + e.tokens[0].text + "'", e.tokens[0]);
        }
      }
      k = end;
    } else if (l.is_word(0, "prior") || l.is_word(0, "cost") || l.is_word(0, "ordering") || l.is_word(0, "nested")) {
      if (l.is_word(0, "prior")) {
        if (have_prior) fail(ErrorCode::DuplicateRow, "prior is given twice", l);
        have_prior = true;
      }
      if (l.is_word(0, "cost")) {
        if (have_cost) fail(ErrorCode::DuplicateRow, "cost is given twice", l);
        have_cost = true;
      }
      std::size_t end = block_end(k);
      table_blocks.push_back({k, end});
      k = end;
    } else if (l.is_word(0, "end")) {
      fail(ErrorCode::SyntaxError, "unmatched 'end'", l);
    } else {
      fail(ErrorCode::UnknownSection, "unknown section '" + l.tokens[0].text + "'", l.tokens[0]);
    }
  }
  for (std::size_t s = 0; s < n + 2; ++s) {
    if (!have_signal[s]) throw Error(ErrorCode::MissingEntry, "signal " + signal_name(s) + " is not declared");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!have_dm[i]) throw Error(ErrorCode::MissingEntry, "DM " + std::to_string(i + 1) + " is not declared");
    if (m.dms[i].actions.size() == 0 || m.dms[i].measurements.size() == 0) {
      throw Error(ErrorCode::MissingEntry, "DM " + std::to_string(i + 1) + " needs actions and measurements");
    }
    if (!have_obs[i]) throw Error(ErrorCode::MissingEntry, "DM " + std::to_string(i + 1) + " has no observation table");
  }
  if (!have_prior) throw Error(ErrorCode::MissingEntry, "model has no prior");
  if (!have_cost) throw Error(ErrorCode::MissingEntry, "model has no cost");

  // Second pass: tables, in an order where ordering follows the DM blocks.
  std::stable_sort(table_blocks.begin(), table_blocks.end(), [&](auto a, auto b) {
    auto rank = [&](std::size_t idx) { return lines[idx].is_word(0, "ordering") || lines[idx].is_word(0, "nested") ? 1 : 0; };
    return rank(a.first) < rank(b.first);
  });
  for (auto [start, end] : table_blocks) {
    Cursor sub(std::vector<Line>(lines.begin() + start, lines.begin() + end));
    const Line head = sub.next();
    if (head.is_word(0, "obs")) {
      // Find the owning DM by scanning back to the nearest `dm` line.
      std::size_t j = start;
      while (!lines[j].is_word(0, "dm")) --j;
      int dm = detail::dm_at(lines[j].tokens[1], n);
      auto names = paren_list(head, 1);
      const Alphabet& ys = m.dms[dm].measurements;
      m.dms[dm].obs = detail::read_table<int>(sub, ctx, names, true, [&](const Token& t) {
        return lookup(ys, t, "Y of DM " + std::to_string(dm + 1));
      });
    } else if (head.is_word(0, "cost")) {
      auto names = paren_list(head, 1);
      m.cost = detail::read_table<Rational>(sub, ctx, names, true, rational_at);
    } else if (head.is_word(0, "prior")) {
      if (head.is_word(1, "product") && head.tokens.size() == 2) {
        m.prior.form = Prior::Form::Product;
        m.prior.marginals.assign(n + 2, {});
        std::vector<bool> seen(n + 2, false);
        while (!sub.at_end_marker()) {
          const Line& r = sub.next();
          auto [lhs, rhs] = split_row(r);
          if (lhs.size() != 1) fail(ErrorCode::SyntaxError, "expected '<signal> : <weights>'", r);
          auto id = coordinate_id(n, lhs[0].text);
          if (!id || static_cast<std::size_t>(*id) >= n + 2) fail(ErrorCode::UnknownSymbol, "unknown signal '" + lhs[0].text + "'", lhs[0]);
          if (seen[*id]) fail(ErrorCode::DuplicateRow, "marginal given twice", r);
          seen[*id] = true;
          if (rhs.size() != m.signals[*id].size()) fail(ErrorCode::SyntaxError, "marginal needs one weight per symbol", r);
          for (const auto& t : rhs) m.prior.marginals[*id].push_back(rational_at(t));
        }
        sub.expect_end();
        for (std::size_t s = 0; s < n + 2; ++s) {
          if (!seen[s]) throw Error(ErrorCode::MissingEntry, "marginal of " + signal_name(s) + " is missing", head.number, 1);
        }
      } else if (head.is_word(1, "joint") && head.tokens.size() == 2) {
        m.prior.form = Prior::Form::Joint;
        std::vector<Token> names;
        for (std::size_t s = 0; s < n + 2; ++s) names.push_back({TokenKind::Word, signal_name(s), head.number, 1});
        auto t = detail::read_table<Rational>(sub, ctx, names, false, rational_at);
        m.prior.joint = std::move(t.cells);
      } else {
        fail(ErrorCode::SyntaxError, "expected 'prior product' or 'prior joint'", head);
      }
    } else if (head.is_word(0, "ordering")) {
      if (m.ordering) fail(ErrorCode::DuplicateRow, "ordering is given twice", head);
      detail::read_ordering(sub, head, ctx, nullptr);
    } else if (head.is_word(0, "nested")) {
      detail::read_nested(sub, head, ctx);
    }
  }
  return m;
}

inline Model load_model(std::string_view text) { return Model(parse_intrinsic(text)); }

namespace detail {

inline const Alphabet& coord_alphabet(const IntrinsicModel& m, int coord) {
  std::size_t n = m.n_dms();
  return static_cast<std::size_t>(coord) < n + 2 ? m.signals[coord] : m.dms[coord - n - 2].actions;
}

template <class V, class Show>
void write_table(std::ostream& os, const IntrinsicModel& m, const Table<V>& t, const std::string& indent, Show&& show) {
  std::vector<std::size_t> radix;
  for (int a : t.args) radix.push_back(coordinate_radix(m, a));
  std::vector<std::size_t> digit(t.args.size());
  for (std::size_t off = 0; off < t.cells.size(); ++off) {
    if (!t.cells[off]) continue;
    std::size_t rem = off;
    for (std::size_t k = t.args.size(); k-- > 0;) {
      digit[k] = rem % radix[k];
      rem /= radix[k];
    }
    os << indent;
    for (std::size_t k = 0; k < t.args.size(); ++k) os << quote(coord_alphabet(m, t.args[k])[digit[k]]) << ' ';
    os << ": " << show(*t.cells[off]) << '\n';
  }
}

inline std::string arg_list(std::size_t n, const std::vector<int>& args) {
  std::string out = "(";
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (k) out += ' ';
    out += coordinate_name(n, args[k]);
  }
  return out + ")";
}

inline void write_alphabet(std::ostream& os, const Alphabet& a) {
  for (const auto& s : a.symbols) os << ' ' << quote(s);
}

}  // namespace detail

inline std::string serialize(const IntrinsicModel& m) {
  std::ostringstream os;
  const std::size_t n = m.n_dms();
  os << "nst " << kFormatVersion << " intrinsic\n";
  os << "dms " << n << "\n";
  for (std::size_t s = 0; s < n + 2; ++s) {
    os << "signal " << signal_name(s) << " :";
    detail::write_alphabet(os, m.signals[s]);
    os << "\n";
  }
  if (m.prior.form == Prior::Form::Product) {
    os << "prior product\n";
    for (std::size_t s = 0; s < n + 2; ++s) {
      os << "  " << signal_name(s) << " :";
      for (const auto& p : m.prior.marginals[s]) os << ' ' << to_string(p);
      os << "\n";
    }
  } else {
    os << "prior joint\n";
    Table<Rational> t;
    for (std::size_t s = 0; s < n + 2; ++s) t.args.push_back(static_cast<int>(s));
    t.cells = m.prior.joint;
    detail::write_table(os, m, t, "  ", [](const Rational& r) { return to_string(r); });
  }
  os << "end\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = m.dms[i];
    os << "dm " << i + 1 << "\n  actions :";
    detail::write_alphabet(os, d.actions);
    os << "\n  measurements :";
    detail::write_alphabet(os, d.measurements);
    os << "\n  obs " << detail::arg_list(n, d.obs.args) << "\n";
    detail::write_table(os, m, d.obs, "    ", [&](int y) { return quote(d.measurements[y]); });
    os << "  end\nend\n";
  }
  os << "cost " << detail::arg_list(n, m.cost.args) << "\n";
  detail::write_table(os, m, m.cost, "  ", [](const Rational& r) { return to_string(r); });
  os << "end\n";
  if (m.ordering) {
    Alphabet uni;
    for (const auto& d : m.dms) {
      for (const auto& s : d.actions.symbols) {
        if (!uni.index(s)) uni.symbols.push_back(s);
      }
    }
    if (const auto* tree = std::get_if<OrderingTree>(&*m.ordering)) {
      os << "ordering tree\n";
      for (std::size_t k = 0; k < tree->stages.size(); ++k) {
        const auto& rule = tree->stages[k];
        os << "  stage " << k + 1 << " (";
        bool first = true;
        for (int a : rule.signal_args) {
          os << (first ? "" : " ") << signal_name(a);
          first = false;
        }
        for (std::size_t j = 0; j < k; ++j) {
          os << (first ? "" : " ") << "us" << j + 1;
          first = false;
        }
        os << ")\n";
        for (const auto& [key, dm] : rule.rows) {
          os << "    ";
          for (std::size_t j = 0; j < rule.signal_args.size(); ++j) os << quote(m.signals[rule.signal_args[j]][key[j]]) << ' ';
          for (std::size_t j = rule.signal_args.size(); j < key.size(); ++j) os << quote(uni[key[j]]) << ' ';
          os << ": " << dm + 1 << "\n";
        }
        os << "  end\n";
      }
      os << "end\n";
    } else {
      const auto& flat = std::get<FlatOrdering>(*m.ordering);
      os << "ordering flat\n";
      std::vector<int> all;
      for (std::size_t c = 0; c < 2 * n + 2; ++c) all.push_back(static_cast<int>(c));
      Table<std::vector<int>> t;
      t.args = all;
      for (const auto& p : flat.perm) t.cells.emplace_back(p);
      detail::write_table(os, m, t, "  ", [](const std::vector<int>& p) {
        std::string out;
        for (std::size_t k = 0; k < p.size(); ++k) out += (k ? " " : "") + std::to_string(p[k] + 1);
        return out;
      });
      os << "end\n";
    }
  }
  for (const auto& [dm, part] : m.nested) {
    os << "nested " << dm + 1 << "\n  down :";
    for (int j : part.down) os << ' ' << j + 1;
    os << "\n  ghat :";
    detail::write_alphabet(os, part.ghat);
    os << "\n  yhat :";
    detail::write_alphabet(os, part.yhat);
    os << "\n  g " << detail::arg_list(n, part.g.args) << "\n";
    detail::write_table(os, m, part.g, "    ", [&](int v) { return quote(part.ghat[v]); });
    os << "  end\n  h\n";
    for (const auto& [key, v] : part.h) {
      os << "    " << quote(part.ghat[key[0]]);
      for (std::size_t j = 0; j < part.down.size(); ++j) os << ' ' << quote(m.dms[part.down[j]].actions[key[j + 1]]);
      os << " : " << quote(part.yhat[v]) << "\n";
    }
    os << "  end\n  compose\n";
    for (const auto& [key, v] : part.compose) {
      os << "   ";
      for (std::size_t j = 0; j < part.down.size(); ++j) os << ' ' << quote(m.dms[part.down[j]].measurements[key[j]]);
      os << ' ' << quote(part.yhat[key.back()]) << " : " << quote(m.dms[dm].measurements[v]) << "\n";
    }
    os << "  end\nend\n";
  }
  return os.str();
}

// Policy documents list gamma^i(y) for every measurement of every DM.
inline PolicyProfile parse_policy(std::string_view text, const Model& model) {
  Cursor cur(tokenize(text));
  Header h = read_header(cur);
  if (h.kind != "policy") throw Error(ErrorCode::SyntaxError, "expected a policy document, found '" + h.kind + "'", 1, 1);
  if (h.n_dms != model.n()) throw Error(ErrorCode::ModelMismatch, "policy and model disagree on the number of DMs", 2, 1);
  const auto& spec = model.spec();
  std::vector<std::vector<std::optional<int>>> rows(model.n());
  for (std::size_t i = 0; i < model.n(); ++i) rows[i].assign(model.measurement_size(i), std::nullopt);
  std::vector<bool> seen(model.n(), false);
  while (!cur.done()) {
    const Line& l = cur.next();
    if (!l.is_word(0, "dm") || l.tokens.size() != 2) {
      fail(l.tokens[0].kind == TokenKind::Word && l.tokens.size() == 1 ? ErrorCode::SyntaxError : ErrorCode::UnknownSection,
           "expected 'dm <number>'", l);
    }
    int dm = detail::dm_at(l.tokens[1], model.n());
    if (seen[dm]) fail(ErrorCode::DuplicateRow, "DM policy given twice", l);
    seen[dm] = true;
    while (!cur.at_end_marker()) {
      const Line& r = cur.next();
      auto [lhs, rhs] = split_row(r);
      if (lhs.size() != 1 || rhs.size() != 1) fail(ErrorCode::SyntaxError, "expected '<y> : <u>'", r);
      int y = lookup(spec.dms[dm].measurements, lhs[0], "Y of DM " + std::to_string(dm + 1));
      int u = lookup(spec.dms[dm].actions, rhs[0], "U of DM " + std::to_string(dm + 1));
      if (rows[dm][y]) fail(ErrorCode::DuplicateRow, "row is given twice", r);
      rows[dm][y] = u;
    }
    cur.expect_end();
  }
  PolicyProfile g;
  for (std::size_t i = 0; i < model.n(); ++i) {
    g.table.emplace_back();
    for (std::size_t y = 0; y < rows[i].size(); ++y) {
      if (!rows[i][y]) {
        throw Error(ErrorCode::MissingEntry, "policy of DM " + std::to_string(i + 1) + " misses measurement '" +
                                                 spec.dms[i].measurements[y] + "'");
      }
      g.table[i].push_back(*rows[i][y]);
    }
  }
  return g;
}

inline std::string serialize_policy(const PolicyProfile& g, const Model& model) {
  model.check_policy(g);
  std::ostringstream os;
  os << "nst " << kFormatVersion << " policy\ndms " << model.n() << "\n";
  for (std::size_t i = 0; i < model.n(); ++i) {
    os << "dm " << i + 1 << "\n";
    const auto& d = model.spec().dms[i];
    for (std::size_t y = 0; y < g.table[i].size(); ++y) {
      os << "  " << quote(d.measurements[y]) << " : " << quote(d.actions[g.table[i][y]]) << "\n";
    }
    os << "end\n";
  }
  return os.str();
}

}  // namespace nst::dsl
