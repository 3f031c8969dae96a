#pragma once

#include <gmpxx.h>

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace nst {

using Rational = mpq_class;
using Integer = mpz_class;

// Canonical n/d; mpq_class's two-argument constructor does not reduce.
inline Rational ratio(const Integer& n, const Integer& d) {
  if (d == 0) throw Error(ErrorCode::ZeroDenominator, "zero denominator");
  Rational r(n, d);
  r.canonicalize();
  return r;
}

// Accepts "n", "-n", "+n" and "n/d" with decimal digits. The result is canonical.
inline Rational parse_rational(std::string_view text) {
  auto digits = [](std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
    }
    return true;
  };
  std::string_view body = text;
  bool negative = false;
  if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
    negative = body.front() == '-';
    body.remove_prefix(1);
  }
  std::string_view num = body;
  std::string_view den = "1";
  if (auto slash = body.find('/'); slash != std::string_view::npos) {
    num = body.substr(0, slash);
    den = body.substr(slash + 1);
  }
  if (!digits(num) || !digits(den)) {
    throw Error(ErrorCode::SyntaxError, "malformed rational '" + std::string(text) + "'");
  }
  Integer n(std::string(num), 10);
  Integer d(std::string(den), 10);
  if (d == 0) {
    throw Error(ErrorCode::ZeroDenominator, "zero denominator in '" + std::string(text) + "'");
  }
  Rational r(n, d);
  r.canonicalize();
  if (negative) r = -r;
  return r;
}

inline bool looks_like_rational(std::string_view text) {
  try {
    parse_rational(text);
    return true;
  } catch (const Error&) {
    return false;
  }
}

inline std::string to_string(const Rational& r) { return r.get_str(10); }

inline double to_double(const Rational& r) { return r.get_d(); }

inline Integer lcm_of_denominators(const std::vector<Rational>& values) {
  Integer out = 1;
  for (const auto& v : values) {
    Integer g;
    mpz_lcm(g.get_mpz_t(), out.get_mpz_t(), v.get_den_mpz_t());
    out = g;
  }
  return out;
}

struct RationalHash {
  std::size_t operator()(const Rational& r) const {
    return std::hash<std::string>{}(r.get_str(16));
  }
};

}  // namespace nst
