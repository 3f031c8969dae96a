#pragma once

// Shipped document corpus, row shuffling and the mutation corpus used by
// the parser tests and the acceptance run.

#include <algorithm>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nsteams/dsl.hpp"
#include "support.hpp"

namespace nst::test {

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

// Shipped documents of one kind ("intrinsic" or "static-reduced").
inline std::vector<std::string> corpus_files(const std::string& kind = "intrinsic") {
  std::vector<std::string> out;
  for (const auto& dir : {std::string(NSTEAMS_MODELS_DIR), std::string(NSTEAMS_TEST_DATA_DIR)}) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (e.path().extension() != ".nst") continue;
      if (dsl::document_kind(read_file(e.path().string())) == kind) out.push_back(e.path().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string first_word(const std::string& line) {
  std::istringstream in(line);
  std::string w;
  in >> w;
  return w;
}

// Lines that are table rows: they carry a colon and are not alphabet
// declarations.
inline bool is_row(const std::string& line) {
  static const std::vector<std::string> declarations{"signal", "actions", "measurements", "ghat", "yhat", "down"};
  auto w = first_word(line);
  if (w.empty() || w[0] == '#') return false;
  if (std::find(declarations.begin(), declarations.end(), w) != declarations.end()) return false;
  return line.find(" : ") != std::string::npos;
}

struct Mutant {
  std::string what;
  std::string text;
  std::vector<std::size_t> lines;  // acceptable diagnostic lines, 1-based
};

inline std::string replace_token(const std::string& line, bool value_side) {
  auto colon = line.find(" : ");
  if (value_side) return line.substr(0, colon) + " : zz9";
  auto start = line.find_first_not_of(' ');
  auto end = line.find(' ', start);
  return line.substr(0, start) + "zz9" + line.substr(end);
}

inline std::vector<Mutant> mutants_of(const std::string& text) {
  auto lines = split_lines(text);
  std::vector<Mutant> out;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (!is_row(lines[k])) continue;
    const std::size_t at = k + 1;
    for (bool value : {true, false}) {
      auto copy = lines;
      copy[k] = replace_token(lines[k], value);
      out.push_back({(value ? "value" : "key") + std::string(" replaced"), join_lines(copy), {at}});
    }
    auto dup = lines;
    dup.insert(dup.begin() + static_cast<long>(k) + 1, lines[k]);
    out.push_back({"row duplicated", join_lines(dup), {at, at + 1}});
    auto nocolon = lines;
    nocolon[k].replace(nocolon[k].find(" : "), 3, " ");
    out.push_back({"colon removed", join_lines(nocolon), {at}});
  }
  auto extra = lines;
  extra.insert(extra.begin() + 2, "bogus section");
  out.push_back({"unknown section", join_lines(extra), {3}});
  return out;
}

// Reorders the rows inside every table block while keeping headers in
// place.
inline std::string shuffle_rows(const std::string& text, std::uint64_t seed) {
  auto lines = split_lines(text);
  std::mt19937_64 rng(seed);
  std::size_t k = 0;
  while (k < lines.size()) {
    if (!is_row(lines[k])) {
      ++k;
      continue;
    }
    std::size_t j = k;
    while (j < lines.size() && is_row(lines[j])) ++j;
    std::shuffle(lines.begin() + static_cast<long>(k), lines.begin() + static_cast<long>(j), rng);
    k = j;
  }
  return join_lines(lines);
}

}  // namespace nst::test
