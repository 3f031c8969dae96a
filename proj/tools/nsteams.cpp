#include <iostream>
#include <string>
#include <vector>

#include "nsteams/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  auto out = nst::cli::run(args);
  std::cout << out.output();
  std::cerr << out.diagnostics;
  return out.exit_code;
}
