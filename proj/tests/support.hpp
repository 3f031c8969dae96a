#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "nsteams/dsl.hpp"
#include "nsteams/model.hpp"

namespace nst::test {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string model_path(const std::string& name) { return std::string(NSTEAMS_MODELS_DIR) + "/" + name; }
inline std::string data_path(const std::string& name) { return std::string(NSTEAMS_TEST_DATA_DIR) + "/" + name; }

inline Model load(const std::string& name) { return dsl::load_model(read_file(model_path(name))); }
inline IntrinsicModel load_spec(const std::string& name) { return dsl::parse_intrinsic(read_file(model_path(name))); }

}  // namespace nst::test
