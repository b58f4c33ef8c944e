#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "vlmcad/netlist.hpp"
#include "vlmcad/spec_model.hpp"

namespace testutil {

inline std::string fixture(const std::string& name) { return std::string(VLMCAD_FIXTURE_DIR) + "/" + name; }

// Ranges for the 45 nm Miller template.
inline vlmcad::ParamRanges miller_ranges() {
  vlmcad::ParamRanges r;
  for (int i = 1; i <= 8; ++i) {
    r.entries.push_back({"w" + std::to_string(i), 0.25, 5.0, "um", false});
    r.entries.push_back({"l" + std::to_string(i), 45.0, 225.0, "nm", false});
  }
  r.entries.push_back({"m6", 1, 25, "", true});
  r.entries.push_back({"m7", 1, 25, "", true});
  r.entries.push_back({"cc", 0.1, 10, "pF", false});
  return r;
}

inline vlmcad::SpecSet miller_specs() {
  auto s = vlmcad::make_spec_set(54.0, 1.0, 60.0, -60.0, 5.0, 85.0);
  s.power_unit = "uW";
  return s;
}

// A biased, amplifying design: a 30 uA reference mirrored 1:1 into the tail
// and 2:1 into the output stage.
inline vlmcad::DesignPoint miller_nominal() {
  vlmcad::DesignPoint p;
  for (int i = 1; i <= 8; ++i) {
    p["w" + std::to_string(i)] = 2.0;
    p["l" + std::to_string(i)] = 180.0;
  }
  p["w6"] = 4.0;
  p["m6"] = 4;
  p["m7"] = 2;
  p["cc"] = 2.0;
  return p;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  auto p = std::filesystem::temp_directory_path() / ("vlmcad-test-" + tag + "-" + std::to_string(rng()));
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
