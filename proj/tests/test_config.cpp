#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "vlmcad/config.hpp"
#include "vlmcad/error.hpp"

using namespace vlmcad;
using nlohmann::json;

namespace {

json miller_json() { return json::parse(testutil::slurp(testutil::fixture("miller.json"))); }

std::string config_error(const json& j) {
  try {
    parse_config(j, VLMCAD_FIXTURE_DIR);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("fixture configs load") {
    auto c = load_config(testutil::fixture("miller.json"));
    CHECK(c.ranges.entries.size() == 19);
    CHECK(c.specs.p_max == 85.0);
    CHECK(c.specs.power_unit == "uW");
    CHECK(c.seed == 7);
    CHECK(c.knobs.at("pm").size() == 3);
    CHECK(std::filesystem::path(c.netlist_path).is_absolute());

    auto ab = load_config(testutil::fixture("class_ab.json"));
    CHECK(ab.specs.p_max == 10.0);
    CHECK(ab.roles.ibias == "IREF");
  }

  TEST_CASE("unknown keys are named with their path") {
    auto j = miller_json();
    j["budgets"] = {{"phase_x", 3}};
    CHECK(config_error(j).find("budgets.phase_x") != std::string::npos);
    j = miller_json();
    j["colour"] = "blue";
    CHECK(config_error(j).find("colour") != std::string::npos);
  }

  TEST_CASE("missing keys are named") {
    auto j = miller_json();
    j.erase("ranges");
    CHECK(config_error(j).find("ranges") != std::string::npos);
    j = miller_json();
    j["specs"].erase("power_max");
    CHECK(config_error(j).find("power_max") != std::string::npos);
  }

  TEST_CASE("bad values and paths") {
    auto j = miller_json();
    j["netlist"] = "does-not-exist.cir";
    CHECK(config_error(j).find("does-not-exist.cir") != std::string::npos);
    j = miller_json();
    j["backend"]["kind"] = "hspice";
    CHECK(config_error(j).find("hspice") != std::string::npos);
    j = miller_json();
    j["budgets"] = {{"phase_c", 0}};
    CHECK_FALSE(config_error(j).empty());
    j = miller_json();
    j["seed"] = "seven";
    CHECK(config_error(j).find("seed") != std::string::npos);
    j = miller_json();
    j["transport"]["kind"] = "endpoint";
    CHECK(config_error(j).find("url") != std::string::npos);
    j = miller_json();
    j["ranges"]["w1"]["min"] = 10;
    CHECK(config_error(j).find("w1") != std::string::npos);

    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    auto dir = testutil::temp_dir("config");
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK_THROWS_AS(load_config((dir / "bad.json").string()), ConfigError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("measurement files") {
    auto m = measurements_from_json(json{{"metrics", {{"gain", 50.0}}}, {"power", 12.0}});
    CHECK(m.metrics.at("gain") == 50.0);
    CHECK(*m.power == 12.0);
    CHECK(m.dc_ok);
    CHECK(m.converged);
    auto n = measurements_from_json(json{{"metrics", json::object()}, {"power", nullptr}, {"dc_ok", false}});
    CHECK_FALSE(n.power.has_value());
    CHECK_FALSE(n.dc_ok);
    CHECK_THROWS_AS(measurements_from_json(json{{"metrics", {{"gain", "high"}}}}), ConfigError);
  }
}
