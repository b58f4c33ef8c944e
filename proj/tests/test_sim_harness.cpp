#include <doctest.h>

#include <sys/stat.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "vlmcad/error.hpp"
#include "vlmcad/ngspice.hpp"
#include "vlmcad/sim_harness.hpp"
#include "vlmcad/surrogate.hpp"

using namespace vlmcad;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

std::string miller_text(const DesignPoint& p) {
  static const auto t = load_netlist(fixture("miller.cir"));
  return instantiate(t, p, miller_ranges());
}

fs::path fake_ngspice(const fs::path& dir, const std::string& body) {
  auto path = dir / "fake-ngspice";
  std::ofstream f(path);
  f << "#!/bin/sh\n" << body;
  f.close();
  chmod(path.c_str(), 0755);
  return path;
}

}  // namespace

TEST_SUITE("sim_harness") {
  TEST_CASE("surrogate DC at a nominal point") {
    SurrogateBackend be;
    auto dc = run_dc(miller_text(miller_nominal()), be);
    REQUIRE(dc.converged);
    double vout = dc.node_voltages.at("out");
    CHECK(vout > 0.0);
    CHECK(vout < 1.2);
    CHECK(dc.devices.size() == 8);
    CHECK(dc.static_power.has_value());
  }

  TEST_CASE("zero bias voltage does not converge") {
    SurrogateRoles roles;
    roles.bias_voltages = {"VBN"};
    SurrogateBackend be(roles);
    auto text = miller_text(miller_nominal());
    text.insert(text.rfind(".end"), "VBN vbn 0 DC 0\n");
    auto dc = run_dc(text, be);
    CHECK_FALSE(dc.converged);
    CHECK(dc.node_voltages.empty());
    CHECK(dc.devices.empty());
  }

  TEST_CASE("skip-on-fail makes exactly one backend call") {
    SurrogateBackend be;
    be.force_dc_failure(true);
    auto m = run_full(miller_text(miller_nominal()), be, miller_specs());
    CHECK_FALSE(m.dc_ok);
    CHECK(be.log().count() == 1);
    CHECK(be.log().count(SimRequest::Dc) == 1);
    CHECK(universal_cost(m, miller_specs()).total >= 100.0);
  }

  TEST_CASE("nominal point yields every metric") {
    SurrogateBackend be;
    auto m = run_full(miller_text(miller_nominal()), be, miller_specs());
    REQUIRE(m.dc_ok);
    for (const char* k : {"gain", "ugbw", "pm", "thd", "offset"}) CHECK(m.metrics.count(k) == 1);
    CHECK(m.power.has_value());
    CHECK(be.log().count(SimRequest::Ac) == 1);
    CHECK(be.log().count(SimRequest::Transient) == 1);
    CHECK(be.log().count(SimRequest::DcSweep) == 1);
  }

  TEST_CASE("matched pair has zero offset, mismatch does not") {
    SurrogateBackend be;
    auto m = run_full(miller_text(miller_nominal()), be, miller_specs());
    CHECK(m.metrics.at("offset") == 0.0);
    auto p = miller_nominal();
    p["w2"] = 2.4;
    auto m2 = run_full(miller_text(p), be, miller_specs());
    REQUIRE(m2.dc_ok);
    CHECK(m2.metrics.at("offset") > 0.0);
  }

  TEST_CASE("load capacitance moves the second pole, not UGBW") {
    auto s1 = extract_sizing(parse_netlist(miller_text(miller_nominal())), SurrogateRoles{});
    auto s2 = s1;
    s2.cl *= 2.0;
    auto e1 = evaluate_sizing(s1, SurrogateProcess{}, SurrogateRoles{});
    auto e2 = evaluate_sizing(s2, SurrogateProcess{}, SurrogateRoles{});
    CHECK(*e2.ac.ugbw_mhz == doctest::Approx(*e1.ac.ugbw_mhz));
    CHECK(*e2.ac.pm_deg < *e1.ac.pm_deg);
    // Nearly no load: the output pole is far away and PM approaches 90 degrees.
    auto s3 = s1;
    s3.cl = 1e-18;
    CHECK(*evaluate_sizing(s3, SurrogateProcess{}, SurrogateRoles{}).ac.pm_deg == doctest::Approx(90.0).epsilon(1e-3));
  }

  TEST_CASE("doubling the mirrored widths doubles power") {
    SurrogateBackend be;
    auto p = miller_nominal();
    auto m1 = run_full(miller_text(p), be, miller_specs());
    p["w5"] *= 2.0;
    p["w7"] *= 2.0;
    auto m2 = run_full(miller_text(p), be, miller_specs());
    REQUIRE(m1.power);
    REQUIRE(m2.power);
    CHECK(*m2.power == doctest::Approx(2.0 * *m1.power));
  }

  TEST_CASE("surrogate is bit-identical across repeated evaluations") {
    const auto t = load_netlist(fixture("miller.cir"));
    const auto r = miller_ranges();
    auto first = surrogate_eval(miller_nominal(), t, r, {}, {}, 1e-6);
    for (int i = 0; i < 1000; ++i) {
      auto again = surrogate_eval(miller_nominal(), t, r, {}, {}, 1e-6);
      REQUIRE(again.metrics == first.metrics);
      REQUIRE(again.power == first.power);
    }
  }

  TEST_CASE("placeholders left in the netlist are refused") {
    SurrogateBackend be;
    CHECK_THROWS_AS(run_dc("M1 a b 0 0 nmos W={w1} L=1u\n", be), ValidationError);
  }

  TEST_CASE("ngspice output parsing") {
    auto v = parse_ngspice_values("v(out) = 6.000000e-01\n  V(VDD) = 1.2\nNo. of Data Rows : 1\ngain_db              =  5.52e+01\n");
    CHECK(v.at("v(out)") == doctest::Approx(0.6));
    CHECK(v.at("v(vdd)") == doctest::Approx(1.2));
    CHECK(v.at("gain_db") == doctest::Approx(55.2));
    auto thd = parse_thd_db("Fourier analysis for v(out):\n  No. Harmonics: 10, THD: 0.1 %, Gridsize: 200\n");
    REQUIRE(thd);
    CHECK(*thd == doctest::Approx(-60.0));
    CHECK_FALSE(parse_thd_db("nothing here").has_value());
  }

  TEST_CASE("ngspice backend against a scripted binary") {
    auto dir = temp_dir("ngspice");
    auto bin = fake_ngspice(dir,
                            "echo 'v(out) = 6.000000e-01'\n"
                            "echo 'v(vdd) = 1.200000e+00'\n"
                            "echo 'vlmcad_power = -7.200000e-04'\n");
    NgspiceConfig cfg;
    cfg.binary = bin.string();
    cfg.model_include = "none";
    NgspiceBackend be(cfg);
    auto dc = run_dc("VDD vdd 0 DC 1.2\nR1 vdd out 1k\nR2 out 0 1k\n.end\n", be);
    REQUIRE(dc.converged);
    CHECK(dc.node_voltages.at("out") == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(*dc.static_power == doctest::Approx(7.2e-4));
    fs::remove_all(dir);
  }

  TEST_CASE("ngspice deck carries the analyses") {
    NgspiceConfig cfg;
    cfg.binary = "ngspice";
    cfg.model_include = "/models/ptm45.pm";
    NgspiceBackend be(cfg);
    const std::string net = "VDD vdd 0 DC 1.2\nM1 out in 0 0 nmos W=1u L=1u\n.end\n";
    auto dc = be.deck(net, SimRequest::Dc);
    CHECK(dc.find(".include /models/ptm45.pm") != std::string::npos);
    CHECK(dc.find("op\n") != std::string::npos);
    CHECK(dc.find("@m1[id]") != std::string::npos);
    CHECK(be.deck(net, SimRequest::Ac).find("meas ac gain_db") != std::string::npos);
    CHECK(be.deck(net, SimRequest::Transient).find("fourier") != std::string::npos);
    CHECK(be.deck(net, SimRequest::DcSweep).find("vin_at_mid") != std::string::npos);
  }

  TEST_CASE("ngspice failures are backend errors") {
    auto dir = temp_dir("ngspice-fail");
    NgspiceConfig cfg;
    cfg.binary = (dir / "missing-binary").string();
    cfg.model_include = "none";
    NgspiceBackend missing(cfg);
    CHECK_THROWS_AS(missing.dc("R1 a 0 1k\n.end\n"), BackendError);

    cfg.binary = fake_ngspice(dir, "sleep 5\n").string();
    cfg.timeout_s = 1;
    NgspiceBackend slow(cfg);
    CHECK_THROWS_AS(slow.dc("R1 a 0 1k\n.end\n"), BackendError);
    fs::remove_all(dir);
  }

  TEST_CASE("non-convergence is a value, not an error") {
    auto dir = temp_dir("ngspice-nc");
    NgspiceConfig cfg;
    cfg.binary = fake_ngspice(dir, "echo 'doAnalyses: no convergence in op'\n").string();
    cfg.model_include = "none";
    NgspiceBackend be(cfg);
    CHECK_FALSE(run_dc("R1 a 0 1k\n.end\n", be).converged);
    fs::remove_all(dir);
  }

  TEST_CASE("resistor divider through a real ngspice" * doctest::skip(!NgspiceBackend::available("ngspice"))) {
    NgspiceConfig cfg;
    cfg.binary = "ngspice";
    cfg.model_include = "";
    NgspiceBackend be(cfg);
    auto dc = run_dc("divider\nVDD vdd 0 DC 1.2\nR1 vdd out 1k\nR2 out 0 1k\n.end\n", be);
    REQUIRE(dc.converged);
    CHECK(std::abs(dc.node_voltages.at("out") - 0.6) < 1e-6);
  }
}
