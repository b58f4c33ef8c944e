#include <doctest.h>

#include <fstream>
#include <sstream>

#include "vlmcad/error.hpp"
#include "vlmcad/netlist.hpp"

using namespace vlmcad;

namespace {

std::string fixture(const std::string& name) { return std::string(VLMCAD_FIXTURE_DIR) + "/" + name; }

ParamRanges simple_ranges() {
  ParamRanges r;
  r.entries = {{"w1", 0.25, 5.0, "um", false}, {"l1", 45.0, 225.0, "nm", false}};
  return r;
}

}  // namespace

TEST_SUITE("netlist") {
  TEST_CASE("minimal card") {
    auto t = parse_netlist("M1 out in 0 0 nmos W={w1} L={l1}\n");
    REQUIRE(t.devices.size() == 1);
    CHECK(t.devices[0].kind == 'M');
    CHECK(t.devices[0].model == "nmos");
    CHECK(mandatory_params(t) == std::vector<std::string>{"w1", "l1"});
    CHECK(t.nodes == std::set<std::string>{"out", "in", "0"});
  }

  TEST_CASE("parse errors") {
    CHECK_THROWS_AS(parse_netlist(""), ParseError);
    CHECK_THROWS_AS(parse_netlist("   \n* only a comment\n"), ParseError);
    CHECK_THROWS_AS(parse_netlist("M1 out in 0 0 nmos W={w1 L=1u\n"), ParseError);
    CHECK_THROWS_AS(parse_netlist("M1 out in 0 0 nmos W=w1} L=1u\n"), ParseError);
    CHECK_THROWS_AS(parse_netlist("M1 out in\n"), ParseError);
    CHECK_THROWS_AS(parse_netlist(".param a=1\n.param a=2\nR1 a 0 {a}\n"), ParseError);
    CHECK_THROWS_AS(parse_netlist("R1 a 0 1k\nR1 b 0 1k\n"), ParseError);
  }

  TEST_CASE("repeated placeholders are listed once") {
    auto t = parse_netlist("M1 a b 0 0 nmos W={w1} L=1u\nM2 c b 0 0 nmos W={w1} L=1u\n");
    CHECK(mandatory_params(t) == std::vector<std::string>{"w1"});
  }

  TEST_CASE("Miller fixture") {
    auto t = load_netlist(fixture("miller.cir"));
    int mos = 0;
    for (const auto& d : t.devices) mos += d.kind == 'M';
    CHECK(mos == 8);
    // Independent count: non-comment, non-dot, non-blank lines.
    std::ifstream f(fixture("miller.cir"));
    int cards = 0;
    for (std::string line; std::getline(f, line);) {
      if (!line.empty() && line[0] != '*' && line[0] != '.') ++cards;
    }
    CHECK(static_cast<int>(t.devices.size()) == cards);
    auto m = mandatory_params(t);
    CHECK(std::find(m.begin(), m.end(), "cc") != m.end());
    CHECK(m.size() == 19);
    CHECK(mandatory_params(load_netlist(fixture("miller.cir"))) == m);
    CHECK(t.find_param("vdd")->default_text == std::optional<std::string>("1.2"));
  }

  TEST_CASE("instantiate substitutes unit-suffixed literals") {
    auto t = parse_netlist("M1 out in 0 0 nmos W={w1} L={l1}\n");
    auto text = instantiate(t, {{"w1", 1.5}, {"l1", 90.0}}, simple_ranges());
    CHECK(text == "M1 out in 0 0 nmos W=1.5u L=90n\n");
    CHECK(text.find('{') == std::string::npos);
  }

  TEST_CASE("instantiate errors name the key") {
    auto t = parse_netlist("M1 out in 0 0 nmos W={w1} L={l1}\n");
    try {
      instantiate(t, {{"w1", 1.0}}, simple_ranges());
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("l1") != std::string::npos);
    }
    CHECK_THROWS_AS(instantiate(t, {{"w1", 9.0}, {"l1", 90.0}}, simple_ranges()), ValidationError);
    CHECK_THROWS_AS(instantiate(t, {{"w1", 1.0}, {"l1", 90.0}, {"w9", 1.0}}, simple_ranges()), ValidationError);
  }

  TEST_CASE("defaults round-trip") {
    const std::string text = ".param cl=10p\nCL out 0 {cl}\nR1 out 0 {r}\n";
    auto t = parse_netlist(text);
    ParamRanges r;
    r.entries = {{"r", 1.0, 10.0, "kohm", false}};
    auto out = instantiate(t, {{"r", 2.0}}, r);
    CHECK(out == ".param cl=10p\nCL out 0 10p\nR1 out 0 2k\n");
  }

  TEST_CASE("integer parameters print without a suffix") {
    auto t = parse_netlist("M1 a b 0 0 nmos W=1u L=1u m={m1}\n");
    ParamRanges r;
    r.entries = {{"m1", 1, 25, "", true}};
    CHECK(instantiate(t, {{"m1", 3.0}}, r) == "M1 a b 0 0 nmos W=1u L=1u m=3\n");
  }

  TEST_CASE("apply_matching uses the first member") {
    MatchingGroups g;
    g.groups = {{{"w1", "w2"}, "pair"}};
    DesignPoint p{{"w1", 2.0}, {"w2", 3.0}};
    auto once = apply_matching(p, g);
    CHECK(once == DesignPoint{{"w1", 2.0}, {"w2", 2.0}});
    CHECK(apply_matching(once, g) == once);
    CHECK(apply_matching(p, MatchingGroups{}) == p);
  }

  TEST_CASE("clamp reports clipped keys") {
    auto c = clamp({{"w1", 9.0}, {"l1", 100.0}}, simple_ranges());
    CHECK(c.point.at("w1") == 5.0);
    CHECK(c.point.at("l1") == 100.0);
    CHECK(c.clipped == std::vector<std::string>{"w1"});
  }

  TEST_CASE("normalized points always instantiate") {
    auto t = load_netlist(fixture("miller.cir"));
    ParamRanges r;
    for (const auto& n : mandatory_params(t)) {
      char k = n[0];
      r.entries.push_back(k == 'w'   ? ParamRange{n, 0.25, 5, "um", false}
                          : k == 'l' ? ParamRange{n, 45, 225, "nm", false}
                          : k == 'm' ? ParamRange{n, 1, 25, "", true}
                                     : ParamRange{n, 0.1, 10, "pF", false});
    }
    MatchingGroups g;
    g.groups = {{{"w1", "w2"}, ""}, {{"l3", "l4"}, ""}};
    DesignPoint p;
    for (const auto& n : mandatory_params(t)) p[n] = -3.0;  // everything below range
    p["w2"] = 100.0;
    auto q = normalize(p, r, g);
    CHECK(q.at("w2") == q.at("w1"));
    auto text = instantiate(t, q, r);
    CHECK(text.find('{') == std::string::npos);
  }

  TEST_CASE("matching groups validate against the template") {
    auto t = parse_netlist("M1 a b 0 0 nmos W={w1} L=1u\nM2 c d 0 0 nmos W={w2} L=1u\n");
    MatchingGroups g;
    g.groups = {{{"w1", "w2"}, ""}, {{"w2", "w1"}, ""}};
    CHECK_THROWS_AS(g.validate(t), ValidationError);
    g.groups = {{{"w1", "w7"}, ""}};
    CHECK_THROWS_AS(g.validate(t), ValidationError);
  }

  TEST_CASE("SPICE numbers") {
    CHECK(parse_spice_number("10p") == doctest::Approx(10e-12));
    CHECK(parse_spice_number("1.2") == 1.2);
    CHECK(parse_spice_number("30u") == doctest::Approx(30e-6));
    CHECK(parse_spice_number("1k") == 1000.0);
    CHECK(parse_spice_number("2meg") == 2e6);
    CHECK(parse_spice_number("1e-3") == 1e-3);
    CHECK_THROWS_AS(parse_spice_number("abc"), ParseError);
    CHECK_THROWS_AS(spice_suffix("furlong"), ConfigError);
  }

  TEST_CASE("control blocks pass through") {
    auto t = parse_netlist("R1 a 0 {r}\n.control\nrun\n.endc\n");
    CHECK(t.devices.size() == 1);
    CHECK_THROWS_AS(parse_netlist("R1 a 0 1k\n.control\nrun\n"), ParseError);
  }
}
