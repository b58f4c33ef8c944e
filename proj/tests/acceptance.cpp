// Prints one PASS/FAIL/SKIP line per acceptance criterion and exits non-zero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

#include "vlmcad/bench.hpp"
#include "vlmcad/cli.hpp"
#include "vlmcad/config.hpp"
#include "vlmcad/exturbo.hpp"
#include "vlmcad/gp.hpp"
#include "vlmcad/ngspice.hpp"
#include "vlmcad/sensitivity.hpp"
#include "vlmcad/surrogate.hpp"
#include "vlmcad/workflow.hpp"

using namespace vlmcad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixture(const std::string& name) { return std::string(VLMCAD_FIXTURE_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("vlmcad-acceptance-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Outcome {
  enum Kind { Pass, Fail, Skip } kind = Fail;
  std::string detail;
};

Outcome pass(std::string d) { return {Outcome::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::Fail, std::move(d)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ----------------------------------------------------------------- 1

Outcome cost_golden() {
  struct Row {
    const char* file;
    const char* name;
    double expected;
    double tol;
  };
  const Row rows[] = {
      {"miller_table.json", "miller_a", 2.754, 0.002},  {"miller_table.json", "miller_b", 2.299, 0.002},
      {"miller_table.json", "miller_c", 7.671, 0.002},    {"class_ab_table.json", "ab180_a", 0.081, 0.0005},
      {"class_ab_table.json", "ab180_b", 0.011, 0.0005}, {"class_ab_table.json", "ab180_c", 0.036, 0.0005},
      {"class_ab_table.json", "ab90_a", 0.037, 0.0005}, {"class_ab_table.json", "ab90_b", 0.026, 0.0005},
      {"class_ab_table.json", "ab90_c", 0.109, 0.0005}, {"ablation.json", "ab180_ablation1", 0.312, 0.002},
      {"ablation.json", "ab180_ablation2", 0.318, 0.002}, {"ablation.json", "ab90_ablation2", 0.179, 0.002},
      {"ablation.json", "miller_ablation1", 9.816, 0.002}, {"ablation.json", "miller_ablation2", 6.829, 0.002},
  };
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : rows) {
    json j = json::parse(slurp(fixture(std::string("golden/") + r.file)));
    bool found = false;
    for (const auto& c : j["cases"]) {
      if (c["name"] != r.name) continue;
      found = true;
      auto specs = specs_from_json(c.contains("specs") ? c["specs"] : j["specs"]);
      double jv = universal_cost(measurements_from_json(c["measured"]), specs).total;
      double err = std::abs(jv - r.expected);
      if (err > r.tol) return fail(std::string(r.name) + " J=" + fmt("%.5f", jv) + " expected " + fmt("%.3f", r.expected));
      if (err / r.tol > worst) {
        worst = err / r.tol;
        worst_name = r.name;
      }
    }
    if (!found) return fail(std::string("missing golden case ") + r.name);
  }
  // The command-line path must print the same numbers.
  std::ostringstream out, err;
  int code = run_cli({"check-cost", fixture("golden/miller_table.json")}, out, err);
  std::istringstream lines(out.str());
  std::map<std::string, double> printed;
  std::string name;
  double v;
  while (lines >> name >> v) printed[name] = v;
  if (code != kExitOk || printed.size() != 3 || std::abs(printed["miller_a"] - 2.754) > 0.002 ||
      std::abs(printed["miller_b"] - 2.299) > 0.002 || std::abs(printed["miller_c"] - 7.671) > 0.002) {
    return fail("check-cost printed '" + out.str() + "'");
  }
  return pass("14 rows within tolerance, tightest " + worst_name + " at " + fmt("%.2f", worst) + " of its band");
}

// ----------------------------------------------------------------- 2

Outcome volume() {
  double v = volume_ratio(0.4, 48);
  bool ok = v >= 5e-20 && v <= 1e-19;
  return {ok ? Outcome::Pass : Outcome::Fail, "0.4^48 = " + fmt("%.3e", v)};
}

// ----------------------------------------------------------------- 3

Outcome gp_gradient() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0), logu(std::log(0.1), std::log(2.0));
  std::uniform_int_distribution<int> dims(1, 5), sizes(2, 12);
  double worst = 0.0;
  for (int inst = 0; inst < 25; ++inst) {
    const int d = dims(rng), n = sizes(rng);
    Eigen::MatrixXd X(n, d);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) X(i, k) = u(rng);
      y(i) = std::sin(3.0 * X(i, 0)) + 0.3 * u(rng);
    }
    GpHyper h;
    h.lengthscales.resize(d);
    for (int k = 0; k < d; ++k) h.lengthscales(k) = std::exp(logu(rng));
    h.signal_var = 0.5 + u(rng);
    h.noise_var = 1e-3 + 0.05 * u(rng);
    auto ev = log_marginal_likelihood(X, y, h);
    Eigen::VectorXd theta = h.to_log();
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double eps = 1e-5;
      Eigen::VectorXd tp = theta, tm = theta;
      tp(k) += eps;
      tm(k) -= eps;
      double fd = (log_marginal_likelihood(X, y, GpHyper::from_log(tp), false).value -
                   log_marginal_likelihood(X, y, GpHyper::from_log(tm), false).value) /
                  (2.0 * eps);
      double rel = std::abs(ev.gradient(k) - fd) / std::max(1e-3, std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  // One point, unit signal and unit noise: y = 1 gives -1/4 - ln 2 / 2 - ln(2 pi) / 2.
  Eigen::MatrixXd X1(1, 2);
  X1 << 0.2, 0.7;
  Eigen::VectorXd y1(1);
  y1 << 1.0;
  GpHyper h1;
  h1.lengthscales = Eigen::VectorXd::Constant(2, 0.5);
  h1.signal_var = 1.0;
  h1.noise_var = 1.0;
  double closed = -0.25 - 0.5 * std::log(2.0) - 0.5 * std::log(2.0 * M_PI);
  double one_err = std::abs(log_marginal_likelihood(X1, y1, h1, false).value - closed);
  bool ok = worst < 1e-4 && one_err < 1e-12;
  return {ok ? Outcome::Pass : Outcome::Fail,
          "25 instances, max relative gradient error " + fmt("%.2e", worst) + ", 1-point error " + fmt("%.1e", one_err)};
}

// ----------------------------------------------------------------- 4

Outcome ard_recovery() {
  std::vector<double> s1, ratio;
  bool first_always = true;
  for (int run = 0; run < 5; ++run) {
    std::mt19937_64 rng(100 + run);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::MatrixXd X(80, 5);
    Eigen::VectorXd y(80);
    for (int i = 0; i < 80; ++i) {
      for (int d = 0; d < 5; ++d) X(i, d) = u(rng);
      y(i) = (X(i, 0) - 0.3) * (X(i, 0) - 0.3) + 0.01 * noise(rng);
    }
    GpFitConfig fit;
    fit.seed = static_cast<std::uint64_t>(run);
    auto rep = sensitivity(X, y, {"x1", "x2", "x3", "x4", "x5"}, 0.15, fit);
    first_always = first_always && rep.global.ranking.front() == 0;
    s1.push_back(rep.global.importance(0));
    const auto& l = rep.global.lengthscales;
    ratio.push_back(l.tail(4).minCoeff() / l(0));
  }
  double ms = median(s1), mr = median(ratio);
  bool ok = first_always && ms >= 0.5 && mr >= 5.0;
  return {ok ? Outcome::Pass : Outcome::Fail, "median S1 " + fmt("%.3f", ms) + ", median min inactive l / l1 " +
                                                  fmt("%.1f", mr) + (first_always ? "" : ", x1 not always first")};
}

// ----------------------------------------------------------------- 5

Outcome warm_start() {
  auto s = warm_vs_cold(20, 10, 1);
  int warm_hits = 0;
  for (const auto& r : s.runs) warm_hits += r.warm <= 400;
  bool ok = s.runs.size() >= 10 && s.median_warm <= 0.5 * s.median_cold;
  return {ok ? Outcome::Pass : Outcome::Fail, "median evaluations to feasibility: warm " + fmt("%g", s.median_warm) +
                                                  ", cold " + fmt("%g", s.median_cold) + " (" +
                                                  std::to_string(warm_hits) + "/10 warm runs feasible)"};
}

// ----------------------------------------------------------------- 6

bool table_covers(const std::string& report, const std::string& heading, const std::vector<std::string>& params) {
  auto start = report.find(heading);
  if (start == std::string::npos) return false;
  auto end = report.find("\n## ", start + 1);
  auto section = report.substr(start, end == std::string::npos ? std::string::npos : end - start);
  for (const auto& p : params) {
    if (section.find("| " + p + " |") == std::string::npos) return false;
  }
  return true;
}

Outcome end_to_end() {
  auto root = scratch("e2e");
  std::string hist[2];
  std::string detail;
  for (int k = 0; k < 2; ++k) {
    auto run = root / ("run" + std::to_string(k));
    std::ostringstream out, err;
    int code = run_cli({"size", "--config", fixture("miller.json"), "--out", run.string()}, out, err);
    if (code != kExitOk) return fail("size exited " + std::to_string(code) + ": " + err.str());
    hist[k] = slurp(run / "history.jsonl");
    if (k > 0) continue;

    json state = json::parse(slurp(run / "state.json"));
    std::map<std::string, int> used;
    for (const auto& p : state["phases"]) used[p["phase"]] = p["iterations"];
    if (used["C"] > 10 || used["D"] > 40 || used["E"] > 440) {
      return fail("budgets exceeded: C " + std::to_string(used["C"]) + ", D " + std::to_string(used["D"]) + ", E " +
                  std::to_string(used["E"]));
    }
    auto h = history_from_jsonl(hist[0]);
    double best = 1e300;
    for (const auto& e : h) best = std::min(best, e.j);
    if (best > 0.5) return fail("final J " + fmt("%.4f", best));
    auto report = slurp(run / "report.md");
    auto params = state["mandatory"].get<std::vector<std::string>>();
    if (!table_covers(report, "## Global sensitivity", params) || !table_covers(report, "## Elite sensitivity", params)) {
      return fail("a sensitivity table misses a free parameter");
    }
    detail = "C " + std::to_string(used["C"]) + "/10, D " + std::to_string(used["D"]) + "/40, E " +
             std::to_string(used["E"]) + "/440, final J " + fmt("%.4f", best) + ", " + std::to_string(params.size()) +
             " parameters in both tables";
  }
  fs::remove_all(root);
  if (hist[0] != hist[1]) return fail("history files differ between identical runs");
  return pass(detail + ", histories identical");
}

// ----------------------------------------------------------------- 7

// Scripted answers, except that the spec sizer echoes the current point back.
class EchoTransport final : public Transport {
 public:
  std::string name() const override { return "echo"; }
  ChatReply complete(AgentRole role, const std::vector<ChatMessage>& m, const AgentContext& ctx) override {
    if (role != AgentRole::InferencingSizer) return inner_.complete(role, m, ctx);
    json p = json::object();
    for (const auto& k : ctx.mandatory) p[k] = ctx.current->at(k);
    return {json{{"params", p}, {"rationale", "unchanged"}}.dump(), 0, 0};
  }

 private:
  ScriptedTransport inner_;
};

std::string deadloop_rule() {
  SurrogateBackend be;
  EchoTransport t;
  auto cfg = load_config(fixture("miller.json"));
  cfg.budgets.phase_d = 6;
  cfg.budgets.phase_d_target = 0.0;
  Workflow wf(cfg, be, t);
  wf.run_phase_b();
  wf.run_phase_c();
  wf.run_phase_d();
  std::vector<const HistoryEntry*> d;
  for (const auto& e : wf.state().history) {
    if (e.phase == "D") d.push_back(&e);
  }
  if (d.size() != 6) return "expected 6 phase D evaluations, got " + std::to_string(d.size());
  for (std::size_t i = 1; i < d.size(); ++i) {
    const auto& prev = d[i - 1]->point;
    const auto& next = d[i]->point;
    bool moved = false;
    for (const auto& [k, v] : prev) {
      double w = next.at(k);
      if (k.rfind(cfg.width_prefix, 0) != 0) {
        if (w != v) return "non-width " + k + " changed";
        continue;
      }
      if (w < 0.95 * v - 1e-12 || w > 1.05 * v + 1e-12) return "width " + k + " moved more than 5%";
      moved = moved || w != v;
    }
    if (!moved) return "perturbation left the echoed point unchanged";
  }
  return "";
}

std::string dc_failure_rule() {
  auto cfg = load_config(fixture("miller.json"));
  SurrogateBackend be(cfg.roles, cfg.process);
  be.force_dc_failure(true);
  ScriptedTransport t;
  Workflow wf(cfg, be, t);
  wf.run_phase_b();
  DesignPoint p = wf.complete(wf.state().point);
  be.log().clear();
  auto ev = wf.evaluate(p);
  if (be.log().count() != 1 || be.log().count(SimRequest::Dc) != 1) {
    return "expected one DC call, saw " + std::to_string(be.log().count());
  }
  if (ev.cost.total < 100.0) return "J " + fmt("%.3f", ev.cost.total) + " below the sanity penalty";
  return "";
}

// (member placeholder) -> (device, key) in the template, e.g. w1 -> (M1, W).
std::map<std::string, std::pair<std::string, std::string>> placeholder_sites(const std::string& tmpl) {
  std::map<std::string, std::pair<std::string, std::string>> sites;
  std::istringstream in(tmpl);
  std::string line;
  static const std::regex kv(R"((\w+)=\{(\w+)\})");
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '*' || line[0] == '.') continue;
    std::string dev = line.substr(0, line.find(' '));
    for (std::sregex_iterator it(line.begin(), line.end(), kv), e; it != e; ++it) {
      sites.emplace((*it)[2].str(), std::make_pair(dev, (*it)[1].str()));
    }
  }
  return sites;
}

std::optional<std::string> value_at(const std::string& netlist, const std::string& dev, const std::string& key) {
  std::istringstream in(netlist);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(dev + " ", 0) != 0) continue;
    std::smatch m;
    if (std::regex_search(line, m, std::regex("\\b" + key + "=(\\S+)"))) return m[1].str();
  }
  return std::nullopt;
}

std::string matching_rule(int& files, int& groups) {
  auto root = scratch("match");
  auto cfg = load_config(fixture("miller.json"));
  auto backend = make_backend(cfg);
  ScriptedTransport t;
  Workflow wf(cfg, *backend, t, root.string());
  wf.run_all();
  auto sites = placeholder_sites(slurp(cfg.netlist_path));
  groups = static_cast<int>(wf.state().groups.groups.size());
  if (groups == 0) return "no matching groups were found";
  files = 0;
  for (const auto& f : fs::directory_iterator(root / "netlists")) {
    auto text = slurp(f.path());
    ++files;
    for (const auto& g : wf.state().groups.groups) {
      std::optional<std::string> first;
      for (const auto& m : g.members) {
        auto site = sites.find(m);
        if (site == sites.end()) return "member " + m + " has no site in the template";
        auto v = value_at(text, site->second.first, site->second.second);
        if (!v) return m + " missing in " + f.path().filename().string();
        if (!first) first = v;
        if (*v != *first) return f.path().filename().string() + ": " + m + "=" + *v + " vs " + *first;
      }
    }
  }
  fs::remove_all(root);
  return "";
}

Outcome behavior() {
  auto a = deadloop_rule();
  auto b = dc_failure_rule();
  int files = 0, groups = 0;
  auto c = matching_rule(files, groups);
  std::string detail = "(a) " + (a.empty() ? std::string("ok") : a) + "; (b) " + (b.empty() ? std::string("ok") : b) +
                       "; (c) " + (c.empty() ? std::to_string(groups) + " groups equal in " + std::to_string(files) + " netlists" : c);
  return {a.empty() && b.empty() && c.empty() ? Outcome::Pass : Outcome::Fail, detail};
}

// ----------------------------------------------------------------- 8

Outcome ngspice_integration() {
  const char* ptm = std::getenv("VLMCAD_PTM");
  std::string binary = std::getenv("VLMCAD_NGSPICE") ? std::getenv("VLMCAD_NGSPICE") : "ngspice";
  if (!NgspiceBackend::available(binary) || !ptm || !*ptm || !fs::exists(ptm)) {
    return {Outcome::Skip, "needs ngspice and a 45 nm PTM card in VLMCAD_PTM"};
  }
  auto cfg = load_config(fixture("miller.json"));
  cfg.backend = BackendKind::Ngspice;
  cfg.ngspice.binary = binary;
  cfg.ngspice.model_include = ptm;
  cfg.budgets.phase_c = 3;
  cfg.budgets.phase_d = 3;
  auto backend = make_backend(cfg);
  ScriptedTransport t;
  Workflow wf(cfg, *backend, t);
  wf.run_phase_b();
  wf.run_phase_c();
  auto d = wf.run_phase_d();
  return pass("phase C and D completed on ngspice, best J " + (d.best_j ? fmt("%.3f", *d.best_j) : std::string("n/a")));
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {1, "cost golden vectors", cost_golden},
      {2, "volume ratio", volume},
      {3, "GP evidence and gradient", gp_gradient},
      {4, "ARD sensitivity recovery", ard_recovery},
      {5, "warm-start dominance", warm_start},
      {6, "end-to-end offline run", end_to_end},
      {7, "behavioral rules", behavior},
      {8, "ngspice integration", ngspice_integration},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("threw: ") + e.what());
    }
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.kind == Outcome::Pass ? "PASS" : o.kind == Outcome::Skip ? "SKIP" : "FAIL";
    failures += o.kind == Outcome::Fail;
    std::cout << "criterion " << c.id << " " << tag << " " << c.name << ": " << o.detail << " [" << fmt("%.2f", s)
              << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
