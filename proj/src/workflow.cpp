#include "vlmcad/workflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "vlmcad/error.hpp"
#include "vlmcad/exturbo.hpp"
#include "vlmcad/ngspice.hpp"
#include "vlmcad/surrogate.hpp"

namespace fs = std::filesystem;

namespace vlmcad {

using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string padded(int n, int width = 5) {
  std::string s = std::to_string(n);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << text;
}

std::optional<double> history_best(const History& h) {
  auto i = best_index(h);
  if (!i) return std::nullopt;
  return h[*i].j;
}

}  // namespace

double supply_voltage(const NetlistTemplate& t, const std::string& supply_node) {
  if (const auto* p = t.find_param("vdd"); p && p->default_text) return parse_spice_number(*p->default_text);
  for (const auto& d : t.devices) {
    if (d.kind != 'V' || d.nodes.size() < 2 || d.nodes[0] != supply_node) continue;
    // "DC 1.2 AC 1" or a bare "1.2"
    std::istringstream in(d.value);
    std::string v;
    in >> v;
    if (v == "DC" || v == "dc") in >> v;
    try {
      return parse_spice_number(v);
    } catch (const Error&) {
    }
  }
  throw ConfigError("cannot determine the supply voltage on node '" + supply_node + "'");
}

std::unique_ptr<SimBackend> make_backend(const RunConfig& cfg) {
  if (cfg.backend == BackendKind::Surrogate) return std::make_unique<SurrogateBackend>(cfg.roles, cfg.process);
  return std::make_unique<NgspiceBackend>(cfg.ngspice);
}

std::unique_ptr<Transport> make_transport(const RunConfig& cfg) {
  if (cfg.transport == TransportKind::Scripted) return std::make_unique<ScriptedTransport>();
  return std::make_unique<HttpTransport>(cfg.endpoint);
}

Workflow::Workflow(RunConfig cfg, SimBackend& backend, Transport& transport, std::string run_dir)
    : cfg_(std::move(cfg)), backend_(backend), transport_(transport), run_dir_(std::move(run_dir)), rng_(cfg_.seed) {
  if (!run_dir_.empty()) {
    fs::create_directories(fs::path(run_dir_) / "netlists");
    // Paths made absolute so the copy stays loadable from inside the run directory.
    json raw = cfg_.raw;
    raw["netlist"] = fs::absolute(cfg_.netlist_path).string();
    if (cfg_.schematic_path) raw["schematic"] = fs::absolute(*cfg_.schematic_path).string();
    if (raw.contains("backend") && raw["backend"].contains("ngspice") && !cfg_.ngspice.model_include.empty() &&
        raw["backend"]["ngspice"].contains("model_include")) {
      raw["backend"]["ngspice"]["model_include"] = fs::absolute(cfg_.ngspice.model_include).string();
    }
    raw["seed"] = cfg_.seed;
    write_file((fs::path(run_dir_) / "config.json").string(), raw.dump(2) + "\n");
    // A fresh run starts a fresh transcript.
    fs::remove(fs::path(run_dir_) / "transcript.jsonl");
  }
}

DesignPoint Workflow::complete(const DesignPoint& p) const {
  DesignPoint full = p;
  for (const auto& r : cfg_.ranges.entries) {
    if (r.fixed() && st_.netlist.find_param(r.name) && !full.count(r.name)) full[r.name] = r.min;
  }
  return normalize(full, cfg_.ranges, st_.groups);
}

Evaluation Workflow::evaluate(const DesignPoint& p) {
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    if (auto it = cache_.find(p); it != cache_.end()) return it->second;
  }
  const std::string text = instantiate(st_.netlist, complete(p), cfg_.ranges);
  Evaluation e;
  e.measured = run_full(text, backend_, cfg_.specs, cfg_.bias);
  e.cost = universal_cost(e.measured, cfg_.specs);
  std::lock_guard<std::mutex> lock(cache_mu_);
  cache_.emplace(p, e);
  return e;
}

void Workflow::write_netlist(const std::string& name, const DesignPoint& p) const {
  if (run_dir_.empty() || !cfg_.keep_netlists) return;
  write_file((fs::path(run_dir_) / "netlists" / (name + ".cir")).string(),
             instantiate(st_.netlist, complete(p), cfg_.ranges));
}

AgentContext Workflow::context() const {
  AgentContext ctx;
  ctx.netlist = &st_.netlist;
  ctx.ranges = &cfg_.ranges;
  ctx.specs = &cfg_.specs;
  ctx.graph_summary = st_.graph_summary;
  ctx.mandatory = st_.mandatory;
  if (phase_b_done_ || !st_.groups.groups.empty()) ctx.groups = st_.groups;
  ctx.explanation = st_.explanation;
  ctx.history_window = cfg_.history_window;
  ctx.seed_count = cfg_.budgets.seeds;
  ctx.knobs = cfg_.knobs;
  ctx.supply_node = cfg_.bias.supply_node;
  ctx.output_node = cfg_.bias.output_node;
  ctx.width_prefix = cfg_.width_prefix;
  return ctx;
}

CallResult Workflow::ask(AgentRole role, const AgentContext& ctx) {
  try {
    auto r = call(role, ctx, transport_, st_.transcript, cfg_.retries);
    if (!run_dir_.empty()) st_.transcript.flush((fs::path(run_dir_) / "transcript.jsonl").string());
    return r;
  } catch (...) {
    if (!run_dir_.empty()) st_.transcript.flush((fs::path(run_dir_) / "transcript.jsonl").string());
    throw;
  }
}

PhaseOutcome Workflow::run_phase_b() {
  Stopwatch sw;
  st_.netlist = load_netlist(cfg_.netlist_path);
  if (cfg_.schematic_path) {
    auto g = load_graph_file(*cfg_.schematic_path);
    st_.consistency = consistency_check(g, st_.netlist);
    if (!st_.consistency->pass) {
      std::string issues;
      for (const auto& i : st_.consistency->issues) issues += "\n  " + i;
      throw ValidationError("schematic graph does not match the netlist:" + issues);
    }
    st_.graph_summary = summarize_graph(g);
  } else {
    st_.graph_summary = summarize_graph(netlist_to_graph(st_.netlist));
  }
  st_.mandatory = mandatory_params(st_.netlist, cfg_.ranges);
  std::vector<std::string> unranged;
  for (const auto& p : st_.mandatory) {
    if (!cfg_.ranges.find(p)) unranged.push_back(p);
  }
  for (const auto& p : st_.netlist.params) {
    if (!p.default_text && !cfg_.ranges.find(p.name)) unranged.push_back(p.name);
  }
  if (!unranged.empty()) {
    std::sort(unranged.begin(), unranged.end());
    unranged.erase(std::unique(unranged.begin(), unranged.end()), unranged.end());
    std::string list;
    for (const auto& u : unranged) list += (list.empty() ? "" : ", ") + u;
    throw ConfigError("no range configured for: " + list);
  }

  auto ctx = context();
  st_.explanation = ask(AgentRole::CircuitExplainer, ctx).parsed.at("explanation").get<std::string>();

  ctx = context();
  st_.groups = groups_from_json(ask(AgentRole::MatchingFinder, ctx).parsed);
  phase_b_done_ = true;

  ctx = context();
  ctx.vdd = supply_voltage(st_.netlist, cfg_.bias.supply_node);
  st_.goals = goals_from_json(ask(AgentRole::DcGoalSetter, ctx).parsed);
  st_.goals.output_node = cfg_.bias.output_node;

  ctx = context();
  ctx.goals = st_.goals;
  st_.initial = ask(AgentRole::InitialDesigner, ctx).point->point;
  st_.point = st_.initial;

  PhaseOutcome out{"B", 4, 4, sw.seconds(), std::nullopt,
                   std::to_string(st_.mandatory.size()) + " free parameters, " +
                       std::to_string(st_.groups.groups.size()) + " matching groups"};
  st_.phases.push_back(out);
  persist();
  return out;
}

PhaseOutcome Workflow::run_phase_c() {
  if (!phase_b_done_) throw Error("phase C needs the results of phase B");
  Stopwatch sw;
  const int budget = cfg_.budgets.phase_c;
  int it = 0;
  DiscrepancyReport report;
  for (it = 1; it <= budget; ++it) {
    const std::string text = instantiate(st_.netlist, complete(st_.point), cfg_.ranges);
    write_netlist("C_" + padded(it), st_.point);
    DcResult dc = run_dc(text, backend_);
    report = build_discrepancy_report(st_.goals, dc, cfg_.dc_tolerance);

    auto ctx = context();
    ctx.goals = st_.goals;
    ctx.dc = dc;
    ctx.discrepancies = report;
    ask(AgentRole::DcReviewer, ctx);
    if (report.count() == 0 || it == budget) break;

    ctx.current = st_.point;
    st_.point = ask(AgentRole::DcSizer, ctx).point->point;
  }
  it = std::min(it, budget);
  st_.discrepancies = report.count();
  PhaseOutcome out{"C", it, budget, sw.seconds(), std::nullopt,
                   std::to_string(report.count()) + " discrepancies remaining"};
  st_.phases.push_back(out);
  persist();
  return out;
}

PhaseOutcome Workflow::run_phase_d() {
  if (!phase_b_done_) throw Error("phase D needs the results of phase B");
  Stopwatch sw;
  const int budget = cfg_.budgets.phase_d;
  int it = 0;
  std::string note = "budget exhausted";
  for (it = 1; it <= budget; ++it) {
    Evaluation ev = evaluate(st_.point);
    write_netlist("D_" + padded(it), st_.point);
    st_.history.push_back({"D", it, -1, st_.point, ev.cost.total, ev.cost, ev.measured});
    if (ev.cost.total <= cfg_.budgets.phase_d_target) {
      note = "reached the target";
      break;
    }
    if (it == budget) break;

    auto ctx = context();
    ctx.measurements = ev.measured;
    ctx.cost = ev.cost;
    ctx.current = st_.point;
    ctx.specs_review = ask(AgentRole::SpecsReviewer, ctx).parsed.at("assessment").get<std::string>();
    ctx.history = st_.history;
    DesignPoint next = ask(AgentRole::InferencingSizer, ctx).point->point;
    if (detect_deadloop(st_.point, next)) {
      next = perturb_widths(next, rng_, cfg_.ranges, st_.groups, cfg_.width_prefix);
    }
    st_.point = next;
  }
  it = std::min(it, budget);
  PhaseOutcome out{"D", it, budget, sw.seconds(), history_best(st_.history), note};
  st_.phases.push_back(out);
  persist();
  return out;
}

PhaseOutcome Workflow::run_phase_e() {
  if (!phase_b_done_) throw Error("phase E needs the results of phase B");
  Stopwatch sw;
  st_.best_j_before_e = history_best(st_.history);

  // Seeds come from the advisor's pick of the sizing history.
  std::vector<std::size_t> seed_idx;
  double span_ratio = cfg_.optimizer.span_ratio;
  if (!st_.history.empty()) {
    auto ctx = context();
    ctx.history = st_.history;
    auto r = ask(AgentRole::AdvisorReviewer, ctx);
    seed_idx = r.parsed.at("seed_indices").get<std::vector<std::size_t>>();
    span_ratio = r.parsed.at("span_ratio").get<double>();
  }

  auto tied = st_.groups.tied_members();
  st_.search_names.clear();
  for (const auto& p : st_.mandatory) {
    if (!tied.count(p)) st_.search_names.push_back(p);
  }
  const auto dim = static_cast<Eigen::Index>(st_.search_names.size());

  int evaluations = 0;
  std::string note = "no free parameters";
  if (dim > 0) {
    SearchSpace space(st_.search_names, cfg_.ranges);
    std::vector<Observation> seeds;
    for (auto i : seed_idx) seeds.push_back({space.to_unit(st_.history[i].point), st_.history[i].j});

    DesignPoint base = st_.point;
    auto to_point = [&](const Eigen::VectorXd& x) {
      DesignPoint p = base;
      for (const auto& [k, v] : space.from_unit(x)) p[k] = v;
      return normalize(p, cfg_.ranges, st_.groups);
    };
    Objective objective = [&](const Eigen::VectorXd& x) { return evaluate(to_point(x)).cost.total; };

    ExturboConfig oc = cfg_.optimizer;
    oc.workers = cfg_.budgets.workers;
    oc.batch_size = cfg_.budgets.batch_size;
    oc.budget = cfg_.budgets.phase_e;
    oc.power_budget = cfg_.budgets.phase_e_power;
    oc.target = cfg_.budgets.phase_e_target;
    oc.span_ratio = span_ratio;
    oc.failure_value = cfg_.specs.sanity_penalty;
    oc.warm_start = !seeds.empty();
    oc.seed = cfg_.seed;
    auto res = optimize(objective, seeds, dim, oc);

    for (const auto& rec : res.history) {
      DesignPoint p = to_point(rec.x);
      Evaluation ev = evaluate(p);
      std::string phase = rec.stage == 0 ? "E0" : rec.stage == 1 ? "E1" : "E2";
      st_.history.push_back({phase, rec.evaluation + 1, rec.worker, p, rec.j, ev.cost, ev.measured});
      write_netlist("E_" + padded(rec.evaluation + 1), p);
    }
    evaluations = static_cast<int>(res.history.size());
    note = std::to_string(res.stage1_evaluations) + " feasibility + " + std::to_string(res.stage2_evaluations) +
           " power evaluations, " + std::to_string(seeds.size()) + " seeds";
  }

  // Sign-off: sensitivity, classification and explanations.
  auto sens = history_sensitivity(st_.history, st_.search_names, cfg_.ranges, cfg_.elite_fraction,
                                  cfg_.sensitivity_restarts, cfg_.seed);
  auto best = best_index(st_.history);
  auto ctx = context();
  ctx.sensitivity = &sens;
  ctx.classes = classify(sens, st_.groups, st_.mandatory);
  ctx.current = best ? st_.history[*best].point : st_.point;
  auto ex = ask(AgentRole::EquippedSizer, ctx).parsed.at("explanations");
  st_.explanations.clear();
  for (const auto& [k, v] : ex.items()) st_.explanations[k] = v.get<std::string>();

  PhaseOutcome out{"E", evaluations, cfg_.budgets.phase_e + cfg_.budgets.phase_e_power, sw.seconds(),
                   history_best(st_.history), note};
  st_.phases.push_back(out);
  persist();
  return out;
}

FinalReport Workflow::run_all() {
  run_phase_b();
  run_phase_c();
  run_phase_d();
  run_phase_e();
  st_.report = build_report(cfg_, st_.history, st_.mandatory, st_.groups, st_.search_names, st_.explanations,
                            st_.phases);
  if (!run_dir_.empty()) write_file((fs::path(run_dir_) / "report.md").string(), render_report(*st_.report));
  return *st_.report;
}

void Workflow::persist() const {
  if (run_dir_.empty()) return;
  write_history((fs::path(run_dir_) / "history.jsonl").string(), st_.history);
  json phases = json::array();
  for (const auto& p : st_.phases) phases.push_back(to_json(p));
  json s = {{"mandatory", st_.mandatory},
            {"groups", to_json(st_.groups)["groups"]},
            {"goals", to_json(st_.goals)},
            {"search_names", st_.search_names},
            {"explanations", st_.explanations},
            {"discrepancies", st_.discrepancies},
            {"phases", phases}};
  write_file((fs::path(run_dir_) / "state.json").string(), s.dump(2) + "\n");
}

SensitivityReport history_sensitivity(const History& h, const std::vector<std::string>& search_names,
                                      const ParamRanges& ranges, double elite_fraction, int restarts,
                                      std::uint64_t seed) {
  std::vector<const HistoryEntry*> rows;
  for (const auto& e : h) {
    if (!e.phase.empty() && e.phase[0] == 'E') rows.push_back(&e);
  }
  SensitivityReport rep;
  rep.names = search_names;
  rep.elite_fraction = elite_fraction;
  const auto dim = static_cast<Eigen::Index>(search_names.size());
  if (dim == 0 || rows.size() < 2) {
    // Nothing to learn from: every parameter equally (un)important.
    rep.global = importance_from_lengthscales(Eigen::VectorXd::Ones(dim));
    rep.global.n_points = rows.size();
    rep.elite = rep.global;
    return rep;
  }
  SearchSpace space(search_names, ranges);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), dim);
  Eigen::VectorXd j(X.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = space.to_unit(rows[i]->point).transpose();
    j(static_cast<Eigen::Index>(i)) = rows[i]->j;
  }
  GpFitConfig fit;
  fit.restarts = restarts;
  fit.seed = seed;
  return sensitivity(X, j, search_names, elite_fraction, fit);
}

FinalReport build_report(const RunConfig& cfg, const History& h, const std::vector<std::string>& mandatory,
                         const MatchingGroups& groups, const std::vector<std::string>& search_names,
                         const std::map<std::string, std::string>& explanations,
                         const std::vector<PhaseOutcome>& phases) {
  FinalReport r;
  r.circuit = fs::path(cfg.netlist_path).filename().string();
  r.params = mandatory;
  if (auto b = best_index(h)) {
    r.best = h[*b].point;
    r.best_j = h[*b].j;
    r.breakdown = h[*b].breakdown;
    r.measured = h[*b].measured;
  } else {
    r.best_j = std::numeric_limits<double>::infinity();
  }
  r.specs = cfg.specs;
  r.ranges = cfg.ranges;
  r.groups = groups;
  r.sensitivity = history_sensitivity(h, search_names, cfg.ranges, cfg.elite_fraction, cfg.sensitivity_restarts, cfg.seed);
  r.classes = classify(r.sensitivity, groups, mandatory);
  r.explanations = explanations;
  r.phases = phases;
  return r;
}

std::string regenerate_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  auto cfg = load_config((dir / "config.json").string());
  auto h = read_history((dir / "history.jsonl").string());
  json s;
  try {
    s = json::parse(read_file((dir / "state.json").string()));
  } catch (const json::exception& e) {
    throw ParseError(std::string("state.json: ") + e.what());
  }
  std::vector<PhaseOutcome> phases;
  for (const auto& p : s.at("phases")) phases.push_back(phase_from_json(p));
  auto groups = groups_from_json(json{{"groups", s.at("groups")}});
  auto report = build_report(cfg, h, s.at("mandatory").get<std::vector<std::string>>(), groups,
                             s.at("search_names").get<std::vector<std::string>>(),
                             s.at("explanations").get<std::map<std::string, std::string>>(), phases);
  return render_report(report);
}

}  // namespace vlmcad
