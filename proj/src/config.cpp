#include "vlmcad/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "vlmcad/error.hpp"

namespace fs = std::filesystem;

namespace vlmcad {

using nlohmann::json;

void Budgets::validate() const {
  if (phase_c < 1 || phase_d < 1 || phase_e < 0 || phase_e_power < 0) throw ConfigError("budgets must be positive");
  if (workers < 1 || batch_size < 1 || seeds < 1) throw ConfigError("workers, batch size and seed count must be positive");
}

BackendKind backend_from_string(const std::string& s) {
  if (s == "surrogate") return BackendKind::Surrogate;
  if (s == "ngspice") return BackendKind::Ngspice;
  throw ConfigError("unknown backend '" + s + "' (expected surrogate or ngspice)");
}

TransportKind transport_from_string(const std::string& s) {
  if (s == "scripted") return TransportKind::Scripted;
  if (s == "endpoint") return TransportKind::Endpoint;
  throw ConfigError("unknown transport '" + s + "' (expected scripted or endpoint)");
}

std::string to_string(BackendKind b) { return b == BackendKind::Surrogate ? "surrogate" : "ngspice"; }
std::string to_string(TransportKind t) { return t == TransportKind::Scripted ? "scripted" : "endpoint"; }

namespace {

// Reads typed members of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + at(k));
    }
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k) && !j_.at(k).is_null();
  }
  const json& raw(const std::string& k) {
    if (!has(k)) throw ConfigError("missing key " + at(k));
    return j_.at(k);
  }
  std::string at(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  template <typename T>
  T get(const std::string& k) {
    try {
      return raw(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("wrong type for " + at(k));
    }
  }
  template <typename T>
  void opt(const std::string& k, T& out) {
    if (has(k)) out = get<T>(k);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string resolve(const std::string& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = fs::path(base) / path;
  return path.lexically_normal().string();
}

void require_readable(const std::string& path, const std::string& what) {
  std::ifstream f(path);
  if (!f) throw ConfigError(what + " '" + path + "' is not readable");
}

SpecSet parse_specs(const json& j) {
  Section s(j, "specs");
  SpecSet out;
  out.p_max = s.get<double>("power_max");
  s.opt("power_unit", out.power_unit);
  if (s.has("power_min")) out.p_min = s.get<double>("power_min");
  s.opt("sanity_penalty", out.sanity_penalty);
  s.opt("gain_floor_db", out.gain_floor_db);
  const auto& metrics = s.raw("metrics");
  if (!metrics.is_array()) throw ConfigError("specs.metrics must be an array");
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    Section m(metrics[i], "specs.metrics[" + std::to_string(i) + "]");
    SpecItem it;
    it.name = m.get<std::string>("name");
    it.target = m.get<double>("target");
    it.direction = m.has("direction") ? direction_from_string(m.get<std::string>("direction")) : default_direction(it.name);
    if (m.has("weight")) {
      it.weight = m.get<double>("weight");
    } else {
      auto w = default_metric_weights().find(it.name);
      if (w == default_metric_weights().end()) throw ConfigError("no default weight for metric '" + it.name + "'");
      it.weight = w->second;
    }
    out.items.push_back(it);
  }
  try {
    out.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("specs: ") + e.what());
  }
  return out;
}

ParamRanges parse_ranges(const json& j) {
  if (!j.is_object()) throw ConfigError("ranges must be an object");
  ParamRanges out;
  for (const auto& [name, v] : j.items()) {
    Section s(v, "ranges." + name);
    ParamRange r;
    r.name = name;
    r.min = s.get<double>("min");
    r.max = s.get<double>("max");
    s.opt("unit", r.unit);
    s.opt("integer", r.integer);
    out.entries.push_back(r);
  }
  try {
    out.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("ranges: ") + e.what());
  }
  return out;
}

void parse_surrogate(const json& j, SurrogateRoles& roles, SurrogateProcess& proc) {
  Section s(j, "backend.surrogate");
  if (s.has("roles")) {
    Section r(s.raw("roles"), "backend.surrogate.roles");
    r.opt("in_a", roles.in_a);
    r.opt("in_b", roles.in_b);
    r.opt("load_a", roles.load_a);
    r.opt("load_b", roles.load_b);
    r.opt("tail", roles.tail);
    r.opt("driver", roles.driver);
    r.opt("sink", roles.sink);
    r.opt("bias", roles.bias);
    r.opt("cc", roles.cc);
    r.opt("cl", roles.cl);
    r.opt("ibias", roles.ibias);
    r.opt("vdd", roles.vdd);
    r.opt("bias_voltages", roles.bias_voltages);
    r.opt("vcm", roles.vcm);
    r.opt("pmos_input", roles.pmos_input);
  }
  if (s.has("process")) {
    Section p(s.raw("process"), "backend.surrogate.process");
    p.opt("kn", proc.kn);
    p.opt("kp", proc.kp);
    p.opt("vtn", proc.vtn);
    p.opt("vtp", proc.vtp);
    p.opt("lambda0n", proc.lambda0n);
    p.opt("lambda0p", proc.lambda0p);
    p.opt("v_floor", proc.v_floor);
    p.opt("thd_amplitude", proc.thd_amplitude);
  }
}

void parse_ngspice(const json& j, NgspiceConfig& c, const std::string& base) {
  Section s(j, "backend.ngspice");
  s.opt("binary", c.binary);
  if (s.has("model_include")) c.model_include = resolve(base, s.get<std::string>("model_include"));
  s.opt("timeout_s", c.timeout_s);
  s.opt("output_node", c.output_node);
  s.opt("supply_source", c.supply_source);
  s.opt("input_pos", c.input_pos);
  s.opt("vcm", c.vcm);
  s.opt("vdd", c.vdd);
  s.opt("thd_frequency", c.thd_frequency);
  s.opt("thd_amplitude", c.thd_amplitude);
  s.opt("ac_fstop", c.ac_fstop);
  s.opt("keep_decks", c.keep_decks);
}

KnobTable parse_knobs(const json& j) {
  if (!j.is_object()) throw ConfigError("agents.knobs must be an object");
  KnobTable out;
  for (const auto& [metric, list] : j.items()) {
    if (!list.is_array()) throw ConfigError("agents.knobs." + metric + " must be an array");
    for (const auto& e : list) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_integer() ||
          (e[1].get<int>() != 1 && e[1].get<int>() != -1)) {
        throw ConfigError("agents.knobs." + metric + " entries must be [\"param\", 1 or -1]");
      }
      out[metric].push_back({e[0].get<std::string>(), e[1].get<int>()});
    }
  }
  return out;
}

void parse_optimizer(const json& j, ExturboConfig& o) {
  Section s(j, "optimizer");
  s.opt("span_ratio", o.span_ratio);
  s.opt("length_init", o.length_init);
  s.opt("length_min", o.length_min);
  s.opt("length_max", o.length_max);
  s.opt("tau_succ", o.tau_succ);
  s.opt("tau_fail", o.tau_fail);
  s.opt("max_train_points", o.max_train_points);
  s.opt("fit_restarts", o.fit_restarts);
  s.opt("fit_iterations", o.fit_iterations);
  s.opt("parallel", o.parallel);
  if (s.has("pool_per_dim")) o.proposal.pool_per_dim = s.get<std::size_t>("pool_per_dim");
  if (s.has("pool_max")) o.proposal.pool_max = s.get<std::size_t>("pool_max");
  if (s.has("fourier_features")) o.proposal.fourier_features = s.get<std::size_t>("fourier_features");
  if (!(o.span_ratio > 0.0 && o.span_ratio <= 1.0)) throw ConfigError("optimizer.span_ratio must lie in (0, 1]");
}

}  // namespace

RunConfig parse_config(const json& j, const std::string& base_dir) {
  RunConfig c;
  c.raw = j;
  {
    Section top(j, "");
    c.netlist_path = resolve(base_dir, top.get<std::string>("netlist"));
    require_readable(c.netlist_path, "netlist");
    if (top.has("schematic")) {
      c.schematic_path = resolve(base_dir, top.get<std::string>("schematic"));
      require_readable(*c.schematic_path, "schematic");
    }
    c.specs = parse_specs(top.raw("specs"));
    c.ranges = parse_ranges(top.raw("ranges"));

    if (top.has("backend")) {
      Section b(top.raw("backend"), "backend");
      if (b.has("kind")) c.backend = backend_from_string(b.get<std::string>("kind"));
      if (b.has("surrogate")) parse_surrogate(b.raw("surrogate"), c.roles, c.process);
      if (b.has("ngspice")) parse_ngspice(b.raw("ngspice"), c.ngspice, base_dir);
    }
    if (top.has("transport")) {
      Section t(top.raw("transport"), "transport");
      if (t.has("kind")) c.transport = transport_from_string(t.get<std::string>("kind"));
      if (t.has("endpoint")) {
        Section e(t.raw("endpoint"), "transport.endpoint");
        e.opt("url", c.endpoint.url);
        e.opt("model", c.endpoint.model);
        e.opt("api_key_env", c.endpoint.api_key_env);
        e.opt("temperature", c.endpoint.temperature);
        e.opt("timeout_s", c.endpoint.timeout_s);
      }
    }
    if (top.has("budgets")) {
      Section b(top.raw("budgets"), "budgets");
      b.opt("phase_c", c.budgets.phase_c);
      b.opt("phase_d", c.budgets.phase_d);
      b.opt("phase_d_target", c.budgets.phase_d_target);
      b.opt("phase_e", c.budgets.phase_e);
      b.opt("phase_e_power", c.budgets.phase_e_power);
      b.opt("phase_e_target", c.budgets.phase_e_target);
      b.opt("workers", c.budgets.workers);
      b.opt("seeds", c.budgets.seeds);
      b.opt("batch_size", c.budgets.batch_size);
    }
    if (top.has("agents")) {
      Section a(top.raw("agents"), "agents");
      a.opt("history_window", c.history_window);
      a.opt("retries", c.retries);
      a.opt("width_prefix", c.width_prefix);
      if (a.has("knobs")) c.knobs = parse_knobs(a.raw("knobs"));
    }
    if (top.has("bias_check")) {
      Section b(top.raw("bias_check"), "bias_check");
      b.opt("output_node", c.bias.output_node);
      b.opt("supply_node", c.bias.supply_node);
      b.opt("rail_margin", c.bias.rail_margin);
    }
    top.opt("dc_tolerance", c.dc_tolerance);
    if (top.has("sensitivity")) {
      Section s(top.raw("sensitivity"), "sensitivity");
      s.opt("elite_fraction", c.elite_fraction);
      s.opt("restarts", c.sensitivity_restarts);
    }
    if (top.has("optimizer")) parse_optimizer(top.raw("optimizer"), c.optimizer);
    top.opt("keep_netlists", c.keep_netlists);
    top.opt("seed", c.seed);
  }
  c.budgets.validate();
  if (c.retries < 0) throw ConfigError("agents.retries must not be negative");
  if (c.history_window < 1) throw ConfigError("agents.history_window must be positive");
  if (!(c.elite_fraction > 0.0 && c.elite_fraction <= 1.0)) throw ConfigError("sensitivity.elite_fraction must lie in (0, 1]");
  if (!(c.dc_tolerance >= 0.0)) throw ConfigError("dc_tolerance must not be negative");
  if (c.transport == TransportKind::Endpoint && (c.endpoint.url.empty() || c.endpoint.model.empty())) {
    throw ConfigError("transport.endpoint needs url and model for the endpoint transport");
  }
  c.ngspice.output_node = c.bias.output_node;
  return c;
}

SpecSet specs_from_json(const json& j) { return parse_specs(j); }

Measurements measurements_from_json(const json& j) {
  Measurements m;
  Section s(j, "measured");
  if (s.has("metrics")) {
    const auto& metrics = s.raw("metrics");
    if (!metrics.is_object()) throw ConfigError("measured.metrics must be an object");
    for (const auto& [k, v] : metrics.items()) {
      if (v.is_null()) continue;
      if (!v.is_number()) throw ConfigError("wrong type for measured.metrics." + k);
      m.metrics[k] = v.get<double>();
    }
  }
  if (s.has("power")) m.power = s.get<double>("power");
  m.dc_ok = s.has("dc_ok") ? s.get<bool>("dc_ok") : true;
  m.converged = s.has("converged") ? s.get<bool>("converged") : true;
  return m;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  auto c = parse_config(j, fs::path(path).parent_path().string());
  c.config_path = path;
  return c;
}

}  // namespace vlmcad
