#include "vlmcad/sim_harness.hpp"

#include <algorithm>
#include <cmath>

#include "vlmcad/error.hpp"

namespace vlmcad {

const DeviceOp* DcResult::device(const std::string& name) const {
  auto it = std::find_if(devices.begin(), devices.end(),
                         [&](const DeviceOp& d) { return d.name == name; });
  return it == devices.end() ? nullptr : &*it;
}

std::string to_string(SimRequest r) {
  switch (r) {
    case SimRequest::Dc: return "dc";
    case SimRequest::Ac: return "ac";
    case SimRequest::Transient: return "tran";
    case SimRequest::DcSweep: return "dc_sweep";
  }
  return "?";
}

void CallLog::record(SimRequest r) {
  std::lock_guard lock(mu_);
  entries_.push_back(r);
}

std::vector<SimRequest> CallLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t CallLog::count() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t CallLog::count(SimRequest r) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), r));
}

void CallLog::clear() {
  std::lock_guard lock(mu_);
  entries_.clear();
}

bool biasing_ok(const DcResult& dc, const BiasCheck& check) {
  if (!dc.converged) return false;
  for (const auto& d : dc.devices) {
    if (d.region == "cutoff") return false;
  }
  auto out = dc.node_voltages.find(check.output_node);
  auto vdd = dc.node_voltages.find(check.supply_node);
  if (out == dc.node_voltages.end() || vdd == dc.node_voltages.end()) return false;
  double margin = check.rail_margin * vdd->second;
  return std::isfinite(out->second) && out->second > margin && out->second < vdd->second - margin;
}

DcResult run_dc(const std::string& netlist, SimBackend& backend) {
  if (netlist.find('{') != std::string::npos) {
    throw ValidationError("run_dc: netlist still contains placeholders");
  }
  auto r = backend.dc(netlist);
  if (!r.converged) return DcResult{};
  return r;
}

Measurements run_full(const std::string& netlist, SimBackend& backend, const SpecSet& specs,
                      const BiasCheck& check) {
  Measurements m;
  auto dc = run_dc(netlist, backend);
  m.converged = dc.converged;
  if (!biasing_ok(dc, check)) {
    m.dc_ok = false;
    return m;
  }
  m.dc_ok = true;
  if (dc.static_power) m.power = *dc.static_power / specs.power_scale();

  auto ac = backend.ac(netlist);
  if (ac.gain_db) m.metrics["gain"] = *ac.gain_db;
  // Gain that never reaches 0 dB leaves UGBW undefined; counts as zero bandwidth.
  m.metrics["ugbw"] = ac.ugbw_mhz.value_or(0.0);
  if (ac.pm_deg) m.metrics["pm"] = *ac.pm_deg;
  else if (!ac.ugbw_mhz) m.metrics["pm"] = 0.0;

  if (auto tr = backend.transient(netlist); tr.thd_db) m.metrics["thd"] = *tr.thd_db;
  if (auto sw = backend.dc_sweep(netlist); sw.offset_mv) m.metrics["offset"] = *sw.offset_mv;
  return m;
}

}  // namespace vlmcad
