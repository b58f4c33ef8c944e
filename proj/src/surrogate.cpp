#include "vlmcad/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vlmcad/error.hpp"

namespace vlmcad {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

const Device& require_device(const NetlistTemplate& t, const std::string& name) {
  const auto* d = t.find_device(name);
  if (!d) throw BackendError("surrogate: netlist has no element '" + name + "'");
  return *d;
}

AmpSizing::Mos read_mos(const NetlistTemplate& t, const std::string& name) {
  const auto& d = require_device(t, name);
  if (d.kind != 'M') throw BackendError("surrogate: '" + name + "' is not a MOSFET");
  AmpSizing::Mos m;
  auto w = d.param("w");
  auto l = d.param("l");
  if (!w || !l) throw BackendError("surrogate: '" + name + "' needs W and L");
  m.w = parse_spice_number(*w);
  m.l = parse_spice_number(*l);
  if (auto mult = d.param("m")) m.m = parse_spice_number(*mult);
  return m;
}

// Last numeric token of a source/passive value ("DC 30u", "{x}" already substituted).
double read_value(const NetlistTemplate& t, const std::string& name) {
  const auto& d = require_device(t, name);
  std::istringstream in(d.value);
  std::optional<double> last;
  for (std::string tok; in >> tok;) {
    try {
      last = parse_spice_number(tok);
    } catch (const ParseError&) {
      if (last) break;  // stop at "AC ..." once the DC value is known
    }
  }
  if (!last) throw BackendError("surrogate: cannot read a value from '" + name + "'");
  return *last;
}

struct MosOp {
  double i = 0.0, vov = 0.0, veff = 0.0, gm = 0.0, ro = 0.0;
};

MosOp bias_device(const AmpSizing::Mos& m, double current, double k, double lambda0,
                  double v_floor) {
  MosOp op;
  op.i = current;
  op.vov = std::sqrt(2.0 * current / (k * m.ratio()));
  op.veff = std::hypot(op.vov, v_floor);
  op.gm = 2.0 * current / op.veff;
  double lambda = lambda0 / (m.l * 1e6);
  op.ro = 1.0 / (lambda * current);
  return op;
}

// Output resistance derating once Vds drops below the saturation voltage.
double triode_factor(double vds, double vdsat) {
  if (vds <= 0.0) return 0.0;
  double x = std::min(1.0, vds / vdsat);
  return x * x;
}

std::string region_of(double vds, double vdsat) {
  if (vds <= 0.0) return "cutoff";
  return vds >= vdsat ? "saturation" : "triode";
}

double parallel(double a, double b) { return (a > 0.0 && b > 0.0) ? a * b / (a + b) : 0.0; }

}  // namespace

AmpSizing extract_sizing(const NetlistTemplate& t, const SurrogateRoles& r) {
  AmpSizing s;
  s.in_a = read_mos(t, r.in_a);
  s.in_b = read_mos(t, r.in_b);
  s.load_a = read_mos(t, r.load_a);
  s.load_b = read_mos(t, r.load_b);
  s.tail = read_mos(t, r.tail);
  s.driver = read_mos(t, r.driver);
  s.sink = read_mos(t, r.sink);
  s.bias = read_mos(t, r.bias);
  s.cc = read_value(t, r.cc);
  s.cl = read_value(t, r.cl);
  s.ibias = read_value(t, r.ibias);
  s.vdd = read_value(t, r.vdd);
  s.vcm = r.vcm;
  for (const auto& name : r.bias_voltages) s.bias_voltages.push_back(read_value(t, name));
  return s;
}

SurrogateEval evaluate_sizing(const AmpSizing& s, const SurrogateProcess& p,
                              const SurrogateRoles& r) {
  SurrogateEval out;
  bool supplies_ok = s.vdd > 0.0 && s.ibias > 0.0 && s.cc > 0.0 && s.cl > 0.0;
  for (double v : s.bias_voltages) supplies_ok = supplies_ok && v > 0.0;
  for (const auto* m : {&s.in_a, &s.in_b, &s.load_a, &s.load_b, &s.tail, &s.driver, &s.sink, &s.bias}) {
    supplies_ok = supplies_ok && m->w > 0.0 && m->l > 0.0 && m->m > 0.0;
  }
  if (!supplies_ok) return out;  // DC does not converge; nothing else is defined

  const bool pin = r.pmos_input;
  const double k_in = pin ? p.kp : p.kn, k_ld = pin ? p.kn : p.kp;
  const double l0_in = pin ? p.lambda0p : p.lambda0n, l0_ld = pin ? p.lambda0n : p.lambda0p;
  const double vt_in = pin ? p.vtp : p.vtn, vt_ld = pin ? p.vtn : p.vtp;

  const double i_tail = s.ibias * s.tail.ratio() / s.bias.ratio();
  const double i_sink = s.ibias * s.sink.ratio() / s.bias.ratio();

  auto op_bias = bias_device(s.bias, s.ibias, k_in, l0_in, p.v_floor);
  auto op_tail = bias_device(s.tail, i_tail, k_in, l0_in, p.v_floor);
  auto op_ina = bias_device(s.in_a, i_tail / 2, k_in, l0_in, p.v_floor);
  auto op_inb = bias_device(s.in_b, i_tail / 2, k_in, l0_in, p.v_floor);
  auto op_lda = bias_device(s.load_a, i_tail / 2, k_ld, l0_ld, p.v_floor);
  auto op_ldb = bias_device(s.load_b, i_tail / 2, k_ld, l0_ld, p.v_floor);
  auto op_drv = bias_device(s.driver, i_sink, k_ld, l0_ld, p.v_floor);
  auto op_snk = bias_device(s.sink, i_sink, k_in, l0_in, p.v_floor);

  // Voltages measured from the input-pair rail (ground for NMOS input).
  const double cm = pin ? s.vdd - s.vcm : s.vcm;
  const double v_tail = cm - vt_in - op_ina.vov;
  const double v_mirror = s.vdd - vt_ld - op_lda.vov;
  const double swing_lo = op_snk.veff, swing_hi = s.vdd - op_drv.veff;
  const double v_out = 0.5 * (swing_lo + swing_hi);

  const double vds_in = v_mirror - v_tail;
  const double vds_ld = vt_ld + op_lda.vov;
  const double vds_tail = v_tail;
  const double vds_drv = s.vdd - v_out;
  const double vds_snk = v_out;
  const double vds_bias = vt_in + op_bias.vov;

  auto& dc = out.dc;
  dc.converged = true;
  auto rail = [&](double v) { return pin ? s.vdd - v : v; };
  dc.node_voltages["tail"] = rail(v_tail);
  dc.node_voltages["out1"] = rail(v_mirror);
  dc.node_voltages["out"] = rail(v_out);
  dc.node_voltages["vdd"] = s.vdd;
  dc.node_voltages["nbias"] = rail(vds_bias);
  auto push = [&](const std::string& name, const MosOp& op, double vds) {
    dc.devices.push_back({name, region_of(vds, op.veff), op.vov, std::max(vds, 0.0), op.i});
  };
  push(r.in_a, op_ina, vds_in);
  push(r.in_b, op_inb, vds_in);
  push(r.load_a, op_lda, vds_ld);
  push(r.load_b, op_ldb, vds_ld);
  push(r.tail, op_tail, vds_tail);
  push(r.driver, op_drv, vds_drv);
  push(r.sink, op_snk, vds_snk);
  push(r.bias, op_bias, vds_bias);
  dc.static_power = s.vdd * (i_tail + i_sink);

  // Small signal.
  const double ro_inb = op_inb.ro * triode_factor(vds_in, op_inb.veff);
  const double ro_ldb = op_ldb.ro * triode_factor(vds_ld, op_ldb.veff);
  const double ro_drv = op_drv.ro * triode_factor(vds_drv, op_drv.veff);
  const double ro_snk = op_snk.ro * triode_factor(vds_snk, op_snk.veff);
  const double gm1 = op_ina.gm * std::min(1.0, triode_factor(vds_tail, op_tail.veff) * 4.0);
  const double a1 = gm1 * parallel(ro_inb, ro_ldb);
  const double a2 = op_drv.gm * parallel(ro_drv, ro_snk);
  const double a0 = a1 * a2;

  if (a0 > 0.0) out.ac.gain_db = 20.0 * std::log10(a0);
  if (a0 > 1.0) {
    const double ugbw = gm1 / (kTwoPi * s.cc);
    const double p2 = op_drv.gm / (kTwoPi * s.cl);
    out.ac.ugbw_mhz = ugbw * 1e-6;
    out.ac.pm_deg = 90.0 - std::atan(ugbw / p2) * 180.0 / std::numbers::pi;
  }

  const double margin = 0.5 * (swing_hi - swing_lo) - p.thd_amplitude;
  out.tran.thd_db = margin >= 0.0 ? -20.0 - 20.0 * std::log10(1.0 + 1000.0 * margin)
                                  : std::min(0.0, -20.0 - 200.0 * margin);

  const double asym = std::abs(std::log(s.in_a.ratio() / s.in_b.ratio())) +
                      std::abs(std::log(s.load_a.ratio() / s.load_b.ratio()));
  out.sweep.offset_mv = 1e3 * 0.5 * op_ina.veff * asym;
  return out;
}

Measurements to_measurements(const SurrogateEval& e, double power_scale, const BiasCheck& check) {
  Measurements m;
  m.converged = e.dc.converged;
  m.dc_ok = biasing_ok(e.dc, check);
  if (!m.dc_ok) return m;
  if (e.dc.static_power) m.power = *e.dc.static_power / power_scale;
  if (e.ac.gain_db) m.metrics["gain"] = *e.ac.gain_db;
  m.metrics["ugbw"] = e.ac.ugbw_mhz.value_or(0.0);
  m.metrics["pm"] = e.ac.pm_deg.value_or(0.0);
  if (e.tran.thd_db) m.metrics["thd"] = *e.tran.thd_db;
  if (e.sweep.offset_mv) m.metrics["offset"] = *e.sweep.offset_mv;
  return m;
}

Measurements surrogate_eval(const DesignPoint& p, const NetlistTemplate& t, const ParamRanges& r,
                            const SurrogateRoles& roles, const SurrogateProcess& proc,
                            double power_scale) {
  auto concrete = parse_netlist(instantiate(t, p, r));
  return to_measurements(evaluate_sizing(extract_sizing(concrete, roles), proc, roles), power_scale);
}

SurrogateBackend::SurrogateBackend(SurrogateRoles roles, SurrogateProcess proc)
    : roles_(std::move(roles)), proc_(proc) {}

SurrogateEval SurrogateBackend::eval(const std::string& netlist) const {
  auto t = parse_netlist(netlist);
  return evaluate_sizing(extract_sizing(t, roles_), proc_, roles_);
}

DcResult SurrogateBackend::dc(const std::string& netlist) {
  log_.record(SimRequest::Dc);
  if (force_dc_fail_) return {};
  return eval(netlist).dc;
}

AcResult SurrogateBackend::ac(const std::string& netlist) {
  log_.record(SimRequest::Ac);
  return eval(netlist).ac;
}

TranResult SurrogateBackend::transient(const std::string& netlist) {
  log_.record(SimRequest::Transient);
  return eval(netlist).tran;
}

SweepResult SurrogateBackend::dc_sweep(const std::string& netlist) {
  log_.record(SimRequest::DcSweep);
  return eval(netlist).sweep;
}

}  // namespace vlmcad
