#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlmcad/netlist.hpp"
#include "vlmcad/sim_harness.hpp"

namespace vlmcad {

// Long-channel square-law constants for the behavioral amplifier.
// I = k/2 * (W/L) * Vov^2, lambda = lambda0 / L[um].
struct SurrogateProcess {
  double kn = 300e-6;       // A/V^2
  double kp = 120e-6;       // A/V^2
  double vtn = 0.40;        // V
  double vtp = 0.40;        // V, magnitude
  double lambda0n = 0.04;   // um/V
  double lambda0p = 0.05;   // um/V
  double v_floor = 0.08;    // V, effective overdrive floor (moderate inversion)
  double thd_amplitude = 0.2;  // V, output test amplitude for distortion
};

// Which netlist elements play which part of the two-stage amplifier.
struct SurrogateRoles {
  std::string in_a = "M1", in_b = "M2";      // differential pair
  std::string load_a = "M3", load_b = "M4";  // mirror load, load_a diode-connected
  std::string tail = "M5";
  std::string driver = "M6";  // second-stage common source
  std::string sink = "M7";    // second-stage current source
  std::string bias = "M8";    // diode reference carrying the bias current
  std::string cc = "CC";
  std::string cl = "CL";
  std::string ibias = "IBIAS";
  std::string vdd = "VDD";
  std::vector<std::string> bias_voltages;  // sources that must be > 0 to converge
  double vcm = 0.6;                         // V, input common mode
  bool pmos_input = false;                  // mirror the polarity of the signal path
};

// Device sizes (SI units) and testbench constants pulled from a concrete netlist.
struct AmpSizing {
  struct Mos {
    double w = 0.0, l = 0.0, m = 1.0;
    double ratio() const { return w * m / l; }
  };
  Mos in_a, in_b, load_a, load_b, tail, driver, sink, bias;
  double cc = 0.0, cl = 0.0, ibias = 0.0, vdd = 0.0, vcm = 0.6;
  std::vector<double> bias_voltages;
};

// Full closed-form evaluation: every analysis at once.
struct SurrogateEval {
  DcResult dc;
  AcResult ac;
  TranResult tran;
  SweepResult sweep;
};

AmpSizing extract_sizing(const NetlistTemplate& concrete, const SurrogateRoles& roles);

// Deterministic two-stage Miller amplifier model:
//   gm = 2 I / Veff, Veff = sqrt(Vov^2 + v_floor^2), ro = 1 / (lambda I)
//   A0 = gm1 (ro2 || ro4) * gm6 (ro6 || ro7), UGBW = gm1 / (2 pi Cc)
//   p2 = gm6 / (2 pi CL), PM = 90 - atan(UGBW / p2)
//   THD falls with output swing headroom, offset grows with pair asymmetry,
//   power = VDD * (I_tail + I_sink).
SurrogateEval evaluate_sizing(const AmpSizing& s, const SurrogateProcess& proc,
                              const SurrogateRoles& roles);

// Collapses a full evaluation into Measurements the way run_full would.
Measurements to_measurements(const SurrogateEval& e, double power_scale, const BiasCheck& check = {});

// Direct evaluation of a design point through its template, bypassing the
// backend call log.
Measurements surrogate_eval(const DesignPoint& p, const NetlistTemplate& t, const ParamRanges& r,
                            const SurrogateRoles& roles, const SurrogateProcess& proc,
                            double power_scale);

class SurrogateBackend final : public SimBackend {
 public:
  explicit SurrogateBackend(SurrogateRoles roles = {}, SurrogateProcess proc = {});

  std::string name() const override { return "surrogate"; }
  DcResult dc(const std::string& netlist) override;
  AcResult ac(const std::string& netlist) override;
  TranResult transient(const std::string& netlist) override;
  SweepResult dc_sweep(const std::string& netlist) override;

  // Makes every DC analysis report non-convergence.
  void force_dc_failure(bool on) { force_dc_fail_ = on; }

  const SurrogateRoles& roles() const { return roles_; }
  const SurrogateProcess& process() const { return proc_; }

 private:
  SurrogateEval eval(const std::string& netlist) const;

  SurrogateRoles roles_;
  SurrogateProcess proc_;
  bool force_dc_fail_ = false;
};

}  // namespace vlmcad
