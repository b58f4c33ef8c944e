#pragma once

#include <map>
#include <string>

#include "vlmcad/sim_harness.hpp"

namespace vlmcad {

struct NgspiceConfig {
  std::string binary;         // empty: $VLMCAD_NGSPICE, else "ngspice"
  std::string model_include;  // empty: $VLMCAD_PTM; added as .include when set
  int timeout_s = 60;
  std::string output_node = "out";
  std::string supply_source = "VDD";
  std::string input_pos = "VINP";  // carries the AC / transient / sweep stimulus
  double vcm = 0.6;                // V, input common mode used by the offset sweep
  double vdd = 1.2;                // V, supply (the offset is read at vdd / 2)
  double thd_frequency = 1e3;      // Hz
  double thd_amplitude = 1e-3;     // V, differential input amplitude
  double ac_fstop = 1e10;          // Hz
  bool keep_decks = false;         // leave per-call directories behind for debugging
};

// Runs `ngspice -b` on a generated deck in a fresh temporary directory for
// every analysis and reads `name = value` lines from its output.
class NgspiceBackend final : public SimBackend {
 public:
  explicit NgspiceBackend(NgspiceConfig cfg = {});

  std::string name() const override { return "ngspice"; }
  DcResult dc(const std::string& netlist) override;
  AcResult ac(const std::string& netlist) override;
  TranResult transient(const std::string& netlist) override;
  SweepResult dc_sweep(const std::string& netlist) override;

  const NgspiceConfig& config() const { return cfg_; }
  // True when the binary can be executed.
  static bool available(const std::string& binary);

  // Deck text for an analysis; exposed for tests.
  std::string deck(const std::string& netlist, SimRequest r) const;

 private:
  std::string run(const std::string& deck_text) const;

  NgspiceConfig cfg_;
};

// `name = value` pairs of an ngspice log; names lower-cased.
std::map<std::string, double> parse_ngspice_values(const std::string& log);
// Total harmonic distortion in dB from a `fourier` report, if present.
std::optional<double> parse_thd_db(const std::string& log);

}  // namespace vlmcad
