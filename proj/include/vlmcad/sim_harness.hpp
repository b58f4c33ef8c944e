#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "vlmcad/spec_model.hpp"

namespace vlmcad {

struct DeviceOp {
  std::string name;
  std::string region;  // "saturation", "triode", "cutoff"
  double vov = 0.0;    // V, magnitude
  double vds = 0.0;    // V, magnitude (|Vsd| for PMOS)
  double id = 0.0;     // A, magnitude
};

struct DcResult {
  bool converged = false;
  std::map<std::string, double> node_voltages;  // V
  std::vector<DeviceOp> devices;
  std::optional<double> static_power;  // W, drawn from the supply rail

  const DeviceOp* device(const std::string& name) const;
};

struct AcResult {
  std::optional<double> gain_db;
  // Absent when the magnitude never crosses 0 dB.
  std::optional<double> ugbw_mhz;
  std::optional<double> pm_deg;
};

struct TranResult {
  std::optional<double> thd_db;
};

struct SweepResult {
  std::optional<double> offset_mv;
};

enum class SimRequest { Dc, Ac, Transient, DcSweep };
std::string to_string(SimRequest r);

// Thread-safe record of every analysis a backend was asked to run.
class CallLog {
 public:
  void record(SimRequest r);
  std::vector<SimRequest> entries() const;
  std::size_t count() const;
  std::size_t count(SimRequest r) const;
  void clear();

 private:
  mutable std::mutex mu_;
  std::vector<SimRequest> entries_;
};

struct BackendCapabilities {
  bool dc = true;
  bool ac = true;
  bool transient = true;
};

// A simulator that evaluates concrete (brace-free) netlists. Implementations
// must tolerate concurrent calls from several optimizer workers.
class SimBackend {
 public:
  virtual ~SimBackend() = default;

  virtual std::string name() const = 0;
  virtual BackendCapabilities capabilities() const { return {}; }

  // Non-convergence is reported through DcResult::converged; BackendError is
  // reserved for an unavailable or misbehaving simulator.
  virtual DcResult dc(const std::string& netlist) = 0;
  virtual AcResult ac(const std::string& netlist) = 0;
  virtual TranResult transient(const std::string& netlist) = 0;
  virtual SweepResult dc_sweep(const std::string& netlist) = 0;

  CallLog& log() { return log_; }
  const CallLog& log() const { return log_; }

 protected:
  CallLog log_;
};

struct BiasCheck {
  std::string output_node = "out";
  std::string supply_node = "vdd";
  double rail_margin = 0.05;  // fraction of the supply kept clear at each rail
};

// True when the operating point is usable for AC/transient analysis: converged,
// no device in cutoff, and the output node strictly inside the rails.
bool biasing_ok(const DcResult& dc, const BiasCheck& check);

DcResult run_dc(const std::string& netlist, SimBackend& backend);

// DC first; when the biasing check fails nothing else is simulated and the
// result carries dc_ok = false. Power is reported in the spec set's unit.
Measurements run_full(const std::string& netlist, SimBackend& backend, const SpecSet& specs,
                      const BiasCheck& check = {});

}  // namespace vlmcad
