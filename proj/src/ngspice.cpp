#include "vlmcad/ngspice.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "vlmcad/error.hpp"
#include "vlmcad/netlist.hpp"

namespace fs = std::filesystem;

namespace vlmcad {

namespace {

std::string env_or(const char* var, const std::string& fallback) {
  const char* v = std::getenv(var);
  return v && *v ? std::string(v) : fallback;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

// Netlist text without its .end card.
std::string strip_end(const std::string& netlist) {
  std::istringstream in(netlist);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = lower(line);
    auto first = t.find_first_not_of(" \t");
    if (first != std::string::npos && t.compare(first, 4, ".end") == 0 &&
        (t.size() == first + 4 || std::isspace(static_cast<unsigned char>(t[first + 4])))) {
      continue;
    }
    out << line << "\n";
  }
  return out.str();
}

bool is_pmos_model(const NetlistTemplate& t, const Device& d) {
  if (auto type = t.model_type(d.model)) return *type == "pmos";
  auto m = lower(d.model);
  return !m.empty() && m[0] == 'p';
}

struct TempDir {
  fs::path path;
  bool keep = false;
  TempDir(bool keep_it) : keep(keep_it) {
    std::string tmpl = (fs::temp_directory_path() / "vlmcad-spice-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw BackendError("cannot create a temporary directory for ngspice");
    path = tmpl;
  }
  ~TempDir() {
    if (!keep) {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  }
};

}  // namespace

std::map<std::string, double> parse_ngspice_values(const std::string& log) {
  static const std::regex line_re(R"(^\s*([^\s=]+)\s*=\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\b)");
  std::map<std::string, double> out;
  std::istringstream in(log);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_search(line, m, line_re)) out[lower(m[1].str())] = std::stod(m[2].str());
  }
  return out;
}

std::optional<double> parse_thd_db(const std::string& log) {
  static const std::regex thd_re(R"(THD:\s*([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*%)", std::regex::icase);
  std::smatch m;
  if (!std::regex_search(log, m, thd_re)) return std::nullopt;
  double pct = std::stod(m[1].str());
  if (!(pct > 0.0)) return std::nullopt;
  return 20.0 * std::log10(pct / 100.0);
}

NgspiceBackend::NgspiceBackend(NgspiceConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.binary.empty()) cfg_.binary = env_or("VLMCAD_NGSPICE", "ngspice");
  if (cfg_.model_include.empty()) cfg_.model_include = env_or("VLMCAD_PTM", "");
  if (cfg_.timeout_s <= 0) throw ConfigError("ngspice timeout must be positive");
}

bool NgspiceBackend::available(const std::string& binary) {
  std::string cmd = "command -v " + shell_quote(binary) + " >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

std::string NgspiceBackend::deck(const std::string& netlist, SimRequest r) const {
  std::ostringstream os;
  os << strip_end(netlist);
  if (!cfg_.model_include.empty()) os << ".include " << cfg_.model_include << "\n";
  const std::string out = "v(" + cfg_.output_node + ")";
  const std::string src = lower(cfg_.input_pos);
  os << ".control\nset noaskquit\n";
  switch (r) {
    case SimRequest::Dc: {
      auto t = parse_netlist(netlist);
      os << "op\n";
      for (const auto& n : t.nodes) {
        if (n != "0") os << "print v(" << n << ")\n";
      }
      os << "let vlmcad_power = -i(" << lower(cfg_.supply_source) << ") * v(" << lower(cfg_.supply_source) << ")\n"
         << "print vlmcad_power\n";
      for (const auto& d : t.devices) {
        if (d.kind != 'M') continue;
        auto n = lower(d.name);
        for (const char* q : {"id", "vgs", "vds", "vth", "vdsat"}) os << "print @" << n << "[" << q << "]\n";
      }
      break;
    }
    case SimRequest::Ac:
      os << "ac dec 20 1 " << cfg_.ac_fstop << "\n"
         << "meas ac gain_db find vdb(" << cfg_.output_node << ") at=1\n"
         << "meas ac ugbw_hz when vdb(" << cfg_.output_node << ")=0 fall=1\n"
         << "let vlmcad_phase = 180/pi*cph(" << out << ")\n"
         << "meas ac phase_ugbw find vlmcad_phase when vdb(" << cfg_.output_node << ")=0 fall=1\n";
      break;
    case SimRequest::Transient: {
      const double period = 1.0 / cfg_.thd_frequency;
      os << "alter @" << src << "[sin] [ " << cfg_.vcm << " " << cfg_.thd_amplitude / 2.0 << " " << cfg_.thd_frequency
         << " ]\n"
         << "tran " << period / 200.0 << " " << 10.0 * period << "\n"
         << "fourier " << cfg_.thd_frequency << " " << out << "\n";
      break;
    }
    case SimRequest::DcSweep:
      os << "dc " << src << " " << cfg_.vcm - 0.05 << " " << cfg_.vcm + 0.05 << " 1e-5\n"
         << "meas dc vin_at_mid when " << out << "=" << cfg_.vdd / 2.0 << "\n";
      break;
  }
  os << "quit\n.endc\n.end\n";
  return os.str();
}

std::string NgspiceBackend::run(const std::string& deck_text) const {
  TempDir dir(cfg_.keep_decks);
  const auto deck_path = dir.path / "deck.cir";
  const auto log_path = dir.path / "ngspice.log";
  {
    std::ofstream f(deck_path);
    if (!f) throw BackendError("cannot write " + deck_path.string());
    f << deck_text;
  }
  std::string cmd = "cd " + shell_quote(dir.path.string()) + " && timeout " + std::to_string(cfg_.timeout_s) + " " +
                    shell_quote(cfg_.binary) + " -b deck.cir > ngspice.log 2>&1";
  int status = std::system(cmd.c_str());
  int code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : -1);
  if (code == 124) throw BackendError("ngspice timed out after " + std::to_string(cfg_.timeout_s) + " s");
  if (code == 126 || code == 127 || code == -1) throw BackendError("cannot run ngspice binary '" + cfg_.binary + "'");
  std::ifstream in(log_path);
  std::stringstream ss;
  ss << in.rdbuf();
  // A non-zero exit with output still present usually means a failed analysis;
  // callers see it as missing values.
  return ss.str();
}

DcResult NgspiceBackend::dc(const std::string& netlist) {
  log_.record(SimRequest::Dc);
  const auto log = run(deck(netlist, SimRequest::Dc));
  const auto v = parse_ngspice_values(log);
  DcResult r;
  const auto lg = lower(log);
  if (lg.find("no convergence") != std::string::npos || lg.find("singular matrix") != std::string::npos) return r;
  auto t = parse_netlist(netlist);
  for (const auto& n : t.nodes) {
    if (n == "0") continue;
    auto it = v.find("v(" + lower(n) + ")");
    if (it == v.end()) return r;  // no operating point was printed
    r.node_voltages[n] = it->second;
  }
  r.converged = true;
  if (auto it = v.find("vlmcad_power"); it != v.end()) r.static_power = std::abs(it->second);
  for (const auto& d : t.devices) {
    if (d.kind != 'M') continue;
    auto key = [&](const char* q) { return "@" + lower(d.name) + "[" + q + "]"; };
    auto get = [&](const char* q) {
      auto it = v.find(key(q));
      return it == v.end() ? std::nan("") : it->second;
    };
    const double sign = is_pmos_model(t, d) ? -1.0 : 1.0;
    const double vgs = sign * get("vgs"), vds = sign * get("vds"), vth = std::abs(get("vth"));
    const double vdsat = std::abs(get("vdsat"));
    DeviceOp op;
    op.name = d.name;
    op.id = std::abs(get("id"));
    op.vds = std::max(vds, 0.0);
    op.vov = vgs - vth;
    if (std::isnan(vgs) || std::isnan(vds)) {
      op.region = "unknown";
    } else if (op.vov <= 0.0) {
      op.region = "cutoff";
    } else {
      op.region = vds >= vdsat ? "saturation" : "triode";
    }
    op.vov = std::max(op.vov, 0.0);
    r.devices.push_back(op);
  }
  return r;
}

AcResult NgspiceBackend::ac(const std::string& netlist) {
  log_.record(SimRequest::Ac);
  const auto v = parse_ngspice_values(run(deck(netlist, SimRequest::Ac)));
  AcResult r;
  if (auto it = v.find("gain_db"); it != v.end()) r.gain_db = it->second;
  if (auto it = v.find("ugbw_hz"); it != v.end()) r.ugbw_mhz = it->second * 1e-6;
  if (auto it = v.find("phase_ugbw"); it != v.end() && r.ugbw_mhz) {
    // Phase relative to the DC phase, which is 0 for the non-inverting output.
    r.pm_deg = 180.0 + it->second;
  }
  return r;
}

TranResult NgspiceBackend::transient(const std::string& netlist) {
  log_.record(SimRequest::Transient);
  TranResult r;
  r.thd_db = parse_thd_db(run(deck(netlist, SimRequest::Transient)));
  return r;
}

SweepResult NgspiceBackend::dc_sweep(const std::string& netlist) {
  log_.record(SimRequest::DcSweep);
  const auto v = parse_ngspice_values(run(deck(netlist, SimRequest::DcSweep)));
  SweepResult r;
  if (auto it = v.find("vin_at_mid"); it != v.end()) r.offset_mv = std::abs(it->second - cfg_.vcm) * 1e3;
  return r;
}

}  // namespace vlmcad
