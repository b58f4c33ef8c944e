#include "vlmcad/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "vlmcad/error.hpp"

namespace vlmcad {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

bool is_comment(std::string_view line) {
  auto t = trim(line);
  return t.empty() || t[0] == '*';
}

// Collapses "key = value" into "key=value" and splits on whitespace.
std::vector<std::string> tokenize(std::string_view line) {
  std::string s;
  s.reserve(line.size());
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '=') {
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
      s.push_back('=');
      while (i + 1 < line.size() && (line[i + 1] == ' ' || line[i + 1] == '\t')) ++i;
    } else {
      s.push_back(line[i]);
    }
  }
  std::vector<std::string> tokens;
  std::istringstream in(s);
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  return tokens;
}

struct LogicalLine {
  std::string text;
  int line_no = 0;
};

// Joins '+' continuation cards onto their parent line.
std::vector<LogicalLine> logical_lines(std::string_view text) {
  std::vector<LogicalLine> out;
  std::istringstream in{std::string(text)};
  int n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (!t.empty() && t[0] == '+' && !out.empty()) {
      out.back().text += " " + t.substr(1);
    } else {
      out.push_back({line, n});
    }
  }
  return out;
}

std::string strip_inline_comment(const std::string& s) {
  auto pos = s.find(';');
  return pos == std::string::npos ? s : s.substr(0, pos);
}

template <typename F>
void for_each_brace(const std::string& line, int line_no, F&& f) {
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '}') {
      throw ParseError("line " + std::to_string(line_no) + ": unbalanced '}'");
    }
    if (line[i] != '{') {
      ++i;
      continue;
    }
    auto close = line.find_first_of("{}", i + 1);
    if (close == std::string::npos || line[close] != '}') {
      throw ParseError("line " + std::to_string(line_no) + ": unbalanced '{'");
    }
    auto name = trim(std::string_view(line).substr(i + 1, close - i - 1));
    if (!is_identifier(name)) {
      throw ParseError("line " + std::to_string(line_no) + ": unsupported placeholder '{" + name +
                       "}'");
    }
    f(i, close, name);
    i = close + 1;
  }
}

Device parse_device(const std::vector<std::string>& tokens, int line_no) {
  Device d;
  d.name = tokens.front();
  d.kind = static_cast<char>(std::toupper(static_cast<unsigned char>(d.name[0])));
  std::vector<std::string> positional;
  std::size_t i = 0;
  for (; i < tokens.size(); ++i) {
    if (tokens[i].find('=') != std::string::npos) break;
    positional.push_back(tokens[i]);
  }
  for (; i < tokens.size(); ++i) {
    auto eq = tokens[i].find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("line " + std::to_string(line_no) + ": malformed parameter '" + tokens[i] +
                       "' on " + d.name);
    }
    d.params.emplace_back(lower(tokens[i].substr(0, eq)), tokens[i].substr(eq + 1));
  }
  auto malformed = [&](const char* why) {
    return ParseError("line " + std::to_string(line_no) + ": malformed " + d.name + " card (" +
                      why + ")");
  };
  switch (d.kind) {
    case 'M':
      if (positional.size() < 6) throw malformed("expected 4 nodes and a model");
      d.nodes.assign(positional.begin() + 1, positional.end() - 1);
      d.model = positional.back();
      break;
    case 'D':
      if (positional.size() < 4) throw malformed("expected 2 nodes and a model");
      d.nodes.assign(positional.begin() + 1, positional.begin() + 3);
      d.model = positional[3];
      break;
    case 'X':
      if (positional.size() < 3) throw malformed("expected nodes and a subcircuit");
      d.nodes.assign(positional.begin() + 1, positional.end() - 1);
      d.model = positional.back();
      break;
    case 'R':
    case 'C':
    case 'L':
      if (positional.size() < 4) throw malformed("expected 2 nodes and a value");
      d.nodes.assign(positional.begin() + 1, positional.begin() + 3);
      d.value = positional[3];
      break;
    case 'V':
    case 'I': {
      if (tokens.size() < 3) throw malformed("expected 2 nodes");
      d.nodes.assign(tokens.begin() + 1, tokens.begin() + 3);
      d.params.clear();
      std::string rest;
      for (std::size_t k = 3; k < tokens.size(); ++k) rest += (rest.empty() ? "" : " ") + tokens[k];
      d.value = rest;
      break;
    }
    case 'E':
    case 'G':
      if (positional.size() < 6) throw malformed("expected 4 nodes and a gain");
      d.nodes.assign(positional.begin() + 1, positional.begin() + 5);
      d.value = positional[5];
      break;
    default:
      break;
  }
  return d;
}

}  // namespace

std::optional<std::string> Device::param(std::string_view key) const {
  auto k = lower(key);
  for (const auto& [name, v] : params) {
    if (name == k) return v;
  }
  return std::nullopt;
}

const Placeholder* NetlistTemplate::find_param(std::string_view name) const {
  auto it = std::find_if(params.begin(), params.end(),
                         [&](const Placeholder& p) { return p.name == name; });
  return it == params.end() ? nullptr : &*it;
}

const Device* NetlistTemplate::find_device(std::string_view name) const {
  auto it = std::find_if(devices.begin(), devices.end(),
                         [&](const Device& d) { return d.name == name; });
  return it == devices.end() ? nullptr : &*it;
}

std::optional<std::string> NetlistTemplate::model_type(std::string_view model) const {
  auto m = lower(model);
  for (const auto& [name, type] : models) {
    if (lower(name) == m) return lower(type);
  }
  return std::nullopt;
}

const ParamRange* ParamRanges::find(std::string_view name) const {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const ParamRange& r) { return r.name == name; });
  return it == entries.end() ? nullptr : &*it;
}

void ParamRanges::validate() const {
  std::set<std::string> seen;
  for (const auto& r : entries) {
    if (!seen.insert(r.name).second) throw ValidationError("duplicate range for '" + r.name + "'");
    if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max) {
      throw ValidationError("range for '" + r.name + "' needs min <= max");
    }
    spice_suffix(r.unit);  // throws on unknown units
  }
}

void MatchingGroups::validate(const NetlistTemplate& t) const {
  std::set<std::string> seen;
  for (const auto& g : groups) {
    if (g.members.empty()) throw ValidationError("empty matching group");
    for (const auto& m : g.members) {
      if (!t.find_param(m)) throw ValidationError("matching group member '" + m + "' is not a netlist parameter");
      if (!seen.insert(m).second) throw ValidationError("parameter '" + m + "' is in more than one matching group");
    }
  }
}

std::set<std::string> MatchingGroups::tied_members() const {
  std::set<std::string> out;
  for (const auto& g : groups) {
    for (std::size_t i = 1; i < g.members.size(); ++i) out.insert(g.members[i]);
  }
  return out;
}

const MatchingGroup* MatchingGroups::group_of(std::string_view name) const {
  for (const auto& g : groups) {
    if (std::find(g.members.begin(), g.members.end(), name) != g.members.end()) return &g;
  }
  return nullptr;
}

NetlistTemplate parse_netlist(std::string_view text) {
  if (trim(text).empty()) throw ParseError("empty netlist");
  NetlistTemplate t;
  t.raw_text = std::string(text);

  auto add_param = [&](const std::string& name) -> Placeholder& {
    for (auto& p : t.params) {
      if (p.name == name) return p;
    }
    t.params.push_back({name, std::nullopt});
    return t.params.back();
  };

  bool in_control = false;
  int subckt_depth = 0;
  std::set<std::string> device_names;
  for (const auto& ll : logical_lines(text)) {
    if (is_comment(ll.text)) continue;
    auto line = strip_inline_comment(ll.text);
    for_each_brace(line, ll.line_no, [&](std::size_t, std::size_t, const std::string& name) {
      add_param(name);
    });

    auto tokens = tokenize(line);
    if (tokens.empty()) continue;
    auto head = lower(tokens[0]);

    if (head == ".control") in_control = true;
    if (in_control) {
      if (head == ".endc") in_control = false;
      continue;
    }
    if (head == ".subckt") ++subckt_depth;
    if (head == ".ends") {
      subckt_depth = std::max(0, subckt_depth - 1);
      continue;
    }
    if (subckt_depth > 0) continue;

    if (head == ".param") {
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        auto eq = tokens[i].find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == tokens[i].size()) {
          throw ParseError("line " + std::to_string(ll.line_no) + ": malformed .param '" + tokens[i] + "'");
        }
        auto name = tokens[i].substr(0, eq);
        auto& p = add_param(name);
        if (p.default_text) {
          throw ParseError("line " + std::to_string(ll.line_no) + ": duplicate default for '" + name + "'");
        }
        p.default_text = tokens[i].substr(eq + 1);
      }
      continue;
    }
    if (head == ".model" && tokens.size() >= 3) {
      auto type = tokens[2];
      if (auto paren = type.find('('); paren != std::string::npos) type.resize(paren);
      t.models.emplace_back(tokens[1], type);
      continue;
    }
    if (head[0] == '.') continue;
    if (!std::isalpha(static_cast<unsigned char>(head[0]))) {
      throw ParseError("line " + std::to_string(ll.line_no) + ": unrecognized card '" + tokens[0] + "'");
    }

    auto dev = parse_device(tokens, ll.line_no);
    if (dev.nodes.empty()) continue;  // card kind we do not model; passed through verbatim
    if (!device_names.insert(lower(dev.name)).second) {
      throw ParseError("line " + std::to_string(ll.line_no) + ": duplicate device name '" + dev.name + "'");
    }
    for (const auto& n : dev.nodes) t.nodes.insert(n);
    t.devices.push_back(std::move(dev));
  }
  if (in_control) throw ParseError(".control block without .endc");
  if (t.devices.empty()) throw ParseError("netlist has no element cards");
  return t;
}

NetlistTemplate load_netlist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read netlist '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_netlist(ss.str());
}

std::vector<std::string> mandatory_params(const NetlistTemplate& t) {
  std::vector<std::string> out;
  for (const auto& p : t.params) {
    if (!p.default_text) out.push_back(p.name);
  }
  return out;
}

std::vector<std::string> mandatory_params(const NetlistTemplate& t, const ParamRanges& r) {
  auto all = mandatory_params(t);
  std::vector<std::string> out;
  for (auto& name : all) {
    const auto* range = r.find(name);
    if (!range || !range->fixed()) out.push_back(std::move(name));
  }
  return out;
}

namespace {

std::string format_value(double v, const ParamRange* range) {
  if (range && range->integer) return std::to_string(static_cast<long long>(std::llround(v)));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return std::string(buf) + (range ? spice_suffix(range->unit) : "");
}

}  // namespace

std::string instantiate(const NetlistTemplate& t, const DesignPoint& p, const ParamRanges& r) {
  for (const auto& [key, value] : p) {
    if (!t.find_param(key)) throw ValidationError("unknown parameter '" + key + "'");
    if (!std::isfinite(value)) throw ValidationError("non-finite value for '" + key + "'");
    if (const auto* range = r.find(key)) {
      double tol = 1e-12 * std::max(1.0, std::abs(range->max));
      if (value < range->min - tol || value > range->max + tol) {
        throw ValidationError("value for '" + key + "' outside [" + std::to_string(range->min) +
                              ", " + std::to_string(range->max) + "]");
      }
    }
  }

  std::map<std::string, std::string> literal;
  for (const auto& ph : t.params) {
    if (auto it = p.find(ph.name); it != p.end()) {
      literal[ph.name] = format_value(it->second, r.find(ph.name));
    } else if (ph.default_text) {
      literal[ph.name] = *ph.default_text;
    } else {
      throw ValidationError("missing parameter '" + ph.name + "'");
    }
  }

  std::string out;
  out.reserve(t.raw_text.size());
  std::istringstream in(t.raw_text);
  int line_no = 0;
  bool first = true;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!first) out.push_back('\n');
    first = false;
    if (is_comment(line)) {
      std::replace(line.begin(), line.end(), '{', '(');
      std::replace(line.begin(), line.end(), '}', ')');
      out += line;
      continue;
    }
    std::size_t last = 0;
    for_each_brace(line, line_no, [&](std::size_t open, std::size_t close, const std::string& name) {
      out.append(line, last, open - last);
      out += literal.at(name);
      last = close + 1;
    });
    out.append(line, last, std::string::npos);
  }
  if (!t.raw_text.empty() && t.raw_text.back() == '\n') out.push_back('\n');
  return out;
}

DesignPoint apply_matching(const DesignPoint& p, const MatchingGroups& g) {
  DesignPoint out = p;
  for (const auto& group : g.groups) {
    auto it = p.find(group.members.front());
    if (it == p.end()) continue;
    for (std::size_t i = 1; i < group.members.size(); ++i) out[group.members[i]] = it->second;
  }
  return out;
}

ClampResult clamp(const DesignPoint& p, const ParamRanges& r) {
  ClampResult res;
  res.point = p;
  for (auto& [key, value] : res.point) {
    const auto* range = r.find(key);
    if (!range) continue;
    double v = std::clamp(value, range->min, range->max);
    if (range->integer) v = std::clamp(std::round(v), std::ceil(range->min), std::floor(range->max));
    if (v != value) {
      res.clipped.push_back(key);
      value = v;
    }
  }
  return res;
}

DesignPoint normalize(const DesignPoint& p, const ParamRanges& r, const MatchingGroups& g) {
  return apply_matching(clamp(p, r).point, g);
}

double parse_spice_number(std::string_view text) {
  auto s = lower(trim(text));
  if (s.empty()) throw ParseError("empty number");
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc()) throw ParseError("not a number: '" + std::string(text) + "'");
  std::string_view suffix(ptr, static_cast<std::size_t>(end - ptr));
  double scale = 1.0;
  if (suffix.starts_with("meg")) scale = 1e6;
  else if (suffix.starts_with("mil")) scale = 25.4e-6;
  else if (!suffix.empty()) {
    switch (suffix[0]) {
      case 'f': scale = 1e-15; break;
      case 'p': scale = 1e-12; break;
      case 'n': scale = 1e-9; break;
      case 'u': scale = 1e-6; break;
      case 'm': scale = 1e-3; break;
      case 'k': scale = 1e3; break;
      case 'g': scale = 1e9; break;
      case 't': scale = 1e12; break;
      default:
        if (!std::isalpha(static_cast<unsigned char>(suffix[0]))) {
          throw ParseError("not a number: '" + std::string(text) + "'");
        }
        break;  // bare unit such as "v" or "a"
    }
  }
  return value * scale;
}

namespace {

const std::map<std::string, std::pair<std::string, double>>& unit_table() {
  static const std::map<std::string, std::pair<std::string, double>> table{
      {"", {"", 1.0}},         {"1", {"", 1.0}},       {"V", {"", 1.0}},
      {"mV", {"m", 1e-3}},     {"A", {"", 1.0}},       {"mA", {"m", 1e-3}},
      {"uA", {"u", 1e-6}},     {"nA", {"n", 1e-9}},    {"m", {"", 1.0}},
      {"um", {"u", 1e-6}},     {"nm", {"n", 1e-9}},    {"F", {"", 1.0}},
      {"uF", {"u", 1e-6}},     {"nF", {"n", 1e-9}},    {"pF", {"p", 1e-12}},
      {"fF", {"f", 1e-15}},    {"ohm", {"", 1.0}},     {"kohm", {"k", 1e3}},
      {"Mohm", {"meg", 1e6}},  {"H", {"", 1.0}},       {"uH", {"u", 1e-6}},
      {"nH", {"n", 1e-9}},
  };
  return table;
}

}  // namespace

std::string spice_suffix(std::string_view unit) {
  auto it = unit_table().find(std::string(unit));
  if (it == unit_table().end()) throw ConfigError("unknown unit '" + std::string(unit) + "'");
  return it->second.first;
}

double unit_scale(std::string_view unit) {
  auto it = unit_table().find(std::string(unit));
  if (it == unit_table().end()) throw ConfigError("unknown unit '" + std::string(unit) + "'");
  return it->second.second;
}

}  // namespace vlmcad
