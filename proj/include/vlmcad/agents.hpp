#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vlmcad/design_point.hpp"
#include "vlmcad/history.hpp"
#include "vlmcad/netlist.hpp"
#include "vlmcad/sensitivity.hpp"
#include "vlmcad/sim_harness.hpp"
#include "vlmcad/spec_model.hpp"

namespace vlmcad {

enum class AgentRole {
  CircuitExplainer,
  MatchingFinder,
  DcGoalSetter,
  InitialDesigner,
  DcReviewer,
  DcSizer,
  SpecsReviewer,
  InferencingSizer,
  AdvisorReviewer,
  EquippedSizer,
};

std::string to_string(AgentRole r);
AgentRole agent_role_from_string(const std::string& s);
const std::vector<AgentRole>& all_agent_roles();

struct DeviceGoal {
  std::string device;
  double vov = 0.0;    // V
  double vds = 0.0;    // V, minimum drain-source headroom
  double id_ua = 0.0;  // uA, minimum drain current
  std::string region = "saturation";
};

struct DcGoals {
  std::vector<DeviceGoal> devices;
  std::string output_node = "out";
  double output_level = 0.0;  // V

  // Voltages inside [0, vdd], positive currents for devices meant to conduct.
  void validate(double vdd) const;
  const DeviceGoal* find(const std::string& device) const;
};

enum class DiscrepancyKind { HeadroomViolation, RegionError, OutputLevelError };
std::string to_string(DiscrepancyKind k);
DiscrepancyKind discrepancy_kind_from_string(const std::string& s);

struct DiscrepancyItem {
  std::string device;    // device name, the output node, or "circuit"
  std::string quantity;  // vds, id, region, level, convergence
  double goal = 0.0;
  double observed = 0.0;
  double delta = 0.0;  // observed - goal
  DiscrepancyKind kind = DiscrepancyKind::HeadroomViolation;
  std::string expected_region, observed_region;  // set for region errors
};

struct DiscrepancyReport {
  std::vector<DiscrepancyItem> items;
  std::size_t count() const { return items.size(); }
};

// A voltage or current passes when it falls short of its goal by no more than
// `tolerance` (relative); regions must match exactly. A non-converged DC
// solution yields a single convergence item.
DiscrepancyReport build_discrepancy_report(const DcGoals& goals, const DcResult& dc, double tolerance = 0.10);

nlohmann::json to_json(const DcGoals& g);
DcGoals goals_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MatchingGroups& g);
MatchingGroups groups_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscrepancyReport& r);

// Explanation classes used in the final report.
enum class ParamClass { StabilityCritical, PerformanceTuning, Both, Secondary };
std::string to_string(ParamClass c);

// Coordinate-descent knobs for the scripted sizer: for each metric (and
// "power"), parameters with the direction that improves it.
using KnobTable = std::map<std::string, std::vector<std::pair<std::string, int>>>;

// Everything a role may be asked about. Roles check that what they need is set.
struct AgentContext {
  const NetlistTemplate* netlist = nullptr;
  const ParamRanges* ranges = nullptr;
  const SpecSet* specs = nullptr;
  std::string graph_summary;
  std::vector<std::string> mandatory;
  std::optional<MatchingGroups> groups;
  std::string explanation;  // CircuitExplainer output
  std::optional<DcGoals> goals;
  std::optional<DcResult> dc;
  std::optional<DiscrepancyReport> discrepancies;
  std::optional<DesignPoint> current;
  std::optional<Measurements> measurements;
  std::optional<CostBreakdown> cost;
  std::string specs_review;  // SpecsReviewer output
  History history;
  std::size_t history_window = 8;
  std::size_t seed_count = 3;
  const SensitivityReport* sensitivity = nullptr;
  std::map<std::string, ParamClass> classes;
  KnobTable knobs;
  double vdd = 0.0;
  std::string supply_node = "vdd";
  std::string output_node = "out";
  std::string width_prefix = "w";
};

struct ChatMessage {
  std::string role;  // "system" or "user" or "assistant"
  std::string content;
};

struct ChatReply {
  std::string content;
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

// Chat-completion transport. Scripted transports answer from the context and
// never touch the network.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string name() const = 0;
  virtual ChatReply complete(AgentRole role, const std::vector<ChatMessage>& messages,
                             const AgentContext& ctx) = 0;
  // Requests that left the process.
  virtual std::size_t network_calls() const { return 0; }
};

struct TranscriptEntry {
  std::size_t call = 0;  // 0-based transport call index
  AgentRole role = AgentRole::CircuitExplainer;
  int attempt = 0;
  std::string prompt;
  std::string raw_response;
  nlohmann::json parsed;  // null when the response was rejected
  std::string error;      // validation error for rejected responses
  std::string timestamp;  // ISO-8601 UTC
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

// Append-only record of every transport call.
class Transcript {
 public:
  void append(TranscriptEntry e);
  const std::vector<TranscriptEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::string to_jsonl() const;
  static Transcript from_jsonl(const std::string& text);
  // Appends entries written since the last flush to a file.
  void flush(const std::string& path);

 private:
  std::vector<TranscriptEntry> entries_;
  std::size_t flushed_ = 0;
};

std::string system_prompt(AgentRole role);
// Throws ValidationError naming the missing context element.
std::string build_prompt(AgentRole role, const AgentContext& ctx);

struct ValidatedPoint {
  DesignPoint point;
  std::vector<std::string> corrections;
};

// Accepts exactly the mandatory keys with numeric values, then clamps and
// applies matching. Every missing, extra or non-numeric key is named.
ValidatedPoint validate_params(const nlohmann::json& params, const std::vector<std::string>& mandatory,
                               const ParamRanges& ranges, const MatchingGroups& groups);

// Strips a Markdown code fence and parses the single top-level JSON object.
nlohmann::json parse_response(const std::string& raw);

struct CallResult {
  nlohmann::json parsed;
  std::optional<ValidatedPoint> point;  // sizing roles
};

// Checks a parsed response against the role's schema. Sizing roles also run
// validate_params.
CallResult check_response(AgentRole role, const nlohmann::json& parsed, const AgentContext& ctx);

// Sends the prompt, validates, and re-prompts with the error up to `retries`
// times. Throws ValidationError naming the role when all attempts fail;
// transport failures propagate as TransportError.
CallResult call(AgentRole role, const AgentContext& ctx, Transport& transport, Transcript& transcript,
                int retries = 3);

bool detect_deadloop(const DesignPoint& prev, const DesignPoint& next, double rel_tol = 1e-9);

// Multiplies every width by U[0.95, 1.05], then clamps and re-applies matching.
DesignPoint perturb_widths(const DesignPoint& p, std::mt19937_64& rng, const ParamRanges& ranges,
                           const MatchingGroups& groups, const std::string& width_prefix = "w");

// Deterministic offline answer for every role, as the JSON text a model would return.
std::string scripted_agent(AgentRole role, const AgentContext& ctx);

class ScriptedTransport final : public Transport {
 public:
  std::string name() const override { return "scripted"; }
  ChatReply complete(AgentRole role, const std::vector<ChatMessage>& messages,
                     const AgentContext& ctx) override;
  std::size_t calls() const { return calls_; }

 private:
  std::size_t calls_ = 0;
};

// Feeds back the raw responses of a recorded transcript in order.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(Transcript recorded);
  std::string name() const override { return "replay"; }
  ChatReply complete(AgentRole role, const std::vector<ChatMessage>& messages,
                     const AgentContext& ctx) override;

 private:
  Transcript recorded_;
  std::size_t next_ = 0;
};

struct EndpointConfig {
  std::string url;  // full chat-completions URL
  std::string model;
  std::string api_key_env = "VLMCAD_API_KEY";
  double temperature = 0.0;
  int timeout_s = 120;
};

// JSON over HTTP in the messages/choices wire shape.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(EndpointConfig cfg);
  std::string name() const override { return "endpoint"; }
  ChatReply complete(AgentRole role, const std::vector<ChatMessage>& messages,
                     const AgentContext& ctx) override;
  std::size_t network_calls() const override { return calls_; }

  // Request body as sent on the wire; exposed for tests.
  nlohmann::json request_body(const std::vector<ChatMessage>& messages) const;
  static ChatReply parse_reply(const std::string& body);

 private:
  EndpointConfig cfg_;
  std::size_t calls_ = 0;
};

}  // namespace vlmcad
