#include "vlmcad/agents.hpp"

#include <cstdlib>
#include <regex>

// After Eigen: httplib pulls in <resolv.h>, whose _res macro clashes with Eigen internals.
#include <httplib.h>

#include "vlmcad/error.hpp"

namespace vlmcad {

using nlohmann::json;

ReplayTransport::ReplayTransport(Transcript recorded) : recorded_(std::move(recorded)) {}

ChatReply ReplayTransport::complete(AgentRole role, const std::vector<ChatMessage>&, const AgentContext&) {
  if (next_ >= recorded_.size()) throw TransportError("replay transcript exhausted at call " + std::to_string(next_));
  const auto& e = recorded_.entries()[next_++];
  if (e.role != role) {
    throw TransportError("replay expected a " + to_string(e.role) + " call but got " + to_string(role));
  }
  return {e.raw_response, e.prompt_tokens, e.completion_tokens};
}

HttpTransport::HttpTransport(EndpointConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.url.empty()) throw ConfigError("endpoint transport needs a URL");
  if (cfg_.model.empty()) throw ConfigError("endpoint transport needs a model name");
}

json HttpTransport::request_body(const std::vector<ChatMessage>& messages) const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", cfg_.model}, {"messages", msgs}, {"temperature", cfg_.temperature}};
}

ChatReply HttpTransport::parse_reply(const std::string& body) {
  try {
    auto j = json::parse(body);
    ChatReply r;
    r.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    if (j.contains("usage")) {
      r.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed chat-completion reply: ") + e.what());
  }
}

ChatReply HttpTransport::complete(AgentRole, const std::vector<ChatMessage>& messages, const AgentContext&) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.url, m, url_re)) throw ConfigError("malformed endpoint URL '" + cfg_.url + "'");
  const std::string base = m[1].str();
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  httplib::Client cli(base);
  cli.set_connection_timeout(cfg_.timeout_s, 0);
  cli.set_read_timeout(cfg_.timeout_s, 0);
  ++calls_;
  auto res = cli.Post(path, headers, request_body(messages).dump(), "application/json");
  if (!res) throw TransportError("endpoint request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  return parse_reply(res->body);
}

}  // namespace vlmcad
