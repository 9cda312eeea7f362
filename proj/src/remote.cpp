#include "osg/remote.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace osg {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Answer text without surrounding quotes, backticks and a final period.
std::string clean_token(std::string s) {
  s = trim(s);
  auto strip = [](char c) { return c == '"' || c == '\'' || c == '`' || c == '.' || c == ','; };
  while (!s.empty() && strip(s.front())) s.erase(0, 1);
  while (!s.empty() && strip(s.back())) s.pop_back();
  return trim(s);
}

bool is_id_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

/// Candidate named by an answer: exact match, else the single candidate whose
/// id occurs as a whole word.
std::optional<NodeId> resolve_choice(const std::string& answer, const std::vector<NodeId>& candidates) {
  const std::string token = clean_token(answer);
  for (const auto& c : candidates) {
    if (c.value == token) return c;
  }
  std::optional<NodeId> found;
  for (const auto& c : candidates) {
    std::size_t pos = 0;
    while ((pos = answer.find(c.value, pos)) != std::string::npos) {
      const bool left = pos == 0 || !is_id_char(answer[pos - 1]);
      const std::size_t end = pos + c.value.size();
      const bool right = end >= answer.size() || !is_id_char(answer[end]);
      if (left && right) {
        if (found && *found != c) return std::nullopt;
        found = c;
        break;
      }
      pos = end;
    }
  }
  return found;
}

std::string element_index(const std::string& name) {
  const auto pos = name.find_last_of('_');
  return pos == std::string::npos ? std::string() : name.substr(pos + 1);
}

std::string leaf_phrase(const std::string& label, const std::string& description) {
  return description.empty() ? label : description + " " + label;
}

std::string near_phrase(const std::vector<FeatureEntry>& features) {
  std::vector<std::string> items;
  for (const auto& f : features) items.push_back(leaf_phrase(f.label, f.description));
  return natural_join(items);
}

std::string restate_candidates(const std::vector<NodeId>& candidates) {
  std::vector<std::string> ids;
  for (const auto& c : candidates) ids.push_back(c.value);
  return "\n\nYour previous answer was not a valid choice. Answer with exactly one of " +
         quoted_list(ids) + ".";
}

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return fallback;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw OracleError(OracleError::Kind::Config, std::string("invalid integer in ") + name);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Requests

std::string ChatRequest::to_json() const {
  ordered_json body = ordered_json::object();
  body["model"] = model;
  body["temperature"] = temperature;
  ordered_json msgs = ordered_json::array();
  for (const auto& m : messages) msgs.push_back(ordered_json{{"role", m.role}, {"content", m.content}});
  body["messages"] = std::move(msgs);
  return body.dump();
}

std::string request_digest(const ChatRequest& request) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : request.to_json()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig cfg;
  if (const char* v = std::getenv("OSG_LLM_ENDPOINT")) cfg.endpoint = v;
  if (const char* v = std::getenv("OSG_LLM_API_KEY")) cfg.api_key = v;
  cfg.timeout_ms = env_int("OSG_LLM_TIMEOUT_MS", cfg.timeout_ms);
  return cfg;
}

HttpChatBackend::HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (config_.endpoint.empty() || scheme_end == std::string::npos) {
    throw OracleError(OracleError::Kind::Config,
                      "remote oracle endpoint must be an http(s) URL (set OSG_LLM_ENDPOINT)");
  }
  const std::string scheme = config_.endpoint.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw OracleError(OracleError::Kind::Config, "unsupported endpoint scheme '" + scheme + "'");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") {
    throw OracleError(OracleError::Kind::Config, "https endpoints need a build with OpenSSL");
  }
#endif
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  base_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
  if (config_.max_in_flight < 1) config_.max_in_flight = 1;
}

std::string HttpChatBackend::complete(const ChatRequest& request) {
  {
    std::unique_lock<std::mutex> lock(mutex_);
    slots_free_.wait(lock, [this] { return in_flight_ < config_.max_in_flight; });
    ++in_flight_;
  }
  struct Release {
    HttpChatBackend* self;
    ~Release() {
      {
        std::lock_guard<std::mutex> lock(self->mutex_);
        --self->in_flight_;
      }
      self->slots_free_.notify_one();
    }
  } release{this};

  int backoff = config_.backoff_ms;
  for (int attempt_no = 0;; ++attempt_no) {
    try {
      return attempt(request);
    } catch (const OracleError& e) {
      const bool retryable = e.kind() == OracleError::Kind::Timeout ||
                             e.kind() == OracleError::Kind::Network ||
                             (e.kind() == OracleError::Kind::HttpStatus &&
                              (std::string(e.what()).find("status 429") != std::string::npos ||
                               std::string(e.what()).find("status 5") != std::string::npos));
      if (!retryable || attempt_no >= config_.max_retries) throw;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
    backoff *= 2;
  }
}

std::string HttpChatBackend::attempt(const ChatRequest& request) {
  httplib::Client client(base_);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(path_, headers, request.to_json(), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto elapsed = std::chrono::steady_clock::now() - started;
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           ((err == httplib::Error::Read || err == httplib::Error::Write) &&
                            elapsed + std::chrono::milliseconds(20) >= timeout);
    if (timed_out) {
      throw OracleError(OracleError::Kind::Timeout,
                        "request to " + config_.endpoint + " timed out after " +
                            std::to_string(config_.timeout_ms) + " ms");
    }
    throw OracleError(OracleError::Kind::Network,
                      "request to " + config_.endpoint + " failed: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw OracleError(OracleError::Kind::HttpStatus,
                      "endpoint returned status " + std::to_string(res->status));
  }
  try {
    const auto body = nlohmann::json::parse(res->body);
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw OracleError(OracleError::Kind::Parse, std::string("malformed completion body: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Transcripts

std::string serialize_transcript(const std::vector<std::pair<ChatRequest, std::string>>& entries) {
  ordered_json doc = ordered_json::object();
  ordered_json list = ordered_json::array();
  for (const auto& [request, reply] : entries) {
    ordered_json entry = ordered_json::object();
    entry["digest"] = request_digest(request);
    entry["request"] = ordered_json::parse(request.to_json());
    entry["reply"] = reply;
    list.push_back(std::move(entry));
  }
  doc["entries"] = std::move(list);
  return doc.dump(2) + "\n";
}

RecordingChatBackend::RecordingChatBackend(std::shared_ptr<ChatBackend> inner,
                                           std::string transcript_path)
    : inner_(std::move(inner)), path_(std::move(transcript_path)) {}

std::string RecordingChatBackend::complete(const ChatRequest& request) {
  std::string reply = inner_->complete(request);
  std::lock_guard<std::mutex> lock(mutex_);
  entries_.emplace_back(request, reply);
  save_locked();
  return reply;
}

void RecordingChatBackend::save_locked() const {
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  if (!out) throw OracleError(OracleError::Kind::Config, "cannot write transcript '" + path_ + "'");
  out << serialize_transcript(entries_);
}

ReplayChatBackend::ReplayChatBackend(const std::string& transcript_path) {
  std::ifstream in(transcript_path);
  if (!in) {
    throw OracleError(OracleError::Kind::Config, "cannot open transcript '" + transcript_path + "'");
  }
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& entry : doc.at("entries")) {
      replies_[entry.at("digest").get<std::string>()] = entry.at("reply").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw OracleError(OracleError::Kind::Config,
                      "malformed transcript '" + transcript_path + "': " + e.what());
  }
}

std::string ReplayChatBackend::complete(const ChatRequest& request) {
  const std::string digest = request_digest(request);
  auto it = replies_.find(digest);
  if (it == replies_.end()) {
    throw OracleError(OracleError::Kind::ReplayMiss, "no recorded reply for request digest " + digest);
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// RemoteOracle

RemoteOracleConfig RemoteOracleConfig::from_env() {
  RemoteOracleConfig cfg;
  if (const char* v = std::getenv("OSG_LLM_MODEL"); v != nullptr && *v != '\0') cfg.model = v;
  if (const char* v = std::getenv("OSG_LLM_TEMPERATURE"); v != nullptr && *v != '\0') {
    try {
      cfg.temperature = std::stod(v);
    } catch (const std::exception&) {
      throw OracleError(OracleError::Kind::Config, "invalid OSG_LLM_TEMPERATURE");
    }
  }
  return cfg;
}

RemoteOracle::RemoteOracle(PromptLibrary prompts, std::shared_ptr<ChatBackend> backend,
                           RemoteOracleConfig config)
    : prompts_(std::move(prompts)), backend_(std::move(backend)), config_(std::move(config)) {
  if (!backend_) throw OracleError(OracleError::Kind::Config, "remote oracle needs a backend");
}

ChatRequest RemoteOracle::build_request(const std::string& template_name, const OsgSpec& spec,
                                        const PromptContext& context,
                                        const std::string& suffix) const {
  const RenderedPrompt rendered = render_prompt(prompts_.get(template_name), spec, context);
  ChatRequest req;
  req.model = config_.model;
  req.temperature = config_.temperature;
  if (!rendered.context.empty()) req.messages.push_back({"system", rendered.context});
  req.messages.push_back({"user", rendered.user_message() + suffix});
  return req;
}

template <typename Parse>
auto RemoteOracle::ask(const std::string& template_name, const OsgSpec& spec,
                       const PromptContext& context, Parse parse, const std::string& suffix)
    -> decltype(parse(std::string())) {
  try {
    return parse(backend_->complete(build_request(template_name, spec, context, suffix)));
  } catch (const OracleError& e) {
    if (e.kind() != OracleError::Kind::Parse) throw;
  }
  static const std::string restated = "\n\nAlways follow the format: Answer: <your answer>";
  return parse(backend_->complete(build_request(template_name, spec, context, suffix + restated)));
}

std::vector<std::optional<std::string>> RemoteOracle::classify_elements(
    const OsgSpec& spec, const std::string& place_class, const std::vector<SceneElement>& elements) {
  std::vector<std::string> names;
  for (const auto& e : elements) names.push_back(e.name);
  const PromptContext ctx{{"Elements", quoted_list(names)}};

  return ask("classify_elements", spec, ctx, [&](const std::string& reply) {
    const auto classes = parse_classification(reply);
    auto class_of = [&](const std::string& raw) -> std::optional<std::string> {
      const std::string want = lower(raw);
      for (const auto& c : spec.classes()) {
        if (lower(c.name) == want) return c.name;
      }
      const ClassSpec* obj = spec.object_class();
      if (obj != nullptr && (want == "object" || want == "objects")) return obj->name;
      return std::nullopt;
    };
    std::vector<std::optional<std::string>> out;
    bool place_seen = false;
    for (const auto& e : elements) {
      const bool place_slot = !place_seen && element_index(e.name) == "0";
      if (place_slot) {
        place_seen = true;
        out.emplace_back(place_class);
        continue;
      }
      std::optional<std::string> cls;
      if (auto it = classes.find(e.name); it != classes.end()) {
        cls = class_of(it->second);
      } else {
        // Redundant words may have been dropped ("livingroom sofa_6" -> "sofa_6").
        for (const auto& [name, c] : classes) {
          if (element_index(name) == element_index(e.name)) {
            cls = class_of(c);
            break;
          }
        }
      }
      if (cls && spec.at(*cls).layer_id >= 3) cls.reset();
      out.push_back(cls);
    }
    return out;
  });
}

std::vector<NodeId> RemoteOracle::similar_places(const OsgSpec& spec, const std::string& label,
                                                 const std::vector<PlaceRef>& places) {
  if (places.empty()) return {};
  std::vector<std::string> ids;
  for (const auto& p : places) ids.push_back(p.id.value);
  const PromptContext ctx{{"Places", quoted_list(ids)}, {"Label", label}};
  return ask("place_similarity", spec, ctx, [&](const std::string& reply) {
    std::vector<NodeId> out;
    for (const auto& item : parse_answer_list(parse_answer(reply))) {
      for (const auto& p : places) {
        if (p.id.value == item && std::find(out.begin(), out.end(), p.id) == out.end()) {
          out.push_back(p.id);
        }
      }
    }
    return out;
  });
}

bool RemoteOracle::place_match(const OsgSpec& spec, const std::string& place_class,
                               const ObjectFeatures& observed, const ObjectFeatures& stored) {
  const PromptContext ctx{{"PlaceClass", place_class},
                          {"Description1", describe_features(stored.entries)},
                          {"Description2", describe_features(observed.entries)}};
  return ask("place_match", spec, ctx, [](const std::string& reply) {
    const std::string answer = lower(clean_token(parse_answer(reply)));
    if (answer.rfind("true", 0) == 0 || answer.rfind("yes", 0) == 0) return true;
    if (answer.rfind("false", 0) == 0 || answer.rfind("no", 0) == 0) return false;
    throw OracleError(OracleError::Kind::Parse, "expected True or False, got '" + answer + "'");
  });
}

std::optional<NodeId> RemoteOracle::associate_object(const OsgSpec& spec, const LeafView& query,
                                                     const std::vector<LeafView>& candidates) {
  if (candidates.empty()) return std::nullopt;
  std::string wanted = leaf_phrase(query.label, query.description);
  if (!query.features.empty()) wanted += " that is near " + near_phrase(query.features);
  std::string listed;
  std::vector<NodeId> ids;
  for (const auto& c : candidates) {
    if (!listed.empty()) listed += " ";
    listed += c.id.value;
    if (!c.features.empty()) listed += " that is near " + near_phrase(c.features);
    listed += ".";
    ids.push_back(c.id);
  }
  const PromptContext ctx{{"Query", wanted}, {"Candidates", listed}};
  return ask("associate_object", spec, ctx, [&](const std::string& reply) -> std::optional<NodeId> {
    const std::string answer = parse_answer(reply);
    if (lower(clean_token(answer)) == "none") return std::nullopt;
    if (auto choice = resolve_choice(answer, ids)) return choice;
    throw OracleError(OracleError::Kind::Parse, "answer '" + answer + "' names no listed object");
  });
}

AbstractionAnswer RemoteOracle::infer_abstract_region(const OsgSpec& spec,
                                                      const AbstractionQuery& query) {
  std::vector<std::string> existing;
  for (const auto& e : query.existing) existing.push_back(e.id.value);
  const PromptContext ctx{
      {"AbstractionClass", query.abstraction_class},
      {"PlaceClass", query.place_class},
      {"PreviousRegion", query.previous_parent ? query.previous_parent->id.value
                                               : "an unknown " + query.abstraction_class},
      {"PreviousPlace", query.previous_place_label.value_or("an unknown " + query.place_class)},
      {"Subgoal", query.subgoal_label.value_or("an unknown subgoal")},
      {"Label", query.place_label},
      {"ExistingRegions", quoted_list(existing)}};
  return ask("region_abstraction", spec, ctx, [&](const std::string& reply) {
    const std::string answer = clean_token(parse_answer(reply));
    for (const auto& e : query.existing) {
      if (lower(answer) == lower(e.id.value) || lower(answer) == lower(e.label)) {
        return AbstractionAnswer{e.id, {}};
      }
    }
    std::string label = answer;
    if (const auto pos = label.find("(New)"); pos != std::string::npos) label = trim(label.substr(0, pos));
    const std::string suffix = " " + lower(query.abstraction_class);
    if (lower(label).size() > suffix.size() &&
        lower(label).compare(label.size() - suffix.size(), suffix.size(), suffix) == 0) {
      label = label.substr(0, label.size() - suffix.size());
    }
    label = clean_token(label);
    if (label.empty() || lower(label) == "none") label = query.abstraction_class;
    return AbstractionAnswer{std::nullopt, label};
  });
}

NodeId RemoteOracle::propose_region_choice(const OsgSpec& spec, const Osg& graph,
                                           const RegionChoiceQuery& query) {
  const PromptContext ctx{{"Layout", render_layout(graph)},
                          {"Goal", query.goal},
                          {"LayerType", query.layer_class}};
  return ask(
      "region_proposal", spec, ctx,
      [&](const std::string& reply) {
        const std::string answer = parse_answer(reply);
        if (auto choice = resolve_choice(answer, query.candidates)) return *choice;
        return NodeId(clean_token(answer));
      },
      query.restate ? restate_candidates(query.candidates) : std::string());
}

NodeId RemoteOracle::propose_goal_choice(const OsgSpec& spec, const Osg&,
                                         const GoalChoiceQuery& query) {
  std::vector<std::string> ids;
  for (const auto& c : query.candidates) ids.push_back(c.value);
  const PromptContext ctx{{"Candidates", quoted_list(ids)}, {"Goal", query.goal}};
  return ask(
      "goal_proposal", spec, ctx,
      [&](const std::string& reply) {
        const std::string answer = parse_answer(reply);
        if (auto choice = resolve_choice(answer, query.candidates)) return *choice;
        return NodeId(clean_token(answer));
      },
      query.restate ? restate_candidates(query.candidates) : std::string());
}

}  // namespace osg
