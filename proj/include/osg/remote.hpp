#pragma once

// Remote language-model oracle: prompt templates sent to a chat-completion
// backend over HTTP, with transcript record and replay for hermetic runs.

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "osg/oracle.hpp"
#include "osg/prompts.hpp"

namespace osg {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  double temperature = 0.3;
  std::vector<ChatMessage> messages;

  /// Wire body: {"model", "temperature", "messages": [{"role", "content"}]}.
  std::string to_json() const;
};

/// Stable hex digest of a request's wire body (64-bit FNV-1a).
std::string request_digest(const ChatRequest& request);

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Reply text of the first choice. Throws OracleError on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct HttpBackendConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
  std::string api_key;
  int timeout_ms = 30000;
  int max_retries = 2;
  int backoff_ms = 250;  // doubled after each failed attempt
  int max_in_flight = 4;

  /// Reads OSG_LLM_ENDPOINT, OSG_LLM_API_KEY, OSG_LLM_TIMEOUT_MS.
  static HttpBackendConfig from_env();
};

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config);
  std::string complete(const ChatRequest& request) override;

 private:
  std::string attempt(const ChatRequest& request);

  HttpBackendConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
  std::mutex mutex_;
  std::condition_variable slots_free_;
  int in_flight_ = 0;
};

/// Forwards to another backend and appends each exchange to a transcript file.
class RecordingChatBackend : public ChatBackend {
 public:
  RecordingChatBackend(std::shared_ptr<ChatBackend> inner, std::string transcript_path);
  std::string complete(const ChatRequest& request) override;

 private:
  void save_locked() const;

  std::shared_ptr<ChatBackend> inner_;
  std::string path_;
  std::mutex mutex_;
  std::vector<std::pair<ChatRequest, std::string>> entries_;
};

/// Answers from a recorded transcript by request digest; a miss throws
/// OracleError(ReplayMiss) naming the digest.
class ReplayChatBackend : public ChatBackend {
 public:
  explicit ReplayChatBackend(const std::string& transcript_path);
  ReplayChatBackend(std::map<std::string, std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const ChatRequest& request) override;
  std::size_t size() const { return replies_.size(); }

 private:
  std::map<std::string, std::string> replies_;
};

/// Transcript file: {"entries": [{"digest", "request", "reply"}]}.
std::string serialize_transcript(const std::vector<std::pair<ChatRequest, std::string>>& entries);

struct RemoteOracleConfig {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.3;

  /// Reads OSG_LLM_MODEL and OSG_LLM_TEMPERATURE on top of the defaults.
  static RemoteOracleConfig from_env();
};

/// SemanticOracle that renders the prompt library for each judgment and parses
/// the model's "Answer:" line. A reply that cannot be parsed is retried once
/// with the expected format restated.
class RemoteOracle : public SemanticOracle {
 public:
  RemoteOracle(PromptLibrary prompts, std::shared_ptr<ChatBackend> backend,
               RemoteOracleConfig config = {});

  std::vector<std::optional<std::string>> classify_elements(
      const OsgSpec& spec, const std::string& place_class,
      const std::vector<SceneElement>& elements) override;
  std::vector<NodeId> similar_places(const OsgSpec& spec, const std::string& label,
                                     const std::vector<PlaceRef>& places) override;
  bool place_match(const OsgSpec& spec, const std::string& place_class,
                   const ObjectFeatures& observed, const ObjectFeatures& stored) override;
  std::optional<NodeId> associate_object(const OsgSpec& spec, const LeafView& query,
                                         const std::vector<LeafView>& candidates) override;
  AbstractionAnswer infer_abstract_region(const OsgSpec& spec,
                                          const AbstractionQuery& query) override;
  NodeId propose_region_choice(const OsgSpec& spec, const Osg& graph,
                               const RegionChoiceQuery& query) override;
  NodeId propose_goal_choice(const OsgSpec& spec, const Osg& graph,
                             const GoalChoiceQuery& query) override;

  /// The request a judgment would send, for inspection and transcript fixtures.
  ChatRequest build_request(const std::string& template_name, const OsgSpec& spec,
                            const PromptContext& context, const std::string& suffix = {}) const;

 private:
  /// Sends the prompt and applies `parse` to the reply, retrying once.
  template <typename Parse>
  auto ask(const std::string& template_name, const OsgSpec& spec, const PromptContext& context,
           Parse parse, const std::string& suffix = {}) -> decltype(parse(std::string()));

  PromptLibrary prompts_;
  std::shared_ptr<ChatBackend> backend_;
  RemoteOracleConfig config_;
};

}  // namespace osg
