#pragma once

#include "agentrouter/common.hpp"
#include "agentrouter/dataio.hpp"
#include "agentrouter/extract.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace agentrouter::agents {

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChatMessage {
  std::string role;  // "system", "user", "assistant"
  std::string content;
};

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 250;
  double backoff_factor = 2.0;
};

struct BackendConfig {
  std::string endpoint = "http://127.0.0.1:8080";
  std::string model = "default";
  double temperature = 0.2;
  int max_tokens = 3000;
  std::string api_key_env = "AGENTROUTER_API_KEY";
  int timeout_s = 60;
  RetryPolicy retry;
};

/// Chat-completion transport: messages in, assistant text out. Must be safe
/// to call from multiple threads.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

/// OpenAI-compatible HTTP transport with exponential-backoff retries on
/// connection errors, 429, and 5xx.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendConfig config) : config_(std::move(config)) {}
  std::string complete(const std::vector<ChatMessage>& messages) override;
  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
};

// Prompt suite text, one block per role.
std::string_view prompt_text(std::string_view role);
std::string_view note_rules();

struct PromptBundle {
  AgentDesign design;
  std::string system_text;  // system prompt of the final answer-producing call
  std::string note_rules;   // strict-format note, appended to system_text
  std::string user_text;    // rendered question/context slots
};

/// The answer-producing call for a design; its system text always ends with
/// the note block requiring boxed output.
PromptBundle render_prompt(AgentDesign design, const dataio::DatasetRecord& record);

struct BoxedAnswer {
  std::string value;
  bool boxed = false;  // false means the unboxed fallback was used
};

/// Contents of the last balanced `\boxed{...}`; falls back to the last
/// non-empty line stripped of markup, flagged unboxed.
BoxedAnswer parse_boxed(const std::string& raw);

struct DesignRunConfig {
  int sc_samples = 5;
  int reflect_max_revisions = 2;
};

struct AgentRunOutput {
  std::string answer;
  std::string raw_output;  // final raw response
  std::string transcript;  // every exchange, for optional archiving
  bool boxed = false;
  int calls = 0;
};

/// Runs one design end to end: raw/cot are single calls, sc samples and
/// locally aggregates, react_reflect loops on "Status: revise" (bounded),
/// mad and summary are three-call flows.
AgentRunOutput execute_design(AgentDesign design, const dataio::DatasetRecord& record,
                              ChatBackend& backend, const DesignRunConfig& config = {});

using BackendFactory =
    std::function<std::shared_ptr<ChatBackend>(const dataio::AgentProfile&)>;

struct RunAgentsOptions {
  int concurrency = 4;
  DesignRunConfig design;
  std::optional<std::filesystem::path> transcript_dir;
};

struct RunAgentsReport {
  int fetched = 0;
  int skipped = 0;  // already cached
  int failed = 0;   // written with empty answer and error note
  std::vector<std::string> errors;
};

/// Fills the agent cache for every (record, profile) pair. Existing rows are
/// skipped (resumable); new rows are appended in canonical (record, agent)
/// order by a single writer, so reruns with a deterministic backend are
/// byte-identical.
RunAgentsReport run_agents(const std::vector<dataio::DatasetRecord>& records,
                           const std::vector<dataio::AgentProfile>& profiles,
                           const BackendFactory& backend_factory,
                           const std::filesystem::path& cache_path,
                           const RunAgentsOptions& options = {});

/// One judge call per profile scoring the graph entities; returns per-agent
/// manage-edge surfaces (at most cutoff each). Empty or failed responses
/// fall back to the lexical ranking and are flagged.
std::map<std::string, std::set<std::string>> judge_agent_entities(
    const dataio::DatasetRecord& record, const std::vector<extract::EntityMention>& mentions,
    const std::vector<dataio::AgentProfile>& profiles, ChatBackend& backend, int cutoff = 5,
    std::vector<std::string>* warnings = nullptr);

/// Deterministic in-process chat-completion server for tests and offline
/// runs. Answers are driven by an embedded question -> gold map.
class MockBackendServer {
 public:
  MockBackendServer();
  ~MockBackendServer();
  MockBackendServer(const MockBackendServer&) = delete;
  MockBackendServer& operator=(const MockBackendServer&) = delete;

  void set_ground_truth(std::map<std::string, std::string> question_to_answer);
  /// The first n requests are rejected with 429 before normal service.
  void set_rate_limit_first(int n);

  std::string base_url() const;
  int port() const { return port_; }
  int request_count() const;

  /// Pure response logic, also usable without HTTP.
  static std::string respond(const std::map<std::string, std::string>& ground_truth,
                             const std::vector<ChatMessage>& messages);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace agentrouter::agents
