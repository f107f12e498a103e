#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "rlff/dialogue.hpp"

namespace rlff {

struct SamplingParams
{
  double temperature = 1.1;
  double top_p = 1.0;
  int top_k = 80;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct ChatRequest
{
  std::string system_prompt;
  std::vector<ChatMessage> messages;
  SamplingParams sampling;
  int n_samples = 1;
};

/// Chat-completion endpoint as seen by the agents.
class ChatBackend
{
public:
  virtual ~ChatBackend() = default;

  /// Returns exactly `req.n_samples` completions.
  std::vector<std::string> chat_complete(const ChatRequest& req);

  virtual std::string id() const = 0;

protected:
  virtual std::vector<std::string> complete(const ChatRequest& req) = 0;
};

/// Replays canned replies in order, one per requested sample. Deterministic
/// given (script, call sequence); throws ScriptExhausted past the end.
class ScriptedBackend final : public ChatBackend
{
public:
  explicit ScriptedBackend(std::vector<std::string> script, std::string name = "scripted");

  std::string id() const override { return name_; }
  std::size_t calls() const;
  std::size_t remaining() const;
  /// Every request seen so far, in order.
  std::vector<ChatRequest> requests() const;

protected:
  std::vector<std::string> complete(const ChatRequest& req) override;

private:
  std::vector<std::string> script_;
  std::string name_;
  mutable std::mutex mutex_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> log_;
};

/// Reply is a pure function of the request: the first rule whose needle
/// occurs in the last message wins; otherwise one of `choices` is picked by
/// hashing (prompt, messages, seed, sample index). Safe for concurrent use and
/// independent of call order.
class RuleBackend final : public ChatBackend
{
public:
  struct Rule
  {
    std::string contains;
    std::string reply;
  };

  RuleBackend(std::vector<Rule> rules, std::vector<std::string> choices, std::string name = "rules");

  std::string id() const override { return name_; }

protected:
  std::vector<std::string> complete(const ChatRequest& req) override;

private:
  std::vector<Rule> rules_;
  std::vector<std::string> choices_;
  std::string name_;
};

struct RemoteBackendConfig
{
  std::string base_url = "http://127.0.0.1:8000"; // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string token_env = "OPENAI_API_KEY";
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};
  std::chrono::seconds timeout{120};
  int max_in_flight = 4;
  bool supports_n = false;
  bool send_top_k = true;
  bool send_seed = true;
};

/// OpenAI-compatible HTTP client. Transient failures (connection errors, 429,
/// 5xx) are retried `max_retries` times with exponential backoff.
class RemoteBackend final : public ChatBackend
{
public:
  explicit RemoteBackend(RemoteBackendConfig cfg);
  ~RemoteBackend() override;

  std::string id() const override;
  const RemoteBackendConfig& config() const { return cfg_; }

protected:
  std::vector<std::string> complete(const ChatRequest& req) override;

private:
  std::vector<std::string> post_once(const ChatRequest& req, int n, std::optional<std::uint64_t> seed);

  RemoteBackendConfig cfg_;
  std::counting_semaphore<1024> in_flight_;
  std::once_flag top_k_warning_;
};

/// Shared JSON-over-HTTP POST with the remote backend's retry policy. Used by
/// the remote scorer as well.
std::string http_post_json(const RemoteBackendConfig& cfg, const std::string& path, const std::string& body);

/// JSON body for one chat-completions call.
std::string build_chat_body(const RemoteBackendConfig& cfg, const ChatRequest& req, int n,
                            std::optional<std::uint64_t> seed);

/// Extracts choices[*].message.content from a chat-completions response.
std::vector<std::string> parse_chat_response(const std::string& body);

} // namespace rlff
