#include "rlff/llm_backend.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "rlff/errors.hpp"
#include "rlff/log.hpp"
#include "rlff/random.hpp"

namespace rlff {

using json = nlohmann::json;

void SamplingParams::validate() const
{
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidValue("temperature must be > 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw InvalidValue("top_p must lie in (0, 1]");
  }
  if (top_k <= 0) {
    throw InvalidValue("top_k must be positive");
  }
  if (max_tokens <= 0) {
    throw InvalidValue("max_tokens must be positive");
  }
}

std::vector<std::string> ChatBackend::chat_complete(const ChatRequest& req)
{
  if (req.n_samples < 1) {
    throw InvalidValue("n_samples must be >= 1");
  }
  req.sampling.validate();
  auto out = complete(req);
  if (out.size() != static_cast<std::size_t>(req.n_samples)) {
    throw BackendUnavailable(id() + ": expected " + std::to_string(req.n_samples) + " completions, got " +
                             std::to_string(out.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<std::string> script, std::string name)
  : script_(std::move(script)), name_(std::move(name))
{}

std::vector<std::string> ScriptedBackend::complete(const ChatRequest& req)
{
  std::lock_guard lock(mutex_);
  log_.push_back(req);
  const auto n = static_cast<std::size_t>(req.n_samples);
  if (next_ + n > script_.size()) {
    throw ScriptExhausted(name_ + ": script exhausted after " + std::to_string(script_.size()) + " replies");
  }
  std::vector<std::string> out(script_.begin() + static_cast<std::ptrdiff_t>(next_),
                               script_.begin() + static_cast<std::ptrdiff_t>(next_ + n));
  next_ += n;
  return out;
}

std::size_t ScriptedBackend::calls() const
{
  std::lock_guard lock(mutex_);
  return log_.size();
}

std::size_t ScriptedBackend::remaining() const
{
  std::lock_guard lock(mutex_);
  return script_.size() - next_;
}

std::vector<ChatRequest> ScriptedBackend::requests() const
{
  std::lock_guard lock(mutex_);
  return log_;
}

// ---------------------------------------------------------------------------
// RuleBackend

RuleBackend::RuleBackend(std::vector<Rule> rules, std::vector<std::string> choices, std::string name)
  : rules_(std::move(rules)), choices_(std::move(choices)), name_(std::move(name))
{
  if (choices_.empty()) {
    throw InvalidValue("rule backend needs at least one fallback choice");
  }
}

std::vector<std::string> RuleBackend::complete(const ChatRequest& req)
{
  const std::string_view last = req.messages.empty() ? std::string_view{} : req.messages.back().content;
  for (const auto& rule : rules_) {
    if (last.find(rule.contains) != std::string_view::npos) {
      return std::vector<std::string>(static_cast<std::size_t>(req.n_samples), rule.reply);
    }
  }
  auto h = fnv1a(req.system_prompt);
  for (const auto& m : req.messages) {
    h = fnv1a(m.role, h);
    h = fnv1a(m.content, h);
  }
  h = mix64(h ^ req.sampling.seed.value_or(0));
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(req.n_samples));
  for (int i = 0; i < req.n_samples; ++i) {
    out.push_back(choices_[mix64(h + static_cast<std::uint64_t>(i)) % choices_.size()]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// RemoteBackend

namespace {

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

} // namespace

std::string http_post_json(const RemoteBackendConfig& cfg, const std::string& path, const std::string& body)
{
  httplib::Headers headers;
  if (!cfg.token_env.empty()) {
    if (const char* token = std::getenv(cfg.token_env.c_str()); token != nullptr && *token != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }

  std::string last_error;
  int attempts = 0;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    ++attempts;
    if (attempt > 0) {
      std::this_thread::sleep_for(cfg.backoff * (1LL << (attempt - 1)));
    }
    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout);
    client.set_read_timeout(cfg.timeout);
    client.set_write_timeout(cfg.timeout);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      return res->body;
    }
    last_error = "HTTP " + std::to_string(res->status);
    if (!transient_status(res->status)) {
      break;
    }
  }
  throw BackendUnavailable(cfg.base_url + path + ": " + last_error + " (" + std::to_string(attempts) +
                           " attempt" + (attempts == 1 ? ")" : "s)"));
}

std::string build_chat_body(const RemoteBackendConfig& cfg, const ChatRequest& req, int n,
                            std::optional<std::uint64_t> seed)
{
  json messages = json::array();
  if (!req.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", req.system_prompt}});
  }
  for (const auto& m : req.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  json body = {
    {"model", cfg.model},
    {"messages", std::move(messages)},
    {"temperature", req.sampling.temperature},
    {"top_p", req.sampling.top_p},
    {"max_tokens", req.sampling.max_tokens},
  };
  if (cfg.send_top_k) {
    body["top_k"] = req.sampling.top_k;
  }
  if (n > 1) {
    body["n"] = n;
  }
  if (cfg.send_seed && seed) {
    body["seed"] = static_cast<std::int64_t>(*seed & 0x7fffffffffffffffull);
  }
  return body.dump();
}

std::vector<std::string> parse_chat_response(const std::string& body)
{
  std::vector<std::string> out;
  try {
    const auto j = json::parse(body);
    for (const auto& choice : j.at("choices")) {
      out.push_back(choice.at("message").at("content").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw BackendUnavailable(std::string("malformed chat-completions response: ") + e.what());
  }
  return out;
}

RemoteBackend::RemoteBackend(RemoteBackendConfig cfg)
  : cfg_(std::move(cfg)), in_flight_(std::max(1, std::min(cfg_.max_in_flight, 1024)))
{
  if (cfg_.max_retries < 0) {
    throw InvalidValue("max_retries must be >= 0");
  }
}

RemoteBackend::~RemoteBackend() = default;

std::string RemoteBackend::id() const { return "remote:" + cfg_.model + "@" + cfg_.base_url; }

std::vector<std::string> RemoteBackend::post_once(const ChatRequest& req, int n, std::optional<std::uint64_t> seed)
{
  in_flight_.acquire();
  struct Release
  {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};
  return parse_chat_response(http_post_json(cfg_, cfg_.path, build_chat_body(cfg_, req, n, seed)));
}

std::vector<std::string> RemoteBackend::complete(const ChatRequest& req)
{
  if (!cfg_.send_top_k) {
    std::call_once(top_k_warning_, [&] { log::warn(id() + ": top_k not sent (unsupported by endpoint)"); });
  }
  if (cfg_.supports_n || req.n_samples == 1) {
    auto out = post_once(req, req.n_samples, req.sampling.seed);
    if (out.size() != static_cast<std::size_t>(req.n_samples)) {
      throw BackendUnavailable(id() + ": endpoint returned " + std::to_string(out.size()) + " choices");
    }
    return out;
  }
  // One call per sample, with derived seeds.
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(req.n_samples));
  for (int i = 0; i < req.n_samples; ++i) {
    std::optional<std::uint64_t> seed;
    if (req.sampling.seed) {
      seed = derive_seed(*req.sampling.seed, 0x5a, static_cast<std::uint64_t>(i));
    }
    auto one = post_once(req, 1, seed);
    if (one.empty()) {
      throw BackendUnavailable(id() + ": endpoint returned no choices");
    }
    out.push_back(std::move(one.front()));
  }
  return out;
}

} // namespace rlff
