#pragma once

#include "sero/role_pool.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sero {

// Everything a role sees when invoked: the original task, upstream messages in
// DAG level order, the card's protocol, and (for repair calls) the draft plus
// validator feedback.
struct InvocationContext {
  std::string task_text;
  std::vector<std::pair<std::string, std::string>> upstream; // (role, text)
  std::string protocol_hint;
  std::optional<std::pair<std::string, std::string>> draft_and_feedback;
};

struct Completion {
  std::string text;
  int tokens_in = 0;
  int tokens_out = 0;
};

// Renders the canonical prompt template. Bit-stable across runs; distinct
// upstream orderings render distinctly. Upstream messages are truncated
// oldest-first once the rendered upstream section exceeds char_budget, with an
// explicit marker.
std::string render_context(const InvocationContext &ctx,
                           std::size_t char_budget = 24000);

int whitespace_token_count(const std::string &text);

class Backend {
public:
  Backend() = default;
  Backend(const Backend &other)
      : calls_(other.calls_.load()), tokens_in_(other.tokens_in_.load()),
        tokens_out_(other.tokens_out_.load()) {}
  Backend &operator=(const Backend &other) {
    calls_.store(other.calls_.load());
    tokens_in_.store(other.tokens_in_.load());
    tokens_out_.store(other.tokens_out_.load());
    return *this;
  }
  virtual ~Backend() = default;

  virtual Completion complete(const RoleCard &card,
                              const InvocationContext &ctx) = 0;

  std::int64_t call_count() const { return calls_.load(); }
  std::int64_t tokens_in() const { return tokens_in_.load(); }
  std::int64_t tokens_out() const { return tokens_out_.load(); }

protected:
  void record(const Completion &c) {
    calls_.fetch_add(1);
    tokens_in_.fetch_add(c.tokens_in);
    tokens_out_.fetch_add(c.tokens_out);
  }

private:
  std::atomic<std::int64_t> calls_{0};
  std::atomic<std::int64_t> tokens_in_{0};
  std::atomic<std::int64_t> tokens_out_{0};
};

// One scripted match rule. Patterns are regular expressions searched against
// the card name and the task text; context_contains, when set, additionally
// requires the rendered upstream/draft sections to contain that substring.
// Rules are checked in order; the first match wins.
struct ScriptedRule {
  std::string role_pattern;
  std::string task_pattern;
  std::optional<std::string> context_contains;
  std::string response;
};

// Deterministic provider for hermetic runs: a total lookup table. Token counts
// are whitespace token counts, so cost accounting is exact.
class ScriptedBackend : public Backend {
public:
  ScriptedBackend() = default;
  ScriptedBackend(std::vector<ScriptedRule> rules, std::string default_response);

  Completion complete(const RoleCard &card, const InvocationContext &ctx) override;

  void add_rule(ScriptedRule rule);
  void set_default_response(std::string text);

  static ScriptedBackend from_file(const std::filesystem::path &path);

private:
  struct CompiledRule; // rule with precompiled patterns
  std::vector<std::shared_ptr<const CompiledRule>> rules_;
  std::string default_response_ = "I cannot help with that.";
};

struct HttpBackendConfig {
  std::string base_url;
  std::string model;
  double temperature_override = -1.0; // < 0 means use the card's temperature
  std::string api_key_env = "SERO_API_KEY";
  int max_retries = 3;
  double base_delay_s = 0.5;
  int max_parallel = 4;
  std::size_t context_char_budget = 24000;
};

// Chat-completions provider: POST {base_url}/chat/completions with the card's
// prompt as the system message and the rendered context as the user message.
class HttpBackend : public Backend {
public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  Completion complete(const RoleCard &card, const InvocationContext &ctx) override;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace sero
