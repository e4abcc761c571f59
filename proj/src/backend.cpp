#include "sero/backend.hpp"

#include "sero/error.hpp"
#include "sero/http_client.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <semaphore>
#include <sstream>

#include <json.hpp>

namespace sero {

namespace {

constexpr const char *kTruncationMarker = "[earlier messages truncated]";

std::string render_upstream(const InvocationContext &ctx,
                            std::size_t char_budget) {
  // Drop oldest-first until the section fits the budget.
  std::size_t start = 0;
  auto section_size = [&](std::size_t from) {
    std::size_t total = 0;
    for (std::size_t i = from; i < ctx.upstream.size(); ++i) {
      total += ctx.upstream[i].first.size() + ctx.upstream[i].second.size() + 8;
    }
    return total;
  };
  while (start < ctx.upstream.size() && section_size(start) > char_budget) {
    ++start;
  }
  std::ostringstream out;
  if (start > 0) out << kTruncationMarker << "\n";
  if (start >= ctx.upstream.size()) {
    out << "(none)\n";
  } else {
    for (std::size_t i = start; i < ctx.upstream.size(); ++i) {
      out << "[" << ctx.upstream[i].first << "]\n"
          << ctx.upstream[i].second << "\n";
    }
  }
  return out.str();
}

} // namespace

std::string render_context(const InvocationContext &ctx,
                           std::size_t char_budget) {
  std::ostringstream out;
  out << "TASK:\n" << ctx.task_text << "\n\n";
  out << "UPSTREAM:\n" << render_upstream(ctx, char_budget) << "\n";
  out << "PROTOCOL: " << ctx.protocol_hint << "\n";
  if (ctx.draft_and_feedback) {
    out << "\nDRAFT:\n" << ctx.draft_and_feedback->first << "\n";
    out << "\nFEEDBACK:\n" << ctx.draft_and_feedback->second << "\n";
  }
  return out.str();
}

int whitespace_token_count(const std::string &text) {
  int n = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------
// ScriptedBackend
// ---------------------------------------------------------------------------

struct ScriptedBackend::CompiledRule {
  std::regex role_re;
  std::regex task_re;
  std::optional<std::string> context_contains;
  std::string response;

  explicit CompiledRule(const ScriptedRule &r)
      : role_re(r.role_pattern), task_re(r.task_pattern),
        context_contains(r.context_contains), response(r.response) {}
};

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules,
                                 std::string default_response)
    : default_response_(std::move(default_response)) {
  for (const auto &r : rules) add_rule(r);
}

void ScriptedBackend::add_rule(ScriptedRule rule) {
  rules_.push_back(std::make_shared<const CompiledRule>(rule));
}

void ScriptedBackend::set_default_response(std::string text) {
  default_response_ = std::move(text);
}

Completion ScriptedBackend::complete(const RoleCard &card,
                                     const InvocationContext &ctx) {
  std::string rendered; // lazily built only if a rule needs it
  const std::string *response = &default_response_;
  for (const auto &rule : rules_) {
    if (!std::regex_search(card.name, rule->role_re)) continue;
    if (!std::regex_search(ctx.task_text, rule->task_re)) continue;
    if (rule->context_contains) {
      if (rendered.empty()) rendered = render_context(ctx);
      if (rendered.find(*rule->context_contains) == std::string::npos) continue;
    }
    response = &rule->response;
    break;
  }
  Completion c;
  c.text = *response;
  c.tokens_in = whitespace_token_count(card.prompt) +
                whitespace_token_count(render_context(ctx));
  c.tokens_out = whitespace_token_count(c.text);
  record(c);
  return c;
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scripted behavior file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw Error("invalid scripted behavior file: " + std::string(e.what()));
  }
  std::vector<ScriptedRule> rules;
  for (const auto &rj : j.value("rules", nlohmann::json::array())) {
    ScriptedRule r;
    r.role_pattern = rj.value("role", std::string(".*"));
    r.task_pattern = rj.value("task", std::string(".*"));
    if (rj.contains("context_contains")) {
      r.context_contains = rj["context_contains"].get<std::string>();
    }
    r.response = rj.value("response", std::string());
    rules.push_back(std::move(r));
  }
  return ScriptedBackend(std::move(rules),
                         j.value("default_response",
                                 std::string("I cannot help with that.")));
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

struct HttpBackend::Impl {
  HttpBackendConfig config;
  HttpJsonClient client;
  std::counting_semaphore<64> slots;

  explicit Impl(HttpBackendConfig cfg)
      : config(std::move(cfg)),
        client(config.base_url,
               HttpRetryPolicy{config.max_retries, config.base_delay_s, 2.0,
                               true}),
        slots(std::max(1, config.max_parallel)) {}
};

HttpBackend::HttpBackend(HttpBackendConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpBackend::~HttpBackend() = default;

Completion HttpBackend::complete(const RoleCard &card,
                                 const InvocationContext &ctx) {
  impl_->slots.acquire();
  struct Release {
    std::counting_semaphore<64> &s;
    ~Release() { s.release(); }
  } release{impl_->slots};

  const std::string user = render_context(ctx, impl_->config.context_char_budget);
  const double temperature = impl_->config.temperature_override >= 0.0
                                 ? impl_->config.temperature_override
                                 : card.temperature;
  nlohmann::json req{
      {"model", impl_->config.model},
      {"messages",
       nlohmann::json::array({{{"role", "system"}, {"content", card.prompt}},
                              {{"role", "user"}, {"content", user}}})},
      {"temperature", temperature}};

  const char *key = std::getenv(impl_->config.api_key_env.c_str());
  auto res = impl_->client.post_json("/chat/completions", req.dump(),
                                     key ? std::string(key) : std::string());

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res.body);
  } catch (const nlohmann::json::exception &) {
    throw BackendError(BackendError::Kind::MalformedResponse, res.status,
                       res.body);
  }
  if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
      parsed["choices"].empty()) {
    throw BackendError(BackendError::Kind::MalformedResponse, res.status,
                       res.body);
  }
  Completion c;
  try {
    c.text = parsed["choices"][0]["message"]["content"].get<std::string>();
  } catch (const nlohmann::json::exception &) {
    throw BackendError(BackendError::Kind::MalformedResponse, res.status,
                       res.body);
  }
  if (parsed.contains("usage")) {
    c.tokens_in = parsed["usage"].value("prompt_tokens", 0);
    c.tokens_out = parsed["usage"].value("completion_tokens", 0);
  } else {
    c.tokens_in = whitespace_token_count(card.prompt) + whitespace_token_count(user);
    c.tokens_out = whitespace_token_count(c.text);
  }
  record(c);
  return c;
}

} // namespace sero
