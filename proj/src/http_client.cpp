#include "sero/http_client.hpp"

#include "sero/embedding.hpp"
#include "sero/error.hpp"

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <random>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace sero {

namespace {

std::function<void(double)> &sleep_hook() {
  static std::function<void(double)> hook;
  return hook;
}

void sleep_for(double seconds) {
  if (sleep_hook()) {
    sleep_hook()(seconds);
    return;
  }
  std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

double jitter_factor() {
  // Backoff jitter is allowed to be nondeterministic; nothing scripted or
  // scored flows through this path.
  static std::mutex m;
  static std::mt19937 gen{std::random_device{}()};
  std::lock_guard<std::mutex> lock(m);
  return 0.5 + static_cast<double>(gen() % 1000) / 1000.0;
}

} // namespace

void HttpJsonClient::set_sleep_hook(std::function<void(double)> hook) {
  sleep_hook() = std::move(hook);
}

HttpJsonClient::HttpJsonClient(std::string base_url, HttpRetryPolicy policy)
    : host_(std::move(base_url)), policy_(policy) {}

HttpResponse HttpJsonClient::post_json(const std::string &path,
                                       const std::string &body,
                                       const std::string &bearer_token) const {
  int attempt = 0;
  for (;;) {
    httplib::Client client(host_);
    client.set_connection_timeout(10, 0);
    client.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (!bearer_token.empty()) {
      headers.emplace("Authorization", "Bearer " + bearer_token);
    }
    auto res = client.Post(path, headers, body, "application/json");

    bool retryable = false;
    BackendError::Kind kind = BackendError::Kind::Transport;
    int status = 0;
    std::string detail;

    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::ConnectionTimeout ||
          err == httplib::Error::Read || err == httplib::Error::Write) {
        kind = BackendError::Kind::Timeout;
        retryable = true;
      }
      detail = httplib::to_string(err);
    } else if (res->status == 429) {
      kind = BackendError::Kind::RateLimited;
      status = res->status;
      retryable = true;
      detail = res->body;
    } else if (res->status >= 500) {
      kind = BackendError::Kind::Transport;
      status = res->status;
      retryable = true;
      detail = res->body;
    } else if (res->status < 200 || res->status >= 300) {
      throw BackendError(BackendError::Kind::Transport, res->status, res->body);
    } else {
      return HttpResponse{res->status, res->body};
    }

    if (!retryable || attempt >= policy_.max_retries) {
      throw BackendError(kind, status, detail);
    }
    double delay = policy_.base_delay_s;
    for (int i = 0; i < attempt; ++i) delay *= policy_.factor;
    if (policy_.jitter) delay *= jitter_factor();
    sleep_for(delay);
    ++attempt;
  }
}

// ---------------------------------------------------------------------------
// HttpEncoder
// ---------------------------------------------------------------------------

struct HttpEncoder::Impl {
  HttpEncoderConfig config;
  HttpJsonClient client;

  explicit Impl(HttpEncoderConfig cfg)
      : config(std::move(cfg)),
        client(config.base_url,
               HttpRetryPolicy{config.max_retries, config.base_delay_s, 2.0,
                               true}) {}
};

HttpEncoder::HttpEncoder(HttpEncoderConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpEncoder::~HttpEncoder() = default;

int HttpEncoder::dim() const { return impl_->config.dim; }

EmbeddingVector HttpEncoder::encode(std::string_view text) const {
  nlohmann::json req{{"model", impl_->config.model},
                     {"input", nlohmann::json::array({std::string(text)})}};
  const char *key = std::getenv(impl_->config.api_key_env.c_str());
  auto res = impl_->client.post_json("/embeddings", req.dump(),
                                     key ? std::string(key) : std::string());
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res.body);
  } catch (const nlohmann::json::exception &) {
    throw BackendError(BackendError::Kind::MalformedResponse, res.status,
                       res.body);
  }
  if (!parsed.contains("data") || !parsed["data"].is_array() ||
      parsed["data"].empty() || !parsed["data"][0].contains("embedding")) {
    throw BackendError(BackendError::Kind::MalformedResponse, res.status,
                       res.body);
  }
  EmbeddingVector v = parsed["data"][0]["embedding"].get<EmbeddingVector>();
  if (static_cast<int>(v.size()) != impl_->config.dim) {
    throw BackendError(BackendError::Kind::MalformedResponse, res.status,
                       "embedding dimension " + std::to_string(v.size()) +
                           " does not match configured " +
                           std::to_string(impl_->config.dim));
  }
  return v;
}

} // namespace sero
