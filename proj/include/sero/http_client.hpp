#pragma once

#include <functional>
#include <string>

namespace sero {

struct HttpRetryPolicy {
  int max_retries = 3;
  double base_delay_s = 0.5;
  double factor = 2.0;
  bool jitter = true;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Minimal POST-with-retry wrapper shared by the chat and embedding clients.
// Retries only on timeout, 429 and 5xx, with exponential backoff. Anything
// else is reported to the caller unchanged.
class HttpJsonClient {
public:
  HttpJsonClient(std::string base_url, HttpRetryPolicy policy);

  // Throws BackendError on exhausted retries, transport failure or non-2xx.
  HttpResponse post_json(const std::string &path, const std::string &body,
                         const std::string &bearer_token) const;

  // Test hook: replaces the sleep between retries.
  static void set_sleep_hook(std::function<void(double)> hook);

private:
  std::string host_;
  HttpRetryPolicy policy_;
};

} // namespace sero
