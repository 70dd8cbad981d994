#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace memrec {

struct HttpRequest {
  std::string url;  // scheme://host[:port]/path
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::string content_type = "application/json";
  std::chrono::milliseconds timeout{60'000};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Minimal POST-only client seam; tests substitute a scripted implementation.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;

  // Throws Error(provider_unavailable) when no response could be obtained.
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

class HttplibTransport final : public HttpTransport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

// Statuses worth another attempt: 408, 429 and 5xx.
bool is_retryable_status(int status);

}  // namespace memrec
