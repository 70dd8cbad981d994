#include "memrec/http_transport.hpp"

#include <httplib.h>

#include "memrec/error.hpp"

namespace memrec {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::config_error, "URL needs a scheme: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

bool is_retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

HttpResponse HttplibTransport::post(const HttpRequest& request) {
  const auto parts = split_url(request.url);
  httplib::Client client(parts.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) headers.emplace(k, v);
  auto res = client.Post(parts.path, headers, request.body, request.content_type);
  if (!res) {
    throw Error(ErrorCode::provider_unavailable,
                "POST " + request.url + ": " + httplib::to_string(res.error()));
  }
  return HttpResponse{res->status, res->body};
}

}  // namespace memrec
