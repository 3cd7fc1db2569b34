#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace docslm {

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

struct HttpResponse {
  int status = 0;
  std::string body;
};

// POST `body` to base_url + path. When `on_chunk` is set the body is streamed
// through it as it arrives (and not accumulated); returning false aborts.
// Throws std::runtime_error on connection failure.
HttpResponse http_post(const std::string& base_url, const std::string& path, const std::string& body,
                       const HttpHeaders& headers, double timeout_s = 120.0,
                       const std::function<bool(std::string_view)>& on_chunk = nullptr);

// Splits a server-sent-events byte stream into "data:" payloads.
class SseParser {
 public:
  // Feeds bytes; calls `on_data` with the payload of every complete event.
  void feed(std::string_view bytes, const std::function<void(std::string_view)>& on_data);

 private:
  std::string buffer_;
};

}  // namespace docslm
