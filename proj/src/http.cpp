#include "docslm/http.hpp"

#include <stdexcept>

#include <httplib.h>

namespace docslm {

HttpResponse http_post(const std::string& base_url, const std::string& path, const std::string& body,
                       const HttpHeaders& headers, double timeout_s,
                       const std::function<bool(std::string_view)>& on_chunk) {
  httplib::Client client(base_url);
  const auto secs = static_cast<time_t>(timeout_s);
  const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  client.set_connection_timeout(secs, usecs);

  httplib::Request req;
  req.method = "POST";
  req.path = path;
  req.body = body;
  for (const auto& [k, v] : headers) req.set_header(k, v);
  if (!req.has_header("Content-Type")) req.set_header("Content-Type", "application/json");

  HttpResponse out;
  if (on_chunk) {
    req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
      return on_chunk(std::string_view(data, len));
    };
  }
  httplib::Response res;
  httplib::Error err = httplib::Error::Success;
  if (!client.send(req, res, err)) {
    throw std::runtime_error("POST " + base_url + path + " failed: " + httplib::to_string(err));
  }
  out.status = res.status;
  if (!on_chunk) out.body = std::move(res.body);
  return out;
}

void SseParser::feed(std::string_view bytes, const std::function<void(std::string_view)>& on_data) {
  buffer_.append(bytes);
  std::size_t pos;
  while ((pos = buffer_.find('\n')) != std::string::npos) {
    std::string line = buffer_.substr(0, pos);
    buffer_.erase(0, pos + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    constexpr std::string_view kData = "data:";
    if (line.starts_with(kData)) {
      std::string_view payload(line);
      payload.remove_prefix(kData.size());
      if (payload.starts_with(' ')) payload.remove_prefix(1);
      on_data(payload);
    }
  }
}

}  // namespace docslm
