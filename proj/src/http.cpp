#include "racg/http.hpp"

#include <httplib.h>

#include <chrono>

namespace racg {

namespace {

struct SplitUrl {
  std::string origin;
  std::string prefix;
};

SplitUrl split_url(std::string_view url) {
  const std::size_t scheme = url.find("://");
  const std::size_t host_start = scheme == std::string_view::npos ? 0 : scheme + 3;
  const std::size_t slash = url.find('/', host_start);
  SplitUrl out;
  if (slash == std::string_view::npos) {
    out.origin = std::string(url);
  } else {
    out.origin = std::string(url.substr(0, slash));
    out.prefix = std::string(url.substr(slash));
  }
  if (scheme == std::string_view::npos) out.origin = "http://" + out.origin;
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace

HttpResponse post_json(std::string_view base_url, std::string_view path, const std::string& body,
                       const std::map<std::string, std::string>& headers, double timeout_s) {
  HttpResponse out;
  const SplitUrl url = split_url(base_url);
  std::string full_path = url.prefix;
  if (full_path.size() < path.size() ||
      full_path.compare(full_path.size() - path.size(), path.size(), path) != 0) {
    full_path += path;
  }
  httplib::Client client(url.origin);
  if (!client.is_valid()) {
    out.error = "invalid endpoint " + std::string(base_url);
    return out;
  }
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(full_path, h, body, "application/json");
  if (!res) {
    out.timed_out = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
                    res.error() == httplib::Error::ConnectionTimeout;
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

std::string redact(std::string text, std::string_view secret) {
  if (secret.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(secret, pos)) != std::string::npos) {
    text.replace(pos, secret.size(), "[REDACTED]");
    pos += 10;
  }
  return text;
}

}  // namespace racg
