#pragma once

#include <map>
#include <string>
#include <string_view>

namespace racg {

struct HttpResponse {
  /// 0 when the request never got a response.
  int status = 0;
  std::string body;
  /// Transport error description when status is 0.
  std::string error;
  bool timed_out = false;
};

/// POSTs a JSON body to `base_url` + `path`. `base_url` is scheme://host[:port]
/// optionally followed by a path prefix.
HttpResponse post_json(std::string_view base_url, std::string_view path, const std::string& body,
                       const std::map<std::string, std::string>& headers, double timeout_s);

/// Replaces every occurrence of `secret` in `text` with "[REDACTED]".
std::string redact(std::string text, std::string_view secret);

}  // namespace racg
