#pragma once

#include <string>
#include <utility>

#include <httplib.h>

#include "swarmfield/llm.hpp"

namespace swarmfield {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidConfig("endpoint URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// Plain HTTP(S) POST through cpp-httplib.
class HttpChatTransport : public ChatTransport {
public:
  std::string post(const LlmEndpoint& endpoint, const std::string& body) override {
    const auto [origin, path] = split_url(endpoint.url);
    httplib::Client client(origin);
    const auto secs = static_cast<time_t>(endpoint.timeout_s);
    const auto usecs = static_cast<time_t>((endpoint.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!endpoint.api_key.empty())
      headers.emplace("Authorization", "Bearer " + endpoint.api_key);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw TransportError("endpoint answered HTTP " + std::to_string(res->status));
    return res->body;
  }
};

}  // namespace swarmfield
