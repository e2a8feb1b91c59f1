#include <cstdlib>

#include "httplib.h"
#include "json.hpp"

#include "estbad/injection.hpp"

namespace estbad {

namespace {

using nlohmann::json;

struct ParsedEndpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("rewrite endpoint must include a scheme: '" + endpoint + "'");
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string request_body(const RewriteOptions& opts, const std::string& prompt) {
  if (opts.protocol == RewriteProtocol::simple) {
    return json{{"prompt", prompt}}.dump();
  }
  return json{{"model", opts.model},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})}}
      .dump();
}

std::optional<std::string> parse_body(const RewriteOptions& opts, const std::string& body) {
  try {
    const json j = json::parse(body);
    if (opts.protocol == RewriteProtocol::simple) {
      return j.at("text").get<std::string>();
    }
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

RewriteClient::Transport make_http_transport(const RewriteOptions& opts) {
  const ParsedEndpoint ep = parse_endpoint(opts.endpoint);
  const char* key_raw = opts.api_key_env.empty() ? nullptr : std::getenv(opts.api_key_env.c_str());
  const std::string api_key = key_raw == nullptr ? "" : key_raw;

  return [opts, ep, api_key](const std::string& prompt) -> std::optional<std::string> {
    httplib::Client cli(ep.base);
    cli.set_connection_timeout(0, opts.timeout_ms * 1000);
    cli.set_read_timeout(0, opts.timeout_ms * 1000);
    cli.set_write_timeout(0, opts.timeout_ms * 1000);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    const auto res = cli.Post(ep.path, headers, request_body(opts, prompt), "application/json");
    if (!res || res->status < 200 || res->status >= 300) return std::nullopt;
    return parse_body(opts, res->body);
  };
}

}  // namespace

RewriteClient::RewriteClient(RewriteOptions opts)
    : opts_(std::move(opts)), transport_(make_http_transport(opts_)) {
  if (opts_.max_retries < 0) throw ConfigError("rewrite max_retries must be >= 0");
}

RewriteClient::RewriteClient(RewriteOptions opts, Transport transport)
    : opts_(std::move(opts)), transport_(std::move(transport)) {
  if (opts_.max_retries < 0) throw ConfigError("rewrite max_retries must be >= 0");
}

}  // namespace estbad
