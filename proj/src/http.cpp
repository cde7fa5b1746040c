#include "httplib.h"

#include "capdistill/http.hpp"

#include <algorithm>
#include <cctype>

namespace capdistill {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool valid_host_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_';
}

httplib::Headers to_httplib(const HttpHeaders& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

struct Endpoint {
  std::string origin;
  std::string target;
};

std::optional<Endpoint> endpoint_of(const std::string& url) {
  auto parts = split_url(url);
  if (!parts || (parts->scheme != "http" && parts->scheme != "https")) return std::nullopt;
  std::string origin = parts->scheme + "://" + parts->host;
  if (parts->port != 0) origin += ":" + std::to_string(parts->port);
  return Endpoint{std::move(origin), parts->target};
}

HttpResponse convert(const httplib::Result& res) {
  HttpResponse out;
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  out.content_type = res->get_header_value("Content-Type");
  return out;
}

template <typename Fn>
HttpResponse with_client(const std::string& url, std::chrono::seconds timeout, Fn&& fn) {
  auto ep = endpoint_of(url);
  if (!ep) return HttpResponse{0, {}, {}, "unsupported url: " + url};
  httplib::Client client(ep->origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  client.set_follow_location(true);
  return convert(fn(client, ep->target));
}

}  // namespace

std::optional<UrlParts> split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) return std::nullopt;
  UrlParts parts;
  parts.scheme = lower(url.substr(0, scheme_end));
  if (!std::all_of(parts.scheme.begin(), parts.scheme.end(),
                   [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '.' || c == '-'; })) {
    return std::nullopt;
  }
  std::string_view rest = url.substr(scheme_end + 3);
  const auto auth_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, auth_end);
  parts.target = auth_end == std::string_view::npos ? "/" : std::string(rest.substr(auth_end));
  if (!parts.target.empty() && parts.target.front() != '/') parts.target.insert(0, "/");
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) authority = authority.substr(at + 1);
  if (const auto colon = authority.rfind(':'); colon != std::string_view::npos) {
    const std::string_view port = authority.substr(colon + 1);
    if (port.empty() || port.size() > 5 ||
        !std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      return std::nullopt;
    }
    parts.port = std::stoi(std::string(port));
    if (parts.port < 1 || parts.port > 65535) return std::nullopt;
    authority = authority.substr(0, colon);
  }
  if (authority.empty() || !std::all_of(authority.begin(), authority.end(), valid_host_char)) return std::nullopt;
  if (authority.front() == '.' || authority.back() == '.') return std::nullopt;
  parts.host = lower(authority);
  return parts;
}

HttpResponse HttplibTransport::get(const std::string& url, const HttpHeaders& headers) {
  return with_client(url, timeout_, [&](httplib::Client& c, const std::string& target) {
    return c.Get(target, to_httplib(headers));
  });
}

HttpResponse HttplibTransport::post_json(const std::string& url, const std::string& body, const HttpHeaders& headers) {
  return with_client(url, timeout_, [&](httplib::Client& c, const std::string& target) {
    return c.Post(target, to_httplib(headers), body, "application/json");
  });
}

}  // namespace capdistill
