#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace capdistill {

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

struct HttpResponse {
  int status = 0;  // 0 = transport failure, see `error`
  std::string body;
  std::string content_type;
  std::string error;
};

struct UrlParts {
  std::string scheme;  // lowercase
  std::string host;    // lowercase, userinfo removed
  int port = 0;        // 0 = scheme default
  std::string target;  // path + query, "/" when absent
};

/// Minimal absolute-URL split; nullopt unless scheme://host is present and
/// the host is made of letters, digits, '-', '.', '_'.
std::optional<UrlParts> split_url(std::string_view url);

/// Blocking HTTP transport. Implementations must allow concurrent calls.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url, const HttpHeaders& headers) = 0;
  virtual HttpResponse post_json(const std::string& url, const std::string& body, const HttpHeaders& headers) = 0;
};

/// cpp-httplib backed transport; one connection per call.
class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}

  HttpResponse get(const std::string& url, const HttpHeaders& headers) override;
  HttpResponse post_json(const std::string& url, const std::string& body, const HttpHeaders& headers) override;

 private:
  std::chrono::seconds timeout_;
};

}  // namespace capdistill
