#pragma once

#include <optional>
#include <string>

#include "capdistill/corpus.hpp"
#include "capdistill/http.hpp"

namespace capdistill {

struct ImagePayload {
  enum class Kind { base64, url };
  Kind kind = Kind::base64;
  std::string data;  // base64 bytes or a URL
  std::string mime = "image/jpeg";
};

struct LvlmRequest {
  std::string prompt;
  std::optional<ImagePayload> image;  // absent for text-only calls
};

struct LvlmResponse {
  int status = 0;  // HTTP status; 0 = transport failure
  std::string content;
  std::string error;
};

/// A vision-language endpoint. complete() must be safe to call concurrently.
class LvlmClient {
 public:
  virtual ~LvlmClient() = default;
  virtual LvlmResponse complete(const LvlmRequest& request) = 0;
  virtual std::string model_id() const = 0;
};

/// `simple`: {"messages":[{"role":"user","content":[{"type":"text"},{"type":"image","data_base64"|"url"}]}]}
/// answered by {"content": "..."}.
/// `openai`: chat-completions shape with image_url parts, answered by
/// {"choices":[{"message":{"content":"..."}}]}.
enum class ApiStyle { simple, openai };

struct ProviderConfig {
  std::string endpoint;
  std::string model;
  std::string auth_env_var;
  double temperature = 0.2;
  int max_tokens = 2048;
  ApiStyle api_style = ApiStyle::simple;
  bool send_image_urls = false;  // pass URLs through instead of base64 bytes
};

Json build_request_body(const ProviderConfig& config, const LvlmRequest& request);

/// nullopt when the body does not have the style's response shape.
std::optional<std::string> extract_content(ApiStyle style, const std::string& body);

class HttpLvlmClient final : public LvlmClient {
 public:
  HttpLvlmClient(ProviderConfig config, std::string api_key, HttpTransport& transport)
      : config_(std::move(config)), api_key_(std::move(api_key)), transport_(&transport) {}

  LvlmResponse complete(const LvlmRequest& request) override;
  std::string model_id() const override { return config_.model; }

 private:
  ProviderConfig config_;
  std::string api_key_;
  HttpTransport* transport_;
};

ApiStyle api_style_from_string(std::string_view s);

}  // namespace capdistill
