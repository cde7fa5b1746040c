#include "capdistill/lvlm.hpp"

#include <stdexcept>

namespace capdistill {

ApiStyle api_style_from_string(std::string_view s) {
  if (s == "simple") return ApiStyle::simple;
  if (s == "openai") return ApiStyle::openai;
  throw std::invalid_argument("unknown api_style '" + std::string(s) + "'");
}

Json build_request_body(const ProviderConfig& config, const LvlmRequest& request) {
  Json content = Json::array();
  Json text;
  text["type"] = "text";
  text["text"] = request.prompt;
  content.push_back(std::move(text));

  if (request.image) {
    const ImagePayload& img = *request.image;
    Json part;
    if (config.api_style == ApiStyle::openai) {
      part["type"] = "image_url";
      part["image_url"]["url"] =
          img.kind == ImagePayload::Kind::url ? img.data : "data:" + img.mime + ";base64," + img.data;
    } else {
      part["type"] = "image";
      if (img.kind == ImagePayload::Kind::url) {
        part["url"] = img.data;
      } else {
        part["data_base64"] = img.data;
        part["mime_type"] = img.mime;
      }
    }
    content.push_back(std::move(part));
  }

  Json message;
  message["role"] = "user";
  message["content"] = std::move(content);

  Json body;
  body["model"] = config.model;
  body["temperature"] = config.temperature;
  body["max_tokens"] = config.max_tokens;
  body["messages"] = Json::array({std::move(message)});
  return body;
}

std::optional<std::string> extract_content(ApiStyle style, const std::string& body) {
  const Json j = Json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  if (style == ApiStyle::simple) {
    if (auto it = j.find("content"); it != j.end() && it->is_string()) return it->get<std::string>();
    return std::nullopt;
  }
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) return std::nullopt;
  const Json& first = (*choices)[0];
  if (!first.contains("message") || !first["message"].is_object()) return std::nullopt;
  const Json& msg = first["message"];
  if (auto it = msg.find("content"); it != msg.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

LvlmResponse HttpLvlmClient::complete(const LvlmRequest& request) {
  HttpHeaders headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);
  const HttpResponse res = transport_->post_json(config_.endpoint, build_request_body(config_, request).dump(), headers);
  LvlmResponse out;
  out.status = res.status;
  if (res.status == 0) {
    out.error = res.error;
    return out;
  }
  if (res.status != 200) {
    out.error = res.body.substr(0, 300);
    return out;
  }
  if (auto content = extract_content(config_.api_style, res.body)) {
    out.content = std::move(*content);
  } else {
    out.error = "unrecognised response body";
  }
  return out;
}

}  // namespace capdistill
