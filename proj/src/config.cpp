#include "capdistill/config.hpp"

#include <fstream>
#include <set>

namespace capdistill {

namespace {

void check_keys(const Json& section, const std::string& where, const std::set<std::string>& allowed) {
  if (!section.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const Json& section, const char* key, T& out, const std::string& where) {
  auto it = section.find(key);
  if (it == section.end()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (distill.concurrency < 1) throw ConfigError("distill.concurrency must be >= 1");
  if (distill.rpm < 1) throw ConfigError("distill.rpm must be >= 1");
  if (distill.max_attempts < 1) throw ConfigError("distill.max_attempts must be >= 1");
  if (distill.base_backoff_ms < 0) throw ConfigError("distill.base_backoff_ms must be >= 0");
  if (curation.min_dim < 0) throw ConfigError("curation.min_dim must be >= 0");
  if (!(curation.tau >= -1.0 && curation.tau <= 1.0)) throw ConfigError("curation.tau must lie in [-1, 1]");
  if (provider.max_tokens < 1) throw ConfigError("provider.max_tokens must be >= 1");
  if (!curation.blocklist.empty() && !std::filesystem::exists(curation.blocklist)) {
    throw ConfigError("blocklist file not found: " + curation.blocklist);
  }
}

PipelineConfig config_from_json(const Json& j, PipelineConfig c) {
  check_keys(j, "config", {"provider", "embedding", "curation", "distill", "paths"});
  if (auto it = j.find("provider"); it != j.end()) {
    const Json& s = *it;
    check_keys(s, "provider", {"endpoint", "model", "auth_env_var", "temperature", "max_tokens", "api_style",
                               "send_image_urls"});
    read(s, "endpoint", c.provider.endpoint, "provider");
    read(s, "model", c.provider.model, "provider");
    read(s, "auth_env_var", c.provider.auth_env_var, "provider");
    read(s, "temperature", c.provider.temperature, "provider");
    read(s, "max_tokens", c.provider.max_tokens, "provider");
    read(s, "send_image_urls", c.provider.send_image_urls, "provider");
    std::string style;
    read(s, "api_style", style, "provider");
    if (!style.empty()) {
      try {
        c.provider.api_style = api_style_from_string(style);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (auto it = j.find("embedding"); it != j.end()) {
    check_keys(*it, "embedding", {"endpoint", "model", "dims", "auth_env_var"});
    read(*it, "endpoint", c.embedding.endpoint, "embedding");
    read(*it, "model", c.embedding.model, "embedding");
    read(*it, "dims", c.embedding.dims, "embedding");
    read(*it, "auth_env_var", c.embedding.auth_env_var, "embedding");
  }
  if (auto it = j.find("curation"); it != j.end()) {
    check_keys(*it, "curation", {"min_dim", "tau", "blocklist", "blocklist_regex"});
    read(*it, "min_dim", c.curation.min_dim, "curation");
    read(*it, "tau", c.curation.tau, "curation");
    read(*it, "blocklist", c.curation.blocklist, "curation");
    read(*it, "blocklist_regex", c.curation.blocklist_regex, "curation");
  }
  if (auto it = j.find("distill"); it != j.end()) {
    check_keys(*it, "distill", {"concurrency", "rpm", "max_attempts", "base_backoff_ms"});
    read(*it, "concurrency", c.distill.concurrency, "distill");
    read(*it, "rpm", c.distill.rpm, "distill");
    read(*it, "max_attempts", c.distill.max_attempts, "distill");
    read(*it, "base_backoff_ms", c.distill.base_backoff_ms, "distill");
  }
  if (auto it = j.find("paths"); it != j.end()) {
    check_keys(*it, "paths", {"work_dir"});
    std::string work_dir;
    read(*it, "work_dir", work_dir, "paths");
    if (!work_dir.empty()) c.work_dir = work_dir;
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  const Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  PipelineConfig c = config_from_json(j);
  // Relative paths inside the config are relative to the config file.
  const auto base = path.parent_path();
  if (!c.curation.blocklist.empty() && std::filesystem::path(c.curation.blocklist).is_relative()) {
    c.curation.blocklist = (base / c.curation.blocklist).string();
  }
  if (c.work_dir.is_relative()) c.work_dir = base / c.work_dir;
  return c;
}

Json to_json(const PipelineConfig& c) {
  Json j;
  j["provider"]["endpoint"] = c.provider.endpoint;
  j["provider"]["model"] = c.provider.model;
  j["provider"]["auth_env_var"] = c.provider.auth_env_var;
  j["provider"]["temperature"] = c.provider.temperature;
  j["provider"]["max_tokens"] = c.provider.max_tokens;
  j["provider"]["api_style"] = c.provider.api_style == ApiStyle::openai ? "openai" : "simple";
  j["provider"]["send_image_urls"] = c.provider.send_image_urls;
  j["embedding"]["endpoint"] = c.embedding.endpoint;
  j["embedding"]["model"] = c.embedding.model;
  j["embedding"]["dims"] = c.embedding.dims;
  j["embedding"]["auth_env_var"] = c.embedding.auth_env_var;
  j["curation"]["min_dim"] = c.curation.min_dim;
  j["curation"]["tau"] = c.curation.tau;
  j["curation"]["blocklist"] = c.curation.blocklist;
  j["curation"]["blocklist_regex"] = c.curation.blocklist_regex;
  j["distill"]["concurrency"] = c.distill.concurrency;
  j["distill"]["rpm"] = c.distill.rpm;
  j["distill"]["max_attempts"] = c.distill.max_attempts;
  j["distill"]["base_backoff_ms"] = c.distill.base_backoff_ms;
  j["paths"]["work_dir"] = c.work_dir.string();
  return j;
}

}  // namespace capdistill
