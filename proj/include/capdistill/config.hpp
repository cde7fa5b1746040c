#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capdistill/corpus.hpp"
#include "capdistill/lvlm.hpp"

namespace capdistill {

/// The endpoint value that selects the in-process deterministic mocks.
inline constexpr std::string_view kMockEndpoint = "mock";

struct EmbeddingSettings {
  std::string endpoint;
  std::string model;
  std::size_t dims = 0;  // 0 = whatever the provider returns
  std::string auth_env_var;
};

struct CurationSettings {
  std::int64_t min_dim = 512;
  double tau = 0.44;
  std::string blocklist;  // path; empty = no blocklist
  bool blocklist_regex = false;
};

struct DistillSettings {
  int concurrency = 4;
  int rpm = 60;
  int max_attempts = 5;
  std::int64_t base_backoff_ms = 1000;
};

struct PipelineConfig {
  ProviderConfig provider;
  EmbeddingSettings embedding;
  CurationSettings curation;
  DistillSettings distill;
  std::filesystem::path work_dir = ".";

  /// Checks ranges and that referenced files exist. Throws ConfigError.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown keys are rejected so typos do not silently fall back to defaults.
PipelineConfig config_from_json(const Json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);
Json to_json(const PipelineConfig& c);

}  // namespace capdistill
