#pragma once

// Command-line front end. parse_invocation turns argv into a CommandPlan
// (flags over config file over defaults); run executes it.
//
// Exit codes: 0 success, 1 finished with per-item failures, 2 usage error,
// 3 fatal (config, IO or provider problems). stdout receives exactly one
// JSON summary object; logs go to stderr.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "capdistill/config.hpp"

namespace capdistill::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitItemFailures = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFatal = 3;

class UsageError : public std::runtime_error {
 public:
  enum class Kind { unknown_command, unknown_flag, missing_required, invalid_value };

  UsageError(Kind kind, const std::string& message, std::string usage)
      : std::runtime_error(message), kind_(kind), usage_(std::move(usage)) {}

  Kind kind() const { return kind_; }
  const std::string& usage() const { return usage_; }

 private:
  Kind kind_;
  std::string usage_;
};

std::string_view to_string(UsageError::Kind k);

/// Everything a subcommand may read. Paths are already resolved against
/// the working directory.
struct CommandOptions {
  std::string input;
  std::vector<std::string> inputs;
  std::string output;
  std::string report;
  std::string source = "laion";
  std::string items;
  std::string exchanges;
  std::string captions;
  std::string instructs;
  std::string rejects;
  std::string parse_mode = "strict";
  std::string refusal_patterns;
  bool exclude_refusals = false;
  bool resume = false;
  bool fetch = false;
  bool fetch_mandatory = false;
  std::string image_dir;
  bool dedup = true;
  bool dedup_before_fetch = false;
  std::string spec;
  std::string materialize;
  std::string verify;
  std::optional<std::uint64_t> seed;
  std::size_t top_k = 12;
  bool full_host = false;
  std::size_t topics = 25;
  std::size_t iterations = 1000;
  std::optional<double> alpha;
  double beta = 0.01;
  std::optional<std::size_t> sample = 100'000;
  std::string stopwords;
  std::string coords;
  bool name_topics = true;
  std::size_t n = 100;
  std::vector<std::string> modes{"direct", "caption"};
  std::string inspector;
  std::string annotations;
  bool include_unsure = false;
  std::string record_type;
};

struct CommandPlan {
  std::string command;     // curate, distill, parse, mix, stats, topics, inspect, validate, help
  std::string subcommand;  // stats: domains; inspect: sample, run, grade, tally
  PipelineConfig config;
  CommandOptions options;
  std::string help_text;   // filled for command == "help"
};

/// Throws UsageError for unknown commands, unknown flags, missing required
/// flags or bad values, and ConfigError when the config file is unusable.
CommandPlan parse_invocation(const std::vector<std::string>& args);

struct Streams {
  std::ostream& out;
  std::ostream& err;
  std::istream& in;
};

/// Executes the plan and returns the exit code. Never throws.
int run(const CommandPlan& plan, Streams streams);

/// parse_invocation + run with all errors mapped to exit codes.
int main_entry(const std::vector<std::string>& args, Streams streams);

}  // namespace capdistill::cli
