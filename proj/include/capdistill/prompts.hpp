#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "capdistill/corpus.hpp"

namespace capdistill {

/// A versioned prompt. Slot markers are `{name}` for each declared slot;
/// any other braces in `text` are literal.
struct PromptTemplate {
  std::string prompt_id;
  std::string text;
  std::vector<std::string> slots;
};

class PromptError : public std::invalid_argument {
 public:
  enum class Kind { missing_slot, unexpected_slot, unknown_template, empty_question };

  PromptError(Kind kind, std::string slot, const std::string& what)
      : std::invalid_argument(what), kind_(kind), slot_(std::move(slot)) {}

  Kind kind() const { return kind_; }
  const std::string& slot() const { return slot_; }

 private:
  Kind kind_;
  std::string slot_;
};

inline constexpr std::string_view kLaionPromptId = "laion-v1";
inline constexpr std::string_view kVflanPromptId = "vflan-v1";
inline constexpr std::string_view kVflanDirectPromptId = "vflan-direct-v1";
inline constexpr std::string_view kTopicNamingPromptId = "topic-name-v1";

/// Throws PromptError(unknown_template).
const PromptTemplate& prompt_template(std::string_view prompt_id);

/// Splices values into the template's slots. Every declared slot must be
/// supplied and no undeclared one may be.
std::string render_template(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values);

/// laion: no question allowed. vflan: question required and nonempty.
std::string build_prompt(Source kind, const std::optional<std::string>& question);
std::string_view prompt_id_for(Source kind);

enum class AblationMode { caption_then_answer, direct_answer };

/// caption_then_answer renders vflan-v1; direct_answer renders
/// vflan-direct-v1, which drops the description task and block.
std::string ablation_prompt(AblationMode mode, const std::string& question);
std::string_view prompt_id_for(AblationMode mode);

}  // namespace capdistill
