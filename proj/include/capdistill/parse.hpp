#pragma once

// Response grammar for distillation outputs. Each section is wrapped as
//
//   <start of NAME>
//   body
//   <end of NAME>
//
// and sections appear once each, in grammar order:
//   laion  : description, candidate questions, question, answer
//   vflan  : description, detailed answer
//   direct : detailed answer            (ablation prompt without captioning)
//
// Bodies are whitespace-trimmed; text outside sections is ignored.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capdistill/corpus.hpp"
#include "capdistill/distill.hpp"

namespace capdistill {

enum class ParseKind { laion, vflan, direct };
enum class ParseMode { strict, lenient };

ParseKind parse_kind_for(Source s);
ParseMode parse_mode_from_string(std::string_view s);

struct ParseGrammar {
  ParseKind kind;
  std::vector<std::string> sections;
};

const ParseGrammar& grammar_for(ParseKind kind);

enum class ParseFlag { refusal_suspected, question_not_in_candidates, candidate_count_mismatch };

std::string_view to_string(ParseFlag f);

struct ParsedDistillation {
  std::string caption;  // empty only for the direct grammar
  std::optional<std::vector<std::string>> candidate_questions;
  std::optional<std::string> question;
  std::string answer;
  std::vector<std::string> repairs;
  std::vector<ParseFlag> flags;

  bool operator==(const ParsedDistillation&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  enum class Kind { empty_input, missing_tag, out_of_order_tag, duplicate_tag, empty_section };

  ParseError(Kind kind, std::string name);

  Kind kind() const { return kind_; }
  /// Tag name without brackets ("end of answer") or section name ("answer").
  const std::string& name() const { return name_; }

 private:
  Kind kind_;
  std::string name_;
};

std::string_view to_string(ParseError::Kind k);

/// Strict: exact tags, in order, each once, nonempty bodies.
/// Lenient: tries strict first; otherwise also accepts tag case drift,
/// a missing final close tag and wrapping markdown fences, listing each
/// tolerance applied in `repairs`.
ParsedDistillation parse_response(std::string_view text, ParseKind kind, ParseMode mode);

/// One question per nonblank line with a leading "1." / "1)" / "-" / "*"
/// marker (followed by whitespace) and surrounding whitespace removed.
std::vector<std::string> split_candidates(std::string_view section);

/// Lowercase, whitespace collapsed, trailing punctuation removed.
std::string normalize_question(std::string_view q);

std::vector<std::string> default_refusal_patterns();

/// Adds warning flags; never rejects.
ParsedDistillation validate_parsed(ParsedDistillation p, ParseKind kind,
                                   std::span<const std::string> refusal_patterns);
ParsedDistillation validate_parsed(ParsedDistillation p, ParseKind kind);

/// Inverse of parse_response for well-formed values.
std::string render_distillation(const ParsedDistillation& p, ParseKind kind);

struct RecordPair {
  CaptionRecord caption;
  InstructRecord instruct;
};

/// Throws CorpusError::invariant_violation when a record would be invalid.
RecordPair to_records(const ParsedDistillation& p, const ImageMeta& item, const Provenance& provenance);
/// The instruct question is the item's original question.
RecordPair to_records(const ParsedDistillation& p, const VflanItem& item, const Provenance& provenance);

struct ParseReject {
  std::string item_id;
  std::string error_type;
  std::string detail;
};

Json to_json(const ParseReject& r);

struct AssembleOptions {
  ParseMode mode = ParseMode::strict;
  std::vector<std::string> refusal_patterns = default_refusal_patterns();
  bool exclude_refusals = false;
};

struct AssembleResult {
  std::vector<CaptionRecord> captions;
  std::vector<InstructRecord> instructs;
  std::vector<ParseReject> rejects;
  std::size_t excluded_refusals = 0;
};

/// Parses every exchange, joining on item id. Exchanges that are not ok,
/// fail to parse or have no matching item become rejects.
AssembleResult assemble_records(std::span<const RawExchange> exchanges, std::span<const ImageMeta> items,
                                const AssembleOptions& options);
AssembleResult assemble_records(std::span<const RawExchange> exchanges, std::span<const VflanItem> items,
                                const AssembleOptions& options);

}  // namespace capdistill
