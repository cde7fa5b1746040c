#include "capdistill/parse.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_set>

#include "capdistill/clock.hpp"
#include "capdistill/curate.hpp"
#include "capdistill/hash.hpp"

namespace capdistill {

namespace resources {
extern const std::string_view kRefusalPatternsText;
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

std::string_view trim_view(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

char ascii_lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string ascii_lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
  return out;
}

std::vector<std::size_t> occurrences(std::string_view hay, std::string_view needle) {
  std::vector<std::size_t> out;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) {
    out.push_back(pos);
  }
  return out;
}

struct Tag {
  std::string name;  // "start of answer"
  std::string text;  // "<start of answer>"
};

std::vector<Tag> tags_for(const ParseGrammar& g) {
  std::vector<Tag> tags;
  for (const auto& s : g.sections) {
    tags.push_back({"start of " + s, "<start of " + s + ">"});
    tags.push_back({"end of " + s, "<end of " + s + ">"});
  }
  return tags;
}

struct SectionScan {
  std::vector<std::string> bodies;
  bool case_repaired = false;
  bool unterminated = false;
};

SectionScan scan_sections(std::string_view text, const ParseGrammar& grammar, bool lenient) {
  const std::vector<Tag> tags = tags_for(grammar);
  const std::string lowered = lenient ? ascii_lowercase(text) : std::string();
  const std::string_view haystack = lenient ? std::string_view(lowered) : text;

  SectionScan scan;
  std::vector<std::optional<std::size_t>> pos(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string needle = lenient ? ascii_lowercase(tags[i].text) : tags[i].text;
    const auto occ = occurrences(haystack, needle);
    if (occ.size() > 1) throw ParseError(ParseError::Kind::duplicate_tag, tags[i].name);
    if (occ.empty()) {
      if (lenient && i + 1 == tags.size()) {
        scan.unterminated = true;
        continue;
      }
      throw ParseError(ParseError::Kind::missing_tag, tags[i].name);
    }
    pos[i] = occ.front();
    if (lenient && text.substr(occ.front(), tags[i].text.size()) != tags[i].text) scan.case_repaired = true;
  }
  for (std::size_t i = 1; i < tags.size(); ++i) {
    if (pos[i] && *pos[i] < *pos[i - 1] + tags[i - 1].text.size()) {
      throw ParseError(ParseError::Kind::out_of_order_tag, tags[i].name);
    }
  }
  for (std::size_t s = 0; s < grammar.sections.size(); ++s) {
    const std::size_t open_end = *pos[2 * s] + tags[2 * s].text.size();
    const std::size_t close = pos[2 * s + 1] ? *pos[2 * s + 1] : text.size();
    std::string_view body = trim_view(text.substr(open_end, close - open_end));
    if (body.empty()) throw ParseError(ParseError::Kind::empty_section, grammar.sections[s]);
    scan.bodies.emplace_back(body);
  }
  return scan;
}

// Removes an opening ```lang line and a closing ``` line around the text.
std::optional<std::string_view> strip_fences(std::string_view text) {
  std::string_view t = trim_view(text);
  bool stripped = false;
  if (t.starts_with("```")) {
    const auto nl = t.find('\n');
    t = nl == std::string_view::npos ? std::string_view() : t.substr(nl + 1);
    stripped = true;
  }
  t = trim_view(t);
  if (t.ends_with("```")) {
    const auto nl = t.rfind('\n');
    t = nl == std::string_view::npos ? std::string_view() : t.substr(0, nl);
    stripped = true;
  }
  if (!stripped) return std::nullopt;
  return t;
}

ParsedDistillation assemble(const SectionScan& scan, ParseKind kind) {
  ParsedDistillation p;
  switch (kind) {
    case ParseKind::laion:
      p.caption = scan.bodies[0];
      p.candidate_questions = split_candidates(scan.bodies[1]);
      p.question = scan.bodies[2];
      p.answer = scan.bodies[3];
      break;
    case ParseKind::vflan:
      p.caption = scan.bodies[0];
      p.answer = scan.bodies[1];
      break;
    case ParseKind::direct:
      p.answer = scan.bodies[0];
      break;
  }
  return p;
}

}  // namespace

ParseKind parse_kind_for(Source s) { return s == Source::laion ? ParseKind::laion : ParseKind::vflan; }

ParseMode parse_mode_from_string(std::string_view s) {
  if (s == "strict") return ParseMode::strict;
  if (s == "lenient") return ParseMode::lenient;
  throw std::invalid_argument("unknown parse mode '" + std::string(s) + "'");
}

const ParseGrammar& grammar_for(ParseKind kind) {
  static const ParseGrammar laion{ParseKind::laion, {"description", "candidate questions", "question", "answer"}};
  static const ParseGrammar vflan{ParseKind::vflan, {"description", "detailed answer"}};
  static const ParseGrammar direct{ParseKind::direct, {"detailed answer"}};
  switch (kind) {
    case ParseKind::laion:
      return laion;
    case ParseKind::vflan:
      return vflan;
    case ParseKind::direct:
      return direct;
  }
  return laion;
}

std::string_view to_string(ParseFlag f) {
  switch (f) {
    case ParseFlag::refusal_suspected:
      return "refusal_suspected";
    case ParseFlag::question_not_in_candidates:
      return "question_not_in_candidates";
    case ParseFlag::candidate_count_mismatch:
      return "candidate_count_mismatch";
  }
  return "unknown";
}

std::string_view to_string(ParseError::Kind k) {
  switch (k) {
    case ParseError::Kind::empty_input:
      return "empty_input";
    case ParseError::Kind::missing_tag:
      return "missing_tag";
    case ParseError::Kind::out_of_order_tag:
      return "out_of_order_tag";
    case ParseError::Kind::duplicate_tag:
      return "duplicate_tag";
    case ParseError::Kind::empty_section:
      return "empty_section";
  }
  return "unknown";
}

ParseError::ParseError(Kind kind, std::string name)
    : std::runtime_error(std::string(to_string(kind)) + ": " + name), kind_(kind), name_(std::move(name)) {}

ParsedDistillation parse_response(std::string_view text, ParseKind kind, ParseMode mode) {
  if (trim_view(text).empty()) throw ParseError(ParseError::Kind::empty_input, "response");
  const ParseGrammar& grammar = grammar_for(kind);
  if (mode == ParseMode::strict) return assemble(scan_sections(text, grammar, false), kind);

  try {
    return assemble(scan_sections(text, grammar, false), kind);
  } catch (const ParseError&) {
  }
  std::vector<std::string> repairs;
  std::string_view body = text;
  if (auto unfenced = strip_fences(text)) {
    body = *unfenced;
    repairs.emplace_back("stripped markdown fence");
  }
  if (trim_view(body).empty()) throw ParseError(ParseError::Kind::empty_input, "response");
  const SectionScan scan = scan_sections(body, grammar, true);
  if (scan.case_repaired) repairs.emplace_back("normalized tag case");
  if (scan.unterminated) repairs.push_back("unterminated " + grammar.sections.back());
  ParsedDistillation p = assemble(scan, kind);
  p.repairs = std::move(repairs);
  return p;
}

std::vector<std::string> split_candidates(std::string_view section) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= section.size()) {
    const std::size_t nl = section.find('\n', start);
    std::string_view line =
        trim_view(section.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    // Strip one enumeration marker when followed by whitespace or end of line.
    std::size_t marker = 0;
    if (!line.empty() && std::isdigit(static_cast<unsigned char>(line.front()))) {
      std::size_t i = 0;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i < line.size() && (line[i] == '.' || line[i] == ')')) marker = i + 1;
    } else if (line.starts_with("-") || line.starts_with("*")) {
      marker = 1;
    } else if (line.starts_with("\xE2\x80\xA2")) {  // U+2022 bullet
      marker = 3;
    }
    if (marker > 0 && (marker == line.size() || is_space(line[marker]))) line = trim_view(line.substr(marker));
    if (!line.empty()) out.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string normalize_question(std::string_view q) {
  std::string out;
  bool pending_space = false;
  for (char c : q) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ascii_lower(c));
  }
  static constexpr std::string_view kTrailing = ".?!,;: ";
  while (!out.empty() && kTrailing.find(out.back()) != std::string_view::npos) out.pop_back();
  return out;
}

std::vector<std::string> default_refusal_patterns() {
  std::vector<std::string> out;
  for (auto& p : parse_pattern_lines(resources::kRefusalPatternsText)) out.push_back(ascii_lowercase(p));
  return out;
}

ParsedDistillation validate_parsed(ParsedDistillation p, ParseKind kind) {
  static const std::vector<std::string> defaults = default_refusal_patterns();
  return validate_parsed(std::move(p), kind, defaults);
}

ParsedDistillation validate_parsed(ParsedDistillation p, ParseKind kind,
                                   std::span<const std::string> refusal_patterns) {
  auto add = [&](ParseFlag f) {
    if (std::find(p.flags.begin(), p.flags.end(), f) == p.flags.end()) p.flags.push_back(f);
  };
  if (kind == ParseKind::laion) {
    const auto& candidates = p.candidate_questions ? *p.candidate_questions : std::vector<std::string>{};
    if (candidates.size() != 5) add(ParseFlag::candidate_count_mismatch);
    const std::string chosen = normalize_question(p.question.value_or(""));
    const bool matched =
        !chosen.empty() && std::any_of(candidates.begin(), candidates.end(), [&](const std::string& c) {
          const std::string cand = normalize_question(c);
          return !cand.empty() &&
                 (cand == chosen || cand.find(chosen) != std::string::npos || chosen.find(cand) != std::string::npos);
        });
    if (!matched) add(ParseFlag::question_not_in_candidates);
  }
  const std::string answer = ascii_lowercase(p.answer);
  for (const auto& pattern : refusal_patterns) {
    if (!pattern.empty() && answer.find(ascii_lowercase(pattern)) != std::string::npos) {
      add(ParseFlag::refusal_suspected);
      break;
    }
  }
  std::sort(p.flags.begin(), p.flags.end());
  return p;
}

std::string render_distillation(const ParsedDistillation& p, ParseKind kind) {
  std::ostringstream out;
  auto section = [&](std::string_view name, std::string_view body) {
    out << "<start of " << name << ">\n" << body << "\n<end of " << name << ">";
  };
  switch (kind) {
    case ParseKind::laion: {
      std::string numbered;
      const auto& cands = p.candidate_questions ? *p.candidate_questions : std::vector<std::string>{};
      for (std::size_t i = 0; i < cands.size(); ++i) {
        if (i > 0) numbered += "\n";
        numbered += std::to_string(i + 1) + ". " + cands[i];
      }
      section("description", p.caption);
      out << "\n";
      section("candidate questions", numbered);
      out << "\n";
      section("question", p.question.value_or(""));
      out << "\n";
      section("answer", p.answer);
      break;
    }
    case ParseKind::vflan:
      section("description", p.caption);
      out << "\n\n";
      section("detailed answer", p.answer);
      break;
    case ParseKind::direct:
      section("detailed answer", p.answer);
      break;
  }
  return out.str();
}

namespace {

std::vector<std::string> flag_names(const ParsedDistillation& p) {
  std::vector<std::string> out;
  for (auto f : p.flags) out.emplace_back(to_string(f));
  return out;
}

void check(const RecordPair& pair) {
  if (auto v = validate_record(pair.caption); !v.empty()) throw CorpusError::invariant_violation(0, v.front());
  if (auto v = validate_record(pair.instruct); !v.empty()) throw CorpusError::invariant_violation(0, v.front());
}

}  // namespace

RecordPair to_records(const ParsedDistillation& p, const ImageMeta& item, const Provenance& provenance) {
  const std::string image_ref = item.local_path.value_or(item.url);
  RecordPair pair{CaptionRecord{item.id, image_ref, p.caption, Source::laion, provenance},
                  InstructRecord{item.id, image_ref, p.question.value_or(""), p.answer, p.candidate_questions,
                                 Source::laion, flag_names(p), provenance}};
  if (!pair.instruct.candidate_questions) pair.instruct.candidate_questions.emplace();
  check(pair);
  return pair;
}

RecordPair to_records(const ParsedDistillation& p, const VflanItem& item, const Provenance& provenance) {
  RecordPair pair{CaptionRecord{item.id, item.image_ref, p.caption, Source::vflan, provenance},
                  InstructRecord{item.id, item.image_ref, item.question, p.answer, std::nullopt, Source::vflan,
                                 flag_names(p), provenance}};
  check(pair);
  return pair;
}

Json to_json(const ParseReject& r) {
  Json j;
  j["item_id"] = r.item_id;
  j["error_type"] = r.error_type;
  j["detail"] = r.detail;
  return j;
}

namespace {

template <typename Item>
AssembleResult assemble_impl(std::span<const RawExchange> exchanges, std::span<const Item> items,
                             ParseKind kind, const AssembleOptions& options) {
  std::unordered_map<std::string, const Item*> by_id;
  for (const auto& it : items) by_id.emplace(it.id, &it);
  std::unordered_set<std::string> done;

  AssembleResult out;
  for (const auto& ex : exchanges) {
    if (ex.status != ExchangeStatus::ok) {
      out.rejects.push_back({ex.item_id, "exchange_" + std::string(to_string(ex.status)), ex.error});
      continue;
    }
    auto item = by_id.find(ex.item_id);
    if (item == by_id.end()) {
      out.rejects.push_back({ex.item_id, "unknown_item", "no manifest row with this id"});
      continue;
    }
    if (done.contains(ex.item_id)) {
      out.rejects.push_back({ex.item_id, "duplicate_exchange", "item already assembled"});
      continue;
    }
    try {
      ParsedDistillation p =
          validate_parsed(parse_response(ex.response_text, kind, options.mode), kind, options.refusal_patterns);
      if (options.exclude_refusals &&
          std::find(p.flags.begin(), p.flags.end(), ParseFlag::refusal_suspected) != p.flags.end()) {
        ++out.excluded_refusals;
        done.insert(ex.item_id);
        continue;
      }
      const Provenance prov{ex.model_id, ex.prompt_id, ex.completed_at.empty() ? utc_timestamp() : ex.completed_at,
                            sha256_hex(ex.response_text)};
      RecordPair pair = to_records(p, *item->second, prov);
      out.captions.push_back(std::move(pair.caption));
      out.instructs.push_back(std::move(pair.instruct));
      done.insert(ex.item_id);
    } catch (const ParseError& e) {
      out.rejects.push_back({ex.item_id, std::string(to_string(e.kind())), e.name()});
    } catch (const CorpusError& e) {
      out.rejects.push_back({ex.item_id, "invariant_violation", e.subject()});
    }
  }
  return out;
}

}  // namespace

AssembleResult assemble_records(std::span<const RawExchange> exchanges, std::span<const ImageMeta> items,
                                const AssembleOptions& options) {
  return assemble_impl(exchanges, items, ParseKind::laion, options);
}

AssembleResult assemble_records(std::span<const RawExchange> exchanges, std::span<const VflanItem> items,
                                const AssembleOptions& options) {
  return assemble_impl(exchanges, items, ParseKind::vflan, options);
}

}  // namespace capdistill
