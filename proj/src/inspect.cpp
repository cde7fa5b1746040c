#include "capdistill/inspect.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "capdistill/clock.hpp"
#include "capdistill/parse.hpp"
#include "capdistill/prompts.hpp"
#include "capdistill/rng.hpp"

namespace capdistill {

std::string_view to_string(InspectMode m) {
  switch (m) {
    case InspectMode::vflan_gt: return "vflan_gt";
    case InspectMode::direct_answer: return "direct_answer";
    case InspectMode::caption_then_answer: return "caption_then_answer";
  }
  return "?";
}

InspectMode inspect_mode_from_string(std::string_view s) {
  if (s == "vflan_gt" || s == "gt") return InspectMode::vflan_gt;
  if (s == "direct_answer" || s == "direct") return InspectMode::direct_answer;
  if (s == "caption_then_answer" || s == "caption") return InspectMode::caption_then_answer;
  throw std::invalid_argument("unknown inspection mode '" + std::string(s) + "'");
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::correct: return "correct";
    case Verdict::incorrect: return "incorrect";
    case Verdict::unsure: return "unsure";
    case Verdict::ungraded: return "ungraded";
  }
  return "?";
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "correct") return Verdict::correct;
  if (s == "incorrect") return Verdict::incorrect;
  if (s == "unsure") return Verdict::unsure;
  if (s == "ungraded") return Verdict::ungraded;
  throw std::invalid_argument("unknown verdict '" + std::string(s) + "'");
}

Json to_json(const InspectionRecord& r) {
  Json j;
  j["sample_id"] = r.sample_id;
  j["mode"] = to_string(r.mode);
  j["answer_text"] = r.answer_text;
  j["verdict"] = to_string(r.verdict);
  j["inspector"] = r.inspector;
  j["graded_at"] = r.graded_at;
  j["question"] = r.question;
  j["gt_answer"] = r.gt_answer;
  j["prompt_id"] = r.prompt_id;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

void from_json_row(const Json& row, std::size_t line_no, InspectionRecord& out) {
  out.sample_id = detail::require_string(row, line_no, "sample_id");
  try {
    out.mode = inspect_mode_from_string(detail::require_string(row, line_no, "mode"));
    out.verdict = verdict_from_string(detail::require_string(row, line_no, "verdict"));
  } catch (const std::invalid_argument& e) {
    throw CorpusError::malformed_line(line_no, e.what());
  }
  out.answer_text = detail::require_string(row, line_no, "answer_text");
  out.inspector = detail::optional_string(row, line_no, "inspector").value_or("");
  out.graded_at = detail::optional_string(row, line_no, "graded_at").value_or("");
  out.question = detail::optional_string(row, line_no, "question").value_or("");
  out.gt_answer = detail::optional_string(row, line_no, "gt_answer").value_or("");
  out.prompt_id = detail::optional_string(row, line_no, "prompt_id").value_or("");
  out.note = detail::optional_string(row, line_no, "note").value_or("");
}

std::vector<std::string> validate_record(const InspectionRecord& r) {
  std::vector<std::string> v;
  if (r.sample_id.empty()) v.emplace_back("sample_id empty");
  if (r.verdict != Verdict::ungraded) {
    if (r.inspector.empty()) v.emplace_back("graded record without inspector");
    if (!r.graded_at.empty() && !is_rfc3339(r.graded_at)) v.emplace_back("graded_at not RFC 3339");
  }
  // Hand-written rows may omit prompt_id; when present it must match the mode.
  if (r.mode == InspectMode::direct_answer && !r.prompt_id.empty() && r.prompt_id != kVflanDirectPromptId) {
    v.emplace_back("direct_answer record not produced by " + std::string(kVflanDirectPromptId));
  }
  if (r.mode == InspectMode::caption_then_answer && !r.prompt_id.empty() && r.prompt_id != kVflanPromptId) {
    v.emplace_back("caption_then_answer record not produced by " + std::string(kVflanPromptId));
  }
  return v;
}

std::vector<InspectionRecord> load_annotations(const std::filesystem::path& path) {
  std::vector<InspectionRecord> out;
  for (const auto& [line_no, row] : read_jsonl(path)) {
    InspectionRecord r;
    from_json_row(row, line_no, r);
    if (auto v = validate_record(r); !v.empty()) throw CorpusError::malformed_line(line_no, v.front());
    out.push_back(std::move(r));
  }
  return out;
}

void append_annotations(std::span<const InspectionRecord> records, const std::filesystem::path& path) {
  std::string content;
  for (const auto& r : records) content += dump_line(to_json(r));
  std::FILE* f = std::fopen(path.c_str(), "ab");
  if (!f) throw CorpusError::io_error("cannot open " + path.string() + " for append");
  const bool ok = std::fwrite(content.data(), 1, content.size(), f) == content.size();
  const bool closed = std::fclose(f) == 0;
  if (!ok || !closed) throw CorpusError::io_error("short write to " + path.string());
}

std::map<std::string, std::size_t> stratified_quotas(const std::map<std::string, std::size_t>& category_sizes,
                                                     std::size_t n) {
  std::map<std::string, std::size_t> quotas;
  std::vector<std::string> open;  // name order, inherited from the map
  for (const auto& [name, size] : category_sizes) {
    quotas[name] = 0;
    if (size > 0) open.push_back(name);
  }
  std::size_t remaining = n;
  while (remaining > 0 && !open.empty()) {
    const std::size_t share = remaining / open.size();
    const std::size_t residue = remaining % open.size();
    // Every category has the same fractional share, so the largest-remainder
    // residue goes to the first `residue` names.
    std::vector<std::string> still_open;
    std::size_t capped_total = 0;
    bool any_capped = false;
    for (std::size_t i = 0; i < open.size(); ++i) {
      const std::size_t want = share + (i < residue ? 1 : 0);
      if (category_sizes.at(open[i]) <= want) any_capped = true;
    }
    if (!any_capped) {
      for (std::size_t i = 0; i < open.size(); ++i) quotas[open[i]] = share + (i < residue ? 1 : 0);
      remaining = 0;
      break;
    }
    // Categories that cannot meet their share contribute everything; the
    // rest is re-divided among those still open.
    for (std::size_t i = 0; i < open.size(); ++i) {
      const std::size_t want = share + (i < residue ? 1 : 0);
      const std::size_t size = category_sizes.at(open[i]);
      if (size <= want) {
        quotas[open[i]] = size;
        capped_total += size;
      } else {
        still_open.push_back(open[i]);
      }
    }
    remaining -= capped_total;
    open = std::move(still_open);
  }
  return quotas;
}

std::vector<std::string> sample_stratified(std::span<const VflanItem> items, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample size must be >= 1");
  if (items.size() < n) {
    throw NotEnoughItems("need " + std::to_string(n) + " items, have " + std::to_string(items.size()));
  }
  std::map<std::string, std::vector<const VflanItem*>> by_category;
  std::unordered_set<std::string_view> ids;
  for (const auto& it : items) {
    if (!ids.insert(it.id).second) throw std::invalid_argument("duplicate item id '" + it.id + "'");
    by_category[it.category].push_back(&it);
  }
  std::map<std::string, std::size_t> sizes;
  for (const auto& [name, members] : by_category) sizes[name] = members.size();
  const auto quotas = stratified_quotas(sizes, n);

  Xoshiro256 rng(seed);
  std::vector<std::string> out;
  out.reserve(n);
  for (auto& [name, members] : by_category) {
    const std::size_t q = quotas.at(name);
    for (std::size_t i = 0; i < q; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
      out.push_back(members[i]->id);
    }
  }
  return out;
}

namespace {

std::vector<InspectionRecord> generate_mode(LvlmClient& client, std::span<const VflanItem> samples, InspectMode mode,
                                            const BatchOptions& options, AblationResult& result) {
  const AblationMode ablation =
      mode == InspectMode::direct_answer ? AblationMode::direct_answer : AblationMode::caption_then_answer;
  const ParseKind kind = mode == InspectMode::direct_answer ? ParseKind::direct : ParseKind::vflan;
  const std::string prompt_id(prompt_id_for(ablation));

  std::vector<DistillItem> work;
  work.reserve(samples.size());
  for (const auto& s : samples) work.push_back({s.id, s.image_ref, ablation_prompt(ablation, s.question), prompt_id});

  std::unordered_map<std::string, RawExchange> exchanges;
  BatchOptions opts = options;
  opts.resume_from.reset();
  const BatchSummary summary =
      distill_batch(client, work, opts, [&](const RawExchange& ex) { exchanges.emplace(ex.item_id, ex); });
  result.requests += summary.requests;

  std::vector<InspectionRecord> records;
  for (const auto& s : samples) {
    InspectionRecord r;
    r.sample_id = s.id;
    r.mode = mode;
    r.question = s.question;
    r.gt_answer = s.gt_answer;
    r.prompt_id = prompt_id;
    const RawExchange& ex = exchanges.at(s.id);
    if (ex.status != ExchangeStatus::ok) {
      r.note = "generation " + std::string(to_string(ex.status)) + (ex.error.empty() ? "" : ": " + ex.error);
      ++result.failures;
    } else {
      try {
        r.answer_text = parse_response(ex.response_text, kind, ParseMode::lenient).answer;
      } catch (const ParseError& e) {
        r.note = std::string("parse failed: ") + e.what();
        ++result.failures;
      }
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace

AblationResult run_ablation(LvlmClient& client, std::span<const VflanItem> samples,
                            const std::set<InspectMode>& modes, const BatchOptions& options) {
  AblationResult result;
  for (InspectMode mode : modes) {
    if (mode == InspectMode::vflan_gt) {
      for (const auto& s : samples) {
        InspectionRecord r;
        r.sample_id = s.id;
        r.mode = mode;
        r.answer_text = s.gt_answer;
        r.question = s.question;
        r.gt_answer = s.gt_answer;
        result.records.push_back(std::move(r));
      }
      continue;
    }
    auto records = generate_mode(client, samples, mode, options, result);
    std::move(records.begin(), records.end(), std::back_inserter(result.records));
  }
  return result;
}

GradeSummary grade(std::span<const InspectionRecord> pending, std::istream& in, std::ostream& out,
                   const std::string& inspector, const std::function<void(const InspectionRecord&)>& sink) {
  if (inspector.empty()) throw std::invalid_argument("inspector name is required");
  GradeSummary summary;
  std::size_t position = 0;
  const std::size_t total = static_cast<std::size_t>(
      std::count_if(pending.begin(), pending.end(), [](const auto& r) { return r.verdict == Verdict::ungraded; }));
  for (const auto& rec : pending) {
    if (rec.verdict != Verdict::ungraded) continue;
    ++position;
    out << "\n[" << position << "/" << total << "] " << rec.sample_id << " (" << to_string(rec.mode) << ")\n"
        << "Question: " << rec.question << "\n"
        << "Ground truth: " << rec.gt_answer << "\n"
        << "Answer: " << (rec.answer_text.empty() ? "<none: " + rec.note + ">" : rec.answer_text) << "\n";
    for (;;) {
      out << "[c]orrect [i]ncorrect [u]nsure [s]kip [q]uit > " << std::flush;
      std::string line;
      if (!std::getline(in, line)) {
        summary.quit = true;
        return summary;
      }
      const auto pos = line.find_first_not_of(" \t\r");
      const char key = pos == std::string::npos ? '\0' : static_cast<char>(std::tolower(line[pos]));
      if (key == 'q') {
        summary.quit = true;
        return summary;
      }
      if (key == 's') {
        ++summary.skipped;
        break;
      }
      Verdict v;
      if (key == 'c') {
        v = Verdict::correct;
      } else if (key == 'i') {
        v = Verdict::incorrect;
      } else if (key == 'u') {
        v = Verdict::unsure;
      } else {
        continue;
      }
      InspectionRecord graded = rec;
      graded.verdict = v;
      graded.inspector = inspector;
      graded.graded_at = utc_timestamp();
      sink(graded);
      ++summary.graded;
      break;
    }
  }
  return summary;
}

std::vector<InspectionRecord> resolve_annotations(std::span<const InspectionRecord> log) {
  std::vector<InspectionRecord> out;
  std::map<std::pair<std::string, InspectMode>, std::size_t> slot;
  for (const auto& r : log) {
    auto [it, fresh] = slot.try_emplace({r.sample_id, r.mode}, out.size());
    if (fresh) {
      out.push_back(r);
    } else {
      out[it->second] = r;
    }
  }
  return out;
}

NoGradedRecords::NoGradedRecords(InspectMode mode)
    : std::runtime_error("no graded records for mode " + std::string(to_string(mode))), mode_(mode) {}

AccuracyReport tally_accuracy(std::span<const InspectionRecord> records, bool include_unsure) {
  AccuracyReport report;
  for (const auto& r : records) {
    ModeAccuracy& m = report.per_mode[r.mode];
    switch (r.verdict) {
      case Verdict::correct: ++m.correct; break;
      case Verdict::incorrect: ++m.incorrect; break;
      case Verdict::unsure:
        if (include_unsure) {
          ++m.incorrect;
        } else {
          ++m.excluded_unsure;
          ++report.excluded_unsure;
        }
        break;
      case Verdict::ungraded: break;
    }
  }
  for (auto& [mode, m] : report.per_mode) {
    m.graded = m.correct + m.incorrect;
    if (m.graded == 0) throw NoGradedRecords(mode);
    m.accuracy = 100.0 * static_cast<double>(m.correct) / static_cast<double>(m.graded);
  }
  return report;
}

std::string format_accuracy(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", pct);
  return buf;
}

Json AccuracyReport::to_json() const {
  Json j;
  j["modes"] = Json::object();
  for (const auto& [mode, m] : per_mode) {
    Json row;
    row["graded"] = m.graded;
    row["correct"] = m.correct;
    row["incorrect"] = m.incorrect;
    row["excluded_unsure"] = m.excluded_unsure;
    row["accuracy"] = m.accuracy;
    row["accuracy_display"] = format_accuracy(m.accuracy);
    j["modes"][std::string(to_string(mode))] = std::move(row);
  }
  j["excluded_unsure"] = excluded_unsure;
  return j;
}

}  // namespace capdistill
