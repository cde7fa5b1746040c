#include "capdistill/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "capdistill/clock.hpp"
#include "capdistill/curate.hpp"
#include "capdistill/distill.hpp"
#include "capdistill/domains.hpp"
#include "capdistill/inspect.hpp"
#include "capdistill/lda.hpp"
#include "capdistill/mix.hpp"
#include "capdistill/mock.hpp"
#include "capdistill/parse.hpp"
#include "capdistill/projection.hpp"
#include "capdistill/topic_naming.hpp"

namespace capdistill::cli {

namespace fs = std::filesystem;

std::string_view to_string(UsageError::Kind k) {
  switch (k) {
    case UsageError::Kind::unknown_command: return "UnknownCommand";
    case UsageError::Kind::unknown_flag: return "UnknownFlag";
    case UsageError::Kind::missing_required: return "MissingRequired";
    case UsageError::Kind::invalid_value: return "InvalidValue";
  }
  return "?";
}

namespace {

const std::set<std::string> kCommands{"curate", "distill", "parse", "mix", "stats", "topics", "inspect", "validate"};

/// Config-backed flags; set only when given on the command line.
struct Overrides {
  std::optional<std::string> work_dir;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  std::optional<int> concurrency;
  std::optional<int> rpm;
  std::optional<int> max_attempts;
  std::optional<std::int64_t> base_backoff_ms;
  std::optional<std::int64_t> min_dim;
  std::optional<double> tau;
  std::optional<std::string> blocklist;
  bool use_urls = false;
};

void apply(const Overrides& o, PipelineConfig& c) {
  if (o.work_dir) c.work_dir = *o.work_dir;
  if (o.endpoint) c.provider.endpoint = *o.endpoint;
  if (o.model) c.provider.model = *o.model;
  if (o.temperature) c.provider.temperature = *o.temperature;
  if (o.max_tokens) c.provider.max_tokens = *o.max_tokens;
  if (o.concurrency) c.distill.concurrency = *o.concurrency;
  if (o.rpm) c.distill.rpm = *o.rpm;
  if (o.max_attempts) c.distill.max_attempts = *o.max_attempts;
  if (o.base_backoff_ms) c.distill.base_backoff_ms = *o.base_backoff_ms;
  if (o.min_dim) c.curation.min_dim = *o.min_dim;
  if (o.tau) c.curation.tau = *o.tau;
  if (o.blocklist) c.curation.blocklist = *o.blocklist;
  if (o.use_urls) c.provider.send_image_urls = true;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

CommandPlan parse_invocation(const std::vector<std::string>& args) {
  CLI::App app{"Caption-then-QA synthetic data pipeline", "capdistill"};
  app.require_subcommand(1);
  app.fallthrough();

  CommandPlan plan;
  CommandOptions& o = plan.options;
  Overrides ov;
  std::string config_path;
  std::string modes_csv;
  bool no_dedup = false;
  bool no_names = false;

  app.add_option("--config", config_path, "JSON pipeline config file");
  app.add_option("--work-dir", ov.work_dir, "Directory that relative paths resolve against");

  auto add_provider_flags = [&](CLI::App* sub) {
    sub->add_option("--endpoint", ov.endpoint, "LVLM endpoint URL, or 'mock'");
    sub->add_option("--model", ov.model, "LVLM model name");
    sub->add_option("--temperature", ov.temperature);
    sub->add_option("--max-tokens", ov.max_tokens);
  };
  auto add_rate_flags = [&](CLI::App* sub) {
    sub->add_option("--concurrency", ov.concurrency, "Requests in flight");
    sub->add_option("--rpm", ov.rpm, "Request starts per minute");
    sub->add_option("--max-attempts", ov.max_attempts);
    sub->add_option("--base-backoff-ms", ov.base_backoff_ms);
  };

  auto* curate = app.add_subcommand("curate", "Filter, fetch and deduplicate an image manifest");
  curate->add_option("--input", o.input, "ImageMeta JSONL")->required();
  curate->add_option("--output", o.output, "Kept ImageMeta JSONL")->required();
  curate->add_option("--report", o.report, "Full curation report JSON");
  curate->add_option("--min-dim", ov.min_dim);
  curate->add_option("--tau", ov.tau, "Similarity threshold for near duplicates");
  curate->add_option("--blocklist", ov.blocklist, "URL pattern file");
  curate->add_flag("--fetch", o.fetch, "Download images");
  curate->add_flag("--fetch-mandatory", o.fetch_mandatory, "Drop images whose download failed");
  curate->add_option("--image-dir", o.image_dir);
  curate->add_flag("--no-dedup", no_dedup);
  curate->add_flag("--dedup-before-fetch", o.dedup_before_fetch);
  add_rate_flags(curate);

  auto* distill = app.add_subcommand("distill", "Send images and prompts to the LVLM");
  distill->add_option("--source", o.source)->check(CLI::IsMember({"laion", "vflan"}));
  distill->add_option("--input", o.input, "ImageMeta or VflanItem JSONL")->required();
  distill->add_option("--output", o.output, "RawExchange JSONL")->required();
  distill->add_flag("--resume", o.resume, "Skip items already present in --output");
  distill->add_flag("--use-urls", ov.use_urls, "Send image URLs instead of bytes");
  add_provider_flags(distill);
  add_rate_flags(distill);

  auto* parse = app.add_subcommand("parse", "Turn raw exchanges into dataset records");
  parse->add_option("--source", o.source)->check(CLI::IsMember({"laion", "vflan"}));
  parse->add_option("--exchanges", o.exchanges)->required();
  parse->add_option("--items", o.items, "The items that were distilled")->required();
  parse->add_option("--captions", o.captions)->required();
  parse->add_option("--instructs", o.instructs)->required();
  parse->add_option("--rejects", o.rejects);
  parse->add_option("--mode", o.parse_mode)->check(CLI::IsMember({"strict", "lenient"}));
  parse->add_option("--refusal-patterns", o.refusal_patterns);
  parse->add_flag("--exclude-refusals", o.exclude_refusals);

  auto* mix = app.add_subcommand("mix", "Compose a shuffled training mixture");
  mix->add_option("--spec", o.spec, "MixSpec JSON")->required();
  mix->add_option("--output", o.output, "MixEntryRef JSONL");
  mix->add_option("--seed", o.seed);
  mix->add_option("--materialize", o.materialize, "Also write the full records in mix order");
  mix->add_option("--verify", o.verify, "Check an existing mix file against the spec");

  auto* stats = app.add_subcommand("stats", "Corpus statistics");
  stats->require_subcommand(1);
  stats->fallthrough();
  auto* domains = stats->add_subcommand("domains", "URL domain distribution");
  domains->add_option("--input", o.input, "ImageMeta JSONL")->required();
  domains->add_option("--output", o.output, "domains.csv");
  domains->add_option("--top-k", o.top_k);
  domains->add_flag("--full-host", o.full_host);

  auto* topics = app.add_subcommand("topics", "LDA topic analysis of captions");
  topics->add_option("--input", o.inputs, "CaptionRecord JSONL (repeatable)")->required();
  topics->add_option("--output", o.output, "topics.json")->required();
  topics->add_option("--coords", o.coords, "coords.csv");
  topics->add_option("--k", o.topics);
  topics->add_option("--iters", o.iterations);
  topics->add_option("--alpha", o.alpha);
  topics->add_option("--beta", o.beta);
  topics->add_option("--seed", o.seed);
  topics->add_option("--sample", o.sample);
  topics->add_option("--stopwords", o.stopwords);
  topics->add_flag("--no-names", no_names, "Skip LLM topic naming");
  add_provider_flags(topics);

  auto* inspect = app.add_subcommand("inspect", "Manual inspection workflow");
  inspect->require_subcommand(1);
  inspect->fallthrough();
  auto* sample = inspect->add_subcommand("sample", "Category-stratified sample");
  sample->add_option("--input", o.input, "VflanItem JSONL")->required();
  sample->add_option("--output", o.output)->required();
  sample->add_option("--n", o.n);
  sample->add_option("--seed", o.seed);
  auto* run_cmd = inspect->add_subcommand("run", "Generate answers for the ablation");
  run_cmd->add_option("--input", o.input, "Sampled VflanItem JSONL")->required();
  run_cmd->add_option("--output", o.annotations, "Annotation JSONL (appended)")->required();
  run_cmd->add_option("--modes", modes_csv, "Comma list of gt, direct, caption");
  add_provider_flags(run_cmd);
  add_rate_flags(run_cmd);
  auto* grade_cmd = inspect->add_subcommand("grade", "Grade ungraded answers interactively");
  grade_cmd->add_option("--annotations", o.annotations)->required();
  grade_cmd->add_option("--inspector", o.inspector)->required();
  auto* tally = inspect->add_subcommand("tally", "Accuracy per mode");
  tally->add_option("--annotations", o.annotations)->required();
  tally->add_flag("--include-unsure", o.include_unsure);

  auto* validate = app.add_subcommand("validate", "Check every record of a JSONL file");
  validate->add_option("--input", o.input)->required();
  validate->add_option("--type", o.record_type)
      ->required()
      ->check(CLI::IsMember({"image", "vflan", "caption", "instruct", "exchange", "inspection"}));

  if (!args.empty() && !args.front().starts_with("-") && !kCommands.contains(args.front())) {
    throw UsageError(UsageError::Kind::unknown_command, "unknown command '" + args.front() + "'", app.help());
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    plan.command = "help";
    plan.help_text = app.help();
    return plan;
  } catch (const CLI::CallForAllHelp&) {
    plan.command = "help";
    plan.help_text = app.help("", CLI::AppFormatMode::All);
    return plan;
  } catch (const CLI::ExtrasError& e) {
    const bool no_command = app.get_subcommands().empty();
    const auto& extras = app.remaining();
    const bool positional = !extras.empty() && !extras.front().starts_with("-");
    if (no_command && positional) {
      throw UsageError(UsageError::Kind::unknown_command, e.what(), app.help());
    }
    throw UsageError(UsageError::Kind::unknown_flag, e.what(), app.help());
  } catch (const CLI::RequiredError& e) {
    throw UsageError(UsageError::Kind::missing_required, e.what(), app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(UsageError::Kind::invalid_value, e.what(), app.help());
  }

  for (auto* sub : app.get_subcommands()) {
    plan.command = sub->get_name();
    for (auto* nested : sub->get_subcommands()) plan.subcommand = nested->get_name();
  }

  o.dedup = !no_dedup;
  o.name_topics = !no_names;
  if (!modes_csv.empty()) o.modes = split_csv(modes_csv);
  if (plan.command == "inspect" && plan.subcommand == "run") {
    for (const auto& m : o.modes) {
      try {
        inspect_mode_from_string(m);
      } catch (const std::invalid_argument& e) {
        throw UsageError(UsageError::Kind::invalid_value, e.what(), run_cmd->help());
      }
    }
  }

  plan.config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
  apply(ov, plan.config);

  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (plan.config.work_dir / p).lexically_normal().string();
  };
  for (std::string* p : {&o.input, &o.output, &o.report, &o.items, &o.exchanges, &o.captions, &o.instructs,
                         &o.rejects, &o.refusal_patterns, &o.image_dir, &o.spec, &o.materialize, &o.verify,
                         &o.stopwords, &o.coords, &o.annotations}) {
    resolve(*p);
  }
  for (auto& p : o.inputs) resolve(p);
  if (o.image_dir.empty()) o.image_dir = (plan.config.work_dir / "images").lexically_normal().string();
  if (plan.command == "parse" && o.rejects.empty()) {
    o.rejects = (fs::path(o.instructs).parent_path() / "rejects.jsonl").string();
  }
  if (plan.command == "mix" && o.output.empty() && o.verify.empty()) {
    throw UsageError(UsageError::Kind::missing_required, "mix needs --output or --verify", mix->help());
  }
  return plan;
}

namespace {

class FatalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structured one-line-per-event log on stderr.
class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}
  void info(const std::string& msg) { emit("info", msg); }
  void warn(const std::string& msg) { emit("warn", msg); }

 private:
  void emit(const char* level, const std::string& msg) {
    Json j;
    j["level"] = level;
    j["msg"] = msg;
    err_ << j.dump() << '\n';
  }
  std::ostream& err_;
};

struct Outcome {
  Json summary;
  int code = kExitOk;
};

std::string api_key(const std::string& env_var) {
  if (env_var.empty()) return {};
  const char* v = std::getenv(env_var.c_str());
  if (v == nullptr || *v == '\0') throw FatalError("API key environment variable " + env_var + " is not set");
  return v;
}

/// Owns whichever LVLM client the config selects.
struct LvlmHandle {
  std::unique_ptr<HttplibTransport> transport;
  std::unique_ptr<LvlmClient> client;
};

LvlmHandle make_lvlm(const PipelineConfig& c) {
  // The key check comes first so a missing key fails before any request.
  const std::string key = api_key(c.provider.auth_env_var);
  LvlmHandle h;
  if (c.provider.endpoint == kMockEndpoint) {
    h.client = std::make_unique<MockLvlmClient>(c.provider.model.empty() ? "mock-lvlm" : c.provider.model);
    return h;
  }
  if (c.provider.endpoint.empty()) throw FatalError("provider.endpoint is not configured");
  h.transport = std::make_unique<HttplibTransport>();
  h.client = std::make_unique<HttpLvlmClient>(c.provider, key, *h.transport);
  return h;
}

RetryPolicy policy_for(const PipelineConfig& c) {
  RetryPolicy p;
  p.max_attempts = c.distill.max_attempts;
  p.base_backoff_ms = c.distill.base_backoff_ms;
  return p;
}

BatchOptions batch_options(const PipelineConfig& c) {
  BatchOptions b;
  b.concurrency = c.distill.concurrency;
  b.rpm = c.distill.rpm;
  b.distill.policy = policy_for(c);
  b.distill.send_image_urls = c.provider.send_image_urls;
  return b;
}

template <typename T>
void write_jsonl(const std::vector<T>& rows, const std::string& path) {
  std::string content;
  for (const auto& r : rows) content += dump_line(to_json(r));
  atomic_write(path, content);
}

Outcome cmd_curate(const CommandPlan& plan, Log& log) {
  const auto& o = plan.options;
  const auto& c = plan.config;
  const auto images = load_records<ImageMeta>(o.input);
  log.info("loaded " + std::to_string(images.size()) + " images from " + o.input);

  CurationOptions opts;
  opts.min_dim = c.curation.min_dim;
  if (!c.curation.blocklist.empty()) opts.blocklist = load_pattern_file(c.curation.blocklist);
  opts.blocklist_mode = c.curation.blocklist_regex ? BlocklistMode::regex : BlocklistMode::substring;
  opts.fetch = o.fetch || o.fetch_mandatory;
  opts.fetch_mandatory = o.fetch_mandatory;
  opts.image_dir = o.image_dir;
  opts.fetch_options.concurrency = c.distill.concurrency;
  opts.fetch_options.policy = policy_for(c);
  opts.dedup = o.dedup;
  opts.dedup_before_fetch = o.dedup_before_fetch;
  opts.dedup_config.tau = c.curation.tau;

  std::unique_ptr<EmbeddingProvider> provider;
  std::unique_ptr<HttplibTransport> embed_transport;
  if (opts.dedup) {
    const std::string key = api_key(c.embedding.auth_env_var);
    if (c.embedding.endpoint == kMockEndpoint) {
      provider = std::make_unique<MockEmbeddingProvider>(c.embedding.dims == 0 ? 64 : c.embedding.dims, 0);
    } else if (c.embedding.endpoint.empty()) {
      throw FatalError("embedding.endpoint is not configured (use --no-dedup to skip deduplication)");
    } else {
      embed_transport = std::make_unique<HttplibTransport>();
      provider = std::make_unique<HttpEmbeddingProvider>(
          EmbeddingEndpoint{c.embedding.endpoint, c.embedding.model, key}, *embed_transport);
    }
  }
  // Image hosts are not the rate-limited model endpoint, so downloads only
  // share the concurrency bound.
  HttplibTransport transport;

  const CurationOutcome out = run_curation(images, opts, provider.get(), opts.fetch ? &transport : nullptr);
  write_jsonl(out.kept, o.output);
  if (!o.report.empty()) atomic_write(o.report, out.report.to_json().dump(2) + "\n");

  Json s;
  s["command"] = "curate";
  s["input_count"] = out.report.input_count;
  s["kept"] = out.report.kept_count;
  s["rejected_resolution"] = out.report.rejected_resolution;
  s["rejected_blocklist"] = out.report.rejected_blocklist;
  s["rejected_duplicate"] = out.report.rejected_duplicate;
  s["fetch_failures"] = out.report.fetch_failures;
  s["balanced"] = out.report.balanced();
  s["output"] = o.output;
  return {s, out.report.fetch_failures > 0 ? kExitItemFailures : kExitOk};
}

Outcome cmd_distill(const CommandPlan& plan, Log& log) {
  const auto& o = plan.options;
  const auto& c = plan.config;
  const Source source = source_from_string(o.source);
  std::vector<DistillItem> items;
  if (source == Source::laion) {
    items = make_items(load_records<ImageMeta>(o.input), c.provider.send_image_urls);
  } else {
    items = make_items(load_records<VflanItem>(o.input));
  }
  LvlmHandle lvlm = make_lvlm(c);

  BatchOptions opts = batch_options(c);
  std::vector<RawExchange> previous;
  if (o.resume && fs::exists(o.output)) {
    previous = load_records<RawExchange>(o.output);
    opts.resume_from = o.output;
  }
  log.info("distilling " + std::to_string(items.size()) + " items with " + lvlm.client->model_id());

  std::vector<RawExchange> fresh;
  const BatchSummary summary = distill_batch(*lvlm.client, items, opts, [&](const RawExchange& ex) {
    if (ex.status != ExchangeStatus::ok) log.warn("item " + ex.item_id + " " + std::string(to_string(ex.status)));
    fresh.push_back(ex);
  });
  previous.insert(previous.end(), fresh.begin(), fresh.end());
  write_records(previous, o.output);

  Json s = summary.to_json();
  s["command"] = "distill";
  s["source"] = o.source;
  s["output"] = o.output;
  return {s, summary.failed > 0 ? kExitItemFailures : kExitOk};
}

Outcome cmd_parse(const CommandPlan& plan, Log& log) {
  const auto& o = plan.options;
  const auto exchanges = load_records<RawExchange>(o.exchanges);
  AssembleOptions opts;
  opts.mode = parse_mode_from_string(o.parse_mode);
  if (!o.refusal_patterns.empty()) opts.refusal_patterns = load_pattern_file(o.refusal_patterns);
  opts.exclude_refusals = o.exclude_refusals;

  AssembleResult r;
  if (source_from_string(o.source) == Source::laion) {
    r = assemble_records(exchanges, load_records<ImageMeta>(o.items), opts);
  } else {
    r = assemble_records(exchanges, load_records<VflanItem>(o.items), opts);
  }
  write_records(r.captions, o.captions);
  write_records(r.instructs, o.instructs);
  write_jsonl(r.rejects, o.rejects);
  for (const auto& rej : r.rejects) log.warn("rejected " + rej.item_id + ": " + rej.error_type);

  Json s;
  s["command"] = "parse";
  s["exchanges"] = exchanges.size();
  s["captions"] = r.captions.size();
  s["instructs"] = r.instructs.size();
  s["rejects"] = r.rejects.size();
  s["excluded_refusals"] = r.excluded_refusals;
  return {s, r.rejects.empty() ? kExitOk : kExitItemFailures};
}

Outcome cmd_mix(const CommandPlan& plan, Log& log) {
  const auto& o = plan.options;
  MixSpec spec = load_mix_spec(o.spec);
  if (o.seed) spec.seed = *o.seed;

  if (!o.verify.empty()) {
    const auto refs = load_mix(o.verify, spec);
    const MixVerification v = verify_mix(refs, spec);
    Json s = v.to_json(spec);
    s["command"] = "mix";
    return {s, v.pass ? kExitOk : kExitItemFailures};
  }

  const auto refs = compose_mix(spec);
  write_mix(refs, spec, o.output);
  log.info("wrote " + std::to_string(refs.size()) + " refs to " + o.output);
  if (!o.materialize.empty()) materialize_mix(refs, spec, o.materialize);
  const MixVerification v = verify_mix(refs, spec);

  Json s;
  s["command"] = "mix";
  s["stage"] = to_string(spec.stage);
  s["seed"] = spec.seed;
  s["expected_total"] = spec.expected_total();
  s["total"] = refs.size();
  s["pass"] = v.pass;
  s["output"] = o.output;
  if (!o.materialize.empty()) s["materialized"] = o.materialize;
  return {s, v.pass ? kExitOk : kExitFatal};
}

Outcome cmd_stats(const CommandPlan& plan, Log& log) {
  const auto& o = plan.options;
  const auto images = load_records<ImageMeta>(o.input);
  const DomainReport report =
      domain_stats(images, o.top_k, o.full_host ? DomainMode::full_host : DomainMode::last_two_labels);
  if (!o.output.empty()) atomic_write(o.output, domains_csv(report));
  for (const auto& e : report.errors) log.warn("unparsable URL at index " + std::to_string(e.index) + ": " + e.url);

  Json s;
  s["command"] = "stats domains";
  s["unique_domains"] = report.unique_domains;
  s["total"] = report.total;
  s["errors"] = report.errors.size();
  s["top"] = Json::array();
  for (const auto& d : report.top) {
    Json row;
    row["domain"] = d.domain;
    row["count"] = d.count;
    row["pct"] = d.pct;
    row["cumulative_pct"] = d.cumulative_pct;
    s["top"].push_back(std::move(row));
  }
  return {s, kExitOk};
}

Outcome cmd_topics(const CommandPlan& plan, Log& log) {
  const auto& o = plan.options;
  std::vector<CaptionRecord> records;
  for (const auto& path : o.inputs) {
    auto part = load_records<CaptionRecord>(path);
    std::move(part.begin(), part.end(), std::back_inserter(records));
  }
  LdaConfig cfg;
  cfg.topics = o.topics;
  cfg.alpha = o.alpha;
  cfg.beta = o.beta;
  cfg.iterations = o.iterations;
  cfg.seed = o.seed.value_or(0);
  cfg.sample_size = o.sample;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FatalError(e.what());
  }

  std::vector<std::size_t> chosen = sample_indices(records.size(), o.sample.value_or(records.size()), cfg.seed);
  std::vector<std::string> texts;
  texts.reserve(chosen.size());
  for (auto i : chosen) texts.push_back(records[i].caption);

  TokenizeOptions tok;
  if (!o.stopwords.empty()) tok.stopwords = load_pattern_file(o.stopwords);
  const TokenizedCorpus corpus = tokenize_corpus(texts, tok);
  log.info("fitting " + std::to_string(cfg.topics) + " topics over " + std::to_string(texts.size()) +
           " documents, vocabulary " + std::to_string(corpus.vocab.size()));
  const TopicModel model = lda_fit(corpus, cfg);

  std::vector<std::vector<std::string>> words(cfg.topics);
  std::vector<std::vector<std::pair<std::string, double>>> weighted(cfg.topics);
  for (std::size_t k = 0; k < cfg.topics; ++k) {
    weighted[k] = top_words(model, k, 10);
    for (const auto& [w, _] : weighted[k]) words[k].push_back(w);
  }

  TopicNames names;
  if (o.name_topics && !plan.config.provider.endpoint.empty()) {
    LvlmHandle lvlm = make_lvlm(plan.config);
    TopicNamingOptions nopts;
    nopts.policy = policy_for(plan.config);
    names = name_topics(*lvlm.client, words, nopts);
  } else {
    for (std::size_t k = 0; k < cfg.topics; ++k) names.names.push_back("topic-" + std::to_string(k));
  }
  for (const auto& w : names.warnings) log.warn(w);

  const auto props = topic_proportions(model);
  Json out;
  out["config"] = {{"k", cfg.topics},
                   {"alpha", cfg.effective_alpha()},
                   {"beta", cfg.beta},
                   {"iterations", cfg.iterations},
                   {"seed", cfg.seed},
                   {"documents", texts.size()}};
  out["topics"] = Json::array();
  for (std::size_t k = 0; k < cfg.topics; ++k) {
    Json t;
    t["id"] = k;
    t["name"] = names.names[k];
    t["proportion"] = props[k];
    t["top_words"] = Json::array();
    for (const auto& [w, weight] : weighted[k]) t["top_words"].push_back({{"word", w}, {"weight", weight}});
    out["topics"].push_back(std::move(t));
  }
  atomic_write(o.output, out.dump(2) + "\n");

  bool coords_written = false;
  if (!o.coords.empty()) {
    try {
      const Projection p = project_2d(doc_topic_proportions(model));
      std::ostringstream csv;
      csv.precision(17);
      csv << "doc_id,x,y\n";
      for (Eigen::Index d = 0; d < p.coords.rows(); ++d) {
        csv << records[chosen[static_cast<std::size_t>(d)]].id << ',' << p.coords(d, 0) << ',' << p.coords(d, 1)
            << '\n';
      }
      atomic_write(o.coords, csv.str());
      coords_written = true;
    } catch (const DegenerateInput& e) {
      log.warn(std::string("no projection written: ") + e.what());
    }
  }

  Json s;
  s["command"] = "topics";
  s["topics"] = cfg.topics;
  s["documents"] = texts.size();
  s["vocab"] = corpus.vocab.size();
  s["tokens"] = model.total_tokens();
  s["output"] = o.output;
  s["coords_written"] = coords_written;
  s["naming_warnings"] = names.warnings.size();
  return {s, kExitOk};
}

Outcome cmd_inspect(const CommandPlan& plan, Log& log, Streams& io) {
  const auto& o = plan.options;
  Json s;
  s["command"] = "inspect " + plan.subcommand;

  if (plan.subcommand == "sample") {
    const auto items = load_records<VflanItem>(o.input);
    const auto ids = sample_stratified(items, o.n, o.seed.value_or(0));
    std::map<std::string, const VflanItem*> by_id;
    for (const auto& it : items) by_id[it.id] = &it;
    std::vector<VflanItem> picked;
    std::map<std::string, std::size_t> per_category;
    for (const auto& id : ids) {
      picked.push_back(*by_id.at(id));
      ++per_category[picked.back().category];
    }
    write_records(picked, o.output);
    s["sampled"] = picked.size();
    s["per_category"] = per_category;
    s["output"] = o.output;
    return {s, kExitOk};
  }

  if (plan.subcommand == "run") {
    const auto samples = load_records<VflanItem>(o.input);
    std::set<InspectMode> modes;
    for (const auto& m : o.modes) modes.insert(inspect_mode_from_string(m));
    const bool needs_model = modes.contains(InspectMode::direct_answer) ||
                             modes.contains(InspectMode::caption_then_answer);
    AblationResult r;
    if (needs_model) {
      LvlmHandle lvlm = make_lvlm(plan.config);
      r = run_ablation(*lvlm.client, samples, modes, batch_options(plan.config));
    } else {
      MockLvlmClient unused;
      r = run_ablation(unused, samples, modes, batch_options(plan.config));
    }
    append_annotations(r.records, o.annotations);
    for (const auto& rec : r.records) {
      if (!rec.note.empty()) log.warn(rec.sample_id + " (" + std::string(to_string(rec.mode)) + "): " + rec.note);
    }
    s["records"] = r.records.size();
    s["requests"] = r.requests;
    s["failures"] = r.failures;
    s["output"] = o.annotations;
    return {s, r.failures > 0 ? kExitItemFailures : kExitOk};
  }

  if (plan.subcommand == "grade") {
    const auto log_rows = fs::exists(o.annotations) ? load_annotations(o.annotations)
                                                    : std::vector<InspectionRecord>{};
    const auto current = resolve_annotations(log_rows);
    const GradeSummary g = grade(current, io.in, io.err, o.inspector, [&](const InspectionRecord& rec) {
      append_annotations(std::span<const InspectionRecord>(&rec, 1), o.annotations);
    });
    s["graded"] = g.graded;
    s["skipped"] = g.skipped;
    s["quit"] = g.quit;
    return {s, kExitOk};
  }

  // tally
  const auto current = resolve_annotations(load_annotations(o.annotations));
  const AccuracyReport report = tally_accuracy(current, o.include_unsure);
  Json r = report.to_json();
  r["command"] = s["command"];
  r["include_unsure"] = o.include_unsure;
  return {r, kExitOk};
}

template <typename T>
void validate_rows(const std::vector<std::pair<std::size_t, Json>>& rows, Json& violations, std::size_t& valid) {
  std::set<std::string> seen;
  for (const auto& [line_no, row] : rows) {
    std::vector<std::string> problems;
    std::string id;
    try {
      T rec;
      from_json_row(row, line_no, rec);
      problems = validate_record(rec);
      if constexpr (requires { record_id(rec); }) {
        id = std::string(record_id(rec));
        if (!id.empty() && !seen.insert(id).second) problems.push_back("duplicate id");
      }
    } catch (const CorpusError& e) {
      problems.emplace_back(e.what());
    }
    if (problems.empty()) {
      ++valid;
    } else {
      violations.push_back({{"line", line_no}, {"id", id}, {"problems", problems}});
    }
  }
}

Outcome cmd_validate(const CommandPlan& plan) {
  const auto& o = plan.options;
  const auto rows = read_jsonl(o.input);
  Json violations = Json::array();
  std::size_t valid = 0;
  const std::string& t = o.record_type;
  if (t == "image") validate_rows<ImageMeta>(rows, violations, valid);
  if (t == "vflan") validate_rows<VflanItem>(rows, violations, valid);
  if (t == "caption") validate_rows<CaptionRecord>(rows, violations, valid);
  if (t == "instruct") validate_rows<InstructRecord>(rows, violations, valid);
  if (t == "exchange") validate_rows<RawExchange>(rows, violations, valid);
  if (t == "inspection") validate_rows<InspectionRecord>(rows, violations, valid);

  Json s;
  s["command"] = "validate";
  s["type"] = t;
  s["records"] = rows.size();
  s["valid"] = valid;
  s["violations"] = violations;
  return {s, violations.empty() ? kExitOk : kExitItemFailures};
}

Json error_summary(std::string_view status, const std::string& type, const std::string& message) {
  Json j;
  j["status"] = status;
  j["error_type"] = type;
  j["error"] = message;
  return j;
}

}  // namespace

int run(const CommandPlan& plan, Streams io) {
  Log log(io.err);
  if (plan.command == "help") {
    io.out << plan.help_text;
    return kExitOk;
  }
  try {
    plan.config.validate();
    Outcome out;
    if (plan.command == "curate") {
      out = cmd_curate(plan, log);
    } else if (plan.command == "distill") {
      out = cmd_distill(plan, log);
    } else if (plan.command == "parse") {
      out = cmd_parse(plan, log);
    } else if (plan.command == "mix") {
      out = cmd_mix(plan, log);
    } else if (plan.command == "stats") {
      out = cmd_stats(plan, log);
    } else if (plan.command == "topics") {
      out = cmd_topics(plan, log);
    } else if (plan.command == "inspect") {
      out = cmd_inspect(plan, log, io);
    } else if (plan.command == "validate") {
      out = cmd_validate(plan);
    } else {
      io.out << error_summary("usage_error", "UnknownCommand", "unknown command '" + plan.command + "'").dump()
             << '\n';
      return kExitUsage;
    }
    out.summary["status"] = out.code == kExitOk ? "ok" : "item_failures";
    io.out << out.summary.dump() << '\n';
    return out.code;
  } catch (const ConfigError& e) {
    log.warn(e.what());
    io.out << error_summary("fatal", "ConfigError", e.what()).dump() << '\n';
  } catch (const CorpusError& e) {
    log.warn(e.what());
    io.out << error_summary("fatal", "CorpusError", e.what()).dump() << '\n';
  } catch (const NoGradedRecords& e) {
    log.warn(e.what());
    io.out << error_summary("fatal", "NoGradedRecords", e.what()).dump() << '\n';
  } catch (const std::exception& e) {
    log.warn(e.what());
    io.out << error_summary("fatal", "Error", e.what()).dump() << '\n';
  }
  return kExitFatal;
}

int main_entry(const std::vector<std::string>& args, Streams io) {
  CommandPlan plan;
  try {
    plan = parse_invocation(args);
  } catch (const UsageError& e) {
    io.err << e.what() << "\n\n" << e.usage();
    io.out << error_summary("usage_error", std::string(to_string(e.kind())), e.what()).dump() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    io.err << e.what() << '\n';
    io.out << error_summary("fatal", "ConfigError", e.what()).dump() << '\n';
    return kExitFatal;
  }
  return run(plan, io);
}

}  // namespace capdistill::cli
