#include <gtest/gtest.h>

#include <mutex>

#include "capdistill/distill.hpp"
#include "capdistill/hash.hpp"
#include "capdistill/mock.hpp"
#include "capdistill/parse.hpp"
#include "capdistill/prompts.hpp"
#include "support.hpp"

using namespace capdistill;
using testing_support::TempDir;

namespace {

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

std::vector<DistillItem> make_work(const TempDir& dir, std::size_t n) {
  std::vector<DistillItem> items;
  const std::string prompt = build_prompt(Source::laion, std::nullopt);
  for (std::size_t i = 0; i < n; ++i) {
    const auto path = dir / ("img" + std::to_string(i) + ".jpg");
    testing_support::spit(path, "bytes-" + std::to_string(i));
    items.push_back({"item" + std::to_string(i), path.string(), prompt, std::string(kLaionPromptId)});
  }
  return items;
}

LvlmResponse ok(std::string content) { return {200, std::move(content), ""}; }

}  // namespace

TEST(Prompts, LaionTemplateHasNoSlotsAndKeepsLiteralPlaceholders) {
  const auto& t = prompt_template(kLaionPromptId);
  EXPECT_TRUE(t.slots.empty());
  const std::string p = build_prompt(Source::laion, std::nullopt);
  EXPECT_EQ(p, t.text);
  // The braces in the answer format block are part of the prompt text.
  EXPECT_NE(p.find("<start of candidate questions>\n{candidate questions}\n<end of candidate questions>"),
            std::string::npos);
  EXPECT_NE(p.find("FIVE candidate questions"), std::string::npos);
}

TEST(Prompts, VflanSplicesQuestionVerbatimOnce) {
  const std::string q = "What is {odd} here?\nOptions: (a) x";
  const std::string p = build_prompt(Source::vflan, q);
  EXPECT_EQ(count_of(p, q), 1u);
  EXPECT_NE(p.find("```question\n" + q + "\n```"), std::string::npos);
  EXPECT_NE(p.find("<start of description>\n{description}\n<end of description>"), std::string::npos);
  EXPECT_NE(p.find("{detailed_answer}"), std::string::npos);
}

TEST(Prompts, SlotValuesAreNotRescanned) {
  const std::string p = build_prompt(Source::vflan, "{question}");
  EXPECT_EQ(count_of(p, "{question}"), 1u);
}

TEST(Prompts, ErrorsAreTyped) {
  try {
    build_prompt(Source::vflan, std::nullopt);
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.kind(), PromptError::Kind::missing_slot);
  }
  try {
    build_prompt(Source::vflan, "   ");
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.kind(), PromptError::Kind::empty_question);
  }
  try {
    build_prompt(Source::laion, std::string("q"));
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.kind(), PromptError::Kind::unexpected_slot);
  }
  try {
    prompt_template("nope-v9");
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.kind(), PromptError::Kind::unknown_template);
  }
  const auto& t = prompt_template(kVflanPromptId);
  try {
    render_template(t, {{"question", "q"}, {"extra", "x"}});
    FAIL();
  } catch (const PromptError& e) {
    EXPECT_EQ(e.kind(), PromptError::Kind::unexpected_slot);
    EXPECT_EQ(e.slot(), "extra");
  }
}

TEST(Prompts, DirectAblationDropsDescriptionTask) {
  const std::string p = ablation_prompt(AblationMode::direct_answer, "Q?");
  EXPECT_EQ(p.find("<start of description>"), std::string::npos);
  EXPECT_NE(p.find("<start of detailed answer>"), std::string::npos);
  EXPECT_EQ(ablation_prompt(AblationMode::caption_then_answer, "Q?"), build_prompt(Source::vflan, "Q?"));
  EXPECT_EQ(prompt_id_for(AblationMode::direct_answer), kVflanDirectPromptId);
}

TEST(Prompts, TopicNamingSlotIsPythonExpression) {
  const auto& t = prompt_template(kTopicNamingPromptId);
  ASSERT_EQ(t.slots.size(), 1u);
  EXPECT_EQ(t.slots[0], "str(key_words)");
  const std::string p = render_template(t, {{"str(key_words)", "['a', 'b']"}});
  EXPECT_NE(p.find("```list of words\n['a', 'b']\n```"), std::string::npos);
}

TEST(Distill, RequestDigestIsLengthPrefixed) {
  EXPECT_EQ(request_digest("ab", "c", "m"), sha256_hex("2:ab1:c1:m"));
  EXPECT_NE(request_digest("ab", "c", "m"), request_digest("a", "bc", "m"));
}

TEST(Distill, SucceedsAfterTransientFailures) {
  TempDir dir;
  const auto items = make_work(dir, 1);
  VirtualClock clock;
  ScriptedLvlmClient client(ScriptedLvlmClient::fail_then_succeed({503, 429}), &clock);
  DistillOptions opts;
  opts.clock = &clock;
  const auto ex = distill_one(client, items[0], opts);
  EXPECT_EQ(ex.status, ExchangeStatus::ok);
  EXPECT_EQ(ex.attempts, 3);
  EXPECT_EQ(ex.last_status, 200);
  EXPECT_TRUE(validate_record(ex).empty());
  // backoff_after(1) = 1s, backoff_after(2) = 2s
  const auto sleeps = clock.sleeps();
  ASSERT_EQ(sleeps.size(), 2u);
  EXPECT_EQ(sleeps[0], std::chrono::seconds(1));
  EXPECT_EQ(sleeps[1], std::chrono::seconds(2));
  EXPECT_EQ(ex.request_digest, request_digest(items[0].prompt, "bytes-0", "scripted-lvlm"));
}

TEST(Distill, GivesUpAfterMaxAttempts) {
  TempDir dir;
  const auto items = make_work(dir, 1);
  VirtualClock clock;
  ScriptedLvlmClient client([](const LvlmRequest&, std::size_t) { return LvlmResponse{503, "", "busy"}; }, &clock);
  DistillOptions opts;
  opts.clock = &clock;
  opts.policy.max_attempts = 4;
  const auto ex = distill_one(client, items[0], opts);
  EXPECT_EQ(ex.status, ExchangeStatus::failed);
  EXPECT_EQ(ex.attempts, 4);
  EXPECT_EQ(ex.last_status, 503);
  EXPECT_EQ(client.log().size(), 4u);
}

TEST(Distill, NonRetryableStatusStopsImmediately) {
  TempDir dir;
  const auto items = make_work(dir, 1);
  VirtualClock clock;
  ScriptedLvlmClient client([](const LvlmRequest&, std::size_t) { return LvlmResponse{400, "", "bad request"}; },
                            &clock);
  DistillOptions opts;
  opts.clock = &clock;
  const auto ex = distill_one(client, items[0], opts);
  EXPECT_EQ(ex.status, ExchangeStatus::failed);
  EXPECT_EQ(ex.attempts, 1);
}

TEST(Distill, PolicyRefusalIsRecordedNotRetried) {
  TempDir dir;
  const auto items = make_work(dir, 1);
  VirtualClock clock;
  ScriptedLvlmClient client(
      [](const LvlmRequest&, std::size_t) { return LvlmResponse{400, "", "blocked by content_policy"}; }, &clock);
  DistillOptions opts;
  opts.clock = &clock;
  const auto ex = distill_one(client, items[0], opts);
  EXPECT_EQ(ex.status, ExchangeStatus::refused_by_policy);
  EXPECT_EQ(ex.attempts, 1);
}

TEST(Distill, UnreadableImageFailsWithoutRequest) {
  VirtualClock clock;
  MockLvlmClient client;
  DistillItem item{"x", "/nonexistent/file.jpg", "p", "laion-v1"};
  DistillOptions opts;
  opts.clock = &clock;
  const auto ex = distill_one(client, item, opts);
  EXPECT_EQ(ex.status, ExchangeStatus::failed);
  EXPECT_EQ(ex.attempts, 0);
  EXPECT_EQ(client.calls(), 0u);
}

TEST(Distill, UrlPassThroughSendsUrl) {
  VirtualClock clock;
  std::optional<ImagePayload> seen;
  std::mutex mu;
  ScriptedLvlmClient client(
      [&](const LvlmRequest& r, std::size_t) {
        std::lock_guard lock(mu);
        seen = r.image;
        return ok("x");
      },
      &clock);
  DistillItem item{"x", "https://example.com/a.png", "p", "laion-v1"};
  DistillOptions opts;
  opts.clock = &clock;
  opts.send_image_urls = true;
  const auto ex = distill_one(client, item, opts);
  EXPECT_EQ(ex.status, ExchangeStatus::ok);
  ASSERT_TRUE(seen);
  EXPECT_EQ(seen->kind, ImagePayload::Kind::url);
  EXPECT_EQ(seen->data, "https://example.com/a.png");
  EXPECT_EQ(seen->mime, "image/png");
}

TEST(DistillBatch, OutputFollowsInputOrderUnderConcurrency) {
  TempDir dir;
  const auto items = make_work(dir, 60);
  VirtualClock limiter_clock;
  // Real, varying latency so completions genuinely arrive out of order.
  ScriptedLvlmClient client(
      [](const LvlmRequest& r, std::size_t) { return ok(MockLvlmClient::respond(r.prompt, r.image->data)); },
      &SteadyClock::instance(), [](const LvlmRequest& r, std::size_t) {
        return std::chrono::microseconds(100 + (r.image->data.size() * 7919) % 3000);
      });
  BatchOptions opts;
  opts.concurrency = 8;
  opts.rpm = 600;
  opts.distill.clock = &limiter_clock;
  std::vector<std::string> order;
  const auto summary = distill_batch(client, items, opts, [&](const RawExchange& ex) { order.push_back(ex.item_id); });
  ASSERT_EQ(order.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) EXPECT_EQ(order[i], items[i].item_id);
  EXPECT_EQ(summary.ok, 60u);
  EXPECT_EQ(summary.requests, 60u);
}

TEST(DistillBatch, RequestStartsRespectRateLimit) {
  TempDir dir;
  const auto items = make_work(dir, 200);
  VirtualClock clock;
  MockLvlmClient client;
  BatchOptions opts;
  opts.concurrency = 6;
  opts.rpm = 30;
  opts.distill.clock = &clock;
  std::mutex mu;
  std::vector<double> starts;
  opts.distill.on_attempt = [&](const DistillItem&, int, Clock::duration t) {
    std::lock_guard lock(mu);
    starts.push_back(std::chrono::duration<double>(t).count());
  };
  distill_batch(client, items, opts, [](const RawExchange&) {});
  ASSERT_EQ(starts.size(), 200u);
  EXPECT_LE(testing_support::max_in_window(starts, 60.0), 30u);
  std::sort(starts.begin(), starts.end());
  for (std::size_t i = 1; i < starts.size(); ++i) EXPECT_GE(starts[i] - starts[i - 1], 2.0 - 1e-9);
}

TEST(DistillBatch, ResumeSkipsCompletedItems) {
  TempDir dir;
  const auto items = make_work(dir, 10);
  VirtualClock clock;
  MockLvlmClient client;
  BatchOptions opts;
  opts.rpm = 6000;
  opts.distill.clock = &clock;
  std::string first_half;
  distill_batch(client, std::span(items).first(4), opts,
                [&](const RawExchange& ex) { first_half += dump_line(to_json(ex)); });
  testing_support::spit(dir / "exchanges.jsonl", first_half);
  opts.resume_from = dir / "exchanges.jsonl";
  std::vector<std::string> ids;
  const auto summary = distill_batch(client, items, opts, [&](const RawExchange& ex) { ids.push_back(ex.item_id); });
  EXPECT_EQ(summary.resumed, 4u);
  EXPECT_EQ(ids.front(), "item4");
  EXPECT_EQ(ids.size(), 6u);
  EXPECT_EQ(client.calls(), 10u);
}

TEST(DistillBatch, MockResponsesParseUnderStrictGrammar) {
  TempDir dir;
  const auto items = make_work(dir, 20);
  VirtualClock clock;
  MockLvlmClient client;
  BatchOptions opts;
  opts.rpm = 6000;
  opts.distill.clock = &clock;
  distill_batch(client, items, opts, [](const RawExchange& ex) {
    const auto p = parse_response(ex.response_text, ParseKind::laion, ParseMode::strict);
    const auto v = validate_parsed(p, ParseKind::laion);
    EXPECT_TRUE(v.flags.empty()) << ex.item_id;
  });
}

TEST(HttpLvlm, SimpleProtocolAgainstLocalServer) {
  TempDir dir;
  const auto items = make_work(dir, 1);
  MockHttpServer server;
  server.fail_next(1, 503);
  HttplibTransport transport;
  ProviderConfig cfg;
  cfg.endpoint = server.base_url() + "/lvlm";
  cfg.model = "m";
  HttpLvlmClient client(cfg, "secret", transport);
  VirtualClock clock;
  DistillOptions opts;
  opts.clock = &clock;
  const auto ex = distill_one(client, items[0], opts);
  EXPECT_EQ(ex.status, ExchangeStatus::ok);
  EXPECT_EQ(ex.attempts, 2);
  EXPECT_NO_THROW(parse_response(ex.response_text, ParseKind::laion, ParseMode::strict));
}

TEST(HttpLvlm, RequestBodyShapes) {
  ProviderConfig cfg;
  cfg.model = "m";
  LvlmRequest req{"hello", ImagePayload{ImagePayload::Kind::base64, "QUJD", "image/png"}};
  const Json simple = build_request_body(cfg, req);
  EXPECT_EQ(simple["model"], "m");
  EXPECT_EQ(simple["messages"][0]["content"][0]["text"], "hello");
  EXPECT_EQ(simple["messages"][0]["content"][1]["data_base64"], "QUJD");
  cfg.api_style = ApiStyle::openai;
  const Json openai = build_request_body(cfg, req);
  EXPECT_EQ(openai["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,QUJD");
  EXPECT_EQ(extract_content(ApiStyle::openai, R"({"choices":[{"message":{"content":"x"}}]})"), "x");
  EXPECT_EQ(extract_content(ApiStyle::simple, R"({"content":"y"})"), "y");
  EXPECT_FALSE(extract_content(ApiStyle::simple, "not json"));
}
