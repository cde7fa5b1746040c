#pragma once

// Deterministic stand-ins for the external services, used by the test
// suite and by the CLI when an endpoint is configured as "mock".

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "capdistill/clock.hpp"
#include "capdistill/embedding.hpp"
#include "capdistill/http.hpp"
#include "capdistill/lvlm.hpp"

namespace capdistill {

/// Which prompt a request carries, judged from its text.
enum class PromptKind { laion, vflan, direct, topic_name, other };
PromptKind classify_prompt(const std::string& prompt);

/// Answers every prompt with a well-formed response whose text depends
/// only on the prompt and image, so reruns are byte-identical.
class MockLvlmClient final : public LvlmClient {
 public:
  explicit MockLvlmClient(std::string model = "mock-lvlm") : model_(std::move(model)) {}

  LvlmResponse complete(const LvlmRequest& request) override;
  std::string model_id() const override { return model_; }
  std::size_t calls() const { return calls_.load(); }

  /// The response body complete() returns for this prompt and image.
  static std::string respond(const std::string& prompt, const std::string& image_data);

 private:
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

struct LoggedCall {
  std::string prompt;
  std::string image_data;
  std::size_t attempt = 0;  // 1-based per (prompt, image)
  Clock::duration started{0};
  Clock::duration finished{0};
  int status = 0;
};

/// Programmable client. The responder sees each request with its attempt
/// number for that (prompt, image) pair; an optional latency is slept on
/// the given clock before responding. Every call is logged.
class ScriptedLvlmClient final : public LvlmClient {
 public:
  using Responder = std::function<LvlmResponse(const LvlmRequest&, std::size_t attempt)>;
  using Latency = std::function<Clock::duration(const LvlmRequest&, std::size_t attempt)>;

  explicit ScriptedLvlmClient(Responder responder, Clock* clock = &SteadyClock::instance(), Latency latency = {},
                              std::string model = "scripted-lvlm")
      : responder_(std::move(responder)), clock_(clock), latency_(std::move(latency)), model_(std::move(model)) {}

  LvlmResponse complete(const LvlmRequest& request) override;
  std::string model_id() const override { return model_; }

  std::vector<LoggedCall> log() const;

  /// Responder that fails with the listed statuses on the first attempts
  /// and then falls back to MockLvlmClient::respond.
  static Responder fail_then_succeed(std::vector<int> statuses);

 private:
  Responder responder_;
  Clock* clock_;
  Latency latency_;
  std::string model_;
  mutable std::mutex mu_;
  std::map<std::string, std::size_t> attempts_;
  std::vector<LoggedCall> log_;
};

/// Maps each text to a pseudo-random unit vector derived from its hash and
/// the seed. Identical texts get identical vectors.
class MockEmbeddingProvider final : public EmbeddingProvider {
 public:
  MockEmbeddingProvider(std::size_t dims, std::uint64_t seed) : dims_(dims), seed_(seed) {}

  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;
  std::vector<double> embed_one(const std::string& text) const;
  std::size_t batches() const { return batches_.load(); }

 private:
  std::size_t dims_;
  std::uint64_t seed_;
  std::atomic<std::size_t> batches_{0};
};

/// HttpTransport whose responses come from a callback.
class FunctionTransport final : public HttpTransport {
 public:
  using Handler = std::function<HttpResponse(const std::string& method, const std::string& url,
                                             const std::string& body)>;

  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}

  HttpResponse get(const std::string& url, const HttpHeaders&) override { return call("GET", url, {}); }
  HttpResponse post_json(const std::string& url, const std::string& body, const HttpHeaders&) override {
    return call("POST", url, body);
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  HttpResponse call(const std::string& method, const std::string& url, const std::string& body) {
    ++calls_;
    return handler_(method, url, body);
  }

  Handler handler_;
  std::atomic<std::size_t> calls_{0};
};

/// A localhost HTTP server speaking the "simple" LVLM protocol at
/// POST /lvlm, the embeddings protocol at POST /embeddings, and serving
/// registered images at GET /images/<name>. Stops on destruction.
class MockHttpServer {
 public:
  MockHttpServer();
  ~MockHttpServer();
  MockHttpServer(const MockHttpServer&) = delete;
  MockHttpServer& operator=(const MockHttpServer&) = delete;

  std::string base_url() const;
  void add_image(const std::string& name, std::string bytes, std::string content_type = "image/jpeg");
  /// The next `count` LVLM requests get `status` instead of an answer.
  void fail_next(std::size_t count, int status);

  struct Request {
    std::string method;
    std::string path;
  };
  std::vector<Request> requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace capdistill
