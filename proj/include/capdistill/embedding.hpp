#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capdistill/clock.hpp"
#include "capdistill/http.hpp"
#include "capdistill/retry.hpp"

namespace capdistill {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dims() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Raised by providers and by embed_texts once retries are exhausted.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(int status, std::string body_excerpt)
      : std::runtime_error("provider error (status " + std::to_string(status) + "): " + body_excerpt),
        status_(status),
        excerpt_(std::move(body_excerpt)) {}

  int status() const { return status_; }
  const std::string& body_excerpt() const { return excerpt_; }

 private:
  int status_;
  std::string excerpt_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// One vector per input text, same order. Throws ProviderError.
  virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) = 0;
};

struct EmbeddingEndpoint {
  std::string endpoint;
  std::string model;
  std::string api_key;  // sent as "Authorization: Bearer <key>" when nonempty
};

/// POST {"model", "input": [...]} -> {"data": [{"index", "embedding"}...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(EmbeddingEndpoint endpoint, HttpTransport& transport)
      : endpoint_(std::move(endpoint)), transport_(&transport) {}

  std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override;

 private:
  EmbeddingEndpoint endpoint_;
  HttpTransport* transport_;
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  int concurrency = 1;
  RetryPolicy policy;
  Clock* clock = &SteadyClock::instance();
  TokenBucket* limiter = nullptr;
};

/// Embeds `texts` in batches, retrying retryable provider failures.
/// Output is index-aligned with `texts`; vectors are unit length when
/// `normalize` is set. Throws ProviderError("length mismatch") when a batch
/// returns the wrong number of vectors.
std::vector<EmbeddingVector> embed_texts(EmbeddingProvider& provider, std::span<const std::string> texts,
                                         bool normalize, const EmbedOptions& options = {});

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
void normalize_in_place(EmbeddingVector& v);

}  // namespace capdistill
