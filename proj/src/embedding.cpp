#include "capdistill/embedding.hpp"

#include <cmath>
#include <numeric>

#include "capdistill/corpus.hpp"
#include "capdistill/parallel.hpp"

namespace capdistill {

namespace {

std::string excerpt(const std::string& body) { return body.size() <= 200 ? body : body.substr(0, 200) + "..."; }

}  // namespace

std::vector<std::vector<double>> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  Json req;
  req["model"] = endpoint_.model;
  req["input"] = Json::array();
  for (const auto& t : texts) req["input"].push_back(t);

  HttpHeaders headers;
  if (!endpoint_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + endpoint_.api_key);
  const HttpResponse res = transport_->post_json(endpoint_.endpoint, req.dump(), headers);
  if (res.status == 0) throw ProviderError(0, res.error);
  if (res.status != 200) throw ProviderError(res.status, excerpt(res.body));

  const Json body = Json::parse(res.body, nullptr, false);
  if (body.is_discarded() || !body.contains("data") || !body["data"].is_array()) {
    throw ProviderError(res.status, "unexpected response shape: " + excerpt(res.body));
  }
  const Json& data = body["data"];
  if (data.size() != texts.size()) throw ProviderError(res.status, "length mismatch");

  std::vector<std::vector<double>> out(texts.size());
  std::vector<bool> filled(texts.size(), false);
  for (std::size_t pos = 0; pos < data.size(); ++pos) {
    const Json& item = data[pos];
    const std::size_t index =
        item.contains("index") && item["index"].is_number_unsigned() ? item["index"].get<std::size_t>() : pos;
    if (index >= out.size() || filled[index]) throw ProviderError(res.status, "length mismatch");
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      throw ProviderError(res.status, "missing embedding at index " + std::to_string(index));
    }
    for (const auto& x : item["embedding"]) {
      if (!x.is_number()) throw ProviderError(res.status, "non-numeric embedding value");
      out[index].push_back(x.get<double>());
    }
    filled[index] = true;
  }
  return out;
}

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  return std::inner_product(a.values.begin(), a.values.end(), b.values.begin(), 0.0);
}

void normalize_in_place(EmbeddingVector& v) {
  const double norm = std::sqrt(dot(v, v));
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ProviderError(200, "zero-norm or non-finite embedding");
  for (double& x : v.values) x /= norm;
}

std::vector<EmbeddingVector> embed_texts(EmbeddingProvider& provider, std::span<const std::string> texts,
                                         bool normalize, const EmbedOptions& options) {
  if (texts.empty()) return {};
  options.policy.validate();
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
  const std::size_t batches = (texts.size() + batch - 1) / batch;
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());

  auto run_batch = [&](std::size_t b) {
    const auto chunk = texts.subspan(b * batch, std::min(batch, texts.size() - b * batch));
    for (int attempt = 1;; ++attempt) {
      if (options.limiter != nullptr) options.limiter->acquire();
      try {
        auto vecs = provider.embed_batch(chunk);
        if (vecs.size() != chunk.size()) throw ProviderError(200, "length mismatch");
        return vecs;
      } catch (const ProviderError& e) {
        const bool transient = e.body_excerpt() != "length mismatch" && options.policy.is_retryable(e.status());
        if (!transient || attempt >= options.policy.max_attempts) throw;
        options.clock->sleep_for(options.policy.backoff_after(attempt));
      }
    }
  };

  ordered_parallel_for(batches, options.concurrency, run_batch,
                       [&](std::size_t, std::vector<std::vector<double>> vecs) {
                         for (auto& v : vecs) out.push_back(EmbeddingVector{std::move(v)});
                       });

  const std::size_t dims = out.front().dims();
  for (auto& v : out) {
    if (v.dims() != dims || dims == 0) throw ProviderError(200, "inconsistent embedding dims");
    if (normalize) normalize_in_place(v);
  }
  return out;
}

}  // namespace capdistill
