#pragma once

// Topic modelling over caption text: tokenisation and latent Dirichlet
// allocation fitted by collapsed Gibbs sampling.
//
// Each sweep visits every token in document order, removes it from the
// counts and draws a new topic from
//
//   P(z = k | rest)  ∝  (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)
//
// where n_dk counts tokens of document d in topic k, n_kw counts word w in
// topic k and n_k is the topic total. Initial topics are uniform draws.
// All randomness comes from one Xoshiro256 seeded with LdaConfig::seed.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace capdistill {

struct TokenizeOptions {
  std::size_t min_len = 3;
  std::size_t min_count = 5;
  std::vector<std::string> stopwords = default_stopwords();

  static std::vector<std::string> default_stopwords();
};

struct TokenizedCorpus {
  std::vector<std::string> vocab;                 // lexicographic
  std::vector<std::vector<std::uint32_t>> docs;   // ids into vocab; may be empty
};

/// Lowercases, splits on non-letters, drops short words, stopwords and
/// words seen fewer than min_count times across the corpus.
TokenizedCorpus tokenize_corpus(std::span<const std::string> texts, const TokenizeOptions& options = {});

struct LdaConfig {
  std::size_t topics = 25;
  std::optional<double> alpha;  // default 50 / topics
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  std::optional<std::size_t> sample_size = 100'000;

  double effective_alpha() const { return alpha.value_or(50.0 / static_cast<double>(topics)); }
  void validate() const;
};

class EmptyCorpus : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class TopicOutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

struct TopicModel {
  std::vector<std::string> vocab;
  std::vector<std::vector<std::uint32_t>> docs;
  std::vector<std::vector<std::uint32_t>> assignments;  // parallel to docs
  std::vector<std::int64_t> doc_topic_counts;           // D x K, row-major
  std::vector<std::int64_t> topic_word_counts;          // K x V, row-major
  std::vector<std::int64_t> topic_totals;               // K
  LdaConfig config;

  std::size_t num_docs() const { return docs.size(); }
  std::size_t num_topics() const { return config.topics; }
  std::size_t vocab_size() const { return vocab.size(); }
  std::int64_t total_tokens() const;

  std::int64_t& doc_topic(std::size_t d, std::size_t k) { return doc_topic_counts[d * num_topics() + k]; }
  std::int64_t doc_topic(std::size_t d, std::size_t k) const { return doc_topic_counts[d * num_topics() + k]; }
  std::int64_t& topic_word(std::size_t k, std::size_t w) { return topic_word_counts[k * vocab_size() + w]; }
  std::int64_t topic_word(std::size_t k, std::size_t w) const { return topic_word_counts[k * vocab_size() + w]; }

  /// Recounts from assignments and compares against the stored counts.
  /// Returns a description of each broken invariant; empty when consistent.
  std::vector<std::string> check_invariants() const;
};

/// Called after each completed sweep with the 1-based sweep number.
using SweepObserver = std::function<void(std::size_t sweep, const TopicModel&)>;

TopicModel lda_fit(const TokenizedCorpus& corpus, const LdaConfig& config, const SweepObserver& observer = {});

/// Unnormalised conditional weights for placing word `w` of document `d`,
/// using the model's current counts (the caller removes the token first).
void gibbs_weights(const TopicModel& model, std::size_t d, std::uint32_t w, std::span<double> out);

/// Words ranked by (n_kw + beta) / (n_k + V * beta), ties lexicographic.
std::vector<std::pair<std::string, double>> top_words(const TopicModel& model, std::size_t topic, std::size_t n = 10);

/// Percentage of all tokens assigned to each topic.
std::vector<double> topic_proportions(const TopicModel& model);

/// D x K matrix of per-document topic shares; empty documents get 1/K.
Eigen::MatrixXd doc_topic_proportions(const TopicModel& model);

/// `size` distinct indices from [0, total) drawn uniformly, ascending.
/// Returns all indices when size >= total.
std::vector<std::size_t> sample_indices(std::size_t total, std::size_t size, std::uint64_t seed);

}  // namespace capdistill
