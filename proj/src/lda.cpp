#include "capdistill/lda.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

#include "capdistill/rng.hpp"

namespace capdistill {

namespace resources {
extern const std::string_view kStopwordsText;
}

std::vector<std::string> TokenizeOptions::default_stopwords() {
  std::vector<std::string> words;
  std::string_view text = resources::kStopwordsText;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (line.empty() || line.front() == '#') continue;
    words.emplace_back(line);
  }
  return words;
}

namespace {

std::vector<std::string> split_words(std::string_view text, std::size_t min_len) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= min_len) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

}  // namespace

TokenizedCorpus tokenize_corpus(std::span<const std::string> texts, const TokenizeOptions& options) {
  const std::unordered_set<std::string> stop(options.stopwords.begin(), options.stopwords.end());
  std::vector<std::vector<std::string>> words;
  words.reserve(texts.size());
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    auto w = split_words(t, options.min_len);
    std::erase_if(w, [&](const std::string& s) { return stop.contains(s); });
    for (const auto& s : w) ++counts[s];
    words.push_back(std::move(w));
  }

  TokenizedCorpus corpus;
  std::unordered_map<std::string, std::uint32_t> ids;
  for (const auto& [word, n] : counts) {
    if (n < options.min_count) continue;
    ids.emplace(word, static_cast<std::uint32_t>(corpus.vocab.size()));
    corpus.vocab.push_back(word);
  }
  corpus.docs.reserve(words.size());
  for (const auto& w : words) {
    std::vector<std::uint32_t> doc;
    for (const auto& s : w) {
      if (auto it = ids.find(s); it != ids.end()) doc.push_back(it->second);
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

void LdaConfig::validate() const {
  if (topics == 0) throw std::invalid_argument("topics must be >= 1");
  if (!(effective_alpha() > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
}

std::int64_t TopicModel::total_tokens() const {
  return std::accumulate(topic_totals.begin(), topic_totals.end(), std::int64_t{0});
}

std::vector<std::string> TopicModel::check_invariants() const {
  std::vector<std::string> problems;
  const std::size_t K = num_topics(), V = vocab_size(), D = num_docs();
  std::vector<std::int64_t> dt(D * K, 0), tw(K * V, 0), tt(K, 0);
  std::int64_t tokens = 0;
  if (assignments.size() != D) problems.push_back("assignments and docs differ in length");
  for (std::size_t d = 0; d < std::min(D, assignments.size()); ++d) {
    if (assignments[d].size() != docs[d].size()) {
      problems.push_back("document " + std::to_string(d) + " has mismatched assignment length");
      continue;
    }
    for (std::size_t i = 0; i < docs[d].size(); ++i) {
      const auto z = assignments[d][i];
      const auto w = docs[d][i];
      if (z >= K || w >= V) {
        problems.push_back("document " + std::to_string(d) + " has an out-of-range topic or word");
        continue;
      }
      ++dt[d * K + z];
      ++tw[z * V + w];
      ++tt[z];
      ++tokens;
    }
  }
  if (dt != doc_topic_counts) problems.push_back("doc-topic counts disagree with assignments");
  if (tw != topic_word_counts) problems.push_back("topic-word counts disagree with assignments");
  if (tt != topic_totals) problems.push_back("topic totals disagree with assignments");
  if (total_tokens() != tokens) problems.push_back("topic totals do not sum to the token count");
  for (auto v : doc_topic_counts) {
    if (v < 0) {
      problems.push_back("negative doc-topic count");
      break;
    }
  }
  return problems;
}

void gibbs_weights(const TopicModel& model, std::size_t d, std::uint32_t w, std::span<double> out) {
  const std::size_t K = model.num_topics();
  const double alpha = model.config.effective_alpha();
  const double beta = model.config.beta;
  const double vbeta = static_cast<double>(model.vocab_size()) * beta;
  for (std::size_t k = 0; k < K; ++k) {
    out[k] = (static_cast<double>(model.doc_topic(d, k)) + alpha) *
             (static_cast<double>(model.topic_word(k, w)) + beta) /
             (static_cast<double>(model.topic_totals[k]) + vbeta);
  }
}

TopicModel lda_fit(const TokenizedCorpus& corpus, const LdaConfig& config, const SweepObserver& observer) {
  config.validate();
  if (corpus.vocab.empty()) throw EmptyCorpus("vocabulary is empty after tokenisation");
  const bool any_tokens =
      std::any_of(corpus.docs.begin(), corpus.docs.end(), [](const auto& d) { return !d.empty(); });
  if (!any_tokens) throw EmptyCorpus("no tokens remain after tokenisation");

  TopicModel m;
  m.vocab = corpus.vocab;
  m.docs = corpus.docs;
  m.config = config;
  const std::size_t K = config.topics, V = m.vocab.size(), D = m.docs.size();
  m.doc_topic_counts.assign(D * K, 0);
  m.topic_word_counts.assign(K * V, 0);
  m.topic_totals.assign(K, 0);
  m.assignments.resize(D);

  Xoshiro256 rng(config.seed);
  for (std::size_t d = 0; d < D; ++d) {
    m.assignments[d].resize(m.docs[d].size());
    for (std::size_t i = 0; i < m.docs[d].size(); ++i) {
      const auto z = static_cast<std::uint32_t>(rng.below(K));
      const auto w = m.docs[d][i];
      if (w >= V) throw std::out_of_range("word id outside the vocabulary");
      m.assignments[d][i] = z;
      ++m.doc_topic(d, z);
      ++m.topic_word(z, w);
      ++m.topic_totals[z];
    }
  }

  std::vector<double> p(K);
  for (std::size_t sweep = 1; sweep <= config.iterations; ++sweep) {
    for (std::size_t d = 0; d < D; ++d) {
      auto& doc = m.docs[d];
      auto& zs = m.assignments[d];
      for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto w = doc[i];
        const auto old = zs[i];
        --m.doc_topic(d, old);
        --m.topic_word(old, w);
        --m.topic_totals[old];

        gibbs_weights(m, d, w, p);
        double total = 0.0;
        for (auto& v : p) {
          total += v;
          v = total;
        }
        const double u = rng.uniform() * total;
        std::size_t z = 0;
        while (z + 1 < K && p[z] <= u) ++z;

        zs[i] = static_cast<std::uint32_t>(z);
        ++m.doc_topic(d, z);
        ++m.topic_word(z, w);
        ++m.topic_totals[z];
      }
    }
    if (observer) observer(sweep, m);
  }
  return m;
}

std::vector<std::pair<std::string, double>> top_words(const TopicModel& model, std::size_t topic, std::size_t n) {
  if (topic >= model.num_topics()) {
    throw TopicOutOfRange("topic " + std::to_string(topic) + " out of range (K=" +
                          std::to_string(model.num_topics()) + ")");
  }
  const std::size_t V = model.vocab_size();
  const double beta = model.config.beta;
  const double denom = static_cast<double>(model.topic_totals[topic]) + static_cast<double>(V) * beta;
  std::vector<std::uint32_t> order(V);
  std::iota(order.begin(), order.end(), 0u);
  // Vocabulary ids are lexicographic, so breaking ties on id is breaking them on the word.
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    const auto ca = model.topic_word(topic, a), cb = model.topic_word(topic, b);
    return ca != cb ? ca > cb : a < b;
  };
  const std::size_t take = std::min(n, V);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
  std::vector<std::pair<std::string, double>> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto w = order[i];
    out.emplace_back(model.vocab[w], (static_cast<double>(model.topic_word(topic, w)) + beta) / denom);
  }
  return out;
}

std::vector<double> topic_proportions(const TopicModel& model) {
  const double total = static_cast<double>(model.total_tokens());
  std::vector<double> out(model.num_topics(), 0.0);
  if (total == 0.0) return out;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = 100.0 * static_cast<double>(model.topic_totals[k]) / total;
  return out;
}

Eigen::MatrixXd doc_topic_proportions(const TopicModel& model) {
  const auto D = static_cast<Eigen::Index>(model.num_docs());
  const auto K = static_cast<Eigen::Index>(model.num_topics());
  Eigen::MatrixXd theta(D, K);
  for (Eigen::Index d = 0; d < D; ++d) {
    const double len = static_cast<double>(model.docs[static_cast<std::size_t>(d)].size());
    for (Eigen::Index k = 0; k < K; ++k) {
      theta(d, k) = len == 0.0 ? 1.0 / static_cast<double>(K)
                               : static_cast<double>(model.doc_topic(static_cast<std::size_t>(d),
                                                                     static_cast<std::size_t>(k))) / len;
    }
  }
  return theta;
}

std::vector<std::size_t> sample_indices(std::size_t total, std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (size >= total) return idx;
  // Partial Fisher-Yates: the first `size` slots become a uniform sample.
  Xoshiro256 rng(seed);
  for (std::size_t i = 0; i < size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace capdistill
