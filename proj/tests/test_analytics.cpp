#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "capdistill/domains.hpp"
#include "capdistill/lda.hpp"
#include "capdistill/mock.hpp"
#include "capdistill/projection.hpp"
#include "capdistill/topic_naming.hpp"
#include "support.hpp"

using namespace capdistill;

namespace {

// Recounts every table from the assignments with plain loops.
std::vector<std::string> recount_problems(const TopicModel& m) {
  std::vector<std::string> out;
  const std::size_t K = m.config.topics, V = m.vocab.size();
  std::int64_t all = 0;
  for (std::size_t d = 0; d < m.docs.size(); ++d) {
    std::int64_t row = 0;
    for (std::size_t k = 0; k < K; ++k) row += m.doc_topic_counts[d * K + k];
    if (row != static_cast<std::int64_t>(m.docs[d].size())) out.push_back("doc row sum " + std::to_string(d));
    for (std::size_t k = 0; k < K; ++k) {
      std::int64_t n = 0;
      for (auto z : m.assignments[d]) n += z == k ? 1 : 0;
      if (n != m.doc_topic_counts[d * K + k]) out.push_back("doc-topic cell " + std::to_string(d));
    }
    all += static_cast<std::int64_t>(m.docs[d].size());
  }
  std::int64_t totals = 0;
  for (std::size_t k = 0; k < K; ++k) {
    std::int64_t row = 0;
    for (std::size_t w = 0; w < V; ++w) row += m.topic_word_counts[k * V + w];
    if (row != m.topic_totals[k]) out.push_back("topic row sum " + std::to_string(k));
    totals += m.topic_totals[k];
  }
  if (totals != all) out.push_back("totals vs tokens");
  return out;
}

TopicModel hand_model(const std::vector<std::pair<std::string, int>>& counts) {
  TopicModel m;
  m.config.topics = 1;
  m.config.beta = 0.01;
  std::vector<std::pair<std::string, int>> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  m.docs.emplace_back();
  m.assignments.emplace_back();
  for (std::uint32_t w = 0; w < sorted.size(); ++w) {
    m.vocab.push_back(sorted[w].first);
    for (int i = 0; i < sorted[w].second; ++i) {
      m.docs[0].push_back(w);
      m.assignments[0].push_back(0);
    }
  }
  const auto total = static_cast<std::int64_t>(m.docs[0].size());
  m.doc_topic_counts = {total};
  for (const auto& [w, c] : sorted) m.topic_word_counts.push_back(c);
  m.topic_totals = {total};
  return m;
}

std::vector<std::string> words_only(const std::vector<std::pair<std::string, double>>& tw) {
  std::vector<std::string> out;
  for (const auto& [w, _] : tw) out.push_back(w);
  return out;
}

}  // namespace

TEST(Domains, DocumentedExample) {
  const std::vector<std::string> urls{"https://a.cnn.com/x", "https://cnn.com/y", "https://www.shopify.com/z"};
  const auto r = domain_stats(urls);
  EXPECT_EQ(r.unique_domains, 2u);
  ASSERT_EQ(r.top.size(), 2u);
  EXPECT_EQ(r.top[0].domain, "cnn.com");
  EXPECT_EQ(r.top[0].count, 2u);
  EXPECT_NEAR(r.top[0].pct, 200.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.top[1].pct, 100.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.top[0].cumulative_pct, 200.0 / 3.0, 1e-9);
  EXPECT_NEAR(r.top[1].cumulative_pct, 100.0, 1e-9);
}

TEST(Domains, EmptyAndMalformed) {
  EXPECT_EQ(domain_stats(std::vector<std::string>{}).unique_domains, 0u);
  const std::vector<std::string> urls{"https://a.com/1", "not a url", "http://b.org"};
  const auto r = domain_stats(urls);
  EXPECT_EQ(r.total, 2u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].index, 1u);
  EXPECT_NEAR(r.top[0].pct + r.top[1].pct, 100.0, 1e-9);
}

TEST(Domains, ModesAndTies) {
  EXPECT_EQ(domain_of("https://news.bbc.co.uk/a"), "co.uk");
  EXPECT_EQ(domain_of("https://news.bbc.co.uk/a", DomainMode::full_host), "news.bbc.co.uk");
  EXPECT_EQ(domain_of("http://WWW.Example.COM:8080/x"), "example.com");
  EXPECT_EQ(domain_of("http://10.0.0.1/x"), "10.0.0.1");
  const std::vector<std::string> urls{"https://b.com", "https://a.com", "https://c.com", "https://c.com"};
  const auto r = domain_stats(urls, 2);
  ASSERT_EQ(r.top.size(), 2u);
  EXPECT_EQ(r.top[0].domain, "c.com");
  EXPECT_EQ(r.top[1].domain, "a.com");
  EXPECT_EQ(r.unique_domains, 3u);
  EXPECT_EQ(domains_csv(r), "domain,count,pct,cumulative_pct\nc.com,2,50.000000,50.000000\na.com,1,25.000000,75.000000\n");
}

TEST(Domains, CumulativeIsMonotoneOnRandomInput) {
  std::mt19937 gen(3);
  std::vector<std::string> urls;
  for (int i = 0; i < 500; ++i) urls.push_back("https://h" + std::to_string(gen() % 40) + ".com/p");
  const auto r = domain_stats(urls, 100);
  double prev = 0.0, sum = 0.0;
  for (const auto& s : r.top) {
    EXPECT_GE(s.cumulative_pct, prev);
    prev = s.cumulative_pct;
    sum += s.pct;
  }
  EXPECT_NEAR(sum, 100.0, 1e-6);
  EXPECT_NEAR(prev, 100.0, 1e-9);
}

TEST(Tokenize, DocumentedExamples) {
  const std::vector<std::string> texts{"The cat sat", "cat cat"};
  TokenizeOptions o;
  o.min_count = 1;
  auto t = tokenize_corpus(texts, o);
  EXPECT_EQ(t.vocab, (std::vector<std::string>{"cat", "sat"}));
  EXPECT_EQ(t.docs[0], (std::vector<std::uint32_t>{0, 1}));
  EXPECT_EQ(t.docs[1], (std::vector<std::uint32_t>{0, 0}));

  o.min_count = 3;
  t = tokenize_corpus(texts, o);
  EXPECT_EQ(t.vocab, (std::vector<std::string>{"cat"}));
  EXPECT_EQ(t.docs[0], (std::vector<std::uint32_t>{0}));

  const std::vector<std::string> numeric{"12345 678", "dog dog"};
  o.min_count = 1;
  t = tokenize_corpus(numeric, o);
  EXPECT_TRUE(t.docs[0].empty());
  EXPECT_EQ(t.docs.size(), 2u);
}

TEST(Tokenize, SplitsOnNonLettersAndLowercases) {
  TokenizeOptions o;
  o.min_count = 1;
  o.stopwords.clear();
  const std::vector<std::string> texts{"Red-Car's WHEEL,wheel2go ab"};
  const auto t = tokenize_corpus(texts, o);
  EXPECT_EQ(t.vocab, (std::vector<std::string>{"car", "red", "wheel"}));
  EXPECT_EQ(t.docs[0].size(), 4u);
}

TEST(Tokenize, DefaultStopwordsIncludeCommonWords) {
  const auto sw = TokenizeOptions::default_stopwords();
  for (const char* w : {"the", "and", "with", "this"}) {
    EXPECT_NE(std::find(sw.begin(), sw.end(), w), sw.end()) << w;
  }
}

TEST(Lda, SingleTopicSingleToken) {
  TokenizedCorpus c{{"w"}, {{0}}};
  LdaConfig cfg;
  cfg.topics = 1;
  cfg.iterations = 5;
  const auto m = lda_fit(c, cfg);
  EXPECT_EQ(m.assignments, (std::vector<std::vector<std::uint32_t>>{{0}}));
  EXPECT_EQ(m.doc_topic_counts, (std::vector<std::int64_t>{1}));
}

TEST(Lda, EmptyCorpusAndBadConfig) {
  LdaConfig cfg;
  EXPECT_THROW(lda_fit(TokenizedCorpus{}, cfg), EmptyCorpus);
  EXPECT_THROW(lda_fit(TokenizedCorpus{{"w"}, {{}, {}}}, cfg), EmptyCorpus);
  cfg.topics = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = LdaConfig{};
  cfg.beta = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_DOUBLE_EQ(LdaConfig{}.effective_alpha(), 2.0);
}

TEST(Lda, TwoPlantedTopicsRecoveredExactly) {
  const auto pc = testing_support::planted_corpus(2, 10, 200, 50, 17);
  TokenizeOptions o;
  o.stopwords.clear();
  const auto corpus = tokenize_corpus(pc.texts, o);
  LdaConfig cfg;
  cfg.topics = 2;
  cfg.iterations = 200;
  cfg.seed = 5;
  std::size_t sweeps = 0;
  const auto m = lda_fit(corpus, cfg, [&](std::size_t s, const TopicModel& model) {
    sweeps = s;
    const auto problems = recount_problems(model);
    ASSERT_TRUE(problems.empty()) << "sweep " << s << ": " << problems.front();
  });
  EXPECT_EQ(sweeps, 200u);
  std::vector<std::set<std::string>> recovered;
  for (std::size_t k = 0; k < 2; ++k) {
    const auto w = words_only(top_words(m, k, 10));
    recovered.emplace_back(w.begin(), w.end());
  }
  const auto overlaps = testing_support::best_matching_overlaps(recovered, pc.topic_words);
  EXPECT_EQ(overlaps, (std::vector<std::size_t>{10, 10}));
}

TEST(Lda, SameSeedSameAssignments) {
  const auto pc = testing_support::planted_corpus(3, 10, 60, 20, 2);
  TokenizeOptions o;
  o.stopwords.clear();
  const auto corpus = tokenize_corpus(pc.texts, o);
  LdaConfig cfg;
  cfg.topics = 3;
  cfg.iterations = 20;
  cfg.seed = 9;
  EXPECT_EQ(lda_fit(corpus, cfg).assignments, lda_fit(corpus, cfg).assignments);
  auto other = cfg;
  other.seed = 10;
  EXPECT_NE(lda_fit(corpus, cfg).assignments, lda_fit(corpus, other).assignments);
}

TEST(Lda, GibbsWeightsArePositiveAndFinite) {
  const auto pc = testing_support::planted_corpus(4, 10, 40, 15, 8);
  TokenizeOptions o;
  o.stopwords.clear();
  const auto corpus = tokenize_corpus(pc.texts, o);
  LdaConfig cfg;
  cfg.topics = 4;
  cfg.iterations = 3;
  const auto m = lda_fit(corpus, cfg);
  std::vector<double> w(4);
  for (std::size_t d = 0; d < m.docs.size(); ++d) {
    for (auto word : m.docs[d]) {
      gibbs_weights(m, d, word, w);
      for (double x : w) EXPECT_TRUE(std::isfinite(x) && x > 0.0);
    }
  }
}

TEST(TopWords, TiesAreLexicographicAndOutOfRangeThrows) {
  const auto m = hand_model({{"cat", 5}, {"dog", 3}, {"ant", 3}});
  EXPECT_EQ(words_only(top_words(m, 0, 10)), (std::vector<std::string>{"cat", "ant", "dog"}));
  const auto tw = top_words(m, 0, 1);
  ASSERT_EQ(tw.size(), 1u);
  EXPECT_NEAR(tw[0].second, (5 + 0.01) / (11 + 3 * 0.01), 1e-15);
  EXPECT_THROW(top_words(m, 1), TopicOutOfRange);
}

TEST(TopWords, RankingInvariantUnderCountScaling) {
  std::mt19937 gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<std::string, int>> counts;
    for (int w = 0; w < 12; ++w) counts.push_back({"w" + std::to_string(100 + w), static_cast<int>(gen() % 6)});
    auto scaled = counts;
    for (auto& [_, c] : scaled) c *= 3;
    EXPECT_EQ(words_only(top_words(hand_model(counts), 0, 12)), words_only(top_words(hand_model(scaled), 0, 12)));
  }
}

TEST(Proportions, DocumentedExamples) {
  TopicModel m;
  m.config.topics = 2;
  m.topic_totals = {30, 70};
  const auto p = topic_proportions(m);
  EXPECT_DOUBLE_EQ(p[0], 30.0);
  EXPECT_DOUBLE_EQ(p[1], 70.0);
  m.config.topics = 1;
  m.topic_totals = {12};
  EXPECT_DOUBLE_EQ(topic_proportions(m)[0], 100.0);
}

TEST(Proportions, NearUniformOnBalancedCorpus) {
  // No topical structure at all: every word is drawn uniformly from one
  // shared vocabulary, so no topic should claim a larger share than others.
  for (unsigned seed : {1u, 2u, 3u}) {
    std::mt19937 gen(seed);
    std::vector<std::string> texts;
    for (int d = 0; d < 500; ++d) {
      std::string t;
      for (int i = 0; i < 30; ++i) t += "word" + std::string(1, static_cast<char>('a' + gen() % 20)) +
                                        std::string(1, static_cast<char>('a' + gen() % 10)) + " ";
      texts.push_back(t);
    }
    TokenizeOptions o;
    o.stopwords.clear();
    const auto corpus = tokenize_corpus(texts, o);
    LdaConfig cfg;
    cfg.topics = 25;
    cfg.iterations = 100;
    cfg.seed = seed;
    const auto p = topic_proportions(lda_fit(corpus, cfg));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 100.0, 1e-6);
    for (double x : p) EXPECT_NEAR(x, 4.0, 0.5) << "seed " << seed;
  }
}

TEST(Proportions, DocRowsSumToOne) {
  TokenizedCorpus c{{"a", "b"}, {{0, 1, 1}, {}, {0}}};
  LdaConfig cfg;
  cfg.topics = 3;
  cfg.iterations = 4;
  const auto m = lda_fit(c, cfg);
  const Eigen::MatrixXd p = doc_topic_proportions(m);
  for (Eigen::Index d = 0; d < p.rows(); ++d) EXPECT_NEAR(p.row(d).sum(), 1.0, 1e-12);
  EXPECT_NEAR(p(1, 0), 1.0 / 3.0, 1e-12);
}

TEST(Sample, IndicesAreDistinctSortedAndDeterministic) {
  const auto a = sample_indices(1000, 100, 3);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 100u);
  EXPECT_EQ(a, sample_indices(1000, 100, 3));
  EXPECT_EQ(sample_indices(5, 10, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Pca, MatchesJacobiOracle) {
  std::mt19937_64 gen(12);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd x(50, 5);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = nd(gen) * static_cast<double>(j + 1);
    }
    const auto p = project_2d(x);
    const auto ev = testing_support::jacobi_eigenvalues(testing_support::covariance(x));
    // Variance of the projected coordinates, computed directly.
    double v1 = 0, v2 = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      v1 += p.coords(i, 0) * p.coords(i, 0);
      v2 += p.coords(i, 1) * p.coords(i, 1);
    }
    v1 /= static_cast<double>(x.rows() - 1);
    v2 /= static_cast<double>(x.rows() - 1);
    EXPECT_NEAR((v1 + v2) / (ev[0] + ev[1]), 1.0, 1e-8);
    EXPECT_NEAR(p.lambda1 / ev[0], 1.0, 1e-8);
    EXPECT_NEAR(p.lambda2 / ev[1], 1.0, 1e-8);
  }
}

TEST(Pca, RankOneDataHasFlatSecondAxis) {
  Eigen::MatrixXd x(20, 4);
  const Eigen::RowVectorXd dir = (Eigen::RowVectorXd(4) << 1, -2, 0.5, 3).finished();
  for (Eigen::Index i = 0; i < 20; ++i) x.row(i) = dir * (static_cast<double>(i) - 7.3);
  const auto p = project_2d(x);
  for (Eigen::Index i = 0; i < 20; ++i) EXPECT_LT(std::abs(p.coords(i, 1)), 1e-9);
}

TEST(Pca, TwoDimensionalInputIsARotation) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(-3, 3);
  Eigen::MatrixXd x(30, 2);
  for (Eigen::Index i = 0; i < 30; ++i) x.row(i) << u(gen), 0.5 * u(gen);
  const auto p = project_2d(x);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  EXPECT_NEAR(p.coords.squaredNorm(), centered.squaredNorm(), 1e-9);
  EXPECT_NEAR(p.lambda1 + p.lambda2, p.total_variance, 1e-12);
}

TEST(Pca, SignConventionAndErrors) {
  Eigen::MatrixXd x(3, 2);
  x << 0, 0, 1, 0.1, 2, -0.1;
  const auto p = project_2d(x);
  for (int a = 0; a < 2; ++a) {
    Eigen::Index arg = 0;
    p.components.col(a).cwiseAbs().maxCoeff(&arg);
    EXPECT_GT(p.components(arg, a), 0.0);
  }
  Eigen::MatrixXd same(4, 3);
  same.rowwise() = (Eigen::RowVectorXd(3) << 0.1, 0.7, 0.2).finished();
  EXPECT_THROW(project_2d(same), DegenerateInput);
  EXPECT_THROW(project_2d(Eigen::MatrixXd::Ones(1, 3)), DegenerateInput);
}

TEST(TopicNaming, PythonReprQuoting) {
  const std::vector<std::string> w{"slice", "dish", "don't", "a\\b"};
  EXPECT_EQ(python_list_repr(w), R"(['slice', 'dish', "don't", 'a\\b'])");
  EXPECT_EQ(python_list_repr(std::vector<std::string>{}), "[]");
}

TEST(TopicNaming, NamesFallbackAndTrim) {
  VirtualClock clock;
  std::vector<std::string> prompts;
  std::mutex mu;
  ScriptedLvlmClient client(
      [&](const LvlmRequest& r, std::size_t) {
        std::lock_guard lock(mu);
        prompts.push_back(r.prompt);
        if (r.prompt.find("'slice'") != std::string::npos) return LvlmResponse{200, "Food Ingredients", ""};
        if (r.prompt.find("'sofa'") != std::string::npos) return LvlmResponse{200, " Home Decor \n", ""};
        if (r.prompt.find("'broken'") != std::string::npos) return LvlmResponse{503, "", "down"};
        return LvlmResponse{200, "Other", ""};
      },
      &clock);
  const std::vector<std::vector<std::string>> words{
      {"slice", "dish", "cake"}, {"sofa", "lamp"}, {"tree"}, {"broken", "thing"}};
  TopicNamingOptions opts;
  opts.clock = &clock;
  const auto names = name_topics(client, words, opts);
  EXPECT_EQ(names.names, (std::vector<std::string>{"Food Ingredients", "Home Decor", "Other", "topic-3"}));
  ASSERT_EQ(names.warnings.size(), 1u);
  EXPECT_NE(names.warnings[0].find("topic 3"), std::string::npos);
  EXPECT_NE(prompts[0].find("```list of words\n['slice', 'dish', 'cake']\n```"), std::string::npos);
  EXPECT_NE(prompts[0].find("**1~2 words**"), std::string::npos);
  EXPECT_THROW(name_topics(client, std::vector<std::vector<std::string>>{{}}, opts), std::invalid_argument);
}
