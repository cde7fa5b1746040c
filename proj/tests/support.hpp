#pragma once

// Shared helpers for the test suite and the acceptance runner. The oracle
// functions here are deliberately naive re-implementations that do not
// call into the library code they check.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <cstdlib>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(CAPDISTILL_FIXTURE_DIR) / name;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

inline nlohmann::ordered_json load_json(const std::filesystem::path& p) {
  return nlohmann::ordered_json::parse(slurp(p));
}

/// A fresh directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("capdistill-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Sets an environment variable for the current scope.
class ScopedEnv {
 public:
  ScopedEnv(std::string name, const char* value) : name_(std::move(name)) {
    if (const char* old = std::getenv(name_.c_str())) old_ = old;
    if (value) {
      ::setenv(name_.c_str(), value, 1);
    } else {
      ::unsetenv(name_.c_str());
    }
  }
  ~ScopedEnv() {
    if (old_) {
      ::setenv(name_.c_str(), old_->c_str(), 1);
    } else {
      ::unsetenv(name_.c_str());
    }
  }

 private:
  std::string name_;
  std::optional<std::string> old_;
};

// ---------------------------------------------------------------------------
// Oracles

inline std::vector<std::vector<double>> random_unit_vectors(std::size_t n, std::size_t dims, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(n, std::vector<double>(dims));
  for (auto& v : out) {
    double norm = 0.0;
    for (auto& x : v) {
      x = normal(gen);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
  }
  return out;
}

inline double plain_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Problems with a dedup outcome judged by exhaustive pairwise comparison:
/// retained pairs must not exceed tau, every removed item needs an earlier
/// retained witness above tau, and the kept set must equal the naive greedy
/// scan. Returns an empty list when the outcome is correct.
inline std::vector<std::string> dedup_oracle_problems(const std::vector<std::vector<double>>& vecs, double tau,
                                                      const std::vector<std::size_t>& retained,
                                                      const std::map<std::size_t, std::size_t>& witness) {
  std::vector<std::string> problems;
  const std::set<std::size_t> kept(retained.begin(), retained.end());
  for (auto i : retained) {
    for (auto j : retained) {
      if (i < j && plain_dot(vecs[i], vecs[j]) > tau) {
        problems.push_back("retained pair " + std::to_string(i) + "," + std::to_string(j) + " exceeds tau");
      }
    }
  }
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    if (kept.contains(i)) continue;
    auto it = witness.find(i);
    if (it == witness.end()) {
      problems.push_back("item " + std::to_string(i) + " neither retained nor removed");
      continue;
    }
    const std::size_t w = it->second;
    if (!kept.contains(w) || w >= i || !(plain_dot(vecs[i], vecs[w]) > tau)) {
      problems.push_back("item " + std::to_string(i) + " has no valid witness");
    }
  }
  std::vector<std::size_t> greedy;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    bool ok = true;
    for (auto k : greedy) {
      if (plain_dot(vecs[i], vecs[k]) > tau) {
        ok = false;
        break;
      }
    }
    if (ok) greedy.push_back(i);
  }
  if (greedy != retained) problems.push_back("retained set differs from the naive greedy scan");
  return problems;
}

/// Symmetric eigenvalues by cyclic Jacobi rotations, sorted descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

/// Sample covariance (divided by n - 1) computed with plain loops.
inline std::vector<std::vector<double>> covariance(const Eigen::MatrixXd& x) {
  const auto n = static_cast<std::size_t>(x.rows()), k = static_cast<std::size_t>(x.cols());
  std::vector<double> mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) mean[j] += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> c(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        c[a][b] += (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) - mean[a]) *
                   (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) - mean[b]);
      }
    }
  }
  for (auto& row : c) {
    for (auto& v : row) v /= static_cast<double>(n - 1);
  }
  return c;
}

/// Corpus drawn from `topics` disjoint vocabularies of `words_per_topic`
/// words; each document uses a single topic, chosen round-robin.
struct PlantedCorpus {
  std::vector<std::string> texts;
  std::vector<std::set<std::string>> topic_words;
};

inline PlantedCorpus planted_corpus(std::size_t topics, std::size_t words_per_topic, std::size_t docs,
                                    std::size_t doc_len, unsigned seed) {
  static const char* kStems[] = {"amber", "basil", "cobalt", "delta", "ember", "fjord", "garnet", "harbor",
                                 "indigo", "juniper"};
  PlantedCorpus pc;
  for (std::size_t t = 0; t < topics; ++t) {
    std::set<std::string> words;
    for (std::size_t w = 0; w < words_per_topic; ++w) {
      words.insert(std::string(kStems[w % 10]) + std::string(1, static_cast<char>('a' + t)) +
                   std::string(w / 10 + 1, 'q'));
    }
    pc.topic_words.push_back(std::move(words));
  }
  std::mt19937 gen(seed);
  for (std::size_t d = 0; d < docs; ++d) {
    const auto& words = pc.topic_words[d % topics];
    std::vector<std::string> pool(words.begin(), words.end());
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string text;
    for (std::size_t i = 0; i < doc_len; ++i) {
      if (i) text += ' ';
      text += pool[pick(gen)];
    }
    pc.texts.push_back(std::move(text));
  }
  return pc;
}

/// Best one-to-one assignment of recovered topics to planted ones by
/// exhaustive search over permutations. Returns the overlap per planted
/// topic under that assignment.
inline std::vector<std::size_t> best_matching_overlaps(const std::vector<std::set<std::string>>& recovered,
                                                       const std::vector<std::set<std::string>>& planted) {
  std::vector<std::size_t> perm(recovered.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best;
  std::size_t best_total = 0;
  do {
    std::vector<std::size_t> overlaps(planted.size(), 0);
    std::size_t total = 0;
    for (std::size_t p = 0; p < planted.size() && p < perm.size(); ++p) {
      for (const auto& w : recovered[perm[p]]) overlaps[p] += planted[p].contains(w) ? 1 : 0;
      total += overlaps[p];
    }
    if (best.empty() || total > best_total) {
      best = overlaps;
      best_total = total;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Largest count of sorted timestamps (seconds) inside any half-open window
/// [t, t + width).
inline std::size_t max_in_window(std::vector<double> starts, double width) {
  std::sort(starts.begin(), starts.end());
  std::size_t best = 0, lo = 0;
  for (std::size_t hi = 0; hi < starts.size(); ++hi) {
    while (starts[hi] - starts[lo] >= width) ++lo;
    best = std::max(best, hi - lo + 1);
  }
  return best;
}

}  // namespace testing_support
