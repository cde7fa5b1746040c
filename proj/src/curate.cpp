#include "capdistill/curate.hpp"

#include <unistd.h>

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <limits>
#include <regex>
#include <sstream>

#include "capdistill/hash.hpp"
#include "capdistill/parallel.hpp"

namespace capdistill {

namespace fs = std::filesystem;

namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string extension_for(const std::string& url, const std::string& content_type) {
  static const std::vector<std::string> known{"jpg", "jpeg", "png", "gif", "webp", "bmp", "tif", "tiff"};
  std::string path = url.substr(0, url.find_first_of("?#"));
  const auto slash = path.rfind('/');
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
    const std::string ext = lowercase(path.substr(dot + 1));
    if (std::find(known.begin(), known.end(), ext) != known.end()) return ext;
  }
  const std::string ct = lowercase(content_type.substr(0, content_type.find(';')));
  if (ct == "image/jpeg") return "jpg";
  if (ct == "image/png") return "png";
  if (ct == "image/gif") return "gif";
  if (ct == "image/webp") return "webp";
  if (ct == "image/bmp") return "bmp";
  return "bin";
}

void store_once(const fs::path& target, const std::string& bytes) {
  std::error_code ec;
  if (fs::exists(target, ec)) return;
  static std::atomic<unsigned> counter{0};
  fs::path tmp = target;
  tmp += ".part." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CorpusError::io_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw CorpusError::io_error("cannot rename into " + target.string());
  }
}

}  // namespace

Partition<ImageMeta> filter_resolution(std::span<const ImageMeta> images, std::int64_t min_dim) {
  Partition<ImageMeta> out;
  for (const auto& img : images) {
    (img.width > min_dim && img.height > min_dim ? out.kept : out.rejected).push_back(img);
  }
  return out;
}

Partition<ImageMeta> filter_blocklist(std::span<const ImageMeta> images, std::span<const std::string> patterns,
                                      BlocklistMode mode) {
  Partition<ImageMeta> out;
  if (mode == BlocklistMode::regex) {
    std::vector<std::regex> compiled;
    for (const auto& p : patterns) compiled.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
    for (const auto& img : images) {
      const bool hit = std::any_of(compiled.begin(), compiled.end(),
                                   [&](const std::regex& re) { return std::regex_search(img.url, re); });
      (hit ? out.rejected : out.kept).push_back(img);
    }
    return out;
  }
  std::vector<std::string> lowered;
  for (const auto& p : patterns) {
    if (!p.empty()) lowered.push_back(lowercase(p));
  }
  for (const auto& img : images) {
    const std::string url = lowercase(img.url);
    const bool hit = std::any_of(lowered.begin(), lowered.end(),
                                 [&](const std::string& p) { return url.find(p) != std::string::npos; });
    (hit ? out.rejected : out.kept).push_back(img);
  }
  return out;
}

std::vector<std::string> parse_pattern_lines(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> load_pattern_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError::io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pattern_lines(ss.str());
}

FetchResult fetch_images(std::span<const ImageMeta> images, const fs::path& out_dir, HttpTransport& transport,
                         const FetchOptions& options) {
  options.policy.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!fs::is_directory(out_dir, ec)) throw CorpusError::io_error("image directory unusable: " + out_dir.string());

  struct Outcome {
    std::optional<ImageMeta> meta;
    std::optional<FetchFailure> failure;
    std::size_t requests = 0;
  };

  auto fetch_one = [&](std::size_t i) {
    const ImageMeta& img = images[i];
    Outcome outcome;
    if (img.local_path && img.content_sha256 && fs::exists(*img.local_path)) {
      outcome.meta = img;
      return outcome;
    }
    HttpResponse last;
    int attempt = 1;
    for (;; ++attempt) {
      if (options.limiter != nullptr) options.limiter->acquire();
      ++outcome.requests;
      last = transport.get(img.url, {});
      if (last.status == 200) break;
      const bool retryable = options.retry_all_errors || options.policy.is_retryable(last.status);
      if (!retryable || attempt >= options.policy.max_attempts) {
        outcome.failure = FetchFailure{img.id, img.url, last.status,
                                       last.status == 0 ? last.error : "HTTP " + std::to_string(last.status), attempt};
        return outcome;
      }
      options.clock->sleep_for(options.policy.backoff_after(attempt));
    }
    const std::string digest = sha256_hex(last.body);
    const fs::path target = out_dir / (digest + "." + extension_for(img.url, last.content_type));
    store_once(target, last.body);
    ImageMeta updated = img;
    updated.local_path = target.string();
    updated.content_sha256 = digest;
    outcome.meta = std::move(updated);
    return outcome;
  };

  FetchResult result;
  ordered_parallel_for(images.size(), options.concurrency, fetch_one, [&](std::size_t, Outcome o) {
    result.requests_issued += o.requests;
    if (o.meta) result.fetched.push_back(std::move(*o.meta));
    if (o.failure) result.failures.push_back(std::move(*o.failure));
  });
  return result;
}

void DedupConfig::validate() const {
  if (!std::isfinite(tau)) throw std::invalid_argument("tau must be finite");
  if (normalize && (tau < -1.0 || tau > 1.0)) throw std::invalid_argument("tau must lie in [-1, 1]");
}

namespace {

constexpr std::size_t kExactScanLimit = 50'000;
constexpr std::size_t kDefaultBlock = 1024;

DedupResult dedup_exact(std::span<const std::string> ids, std::span<const EmbeddingVector> vectors, double tau) {
  DedupResult out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t witness = 0;
    for (std::size_t k : kept) {
      const double s = dot(vectors[i], vectors[k]);
      if (s > best) {
        best = s;
        witness = k;
      }
    }
    if (!kept.empty() && best > tau) {
      out.removed.push_back({ids[i], ids[witness], best});
    } else {
      kept.push_back(i);
      out.retained.push_back(ids[i]);
    }
  }
  return out;
}

// Same decisions as dedup_exact. Similarities against everything kept before
// a block come from one matrix product; items kept inside the block are
// compared one by one.
DedupResult dedup_blocked(std::span<const std::string> ids, std::span<const EmbeddingVector> vectors, double tau,
                          std::size_t block) {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t n = vectors.size();
  const std::size_t dims = n == 0 ? 0 : vectors.front().dims();
  Matrix kept_rows(0, static_cast<Eigen::Index>(dims));
  std::vector<std::size_t> kept;
  DedupResult out;

  for (std::size_t start = 0; start < n; start += block) {
    const std::size_t len = std::min(block, n - start);
    Matrix rows(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(dims));
    for (std::size_t r = 0; r < len; ++r) {
      rows.row(static_cast<Eigen::Index>(r)) =
          Eigen::Map<const Eigen::RowVectorXd>(vectors[start + r].values.data(), static_cast<Eigen::Index>(dims));
    }
    const std::size_t kept_before = kept.size();
    Matrix sims = rows * kept_rows.topRows(static_cast<Eigen::Index>(kept_before)).transpose();
    std::vector<std::size_t> added;
    for (std::size_t r = 0; r < len; ++r) {
      const std::size_t i = start + r;
      double best = -std::numeric_limits<double>::infinity();
      std::size_t witness = 0;
      for (std::size_t c = 0; c < kept_before; ++c) {
        const double s = sims(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        if (s > best) {
          best = s;
          witness = kept[c];
        }
      }
      for (std::size_t k : added) {
        const double s = dot(vectors[i], vectors[k]);
        if (s > best) {
          best = s;
          witness = k;
        }
      }
      if ((kept_before + added.size()) > 0 && best > tau) {
        out.removed.push_back({ids[i], ids[witness], best});
      } else {
        added.push_back(i);
        out.retained.push_back(ids[i]);
      }
    }
    if (!added.empty()) {
      kept_rows.conservativeResize(static_cast<Eigen::Index>(kept_before + added.size()), Eigen::NoChange);
      for (std::size_t a = 0; a < added.size(); ++a) {
        kept_rows.row(static_cast<Eigen::Index>(kept_before + a)) =
            Eigen::Map<const Eigen::RowVectorXd>(vectors[added[a]].values.data(), static_cast<Eigen::Index>(dims));
      }
      kept.insert(kept.end(), added.begin(), added.end());
    }
  }
  return out;
}

}  // namespace

DedupResult dedup_by_similarity(std::span<const std::string> ids, std::span<const EmbeddingVector> vectors,
                                const DedupConfig& cfg) {
  cfg.validate();
  if (ids.size() != vectors.size()) throw DimMismatch("ids and vectors differ in length");
  for (const auto& v : vectors) {
    if (v.dims() != vectors.front().dims()) throw DimMismatch("embedding dimensions differ");
  }
  std::size_t block = cfg.block_size;
  if (block == 0) block = vectors.size() > kExactScanLimit ? kDefaultBlock : 0;
  return block == 0 ? dedup_exact(ids, vectors, cfg.tau) : dedup_blocked(ids, vectors, cfg.tau, block);
}

bool CurationReport::balanced() const {
  const std::size_t accounted = kept_count + rejected_resolution + rejected_blocklist + rejected_duplicate +
                                (fetch_mandatory ? fetch_failures : 0);
  return accounted == input_count;
}

Json CurationReport::to_json() const {
  Json j;
  j["input_count"] = input_count;
  j["kept_count"] = kept_count;
  j["rejected_resolution"] = rejected_resolution;
  j["rejected_blocklist"] = rejected_blocklist;
  j["rejected_duplicate"] = rejected_duplicate;
  j["fetch_failures"] = fetch_failures;
  j["fetch_mandatory"] = fetch_mandatory;
  j["rejections"] = Json::array();
  for (const auto& r : rejections) {
    Json row;
    row["id"] = r.id;
    row["reason"] = r.reason;
    if (r.witness_id) row["witness_id"] = *r.witness_id;
    if (r.similarity) row["similarity"] = *r.similarity;
    if (!r.detail.empty()) row["detail"] = r.detail;
    j["rejections"].push_back(std::move(row));
  }
  return j;
}

namespace {

std::vector<ImageMeta> run_dedup(std::vector<ImageMeta> images, const CurationOptions& options,
                                 EmbeddingProvider& provider, CurationReport& report) {
  if (images.empty()) return images;
  std::vector<std::string> texts;
  std::vector<std::string> ids;
  for (const auto& img : images) {
    texts.push_back(img.alt_caption);
    ids.push_back(img.id);
  }
  const auto vectors = embed_texts(provider, texts, options.dedup_config.normalize, options.embed_options);
  const DedupResult dd = dedup_by_similarity(ids, vectors, options.dedup_config);
  std::unordered_set<std::string> removed;
  for (const auto& r : dd.removed) {
    removed.insert(r.id);
    report.rejections.push_back({r.id, "duplicate", r.witness_id, r.similarity, {}});
  }
  report.rejected_duplicate += dd.removed.size();
  std::erase_if(images, [&](const ImageMeta& m) { return removed.contains(m.id); });
  return images;
}

std::vector<ImageMeta> run_fetch(std::vector<ImageMeta> images, const CurationOptions& options,
                                 HttpTransport& transport, CurationReport& report) {
  const FetchResult fr = fetch_images(images, options.image_dir, transport, options.fetch_options);
  report.fetch_failures += fr.failures.size();
  for (const auto& f : fr.failures) {
    report.rejections.push_back({f.id, "fetch", std::nullopt, std::nullopt,
                                 f.error + " after " + std::to_string(f.attempts) + " attempt(s)"});
  }
  if (options.fetch_mandatory) return fr.fetched;
  // Failed items stay in the corpus without a local copy.
  std::unordered_map<std::string, const ImageMeta*> by_id;
  for (const auto& m : fr.fetched) by_id.emplace(m.id, &m);
  for (auto& m : images) {
    if (auto it = by_id.find(m.id); it != by_id.end()) m = *it->second;
  }
  return images;
}

}  // namespace

CurationOutcome run_curation(std::span<const ImageMeta> images, const CurationOptions& options,
                             EmbeddingProvider* provider, HttpTransport* transport) {
  if (options.dedup && provider == nullptr) throw std::invalid_argument("dedup requires an embedding provider");
  if (options.fetch && transport == nullptr) throw std::invalid_argument("fetch requires an HTTP transport");

  CurationOutcome out;
  CurationReport& report = out.report;
  report.input_count = images.size();
  report.fetch_mandatory = options.fetch && options.fetch_mandatory;

  auto res = filter_resolution(images, options.min_dim);
  report.rejected_resolution = res.rejected.size();
  for (const auto& r : res.rejected) {
    report.rejections.push_back({r.id, "resolution", std::nullopt, std::nullopt,
                                 std::to_string(r.width) + "x" + std::to_string(r.height)});
  }
  auto blk = filter_blocklist(res.kept, options.blocklist, options.blocklist_mode);
  report.rejected_blocklist = blk.rejected.size();
  for (const auto& r : blk.rejected) report.rejections.push_back({r.id, "blocklist", std::nullopt, std::nullopt, r.url});

  std::vector<ImageMeta> current = std::move(blk.kept);
  if (options.dedup && options.dedup_before_fetch) current = run_dedup(std::move(current), options, *provider, report);
  if (options.fetch) current = run_fetch(std::move(current), options, *transport, report);
  if (options.dedup && !options.dedup_before_fetch) current = run_dedup(std::move(current), options, *provider, report);

  report.kept_count = current.size();
  out.kept = std::move(current);
  return out;
}

}  // namespace capdistill
