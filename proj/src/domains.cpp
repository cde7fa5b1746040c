#include "capdistill/domains.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "capdistill/http.hpp"

namespace capdistill {

namespace {

bool is_ipv4(std::string_view host) {
  return !host.empty() &&
         std::all_of(host.begin(), host.end(), [](char c) { return (c >= '0' && c <= '9') || c == '.'; });
}

}  // namespace

std::string domain_of(std::string_view url, DomainMode mode) {
  auto parts = split_url(url);
  if (!parts) return {};
  std::string host = std::move(parts->host);
  if (host.starts_with("www.")) host.erase(0, 4);
  if (host.empty()) return {};
  if (mode == DomainMode::full_host || is_ipv4(host)) return host;
  const auto last = host.rfind('.');
  if (last == std::string::npos) return host;
  const auto second = host.rfind('.', last - 1);
  return second == std::string::npos ? host : host.substr(second + 1);
}

DomainReport domain_stats(std::span<const std::string> urls, std::size_t top_k, DomainMode mode) {
  DomainReport report;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    std::string d = domain_of(urls[i], mode);
    if (d.empty()) {
      report.errors.push_back({i, urls[i]});
      continue;
    }
    ++counts[d];
    ++report.total;
  }
  report.unique_domains = counts.size();

  std::vector<DomainStat> all;
  all.reserve(counts.size());
  for (auto& [domain, count] : counts) all.push_back({domain, count, 0.0, 0.0});
  // std::map iteration is already domain-ascending, so a stable sort on count
  // alone leaves ties in lexicographic order.
  std::stable_sort(all.begin(), all.end(), [](const DomainStat& a, const DomainStat& b) { return a.count > b.count; });

  std::size_t running = 0;
  for (auto& s : all) {
    running += s.count;
    s.pct = 100.0 * static_cast<double>(s.count) / static_cast<double>(report.total);
    s.cumulative_pct = 100.0 * static_cast<double>(running) / static_cast<double>(report.total);
  }
  if (all.size() > top_k) all.resize(top_k);
  report.top = std::move(all);
  return report;
}

DomainReport domain_stats(std::span<const ImageMeta> images, std::size_t top_k, DomainMode mode) {
  std::vector<std::string> urls;
  urls.reserve(images.size());
  for (const auto& img : images) urls.push_back(img.url);
  return domain_stats(urls, top_k, mode);
}

std::string domains_csv(const DomainReport& report) {
  std::string out = "domain,count,pct,cumulative_pct\n";
  char buf[96];
  for (const auto& s : report.top) {
    std::snprintf(buf, sizeof buf, ",%zu,%.6f,%.6f\n", s.count, s.pct, s.cumulative_pct);
    out += s.domain;
    out += buf;
  }
  return out;
}

}  // namespace capdistill
