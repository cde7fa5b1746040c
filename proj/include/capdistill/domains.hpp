#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "capdistill/corpus.hpp"

namespace capdistill {

struct DomainStat {
  std::string domain;
  std::size_t count = 0;
  double pct = 0.0;
  double cumulative_pct = 0.0;
};

enum class DomainMode {
  last_two_labels,  // a.cnn.com -> cnn.com (no public-suffix list: bbc.co.uk -> co.uk)
  full_host,
};

struct UrlError {
  std::size_t index = 0;
  std::string url;
};

struct DomainReport {
  std::size_t unique_domains = 0;
  std::size_t total = 0;         // parsable URLs
  std::vector<DomainStat> top;   // count desc, then domain asc
  std::vector<UrlError> errors;  // excluded from totals
};

/// Hostname with a leading "www." removed, reduced per `mode`.
/// Empty when the URL cannot be parsed.
std::string domain_of(std::string_view url, DomainMode mode = DomainMode::last_two_labels);

DomainReport domain_stats(std::span<const std::string> urls, std::size_t top_k = 12,
                          DomainMode mode = DomainMode::last_two_labels);
DomainReport domain_stats(std::span<const ImageMeta> images, std::size_t top_k = 12,
                          DomainMode mode = DomainMode::last_two_labels);

/// "domain,count,pct,cumulative_pct" rows for the top list.
std::string domains_csv(const DomainReport& report);

}  // namespace capdistill
