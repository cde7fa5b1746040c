#pragma once

#include <span>
#include <string>
#include <vector>

#include "capdistill/clock.hpp"
#include "capdistill/lvlm.hpp"
#include "capdistill/retry.hpp"

namespace capdistill {

/// Python's repr() of a list of str, e.g. ['slice', 'dish'], which is what
/// the naming prompt's {str(key_words)} slot expects.
std::string python_list_repr(std::span<const std::string> words);

struct TopicNamingOptions {
  RetryPolicy policy;
  Clock* clock = &SteadyClock::instance();
};

struct TopicNames {
  std::vector<std::string> names;
  std::vector<std::string> warnings;
};

/// One text-only request per topic. A topic whose request fails after
/// retries, or comes back blank, is named "topic-<k>" and gets a warning.
TopicNames name_topics(LvlmClient& client, std::span<const std::vector<std::string>> top_words,
                       const TopicNamingOptions& options = {});

}  // namespace capdistill
