#include "capdistill/topic_naming.hpp"

#include <stdexcept>

#include "capdistill/prompts.hpp"

namespace capdistill {

namespace {

std::string trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::string py_str_repr(const std::string& s) {
  const bool has_single = s.find('\'') != std::string::npos;
  const bool has_double = s.find('"') != std::string::npos;
  const char quote = has_single && !has_double ? '"' : '\'';
  std::string out(1, quote);
  for (char c : s) {
    if (c == '\\' || c == quote) out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
    } else if (c == '\t') {
      out += "\\t";
    } else if (c == '\r') {
      out += "\\r";
    } else {
      out.push_back(c);
    }
  }
  out.push_back(quote);
  return out;
}

}  // namespace

std::string python_list_repr(std::span<const std::string> words) {
  std::string out = "[";
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ", ";
    out += py_str_repr(words[i]);
  }
  out += "]";
  return out;
}

TopicNames name_topics(LvlmClient& client, std::span<const std::vector<std::string>> top_words,
                       const TopicNamingOptions& options) {
  options.policy.validate();
  const PromptTemplate& tmpl = prompt_template(kTopicNamingPromptId);
  TopicNames result;
  for (std::size_t k = 0; k < top_words.size(); ++k) {
    if (top_words[k].empty()) throw std::invalid_argument("topic " + std::to_string(k) + " has no words");
    LvlmRequest req;
    req.prompt = render_template(tmpl, {{"str(key_words)", python_list_repr(top_words[k])}});

    std::string name;
    std::string failure;
    for (int attempt = 1; attempt <= options.policy.max_attempts; ++attempt) {
      const LvlmResponse resp = client.complete(req);
      if (resp.status == 200) {
        name = trim(resp.content);
        if (!name.empty()) break;
        failure = "empty response";
      } else {
        failure = "status " + std::to_string(resp.status) + (resp.error.empty() ? "" : ": " + resp.error);
        if (!options.policy.is_retryable(resp.status)) break;
      }
      if (attempt < options.policy.max_attempts) options.clock->sleep_for(options.policy.backoff_after(attempt));
    }
    if (name.empty()) {
      name = "topic-" + std::to_string(k);
      result.warnings.push_back("topic " + std::to_string(k) + " named by fallback (" + failure + ")");
    }
    result.names.push_back(std::move(name));
  }
  return result;
}

}  // namespace capdistill
