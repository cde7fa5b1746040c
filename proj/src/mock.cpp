#include "capdistill/mock.hpp"

#include <array>
#include <cctype>
#include <cmath>

#include "capdistill/hash.hpp"
#include "capdistill/parse.hpp"
#include "capdistill/prompts.hpp"
#include "capdistill/rng.hpp"

namespace capdistill {

namespace {

constexpr std::array<std::string_view, 8> kSubjects{"red bicycle",  "wooden table", "city street", "golden retriever",
                                                    "bowl of fruit", "mountain lake", "glass vase", "vintage car"};
constexpr std::array<std::string_view, 6> kSettings{"in soft morning light", "against a plain white wall",
                                                    "on a busy sidewalk",    "beside a large window",
                                                    "under an overcast sky", "on a wooden floor"};

std::uint64_t seed_of(std::string_view a, std::string_view b) {
  const std::string digest = sha256_hex(std::string(a) + '\x1f' + std::string(b));
  return std::stoull(digest.substr(0, 16), nullptr, 16);
}

std::string first_listed_word(const std::string& prompt) {
  const auto open = prompt.find("['");
  if (open == std::string::npos) return "Misc";
  const auto close = prompt.find('\'', open + 2);
  std::string w = prompt.substr(open + 2, close == std::string::npos ? std::string::npos : close - open - 2);
  if (w.empty()) return "Misc";
  w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

}  // namespace

PromptKind classify_prompt(const std::string& prompt) {
  if (prompt == prompt_template(kLaionPromptId).text) return PromptKind::laion;
  const bool description = prompt.find("<start of description>") != std::string::npos;
  const bool detailed = prompt.find("<start of detailed answer>") != std::string::npos;
  if (description && detailed) return PromptKind::vflan;
  if (detailed) return PromptKind::direct;
  if (prompt.find("```list of words") != std::string::npos) return PromptKind::topic_name;
  return PromptKind::other;
}

std::string MockLvlmClient::respond(const std::string& prompt, const std::string& image_data) {
  Xoshiro256 rng(seed_of(prompt, image_data));
  const std::string subject(kSubjects[rng.below(kSubjects.size())]);
  const std::string setting(kSettings[rng.below(kSettings.size())]);
  const std::string caption = "The image shows a " + subject + " " + setting +
                              ". The composition is centered and the colors are natural, with clear detail on the " +
                              subject + ".";
  ParsedDistillation p;
  p.caption = caption;
  switch (classify_prompt(prompt)) {
    case PromptKind::laion: {
      p.candidate_questions = std::vector<std::string>{
          "What is the main subject of the image?",
          "Where might this photo have been taken?",
          "How would you describe the lighting in the scene?",
          "What details stand out about the " + subject + "?",
          "What mood does the image convey?",
      };
      p.question = (*p.candidate_questions)[rng.below(p.candidate_questions->size())];
      p.answer = "The image centers on a " + subject + " " + setting +
                 ". Its placement and the natural colors make it the clear focal point of the photograph.";
      return render_distillation(p, ParseKind::laion);
    }
    case PromptKind::vflan:
      p.answer = "Based on the visible " + subject + " " + setting + ", the answer follows from the details shown.";
      return render_distillation(p, ParseKind::vflan);
    case PromptKind::direct:
      p.answer = "The picture shows a " + subject + ", which answers the question.";
      return render_distillation(p, ParseKind::direct);
    case PromptKind::topic_name:
      return first_listed_word(prompt) + " Topics";
    case PromptKind::other:
      break;
  }
  return caption;
}

LvlmResponse MockLvlmClient::complete(const LvlmRequest& request) {
  ++calls_;
  LvlmResponse r;
  r.status = 200;
  r.content = respond(request.prompt, request.image ? request.image->data : std::string{});
  return r;
}

LvlmResponse ScriptedLvlmClient::complete(const LvlmRequest& request) {
  const std::string image = request.image ? request.image->data : std::string{};
  std::size_t attempt = 0;
  {
    std::lock_guard lock(mu_);
    attempt = ++attempts_[sha256_hex(request.prompt + '\x1f' + image)];
  }
  const Clock::duration started = clock_->now();
  if (latency_) clock_->sleep_for(latency_(request, attempt));
  LvlmResponse resp = responder_(request, attempt);
  const Clock::duration finished = clock_->now();
  std::lock_guard lock(mu_);
  log_.push_back({request.prompt, image, attempt, started, finished, resp.status});
  return resp;
}

std::vector<LoggedCall> ScriptedLvlmClient::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

ScriptedLvlmClient::Responder ScriptedLvlmClient::fail_then_succeed(std::vector<int> statuses) {
  return [statuses = std::move(statuses)](const LvlmRequest& req, std::size_t attempt) {
    LvlmResponse r;
    if (attempt <= statuses.size()) {
      r.status = statuses[attempt - 1];
      r.error = "scripted failure";
      return r;
    }
    r.status = 200;
    r.content = MockLvlmClient::respond(req.prompt, req.image ? req.image->data : std::string{});
    return r;
  };
}

std::vector<double> MockEmbeddingProvider::embed_one(const std::string& text) const {
  Xoshiro256 rng(seed_of(text, std::to_string(seed_)));
  std::vector<double> v(dims_);
  double norm = 0.0;
  for (auto& x : v) {
    x = 2.0 * rng.uniform() - 1.0;
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& x : v) x /= norm;
  }
  return v;
}

std::vector<std::vector<double>> MockEmbeddingProvider::embed_batch(std::span<const std::string> texts) {
  ++batches_;
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

}  // namespace capdistill
