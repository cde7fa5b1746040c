#include "capdistill/prompts.hpp"

#include <algorithm>
#include <cctype>

namespace capdistill {

namespace {

// Caption, five candidate questions, one chosen question, answer.
const std::string_view kLaionText = R"tmpl(### You are an excellent image describer and questioner
### You have three tasks in total
#### Your first task is to describe the given image as detailed as possible
#### Your second task is to ask a complex question that requires close inspection of the image and strong reasoning ability to answer, you should ask FIVE candidate questions in different aspects and diverse ways, then RANDOMLY choose one of them to answer
#### Your third task is to answer the question you raised solely based on the given image
### When you ask questions, try to find the most valuable information in the picture to ask about, and ask a question that is relevant to that information
### When you ask questions, do not involve violence, advertisement, possible invasion of privacy, or questions that may cause discomfort
### Do not mention anything from the prompt in your response
### You will follow the instructions to the best of your ability
### Your response should follow the following format
<start of description>
{description}
<end of description>
<start of candidate questions>
{candidate questions}
<end of candidate questions>
<start of question>
{question}
<end of question>
<start of answer>
{answer}
<end of answer>)tmpl";

// Caption first, then a detailed answer to the original instruction.
const std::string_view kVflanText = R"tmpl(You are an excellent image describer.

Your task is to first describe an image and then answer a question.

Your description should include details about the main subjects, background elements, colors, and any notable features. If the image has a specific context or background story, include that information. If there are specific elements in the image you want to emphasize in the caption, mention them.

Your answer should provide relevant information to the question and demonstrate the process of solving the question.

Both your description and answer should be professional, insightful, helpful, objective, unbiased. 

For scenarios where bias has been traditionally an issue, make sure that key traits such as gender and race are specified and in an unbiased way in the description -- for example, prompts that contain references to specific occupations.

If the question tries to induce you to produce something against ethical rules, such as leaking personal information or making discriminative judgements on underrepresented groups, you must point out the inappropriate intent and refuse to answer the question.

Here is the question:
```question
{question}
```

Your output should follow the format below:

<start of description>
{description}
<end of description>

<start of detailed answer>
{detailed_answer}
<end of detailed answer>)tmpl";

// Ablation: the vflan prompt with the description task removed.
const std::string_view kVflanDirectText = R"tmpl(You are an excellent image describer.

Your task is to answer a question about an image.

Your answer should provide relevant information to the question and demonstrate the process of solving the question.

Your answer should be professional, insightful, helpful, objective, unbiased. 

For scenarios where bias has been traditionally an issue, make sure that key traits such as gender and race are specified and in an unbiased way in the answer -- for example, prompts that contain references to specific occupations.

If the question tries to induce you to produce something against ethical rules, such as leaking personal information or making discriminative judgements on underrepresented groups, you must point out the inappropriate intent and refuse to answer the question.

Here is the question:
```question
{question}
```

Your output should follow the format below:

<start of detailed answer>
{detailed_answer}
<end of detailed answer>)tmpl";

const std::string_view kTopicNamingText = R"tmpl(I will provide you with a list of words obtained from LDA analysis. 
I want you to summarize the list of words using **1~2 words**.
You should only output the summary.
```list of words
{str(key_words)}
```)tmpl";

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

const std::vector<PromptTemplate>& registry() {
  static const std::vector<PromptTemplate> templates{
      {std::string(kLaionPromptId), std::string(kLaionText), {}},
      {std::string(kVflanPromptId), std::string(kVflanText), {"question"}},
      {std::string(kVflanDirectPromptId), std::string(kVflanDirectText), {"question"}},
      {std::string(kTopicNamingPromptId), std::string(kTopicNamingText), {"str(key_words)"}},
  };
  return templates;
}

}  // namespace

const PromptTemplate& prompt_template(std::string_view prompt_id) {
  const auto& all = registry();
  auto it = std::find_if(all.begin(), all.end(), [&](const PromptTemplate& t) { return t.prompt_id == prompt_id; });
  if (it == all.end()) {
    throw PromptError(PromptError::Kind::unknown_template, std::string(prompt_id),
                      "unknown prompt template '" + std::string(prompt_id) + "'");
  }
  return *it;
}

std::string render_template(const PromptTemplate& tmpl, const std::map<std::string, std::string>& values) {
  for (const auto& [name, value] : values) {
    if (std::find(tmpl.slots.begin(), tmpl.slots.end(), name) == tmpl.slots.end()) {
      throw PromptError(PromptError::Kind::unexpected_slot, name,
                        "template " + tmpl.prompt_id + " has no slot '" + name + "'");
    }
  }
  for (const auto& slot : tmpl.slots) {
    if (!values.contains(slot)) {
      throw PromptError(PromptError::Kind::missing_slot, slot,
                        "template " + tmpl.prompt_id + " needs slot '" + slot + "'");
    }
  }
  // Single left-to-right pass so slot values are never rescanned.
  std::string out;
  out.reserve(tmpl.text.size());
  std::size_t pos = 0;
  while (pos < tmpl.text.size()) {
    bool replaced = false;
    if (tmpl.text[pos] == '{') {
      for (const auto& slot : tmpl.slots) {
        const std::string marker = "{" + slot + "}";
        if (tmpl.text.compare(pos, marker.size(), marker) == 0) {
          out += values.at(slot);
          pos += marker.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl.text[pos++]);
  }
  return out;
}

std::string_view prompt_id_for(Source kind) { return kind == Source::laion ? kLaionPromptId : kVflanPromptId; }

std::string build_prompt(Source kind, const std::optional<std::string>& question) {
  if (kind == Source::laion) {
    if (question) {
      throw PromptError(PromptError::Kind::unexpected_slot, "question", "laion prompt takes no question");
    }
    return render_template(prompt_template(kLaionPromptId), {});
  }
  if (!question) throw PromptError(PromptError::Kind::missing_slot, "question", "vflan prompt needs a question");
  if (is_blank(*question)) {
    throw PromptError(PromptError::Kind::empty_question, "question", "vflan prompt needs a nonempty question");
  }
  return render_template(prompt_template(kVflanPromptId), {{"question", *question}});
}

std::string_view prompt_id_for(AblationMode mode) {
  return mode == AblationMode::caption_then_answer ? kVflanPromptId : kVflanDirectPromptId;
}

std::string ablation_prompt(AblationMode mode, const std::string& question) {
  if (is_blank(question)) {
    throw PromptError(PromptError::Kind::empty_question, "question", "ablation prompt needs a nonempty question");
  }
  return render_template(prompt_template(prompt_id_for(mode)), {{"question", question}});
}

}  // namespace capdistill
