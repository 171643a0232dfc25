#include <string>

#include "cotalign/distill/distill.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

namespace {

// Trailing spaces on some lines are part of the template.
constexpr std::string_view kGenerationHead =
    "You are given a satellite image and a question, along with a\n"
    "reference answer. Your task is to generate a detailed rationale \n"
    "that uses the visual content of the image to derive the answer.\n"
    "\n"
    "## Question\n";

constexpr std::string_view kGenerationMiddle =
    "\n"
    "\n"
    "## Reference Answer\n";

constexpr std::string_view kGenerationTail =
    "\n"
    "\n"
    "## Instructions\n"
    "- Do not state an answer at the beginning\n"
    "- Use detailed reasoning grounded directly in what you see in the\n"
    "  image.\n"
    "- Justify your conclusion clearly with observations.\n"
    "- The reasoning should be clear, grounded in the visual content, \n"
    "  and should not speculate or estimate.\n"
    "- Do not comment on the reference answer. Do not state whether the\n"
    "  reference answer is correct or consistent to your finding.\n"
    "  You are writing your own solution.\n"
    "- Finish with a final derived one word answer on a new line as:\n"
    "\n"
    "\n"
    "### Answer: <your_answer>";

constexpr std::string_view kScoringTemplate =
    "You are a visual reasoning expert. Your task is to verify if a given\n"
    "rationale (chain-of-thought) explanation is logically coherent based on \n"
    "the provided image, question, and answer.\n"
    "\n"
    "Please follow these steps:\n"
    "1. Read the question and analyze the image carefully.\n"
    "2. Evaluate the rationale for:\n"
    "   - Logical consistency\n"
    "   - Visual grounding in the image\n"
    "   - Relevance and coherence\n"
    "   - Completeness (did it miss anything important?)\n"
    "3. Determine whether the answer derived from the rationale follows\n"
    "   naturally and reasonably and is valid based on the image and question.\n"
    "4. Compare the provided answer with the ground truth answer.\n"
    "5. If the answers differ, decide which answer is more likely\n"
    "   correct.\n"
    "6. Provide a quality score (0 to 10) indicating how confident you\n"
    "   are in the rationale.\n"
    "7. Poor structure, vague reasoning, or lack of detail should lower \n"
    "   the score.\n"
    "\n"
    "Format as JSON:\n"
    "  \"rationale_logically_valid\": true/false,\n"
    "  \"rationale_consistent_with_image\": true/false,\n"
    "  \"rationale_correctness_score\": float,\n"
    "  \"rationale_quality_score\": float,\n"
    "  \"answer_follows_from_rationale\": true/false,\n"
    "  \"answer_matches_ground_truth\": true/false,\n"
    "  \"correct_answer\": \"model\"/\"ground_truth\",\n"
    "  \"explanation\": \"Short explanation\"";

}  // namespace

std::string generation_prompt_text(std::string_view question, std::string_view answer) {
  std::string out;
  out.reserve(kGenerationHead.size() + kGenerationMiddle.size() + kGenerationTail.size() +
              question.size() + answer.size());
  out += kGenerationHead;
  out += question;
  out += kGenerationMiddle;
  out += answer;
  out += kGenerationTail;
  return out;
}

ChatRequest build_generation_prompt(const QaRecord& record, const GenerationOptions& options) {
  if (record.question.empty() || record.ground_truth.text.empty()) {
    fail(ErrorKind::Validation,
         "record '" + record.id + "' needs a non-empty question and ground truth");
  }
  ChatRequest req;
  req.messages.push_back(ChatMessage{Role::User,
                                     generation_prompt_text(record.question, record.ground_truth.text),
                                     record.image_ref});
  req.temperature = options.temperature;
  req.n = 1;
  req.max_tokens = options.max_tokens;
  return req;
}

std::string scoring_prompt_text(const QaRecord& record, const CotRecord& cot) {
  std::string out(kScoringTemplate);
  out += "\n\n## Question\n";
  out += record.question;
  out += "\n\n## Rationale\n";
  out += cot.rationale;
  out += "\n\n## Model Answer\n";
  out += cot.final_answer.text;
  out += "\n\n## Ground Truth Answer\n";
  out += record.ground_truth.text;
  return out;
}

ChatRequest build_scoring_prompt(const QaRecord& record, const CotRecord& cot,
                                 const ScoringOptions& options) {
  if (cot.qa_id != record.id) {
    fail(ErrorKind::Validation,
         "rationale for '" + cot.qa_id + "' scored against record '" + record.id + "'");
  }
  ChatRequest req;
  req.messages.push_back(
      ChatMessage{Role::User, scoring_prompt_text(record, cot), record.image_ref});
  req.temperature = options.temperature;
  req.n = 1;
  req.max_tokens = options.max_tokens;
  return req;
}

std::string sft_prompt(std::string_view question, SftStyle style) {
  std::string out(question);
  out += ' ';
  out += style == SftStyle::Direct ? kDirectInstruction : kCotInstruction;
  return out;
}

}  // namespace cotalign
