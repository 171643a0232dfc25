#include "cotalign/prefdata/prefdata.hpp"

#include <set>

#include "cotalign/core/answer.hpp"
#include "cotalign/core/digest.hpp"
#include "cotalign/core/parallel.hpp"
#include "cotalign/distill/distill.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

std::vector<PlanEntry> default_candidate_plan() { return {{0.2, 4}, {0.6, 4}}; }

bool grade_candidate(const std::optional<CanonicalAnswer>& candidate_answer,
                     const CanonicalAnswer& ground_truth) {
  return candidate_answer && answers_match(*candidate_answer, ground_truth);
}

std::vector<Candidate> grade_samples(const QaRecord& record, std::span<const TaggedSample> samples) {
  std::vector<Candidate> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Candidate c;
    c.text = samples[i].text;
    c.temperature = samples[i].temperature;
    c.index = static_cast<int>(i);
    try {
      auto parsed = extract_final_answer(c.text, record.answer_format);
      c.rationale = std::move(parsed.rationale);
      c.answer = std::move(parsed.answer);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::MissingMarker) throw;
    }
    c.correct = grade_candidate(c.answer, record.ground_truth);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Candidate> sample_candidates(const Client& client, const EndpointConfig& policy,
                                         const QaRecord& record, const CandidateOptions& options) {
  ChatRequest base;
  base.messages.push_back(
      ChatMessage{Role::User, sft_prompt(record.question, SftStyle::Cot), record.image_ref});
  base.max_tokens = options.max_tokens;
  auto samples = sample_group(client, policy, base, options.plan);
  return grade_samples(record, samples);
}

std::optional<PreferencePair> build_pair(const QaRecord& record, std::span<const Candidate> candidates,
                                         std::mt19937_64& rng) {
  std::vector<const Candidate*> correct;
  std::vector<const Candidate*> incorrect;
  for (const auto& c : candidates) (c.correct ? correct : incorrect).push_back(&c);
  if (correct.empty() || incorrect.empty()) return std::nullopt;

  const Candidate* chosen = correct[uniform_index(rng, correct.size())];
  const Candidate* rejected = incorrect[uniform_index(rng, incorrect.size())];
  PreferencePair pair;
  pair.qa_id = record.id;
  pair.image_ref = record.image_ref;
  pair.prompt = sft_prompt(record.question, SftStyle::Cot);
  pair.chosen = chosen->text;
  pair.rejected = rejected->text;
  pair.chosen_index = chosen->index;
  pair.rejected_index = rejected->index;
  return pair;
}

std::optional<PreferencePair> build_pair_seeded(const QaRecord& record,
                                                std::span<const Candidate> candidates,
                                                std::uint64_t global_seed) {
  std::mt19937_64 rng(derive_stream_seed(global_seed, record.id));
  auto pair = build_pair(record, candidates, rng);
  if (pair) pair->seed = global_seed;
  return pair;
}

Json PrefStats::to_json() const {
  return Json{{"input", input},
              {"kept", kept},
              {"removed_all_correct", removed_all_correct},
              {"removed_all_incorrect", removed_all_incorrect},
              {"failed", failed},
              {"records_with_duplicate_candidates", records_with_duplicate_candidates},
              {"duplicate_candidates", duplicate_candidates}};
}

namespace {

enum class PairStatus { Kept, AllCorrect, AllIncorrect, Failed };

struct RecordOutcome {
  PairStatus status = PairStatus::Failed;
  std::optional<PreferencePair> pair;
  std::size_t duplicates = 0;
};

}  // namespace

PrefResult build_dpo_dataset(std::span<const QaRecord> records, const Client& client,
                             const EndpointConfig& policy, std::uint64_t seed,
                             const PrefOptions& options, const Logger* logger) {
  auto outcomes = parallel_map(records.size(), options.concurrency, [&](std::size_t i) {
    const auto& record = records[i];
    RecordOutcome out;
    std::vector<Candidate> candidates;
    try {
      candidates = sample_candidates(client, policy, record, options.candidates);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Validation) throw;
      if (logger) logger->event("build-pref", "failed", record.id, Json{{"error", e.what()}});
      return out;
    }

    std::set<std::string> distinct;
    for (const auto& c : candidates) distinct.insert(c.text);
    out.duplicates = candidates.size() - distinct.size();

    out.pair = build_pair_seeded(record, candidates, seed);
    if (out.pair) {
      out.status = PairStatus::Kept;
    } else {
      out.status = candidates.front().correct ? PairStatus::AllCorrect : PairStatus::AllIncorrect;
    }
    if (logger) {
      std::size_t n_correct = 0;
      for (const auto& c : candidates) n_correct += c.correct ? 1 : 0;
      logger->event("build-pref", out.pair ? "pair" : "removed", record.id,
                    Json{{"correct", n_correct}, {"candidates", candidates.size()}});
    }
    return out;
  });

  PrefResult result;
  auto& s = result.stats;
  s.input = records.size();
  for (auto& o : outcomes) {
    switch (o.status) {
      case PairStatus::Kept: ++s.kept; break;
      case PairStatus::AllCorrect: ++s.removed_all_correct; break;
      case PairStatus::AllIncorrect: ++s.removed_all_incorrect; break;
      case PairStatus::Failed: ++s.failed; break;
    }
    if (o.duplicates > 0) {
      ++s.records_with_duplicate_candidates;
      s.duplicate_candidates += o.duplicates;
    }
    if (o.pair) result.pairs.push_back(std::move(*o.pair));
  }
  return result;
}

// ---------------------------------------------------------------------------

Json JsonlCodec<PreferencePair>::encode(const PreferencePair& r) {
  return Json{{"qa_id", r.qa_id},
              {"image", r.image_ref},
              {"prompt", r.prompt},
              {"chosen", r.chosen},
              {"rejected", r.rejected},
              {"chosen_index", r.chosen_index},
              {"rejected_index", r.rejected_index},
              {"seed", r.seed}};
}

PreferencePair JsonlCodec<PreferencePair>::decode(const FieldReader& f) {
  PreferencePair r;
  r.qa_id = f.str("qa_id");
  r.image_ref = f.str("image");
  r.prompt = f.str("prompt");
  r.chosen = f.str("chosen");
  r.rejected = f.str("rejected");
  auto index = [&](const char* key) {
    auto v = f.integer(key);
    if (v < 0 || v > 1'000'000) f.fail(key, "out of range");
    return static_cast<int>(v);
  };
  r.chosen_index = index("chosen_index");
  r.rejected_index = index("rejected_index");
  if (r.chosen_index == r.rejected_index) f.fail("rejected_index", "equals chosen_index");
  r.seed = f.uinteger("seed");
  return r;
}

}  // namespace cotalign
