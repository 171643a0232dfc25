#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cotalign/client/model_client.hpp"
#include "cotalign/core/jsonl.hpp"
#include "cotalign/core/log.hpp"
#include "cotalign/core/types.hpp"

namespace cotalign {

/// Four samples at t=0.2 followed by four at t=0.6.
std::vector<PlanEntry> default_candidate_plan();

struct Candidate {
  std::string text;
  std::string rationale;
  std::optional<CanonicalAnswer> answer;  // nullopt: no marker or unparseable
  double temperature = 0.0;
  int index = 0;
  bool correct = false;
};

struct PreferencePair {
  std::string qa_id;
  std::string image_ref;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  int chosen_index = 0;
  int rejected_index = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

template <>
struct JsonlCodec<PreferencePair> {
  static Json encode(const PreferencePair& r);
  static PreferencePair decode(const FieldReader& f);
};

bool grade_candidate(const std::optional<CanonicalAnswer>& candidate_answer,
                     const CanonicalAnswer& ground_truth);

/// Parses and grades already-sampled texts (index order = sample order).
std::vector<Candidate> grade_samples(const QaRecord& record, std::span<const TaggedSample> samples);

struct CandidateOptions {
  std::vector<PlanEntry> plan = default_candidate_plan();
  int max_tokens = 1024;
};

/// Samples the cot-style prompt per the plan and grades every response.
std::vector<Candidate> sample_candidates(const Client& client, const EndpointConfig& policy,
                                         const QaRecord& record,
                                         const CandidateOptions& options = {});

/// nullopt when the candidates are all correct or all incorrect. Otherwise
/// chosen is uniform over correct candidates and rejected uniform over
/// incorrect ones, drawn from `rng` in that order.
std::optional<PreferencePair> build_pair(const QaRecord& record, std::span<const Candidate> candidates,
                                         std::mt19937_64& rng);

/// build_pair with the per-record stream seeded by (global_seed, qa_id).
std::optional<PreferencePair> build_pair_seeded(const QaRecord& record,
                                                std::span<const Candidate> candidates,
                                                std::uint64_t global_seed);

struct PrefStats {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t removed_all_correct = 0;
  std::size_t removed_all_incorrect = 0;
  std::size_t failed = 0;
  std::size_t records_with_duplicate_candidates = 0;
  std::size_t duplicate_candidates = 0;

  Json to_json() const;
};

struct PrefOptions {
  CandidateOptions candidates;
  int concurrency = 4;
};

struct PrefResult {
  std::vector<PreferencePair> pairs;  // input order
  PrefStats stats;
};

/// sample -> grade -> build_pair for every record. Endpoint failures mark
/// the record failed and do not stop the batch.
PrefResult build_dpo_dataset(std::span<const QaRecord> records, const Client& client,
                             const EndpointConfig& policy, std::uint64_t seed,
                             const PrefOptions& options = {}, const Logger* logger = nullptr);

}  // namespace cotalign
