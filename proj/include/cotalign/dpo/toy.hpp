#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cotalign/client/model_client.hpp"
#include "cotalign/core/jsonl.hpp"
#include "cotalign/dpo/dpo.hpp"
#include "cotalign/prefdata/prefdata.hpp"

namespace cotalign {

using TokenSeq = std::vector<std::size_t>;

/// Unconditioned unigram policy: log p(sequence) = sum_t log_softmax(logits)[token_t].
class ToyPolicy {
 public:
  ToyPolicy(std::vector<std::string> vocab, std::vector<double> logits);

  /// Logits drawn uniformly from [-scale, scale] with a portable stream.
  static ToyPolicy random(std::vector<std::string> vocab, std::uint64_t seed, double scale = 0.01);

  std::size_t size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& mutable_logits() { return logits_; }

  /// Throws Error(Validation) for tokens outside the vocabulary.
  std::size_t token_id(std::string_view token) const;
  TokenSeq encode(std::span<const std::string> tokens) const;

  std::vector<double> log_softmax() const;

 private:
  std::vector<std::string> vocab_;
  std::vector<double> logits_;
  std::unordered_map<std::string, std::size_t> index_;
};

double toy_logprob(const ToyPolicy& policy, std::span<const std::size_t> tokens);
double toy_logprob(const ToyPolicy& policy, std::span<const std::string> tokens);

struct TokenPair {
  TokenSeq chosen;
  TokenSeq rejected;

  friend auto operator<=>(const TokenPair&, const TokenPair&) = default;
};

struct TrainReport {
  std::vector<double> loss;         // loss before each update
  std::vector<double> mean_margin;  // mean pair margin before each update
  double final_loss = 0.0;          // after the last update
  double final_mean_margin = 0.0;
  std::vector<double> final_logits;

  Json to_json(const std::vector<std::string>& vocab) const;
};

/// Full-batch gradient descent of the DPO loss on the policy logits, one
/// step per epoch. Pairs are visited in sorted order so the result does not
/// depend on input order. Throws Error(Divergence) if the loss exceeds ten
/// times its initial value.
TrainReport train_toy(ToyPolicy policy, std::span<const TokenPair> pairs,
                      const ToyPolicy& reference, const DpoConfig& config);

/// Lowercased alphanumeric runs. Out-of-vocabulary words map to "<unk>"
/// when the vocabulary has it, otherwise they are an error.
TokenSeq tokenize_for_policy(const ToyPolicy& policy, std::string_view text);

std::vector<std::string> read_vocab(std::string_view contents);

// ---- endpoint-backed log-probabilities --------------------------------------

/// Sum of completion-token log-probabilities of `completion` given the
/// prompt and image, scored through the endpoint's forced-completion mode.
/// An empty completion scores 0 without a request. Throws
/// Error(UnsupportedCapability) when the endpoint returns no log-probabilities.
double sequence_logprob(const Client& client, const EndpointConfig& endpoint,
                        const std::string& prompt, const std::string& image_ref,
                        const std::string& completion);

PairLogprobs logprobs_from_endpoint(const Client& client, const EndpointConfig& policy,
                                    const EndpointConfig& reference, const PreferencePair& pair);

}  // namespace cotalign
