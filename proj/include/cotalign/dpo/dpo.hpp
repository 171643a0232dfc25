#pragma once

#include <span>
#include <vector>

#include "cotalign/core/jsonl.hpp"

namespace cotalign {

/// Sequence log-probabilities of one preference pair under the policy being
/// optimized and the frozen reference.
struct PairLogprobs {
  double policy_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;

  /// beta * [(policy_chosen - ref_chosen) - (policy_rejected - ref_rejected)]
  double margin(double beta) const;

  /// Finite and <= 0. Throws Error(Validation).
  void validate() const;

  friend bool operator==(const PairLogprobs&, const PairLogprobs&) = default;
};

template <>
struct JsonlCodec<PairLogprobs> {
  static Json encode(const PairLogprobs& r);
  static PairLogprobs decode(const FieldReader& f);
};

struct DpoConfig {
  double beta = 0.1;
  double learning_rate = 0.05;
  int epochs = 2;
  bool full_batch = true;

  void validate() const;
};

/// log(sigmoid(z)) without overflow for large |z|.
double log_sigmoid(double z);

/// sigmoid(z), evaluated on the branch that cannot overflow.
double sigmoid(double z);

/// -mean_i log sigmoid(z_i), z_i the pair margin. beta = 0 is allowed and
/// gives ln 2. Throws Error(Validation) on an empty batch, negative beta or
/// non-finite input.
double dpo_loss(std::span<const PairLogprobs> pairs, double beta);

/// Mean of the pair margins.
double mean_margin(std::span<const PairLogprobs> pairs, double beta);

struct PairGradient {
  double d_policy_chosen = 0.0;
  double d_policy_rejected = 0.0;
  // The reference is frozen; its partials are zero by definition.
  double d_ref_chosen = 0.0;
  double d_ref_rejected = 0.0;
};

/// Closed form: dL/d policy_chosen = -(beta/N) sigmoid(-z),
///              dL/d policy_rejected = +(beta/N) sigmoid(-z).
std::vector<PairGradient> dpo_grad(std::span<const PairLogprobs> pairs, double beta);

}  // namespace cotalign
