#include "cotalign/dpo/dpo.hpp"

#include <cmath>

#include "cotalign/error.hpp"

namespace cotalign {

namespace {

void check_batch(std::span<const PairLogprobs> pairs, double beta) {
  if (pairs.empty()) fail(ErrorKind::Validation, "DPO batch is empty");
  if (!std::isfinite(beta) || beta < 0.0) {
    fail(ErrorKind::Validation, "dpo.beta: must be finite and >= 0");
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!std::isfinite(p.policy_chosen) || !std::isfinite(p.policy_rejected) ||
        !std::isfinite(p.ref_chosen) || !std::isfinite(p.ref_rejected)) {
      fail(ErrorKind::Validation, "pair " + std::to_string(i) + " has a non-finite log-probability");
    }
  }
}

}  // namespace

double PairLogprobs::margin(double beta) const {
  return beta * ((policy_chosen - ref_chosen) - (policy_rejected - ref_rejected));
}

void PairLogprobs::validate() const {
  for (double v : {policy_chosen, policy_rejected, ref_chosen, ref_rejected}) {
    if (!std::isfinite(v) || v > 0.0) {
      fail(ErrorKind::Validation, "sequence log-probabilities must be finite and <= 0");
    }
  }
}

void DpoConfig::validate() const {
  if (!std::isfinite(beta) || beta <= 0.0) fail(ErrorKind::Validation, "dpo.beta: must be > 0");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    fail(ErrorKind::Validation, "dpo.learning_rate: must be >= 0");
  }
  if (epochs < 1) fail(ErrorKind::Validation, "dpo.epochs: must be >= 1");
  if (!full_batch) fail(ErrorKind::Validation, "dpo.full_batch: only full-batch descent is supported");
}

double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double dpo_loss(std::span<const PairLogprobs> pairs, double beta) {
  check_batch(pairs, beta);
  double sum = 0.0;
  for (const auto& p : pairs) sum -= log_sigmoid(p.margin(beta));
  return sum / static_cast<double>(pairs.size());
}

double mean_margin(std::span<const PairLogprobs> pairs, double beta) {
  check_batch(pairs, beta);
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.margin(beta);
  return sum / static_cast<double>(pairs.size());
}

std::vector<PairGradient> dpo_grad(std::span<const PairLogprobs> pairs, double beta) {
  check_batch(pairs, beta);
  const double scale = beta / static_cast<double>(pairs.size());
  std::vector<PairGradient> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    double w = scale * sigmoid(-p.margin(beta));
    out.push_back(PairGradient{-w, w, 0.0, 0.0});
  }
  return out;
}

Json JsonlCodec<PairLogprobs>::encode(const PairLogprobs& r) {
  return Json{{"policy_chosen", r.policy_chosen},
              {"policy_rejected", r.policy_rejected},
              {"ref_chosen", r.ref_chosen},
              {"ref_rejected", r.ref_rejected}};
}

PairLogprobs JsonlCodec<PairLogprobs>::decode(const FieldReader& f) {
  PairLogprobs r{f.num("policy_chosen"), f.num("policy_rejected"), f.num("ref_chosen"),
                 f.num("ref_rejected")};
  for (const char* key : {"policy_chosen", "policy_rejected", "ref_chosen", "ref_rejected"}) {
    double v = f.num(key);
    if (!std::isfinite(v) || v > 0.0) f.fail(key, "log-probability must be finite and <= 0");
  }
  return r;
}

}  // namespace cotalign
