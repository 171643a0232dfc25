#include "cotalign/dpo/toy.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cotalign/core/answer.hpp"
#include "cotalign/core/digest.hpp"
#include "cotalign/error.hpp"

namespace cotalign {

ToyPolicy::ToyPolicy(std::vector<std::string> vocab, std::vector<double> logits)
    : vocab_(std::move(vocab)), logits_(std::move(logits)) {
  if (vocab_.size() < 2) fail(ErrorKind::Validation, "toy policy needs at least 2 tokens");
  if (logits_.size() != vocab_.size()) {
    fail(ErrorKind::Validation, "toy policy has " + std::to_string(logits_.size()) +
                                    " logits for " + std::to_string(vocab_.size()) + " tokens");
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (!index_.emplace(vocab_[i], i).second) {
      fail(ErrorKind::Validation, "duplicate vocabulary token '" + vocab_[i] + "'");
    }
    if (!std::isfinite(logits_[i])) fail(ErrorKind::Validation, "toy policy logit is not finite");
  }
}

ToyPolicy ToyPolicy::random(std::vector<std::string> vocab, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::vector<double> logits(vocab.size());
  for (auto& l : logits) l = scale * (2.0 * uniform_unit(rng) - 1.0);
  return ToyPolicy(std::move(vocab), std::move(logits));
}

std::size_t ToyPolicy::token_id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) {
    fail(ErrorKind::Validation, "token '" + std::string(token) + "' is not in the vocabulary");
  }
  return it->second;
}

TokenSeq ToyPolicy::encode(std::span<const std::string> tokens) const {
  TokenSeq out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(token_id(t));
  return out;
}

std::vector<double> ToyPolicy::log_softmax() const {
  double mx = *std::max_element(logits_.begin(), logits_.end());
  double sum = 0.0;
  for (double l : logits_) sum += std::exp(l - mx);
  double lse = mx + std::log(sum);
  std::vector<double> out(logits_.size());
  for (std::size_t i = 0; i < logits_.size(); ++i) out[i] = logits_[i] - lse;
  return out;
}

namespace {

double sequence_sum(const std::vector<double>& log_probs, std::span<const std::size_t> tokens) {
  double s = 0.0;
  for (auto t : tokens) {
    if (t >= log_probs.size()) fail(ErrorKind::Validation, "token id out of vocabulary range");
    s += log_probs[t];
  }
  return s;
}

}  // namespace

double toy_logprob(const ToyPolicy& policy, std::span<const std::size_t> tokens) {
  return sequence_sum(policy.log_softmax(), tokens);
}

double toy_logprob(const ToyPolicy& policy, std::span<const std::string> tokens) {
  return toy_logprob(policy, policy.encode(tokens));
}

Json TrainReport::to_json(const std::vector<std::string>& vocab) const {
  Json logits = Json::object();
  for (std::size_t i = 0; i < vocab.size() && i < final_logits.size(); ++i) {
    logits[vocab[i]] = final_logits[i];
  }
  return Json{{"steps", loss.size()},
              {"loss", loss},
              {"mean_margin", mean_margin},
              {"final_loss", final_loss},
              {"final_mean_margin", final_mean_margin},
              {"final_logits", std::move(logits)}};
}

TrainReport train_toy(ToyPolicy policy, std::span<const TokenPair> pairs, const ToyPolicy& reference,
                      const DpoConfig& config) {
  config.validate();
  if (pairs.empty()) fail(ErrorKind::Validation, "train_toy needs at least one pair");
  if (reference.vocab() != policy.vocab()) {
    fail(ErrorKind::Validation, "policy and reference vocabularies differ");
  }

  std::vector<TokenPair> batch(pairs.begin(), pairs.end());
  std::sort(batch.begin(), batch.end());

  const std::size_t vocab_size = policy.size();
  const double n = static_cast<double>(batch.size());
  const double beta = config.beta;

  // Per-pair token counts for the logit gradient.
  struct Counts {
    std::vector<double> chosen, rejected;
    double chosen_len, rejected_len;
  };
  std::vector<Counts> counts;
  counts.reserve(batch.size());
  for (const auto& p : batch) {
    Counts c{std::vector<double>(vocab_size, 0.0), std::vector<double>(vocab_size, 0.0),
             static_cast<double>(p.chosen.size()), static_cast<double>(p.rejected.size())};
    for (auto t : p.chosen) {
      if (t >= vocab_size) fail(ErrorKind::Validation, "token id out of vocabulary range");
      c.chosen[t] += 1.0;
    }
    for (auto t : p.rejected) {
      if (t >= vocab_size) fail(ErrorKind::Validation, "token id out of vocabulary range");
      c.rejected[t] += 1.0;
    }
    counts.push_back(std::move(c));
  }

  const auto ref_ls = reference.log_softmax();
  std::vector<PairLogprobs> lp(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    lp[i].ref_chosen = sequence_sum(ref_ls, batch[i].chosen);
    lp[i].ref_rejected = sequence_sum(ref_ls, batch[i].rejected);
  }

  auto evaluate = [&](const std::vector<double>& ls) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      lp[i].policy_chosen = sequence_sum(ls, batch[i].chosen);
      lp[i].policy_rejected = sequence_sum(ls, batch[i].rejected);
    }
    return std::pair{dpo_loss(lp, beta), mean_margin(lp, beta)};
  };

  TrainReport report;
  double initial = 0.0;
  std::vector<double> grad(vocab_size);
  for (int step = 0; step < config.epochs; ++step) {
    const auto ls = policy.log_softmax();
    auto [loss, margin] = evaluate(ls);
    if (step == 0) initial = loss;
    if (!std::isfinite(loss) || loss > 10.0 * initial) {
      fail(ErrorKind::Divergence, "toy DPO loss diverged at step " + std::to_string(step));
    }
    report.loss.push_back(loss);
    report.mean_margin.push_back(margin);

    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      // dL/dlogp(y+) = -w, dL/dlogp(y-) = +w; dlogp(y)/dlogit_k = count_k - |y| p_k.
      const double w = beta / n * sigmoid(-lp[i].margin(beta));
      const auto& c = counts[i];
      for (std::size_t k = 0; k < vocab_size; ++k) {
        const double pk = std::exp(ls[k]);
        const double d_chosen = c.chosen[k] - c.chosen_len * pk;
        const double d_rejected = c.rejected[k] - c.rejected_len * pk;
        grad[k] += w * (d_rejected - d_chosen);
      }
    }
    auto& logits = policy.mutable_logits();
    for (std::size_t k = 0; k < vocab_size; ++k) logits[k] -= config.learning_rate * grad[k];
  }

  auto [final_loss, final_margin] = evaluate(policy.log_softmax());
  if (!std::isfinite(final_loss) || final_loss > 10.0 * initial) {
    fail(ErrorKind::Divergence, "toy DPO loss diverged after the final step");
  }
  report.final_loss = final_loss;
  report.final_mean_margin = final_margin;
  report.final_logits = policy.logits();
  return report;
}

TokenSeq tokenize_for_policy(const ToyPolicy& policy, std::string_view text) {
  TokenSeq out;
  const auto& vocab = policy.vocab();
  const bool has_unk = std::find(vocab.begin(), vocab.end(), "<unk>") != vocab.end();
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    auto lowered = ascii_lower(word);
    word.clear();
    if (std::find(vocab.begin(), vocab.end(), lowered) != vocab.end()) {
      out.push_back(policy.token_id(lowered));
    } else if (has_unk) {
      out.push_back(policy.token_id("<unk>"));
    } else {
      fail(ErrorKind::Validation, "word '" + lowered + "' is not in the vocabulary (add <unk>)");
    }
  };
  for (char c : text) {
    bool alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                 (static_cast<unsigned char>(c) >= 0x80);
    if (alnum) {
      word += c;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<std::string> read_vocab(std::string_view contents) {
  std::vector<std::string> vocab;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto nl = contents.find('\n', pos);
    auto line = trim(contents.substr(pos, nl == std::string_view::npos ? std::string_view::npos
                                                                       : nl - pos));
    if (!line.empty() && line[0] != '#') vocab.push_back(std::move(line));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return vocab;
}

// ---------------------------------------------------------------------------

double sequence_logprob(const Client& client, const EndpointConfig& endpoint,
                        const std::string& prompt, const std::string& image_ref,
                        const std::string& completion) {
  if (completion.empty()) return 0.0;
  ChatRequest req;
  req.messages.push_back(ChatMessage{
      Role::User, prompt, image_ref.empty() ? std::nullopt : std::optional<std::string>(image_ref)});
  req.temperature = 0.0;
  req.n = 1;
  req.max_tokens = 1;
  req.logprobs = true;
  req.forced_completion = completion;

  auto response = client.complete(endpoint, req);
  const auto& choice = response.choices.front();
  if (!choice.token_logprobs) {
    fail(ErrorKind::UnsupportedCapability,
         "endpoint '" + endpoint.name +
             "' returned no token log-probabilities; serve the model with forced-completion "
             "logprob scoring, or precompute PairLogprobs JSONL and use dpo-loss");
  }
  std::span<const double> values(*choice.token_logprobs);
  // Some servers echo prompt tokens; keep only the completion span.
  if (response.usage && response.usage->completion_tokens > 0 &&
      values.size() == static_cast<std::size_t>(response.usage->prompt_tokens +
                                                response.usage->completion_tokens)) {
    values = values.last(static_cast<std::size_t>(response.usage->completion_tokens));
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  if (!std::isfinite(sum) || sum > 0.0) {
    fail(ErrorKind::Protocol, "endpoint '" + endpoint.name + "' returned invalid log-probabilities");
  }
  return sum;
}

PairLogprobs logprobs_from_endpoint(const Client& client, const EndpointConfig& policy,
                                    const EndpointConfig& reference, const PreferencePair& pair) {
  PairLogprobs out;
  out.policy_chosen = sequence_logprob(client, policy, pair.prompt, pair.image_ref, pair.chosen);
  out.policy_rejected = sequence_logprob(client, policy, pair.prompt, pair.image_ref, pair.rejected);
  out.ref_chosen = sequence_logprob(client, reference, pair.prompt, pair.image_ref, pair.chosen);
  out.ref_rejected = sequence_logprob(client, reference, pair.prompt, pair.image_ref, pair.rejected);
  return out;
}

}  // namespace cotalign
