#include <doctest.h>

#include <cmath>
#include <random>

#include "cotalign/core/digest.hpp"
#include "cotalign/dpo/dpo.hpp"
#include "cotalign/dpo/toy.hpp"
#include "support.hpp"

using namespace cotalign;
using testsupport::to_jsonl;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Validation;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-12, std::abs(b)); }

// Reference within +-2 nats of the policy, so |z| <= 4 beta and the
// gradient stays well above finite-difference round-off.
PairLogprobs random_pair(std::mt19937_64& rng) {
  auto lp = [&] { return -(2.5 + 20.0 * uniform_unit(rng)); };
  auto near = [&](double v) { return v + 4.0 * uniform_unit(rng) - 2.0; };
  const double pc = lp(), pr = lp();
  return {pc, pr, near(pc), near(pr)};
}

std::vector<std::string> vocab6() { return {"road", "grass", "water", "tree", "roof", "car"}; }

}  // namespace

TEST_CASE("log_sigmoid is stable") {
  // -log sigmoid(z) to 30 digits via mpmath.
  CHECK(-log_sigmoid(0.2) == doctest::Approx(0.59813886938159183468709710167).epsilon(1e-15));
  CHECK(-log_sigmoid(5.0) == doctest::Approx(0.00671534848911806861641668773258).epsilon(1e-15));
  CHECK(-log_sigmoid(-5.0) == doctest::Approx(5.00671534848911806861641668773).epsilon(1e-15));
  CHECK(-log_sigmoid(40.0) == doctest::Approx(4.24835425529156114658758451943e-18).epsilon(1e-12));
  CHECK(-log_sigmoid(-800.0) == 800.0);
  CHECK(std::isfinite(log_sigmoid(800.0)));
  CHECK(log_sigmoid(800.0) <= 0.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("loss oracle points") {
  // z = 0.1 * ((-2 - -4) - (-3 - -3)) = 0.2
  std::vector<PairLogprobs> batch{{-2.0, -3.0, -4.0, -3.0}};
  CHECK(batch[0].margin(0.1) == doctest::Approx(0.2));
  CHECK(dpo_loss(batch, 0.1) == doctest::Approx(0.5981388693815918).epsilon(1e-12));
  CHECK(mean_margin(batch, 0.1) == doctest::Approx(0.2));

  // z = 1.0 * ((-1 - -6) - (-5 - -5)) = 5
  batch = {{-1.0, -5.0, -6.0, -5.0}};
  CHECK(dpo_loss(batch, 1.0) == doctest::Approx(0.006715348489118068).epsilon(1e-12));

  batch = {{-2.0, -3.0, -4.0, -3.0}, {-1.0, -5.0, -6.0, -5.0}};
  CHECK(dpo_loss(batch, 1.0) ==
        doctest::Approx((-log_sigmoid(2.0) + -log_sigmoid(5.0)) / 2.0).epsilon(1e-14));
}

TEST_CASE("identity point: policy equal to reference gives ln 2") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PairLogprobs> batch;
    auto n = 1 + uniform_index(rng, 40);
    for (std::size_t i = 0; i < n; ++i) {
      auto p = random_pair(rng);
      p.ref_chosen = p.policy_chosen;
      p.ref_rejected = p.policy_rejected;
      batch.push_back(p);
    }
    for (double beta : {0.0, 0.01, 0.1, 1.0, 10.0}) {
      CHECK(std::abs(dpo_loss(batch, beta) - std::log(2.0)) < 1e-12);
    }
  }
}

TEST_CASE("input validation") {
  std::vector<PairLogprobs> empty;
  CHECK(kind_of([&] { dpo_loss(empty, 0.1); }) == ErrorKind::Validation);
  std::vector<PairLogprobs> ok{{-1, -1, -1, -1}};
  CHECK(kind_of([&] { dpo_loss(ok, -0.1); }) == ErrorKind::Validation);
  std::vector<PairLogprobs> nan{{std::nan(""), -1, -1, -1}};
  CHECK(kind_of([&] { dpo_loss(nan, 0.1); }) == ErrorKind::Validation);
  PairLogprobs positive{0.5, -1, -1, -1};
  CHECK(kind_of([&] { positive.validate(); }) == ErrorKind::Validation);

  DpoConfig c;
  c.beta = -1;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("dpo.beta"));
  c = {};
  c.learning_rate = -0.01;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("dpo.learning_rate"));
  c = {};
  c.epochs = 0;
  CHECK_THROWS_WITH(c.validate(), doctest::Contains("dpo.epochs"));
}

TEST_CASE("gradient matches central finite differences") {
  std::mt19937_64 rng(17);
  const double h = 1e-5;
  int checked = 0;
  for (double beta : {0.01, 0.1, 1.0}) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<PairLogprobs> batch;
      auto n = 1 + uniform_index(rng, 5);
      for (std::size_t i = 0; i < n; ++i) batch.push_back(random_pair(rng));
      auto grad = dpo_grad(batch, beta);
      for (std::size_t i = 0; i < n; ++i) {
        for (int which = 0; which < 2; ++which) {
          auto plus = batch, minus = batch;
          double& p = which ? plus[i].policy_rejected : plus[i].policy_chosen;
          double& m = which ? minus[i].policy_rejected : minus[i].policy_chosen;
          p += h;
          m -= h;
          const double fd = (dpo_loss(plus, beta) - dpo_loss(minus, beta)) / (2 * h);
          const double analytic = which ? grad[i].d_policy_rejected : grad[i].d_policy_chosen;
          CHECK(rel_err(analytic, fd) < 1e-6);
          ++checked;
        }
        CHECK(grad[i].d_ref_chosen == 0.0);
        CHECK(grad[i].d_ref_rejected == 0.0);
        CHECK(grad[i].d_policy_chosen == doctest::Approx(-grad[i].d_policy_rejected));
      }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("pair logprob codec") {
  std::vector<PairLogprobs> pairs{{-1.5, -2.25, -1.75, -2.0}};
  auto text = write_jsonl(pairs);
  CHECK(read_jsonl<PairLogprobs>(text) == pairs);
  CHECK_THROWS_WITH(read_jsonl<PairLogprobs>(
                        R"({"policy_chosen":1,"policy_rejected":-1,"ref_chosen":-1,"ref_rejected":-1})"),
                    doctest::Contains("policy_chosen"));
}

TEST_CASE("toy policy sequence probabilities sum to one (brute force)") {
  ToyPolicy policy({"a", "b", "c", "d"}, {0.3, -1.2, 2.0, 0.0});
  for (std::size_t len = 1; len <= 4; ++len) {
    double total = 0.0;
    std::size_t combos = 1;
    for (std::size_t i = 0; i < len; ++i) combos *= 4;
    for (std::size_t code = 0; code < combos; ++code) {
      TokenSeq seq;
      for (std::size_t i = 0, c = code; i < len; ++i, c /= 4) seq.push_back(c % 4);
      total += std::exp(toy_logprob(policy, seq));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  double z = std::exp(0.3) + std::exp(-1.2) + std::exp(2.0) + 1.0;
  std::vector<std::string> words{"c", "a"};
  CHECK(toy_logprob(policy, words) == doctest::Approx(std::log(std::exp(2.0) / z * std::exp(0.3) / z)));
}

TEST_CASE("toy policy construction checks") {
  CHECK(kind_of([] { ToyPolicy({"a"}, {0.0}); }) == ErrorKind::Validation);
  CHECK(kind_of([] { ToyPolicy({"a", "a"}, {0.0, 0.0}); }) == ErrorKind::Validation);
  CHECK(kind_of([] { ToyPolicy({"a", "b"}, {0.0}); }) == ErrorKind::Validation);
  auto r1 = ToyPolicy::random(vocab6(), 3);
  auto r2 = ToyPolicy::random(vocab6(), 3);
  CHECK(r1.logits() == r2.logits());
  for (double l : r1.logits()) CHECK(std::abs(l) <= 0.01);
}

TEST_CASE("train_toy update equals the finite-difference gradient of the loss") {
  auto vocab = vocab6();
  auto reference = ToyPolicy::random(vocab, 4, 0.5);
  ToyPolicy start(vocab, {0.2, -0.1, 0.4, 0.0, -0.3, 0.1});
  std::vector<TokenPair> pairs{{{0, 1, 2}, {3, 4}}, {{5, 5}, {0, 2, 1, 4}}, {{2}, {3}}};
  DpoConfig config;
  config.beta = 0.5;
  config.learning_rate = 0.01;
  config.epochs = 1;
  auto report = train_toy(start, pairs, reference, config);

  auto loss_at = [&](const std::vector<double>& logits) {
    ToyPolicy p(vocab, logits);
    std::vector<PairLogprobs> lp;
    for (const auto& pr : pairs) {
      lp.push_back({toy_logprob(p, pr.chosen), toy_logprob(p, pr.rejected),
                    toy_logprob(reference, pr.chosen), toy_logprob(reference, pr.rejected)});
    }
    return dpo_loss(lp, config.beta);
  };
  CHECK(report.loss[0] == doctest::Approx(loss_at(start.logits())).epsilon(1e-14));
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    auto plus = start.logits(), minus = start.logits();
    plus[k] += 1e-5;
    minus[k] -= 1e-5;
    const double fd = (loss_at(plus) - loss_at(minus)) / 2e-5;
    const double applied = (start.logits()[k] - report.final_logits[k]) / config.learning_rate;
    CHECK(applied == doctest::Approx(fd).epsilon(1e-6));
  }
  CHECK(report.final_loss == doctest::Approx(loss_at(report.final_logits)).epsilon(1e-14));
}

TEST_CASE("toy descent on equal-length pairs lowers the loss every step") {
  auto vocab = vocab6();
  auto reference = ToyPolicy::random(vocab, 9);
  std::vector<TokenPair> pairs;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    TokenPair p;
    for (int t = 0; t < 4; ++t) {
      p.chosen.push_back(uniform_index(rng, 3));
      p.rejected.push_back(3 + uniform_index(rng, 3));
    }
    pairs.push_back(p);
  }
  DpoConfig config;
  config.epochs = 200;
  auto report = train_toy(reference, pairs, reference, config);
  REQUIRE(report.loss.size() == 200);
  CHECK(report.loss[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (std::size_t i = 1; i < report.loss.size(); ++i) CHECK(report.loss[i] <= report.loss[i - 1]);
  CHECK(report.final_loss <= report.loss.back());
  CHECK(report.final_mean_margin > 0.0);

  auto shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto again = train_toy(reference, shuffled, reference, config);
  CHECK(again.final_logits == report.final_logits);
  CHECK(again.to_json(vocab).dump() == report.to_json(vocab).dump());
}

TEST_CASE("an oversized learning rate is reported as divergence") {
  ToyPolicy ref({"a", "b", "c"}, {0, 0, 0});
  std::vector<TokenPair> pairs;
  pairs.push_back({{0}, {1, 1, 1, 1, 1, 1}});
  pairs.push_back({{1, 1}, {0}});
  DpoConfig config;
  config.beta = 1.0;
  config.learning_rate = 10.0;
  config.epochs = 20;
  CHECK(kind_of([&] { train_toy(ref, pairs, ref, config); }) == ErrorKind::Divergence);
}

TEST_CASE("zero learning rate leaves the logits and loss unchanged") {
  auto vocab = vocab6();
  auto reference = ToyPolicy::random(vocab, 2, 0.5);
  ToyPolicy start(vocab, {0.3, -0.2, 0.1, 0.0, 0.5, -0.4});
  std::vector<TokenPair> pairs{{{0, 1}, {2, 3}}, {{4}, {5, 5}}};
  DpoConfig config;
  config.learning_rate = 0.0;
  config.epochs = 5;
  auto report = train_toy(start, pairs, reference, config);
  CHECK(report.final_logits == start.logits());
  for (double l : report.loss) CHECK(l == report.loss[0]);
  CHECK(report.final_loss == report.loss[0]);
}

TEST_CASE("tokenization and vocabulary files") {
  auto vocab = read_vocab("# comment\nroad\n\n  grass  \n<unk>\n");
  CHECK(vocab == std::vector<std::string>{"road", "grass", "<unk>"});
  ToyPolicy p(vocab, {0, 0, 0});
  CHECK(tokenize_for_policy(p, "Road, GRASS; river!") == TokenSeq{0, 1, 2});
  ToyPolicy strict({"road", "grass"}, {0, 0});
  CHECK(kind_of([&] { tokenize_for_policy(strict, "road river"); }) == ErrorKind::Validation);
}

TEST_CASE("endpoint log-probabilities use forced completion") {
  auto transcript = to_jsonl({
      testsupport::scripted({{"model", "policy-model"}, {"contains", "CHOSEN"}},
                            {Json{{"choices", {Json{{"text", ""}, {"logprobs", {-0.5, -0.25}}}}}}}),
      testsupport::scripted({{"model", "policy-model"}, {"contains", "REJECTED"}},
                            {Json{{"choices", {Json{{"text", ""}, {"logprobs", {-2.0}}}}}}}),
      testsupport::scripted(
          {{"model", "reference-model"}},
          {Json{{"body", Json{{"choices", {{{"message", {{"content", ""}}},
                                            {"logprobs", {{"content", {{{"logprob", -9.0}},
                                                                       {{"logprob", -1.0}}}}}}}}},
                              {"usage", {{"prompt_tokens", 1}, {"completion_tokens", 1}}}}}}}),
      testsupport::entry({{"model", "plain-model"}}, {"no logprobs here"}),
  });
  auto mock = std::make_shared<MockTransport>(transcript);
  ClientOptions o;
  o.image_mode = ImageMode::Reference;
  Client client(mock, o);
  auto make = [](const std::string& name) {
    EndpointConfig e;
    e.name = name;
    e.base_url = "mock://" + name;
    e.model_name = name + "-model";
    return e;
  };
  PreferencePair pair{"q", "img.png", "Is it? Generate a reason first and then output a short answer.",
                      "CHOSEN text", "REJECTED text", 0, 5, 1};
  auto lp = logprobs_from_endpoint(client, make("policy"), make("reference"), pair);
  CHECK(lp.policy_chosen == -0.75);
  CHECK(lp.policy_rejected == -2.0);
  CHECK(lp.ref_chosen == -1.0);  // echoed prompt token dropped
  auto first = mock->requests().front();
  CHECK(first["forced_completion"] == "CHOSEN text");
  CHECK(first["logprobs"] == true);
  CHECK(first["temperature"] == 0.0);

  CHECK(sequence_logprob(client, make("plain"), "p", "", "") == 0.0);
  CHECK(kind_of([&] { sequence_logprob(client, make("plain"), "p", "", "x"); }) ==
        ErrorKind::UnsupportedCapability);
}
