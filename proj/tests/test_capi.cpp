#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>
#include <string>

#include "cotalign/cotalign.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Owns a string returned by the C interface.
struct CStr {
  char* p = nullptr;
  ~CStr() { cotalign_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct TempDir {
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "cotalign-capi-XXXXXX").string();
    REQUIRE(mkdtemp(tmpl.data()) != nullptr);
    path = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
  fs::path path;
};

void write(const std::string& path, const std::string& data) {
  std::ofstream(path, std::ios::binary) << data;
}

std::string read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Cli {
  int exit_code = -1;
  std::string out;
  std::string err;
};

Cli run_cli(const std::string& args, const TempDir& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      std::string("'") + COTALIGN_CLI_PATH + "' " + args + " >'" + out + "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  Cli r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read(out);
  r.err = read(err);
  return r;
}

const char* kVerdict =
    R"({"rationale_logically_valid": true, "rationale_consistent_with_image": true,
        "rationale_correctness_score": 8, "rationale_quality_score": 9,
        "answer_follows_from_rationale": true, "answer_matches_ground_truth": true,
        "correct_answer": "ground_truth", "explanation": "Roads are visible."})";

/// Two QA records plus a transcript answering the teacher and verifier.
void write_corpus(const TempDir& dir) {
  std::string qa, mock;
  for (int i = 0; i < 2; ++i) {
    const std::string id = "r" + std::to_string(i);
    const std::string truth = i ? "no" : "yes";
    qa += json{{"id", id},
               {"dataset", "rsvqa_lr"},
               {"image", "images/" + id + ".tif"},
               {"question", "Is a road present? [" + id + "]"},
               {"answer", truth},
               {"type", "presence"}}
              .dump() +
          "\n";
    mock += json{{"match", {{"model", "teacher"}, {"contains", "[" + id + "]"}}},
                 {"choices", {"A road is visible.\n### Answer: " + truth}}}
                .dump() +
            "\n";
  }
  mock += json{{"match", {{"model", "verifier"}}}, {"choices", {kVerdict}}}.dump() + "\n";
  write(dir / "qa.jsonl", qa);
  write(dir / "mock.jsonl", mock);
}

}  // namespace

TEST_CASE("status strings and exit codes") {
  CHECK(std::string(cotalign_status_string(COTALIGN_OK)) == "ok");
  CHECK(cotalign_exit_code(COTALIGN_OK) == 0);
  CHECK(cotalign_exit_code(COTALIGN_E_VALIDATION) == 1);
  CHECK(cotalign_exit_code(COTALIGN_E_IO) == 1);
  CHECK(cotalign_exit_code(COTALIGN_E_DIVERGENCE) == 1);
  CHECK(cotalign_exit_code(COTALIGN_E_TRANSPORT) == 2);
  CHECK(cotalign_exit_code(COTALIGN_E_REQUEST) == 2);
  CHECK(cotalign_exit_code(COTALIGN_E_PROTOCOL) == 2);
  CHECK(cotalign_exit_code(COTALIGN_E_UNSUPPORTED) == 2);
  for (int s = COTALIGN_OK; s <= COTALIGN_E_INTERNAL; ++s) {
    CHECK(std::string(cotalign_status_string(static_cast<cotalign_status>(s))).size() > 0);
  }
  CHECK(std::string(cotalign_usage()).find("dpo-train-toy") != std::string::npos);
}

TEST_CASE("answer operations") {
  CStr canonical;
  REQUIRE(cotalign_normalize_answer("  Rural. ", "rural_urban", &canonical.p) == COTALIGN_OK);
  CHECK(canonical.str() == "rural");

  CStr bad;
  CHECK(cotalign_normalize_answer("a few", "numeric", &bad.p) == COTALIGN_E_VALIDATION);
  CHECK(bad.p == nullptr);
  CHECK(std::string(cotalign_last_error()).find("numeric") != std::string::npos);
  CHECK(cotalign_normalize_answer("x", "colour", &bad.p) == COTALIGN_E_INVALID_ARGUMENT);
  CHECK(cotalign_normalize_answer(nullptr, "numeric", &bad.p) == COTALIGN_E_INVALID_ARGUMENT);

  CStr rationale, answer;
  REQUIRE(cotalign_extract_final_answer("Grass is sparse.\n### Answer: No", "yes_no", &rationale.p,
                                        &answer.p) == COTALIGN_OK);
  CHECK(rationale.str() == "Grass is sparse.");
  CHECK(answer.str() == "no");
  CStr r2, a2;
  CHECK(cotalign_extract_final_answer("no marker here", "yes_no", &r2.p, &a2.p) ==
        COTALIGN_E_MISSING_MARKER);
  CHECK(cotalign_extract_final_answer("### Answer: 1", "colour", &r2.p, &a2.p) ==
        COTALIGN_E_INVALID_ARGUMENT);

  CStr prompt;
  REQUIRE(cotalign_generation_prompt("Is there a road?", "yes", &prompt.p) == COTALIGN_OK);
  CHECK(prompt.str().find("Is there a road?") != std::string::npos);
  CHECK(prompt.str().find("{question}") == std::string::npos);
}

TEST_CASE("verdict parsing") {
  CStr out;
  REQUIRE(cotalign_parse_verdict(kVerdict, &out.p) == COTALIGN_OK);
  auto v = json::parse(out.str());
  CHECK(v["rationale_quality_score"] == 9.0);
  CHECK(v["correct_answer"] == "ground_truth");

  auto broken = json::parse(kVerdict);
  broken.erase("explanation");
  CStr none;
  CHECK(cotalign_parse_verdict(broken.dump().c_str(), &none.p) == COTALIGN_E_VERDICT_PARSE);
  CHECK(std::string(cotalign_last_error()).find("explanation") != std::string::npos);
}

TEST_CASE("dpo loss and gradient") {
  const double identity[] = {-3.0, -4.0, -3.0, -4.0, -1.0, -1.0, -1.0, -1.0};
  double loss = 0, margin = 1;
  REQUIRE(cotalign_dpo_loss(identity, 2, 0.1, &loss, &margin) == COTALIGN_OK);
  CHECK(std::abs(loss - std::log(2.0)) < 1e-12);
  CHECK(margin == 0.0);

  const double pairs[] = {-2.0, -3.0, -2.5, -2.5};
  double grad[2];
  REQUIRE(cotalign_dpo_grad(pairs, 1, 0.5, grad) == COTALIGN_OK);
  // z = 0.5 * (0.5 - -0.5) = 0.5; d/dpc = -beta * sigmoid(-z)
  const double s = 1.0 / (1.0 + std::exp(0.5));
  CHECK(grad[0] == doctest::Approx(-0.5 * s).epsilon(1e-14));
  CHECK(grad[1] == doctest::Approx(0.5 * s).epsilon(1e-14));

  CHECK(cotalign_dpo_loss(pairs, 0, 0.1, &loss, nullptr) == COTALIGN_E_VALIDATION);
  CHECK(cotalign_dpo_loss(pairs, 1, -1.0, &loss, nullptr) == COTALIGN_E_VALIDATION);
  CHECK(cotalign_dpo_loss(nullptr, 1, 0.1, &loss, nullptr) == COTALIGN_E_INVALID_ARGUMENT);
}

TEST_CASE("format_accuracy") {
  char buf[16];
  REQUIRE(cotalign_format_accuracy(11868, 14339, buf, sizeof buf) == COTALIGN_OK);
  CHECK(std::string(buf) == "0.8277");
  CHECK(cotalign_format_accuracy(1, 0, buf, sizeof buf) == COTALIGN_E_INVALID_ARGUMENT);
  CHECK(cotalign_format_accuracy(1, 3, buf, 4) == COTALIGN_E_INVALID_ARGUMENT);
}

TEST_CASE("sessions run subcommands") {
  TempDir dir;
  write_corpus(dir);
  json overrides{{"paths", {{"qa", dir / "qa.jsonl"}, {"out_dir", dir / "out"}, {"mock", dir / "mock.jsonl"}}},
                 {"seed", 3}};
  cotalign_session* session = nullptr;
  REQUIRE(cotalign_session_create(nullptr, overrides.dump().c_str(), &session) == COTALIGN_OK);

  CStr config;
  REQUIRE(cotalign_session_config(session, &config.p) == COTALIGN_OK);
  CHECK(json::parse(config.str())["seed"] == 3);

  CStr manifest, console;
  REQUIRE(cotalign_run(session, "distill", &manifest.p, &console.p) == COTALIGN_OK);
  auto m = json::parse(manifest.str());
  CHECK(m["subcommand"] == "distill");
  CHECK(m["stats"]["kept"] == 2);
  CHECK(console.str().find("distill: 2 records") == 0);
  CHECK(fs::exists(dir / "out/manifest.json"));

  CStr m2;
  CHECK(cotalign_run(session, "bogus", &m2.p, nullptr) == COTALIGN_E_VALIDATION);
  CHECK(cotalign_run(session, nullptr, nullptr, nullptr) == COTALIGN_E_INVALID_ARGUMENT);
  cotalign_session_destroy(session);

  cotalign_session* bad = nullptr;
  CHECK(cotalign_session_create(nullptr, R"({"dpo": {"beta": 0}})", &bad) == COTALIGN_E_VALIDATION);
  CHECK(bad == nullptr);
  CHECK(std::string(cotalign_last_error()).find("dpo.beta") != std::string::npos);
  CHECK(cotalign_session_create(nullptr, "[1,", &bad) == COTALIGN_E_VALIDATION);
}

TEST_CASE("command-line exit codes") {
  TempDir dir;
  write_corpus(dir);

  auto ok = run_cli("distill --quiet --qa '" + (dir / "qa.jsonl") + "' --out-dir '" +
                        (dir / "out") + "' --mock '" + (dir / "mock.jsonl") + "'",
                    dir);
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("distill: 2 records, 2 kept") == 0);
  CHECK(ok.err.empty());
  CHECK(fs::exists(dir / "out/sft_cot.jsonl"));

  // Logs are JSON lines on stderr unless --quiet.
  auto logged = run_cli("sft-export --qa '" + (dir / "qa.jsonl") + "' --cot '" +
                            (dir / "out/cot.jsonl") + "' --out-dir '" + (dir / "sft") + "'",
                        dir);
  CHECK(logged.exit_code == 0);
  std::istringstream lines(logged.err);
  std::string first;
  std::getline(lines, first);
  auto event = json::parse(first, nullptr, false);
  REQUIRE_FALSE(event.is_discarded());
  CHECK(event.contains("ts"));
  CHECK(event.contains("stage"));
  CHECK(event.contains("event"));
  CHECK(read(dir / "sft/sft_cot.jsonl") == read(dir / "out/sft_cot.jsonl"));

  auto missing = run_cli("eval --quiet --pred p.jsonl --report r.json", dir);
  CHECK(missing.exit_code == 1);
  CHECK(missing.err.find("--qa") != std::string::npos);

  auto unknown = run_cli("frobnicate", dir);
  CHECK(unknown.exit_code == 1);
  CHECK(unknown.err.find("usage") != std::string::npos);

  auto bad_flag = run_cli("eval --no-such-flag", dir);
  CHECK(bad_flag.exit_code == 1);

  auto help = run_cli("--help", dir);
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("build-pref") != std::string::npos);

  // Retries exhausted against an unreachable endpoint.
  write(dir / "down.jsonl", R"({"match": {}, "responses": [{"status": 0}]})" "\n");
  write(dir / "cfg.json",
        R"({"endpoints": {"teacher": {"backoff_initial_s": 0, "max_retries": 1},
                          "verifier": {"backoff_initial_s": 0, "max_retries": 1}}})");
  auto down = run_cli("distill --quiet --config '" + (dir / "cfg.json") + "' --qa '" +
                          (dir / "qa.jsonl") + "' --out-dir '" + (dir / "down") + "' --mock '" +
                          (dir / "down.jsonl") + "'",
                      dir);
  CHECK(down.exit_code == 2);
  CHECK(down.err.find("transport") != std::string::npos);

  auto invalid = run_cli("dpo-train-toy --quiet --pairs x --vocab y --report z --lr -1", dir);
  CHECK(invalid.exit_code == 1);
  CHECK(invalid.err.find("dpo.learning_rate") != std::string::npos);
}
