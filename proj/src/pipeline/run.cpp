#include "cotalign/pipeline/run.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <vector>

#include "cotalign/core/dataset.hpp"
#include "cotalign/core/digest.hpp"
#include "cotalign/core/parallel.hpp"
#include "cotalign/distill/distill.hpp"
#include "cotalign/dpo/dpo.hpp"
#include "cotalign/dpo/toy.hpp"
#include "cotalign/error.hpp"
#include "cotalign/evalr/evalr.hpp"
#include "cotalign/prefdata/prefdata.hpp"

namespace cotalign {

namespace fs = std::filesystem;

std::string usage_text() {
  return "usage: cotalign <subcommand> [--config <file>] [options]\n"
         "\n"
         "subcommands:\n"
         "  distill        --qa <jsonl> --out-dir <dir> [--teacher-endpoint <url>]\n"
         "                 [--verifier-endpoint <url>] [--min-quality <x>] [--mock <transcript>]\n"
         "  build-pref     --qa <jsonl> --out <jsonl> [--policy-endpoint <url>] [--mock <transcript>]\n"
         "  sft-export     --qa <jsonl> --cot <jsonl> --out-dir <dir>\n"
         "  dpo-loss       --pairs <jsonl> [--beta <x>] [--out <json>]\n"
         "  dpo-train-toy  --pairs <pref jsonl> --vocab <file> --report <json> [--lr <x>] [--epochs <n>]\n"
         "  eval           --qa <jsonl> --pred <jsonl> --report <json> [--style cot|direct]\n"
         "  report         --report <json> [--reference <json>] [--tolerance <x>]\n"
         "\n"
         "common: --seed <n> --concurrency <n> --manifest <json> --quiet\n"
         "exit status: 0 success, 1 invalid input, 2 endpoint failure\n";
}

std::string path_flag(std::string_view key) {
  std::string flag = "--";
  for (char c : key) flag += c == '_' ? '-' : c;
  return flag;
}

Json stable_manifest(const Json& manifest) {
  Json out = manifest;
  out.erase("wall_time_s");
  return out;
}

namespace {

class Run {
 public:
  Run(std::string_view subcommand, const RunConfig& config, const RunHooks& hooks)
      : subcommand_(subcommand), config_(config), hooks_(hooks) {}

  const std::string& require(const std::string& key) const {
    auto it = config_.paths.find(key);
    if (it == config_.paths.end()) {
      fail(ErrorKind::Validation, "missing required option " + path_flag(key) + " (paths." + key +
                                      " in the config)");
    }
    return it->second;
  }

  std::optional<std::string> optional_path(const std::string& key) const {
    auto it = config_.paths.find(key);
    if (it == config_.paths.end()) return std::nullopt;
    return it->second;
  }

  std::string read_input(const std::string& name, const std::string& path) {
    auto data = read_file(path);
    inputs_.push_back(Json{{"name", name}, {"path", path}, {"sha256", sha256_hex(data)}});
    input_paths_.push_back(path);
    return data;
  }

  void declare_output(const std::string& path) {
    for (const auto& in : input_paths_) {
      if (same_location(in, path)) {
        fail(ErrorKind::Validation, "output " + path + " would overwrite an input");
      }
    }
    if (config_.paths.count("mock") && same_location(config_.paths.at("mock"), path)) {
      fail(ErrorKind::Validation, "output " + path + " would overwrite the mock transcript");
    }
  }

  void write_output(const std::string& name, const std::string& path, std::string_view data) {
    write_file(path, data);
    outputs_.push_back(Json{{"name", name}, {"path", path}, {"sha256", sha256_hex(data)}});
  }

  Client client() {
    ClientOptions options;
    options.global_in_flight = config_.concurrency;
    options.logger = hooks_.logger;
    options.sleep = hooks_.sleep;
    std::shared_ptr<Transport> transport = hooks_.transport;
    if (config_.mock()) {
      options.image_mode = ImageMode::Reference;
      if (!transport) {
        const auto& mock = config_.paths.at("mock");
        auto data = read_file(mock);
        inputs_.push_back(Json{{"name", "mock"}, {"path", mock}, {"sha256", sha256_hex(data)}});
        transport = std::make_shared<MockTransport>(data);
      }
    }
    if (!transport) transport = std::make_shared<HttpTransport>();
    return Client(std::move(transport), options);
  }

  std::vector<QaRecord> read_qa() {
    return read_qa_jsonl(read_input("qa", require("qa")), config_.dataset);
  }

  const Logger* logger() const { return hooks_.logger; }

  RunResult finish(Json stats, std::string console, const std::string& default_manifest,
                   std::chrono::steady_clock::time_point started) {
    RunResult r;
    r.console = std::move(console);
    r.manifest_path = optional_path("manifest").value_or(default_manifest);
    declare_output(r.manifest_path);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started);
    r.manifest = Json{{"subcommand", subcommand_},
                      {"config_hash", sha256_hex(dump_line(config_.settings_json()))},
                      {"inputs", inputs_},
                      {"outputs", outputs_},
                      {"stats", std::move(stats)},
                      {"wall_time_s", elapsed.count()}};
    write_file(r.manifest_path, r.manifest.dump(2) + "\n");
    return r;
  }

 private:
  static bool same_location(const std::string& a, const std::string& b) {
    std::error_code ec1, ec2;
    auto ca = fs::weakly_canonical(a, ec1);
    auto cb = fs::weakly_canonical(b, ec2);
    if (ec1 || ec2) return fs::path(a).lexically_normal() == fs::path(b).lexically_normal();
    return ca == cb;
  }

  std::string subcommand_;
  const RunConfig& config_;
  const RunHooks& hooks_;
  Json inputs_ = Json::array();
  Json outputs_ = Json::array();
  std::vector<std::string> input_paths_;
};

std::string join(const std::string& dir, const char* file) { return (fs::path(dir) / file).string(); }

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_sft(Run& run, const std::string& out_dir, const SftDatasets& sft) {
  run.write_output("sft_direct", join(out_dir, "sft_direct.jsonl"), write_jsonl(sft.direct));
  run.write_output("sft_cot", join(out_dir, "sft_cot.jsonl"), write_jsonl(sft.cot));
}

std::string sft_summary(const SftDatasets& sft) {
  return "sft: " + std::to_string(sft.direct.size()) + " direct, " + std::to_string(sft.cot.size()) +
         " cot examples\n";
}

RunResult do_distill(Run& run, const RunConfig& config, std::chrono::steady_clock::time_point t0) {
  auto records = run.read_qa();
  const auto& out_dir = run.require("out_dir");
  for (const char* f : {"cot.jsonl", "sft_direct.jsonl", "sft_cot.jsonl"}) {
    run.declare_output(join(out_dir, f));
  }
  auto teacher = config.endpoint("teacher");
  auto verifier = config.endpoint("verifier");
  auto client = run.client();

  DistillOptions options;
  options.generation = config.generation;
  options.scoring = config.scoring;
  options.filter = config.filter;
  options.max_regenerations = config.max_regenerations;
  options.concurrency = config.concurrency;
  auto result = run_distill(client, teacher, verifier, records, options, run.logger());

  run.write_output("cot", join(out_dir, "cot.jsonl"), write_jsonl(result.outcomes));
  auto sft = emit_sft_datasets(collect_kept(records, result.outcomes));
  write_sft(run, out_dir, sft);

  const auto& s = result.stats;
  std::string console = "distill: " + std::to_string(s.input) + " records, " +
                        std::to_string(s.kept) + " kept, " + std::to_string(s.discarded) +
                        " discarded, " + std::to_string(s.failed) + " failed\n" + sft_summary(sft);
  return run.finish(s.to_json(), console, join(out_dir, "manifest.json"), t0);
}

RunResult do_sft_export(Run& run, std::chrono::steady_clock::time_point t0) {
  auto records = run.read_qa();
  auto outcomes = read_jsonl<DistillOutcome>(run.read_input("cot", run.require("cot")));
  const auto& out_dir = run.require("out_dir");
  run.declare_output(join(out_dir, "sft_direct.jsonl"));
  run.declare_output(join(out_dir, "sft_cot.jsonl"));
  auto sft = emit_sft_datasets(collect_kept(records, outcomes));
  write_sft(run, out_dir, sft);
  Json stats{{"cot_records", outcomes.size()},
             {"direct", sft.direct.size()},
             {"cot", sft.cot.size()}};
  return run.finish(std::move(stats), sft_summary(sft), join(out_dir, "sft_manifest.json"), t0);
}

RunResult do_build_pref(Run& run, const RunConfig& config,
                        std::chrono::steady_clock::time_point t0) {
  auto records = run.read_qa();
  const auto& out = run.require("out");
  run.declare_output(out);
  auto policy = config.endpoint("policy");
  auto client = run.client();

  PrefOptions options;
  options.candidates = config.candidates;
  options.concurrency = config.concurrency;
  auto result = build_dpo_dataset(records, client, policy, config.seed, options, run.logger());
  if (!records.empty() && result.stats.failed == records.size()) {
    fail(ErrorKind::Transport, "build-pref: all " + std::to_string(records.size()) +
                                   " records failed at the policy endpoint");
  }
  run.write_output("pairs", out, write_jsonl(result.pairs));

  const auto& s = result.stats;
  std::string console = "build-pref: " + std::to_string(s.input) + " records, " +
                        std::to_string(s.kept) + " pairs, " + std::to_string(s.removed_all_correct) +
                        " all-correct, " + std::to_string(s.removed_all_incorrect) +
                        " all-incorrect, " + std::to_string(s.failed) + " failed\n";
  return run.finish(s.to_json(), console, out + ".manifest.json", t0);
}

RunResult do_dpo_loss(Run& run, const RunConfig& config, std::chrono::steady_clock::time_point t0) {
  const auto& path = run.require("pairs");
  auto text = run.read_input("pairs", path);
  auto lines = parse_jsonl_lines(text);
  if (lines.empty()) fail(ErrorKind::Validation, path + ": no pairs");

  std::vector<PairLogprobs> logprobs;
  std::string source;
  if (lines.front().value.contains("policy_chosen")) {
    source = "logprobs";
    logprobs = read_jsonl<PairLogprobs>(text);
  } else {
    source = "endpoints";
    auto pairs = read_jsonl<PreferencePair>(text);
    auto policy = config.endpoint("policy");
    auto reference = config.endpoint("reference");
    auto client = run.client();
    logprobs = parallel_map(pairs.size(), config.concurrency, [&](std::size_t i) {
      return logprobs_from_endpoint(client, policy, reference, pairs[i]);
    });
  }

  const double beta = config.dpo.beta;
  const double loss = dpo_loss(logprobs, beta);
  const double margin = mean_margin(logprobs, beta);
  Json stats{{"pairs", logprobs.size()},
             {"source", source},
             {"beta", beta},
             {"loss", loss},
             {"mean_margin", margin}};
  if (auto out = run.optional_path("out")) {
    run.declare_output(*out);
    run.write_output("loss", *out, stats.dump(2) + "\n");
  }
  std::string console = "loss: " + fmt("%.10f", loss) + "\nmean_margin: " + fmt("%.10f", margin) + "\n";
  auto default_manifest = run.optional_path("out").value_or(path) + ".dpo-loss.manifest.json";
  return run.finish(std::move(stats), console, default_manifest, t0);
}

RunResult do_dpo_train_toy(Run& run, const RunConfig& config,
                           std::chrono::steady_clock::time_point t0) {
  auto pairs = read_jsonl<PreferencePair>(run.read_input("pairs", run.require("pairs")));
  auto vocab = read_vocab(run.read_input("vocab", run.require("vocab")));
  const auto& report_path = run.require("report");
  run.declare_output(report_path);
  if (pairs.empty()) fail(ErrorKind::Validation, "dpo-train-toy: no preference pairs");

  auto reference = ToyPolicy::random(vocab, config.seed);
  std::vector<TokenPair> tokens;
  tokens.reserve(pairs.size());
  for (const auto& p : pairs) {
    tokens.push_back({tokenize_for_policy(reference, p.chosen),
                      tokenize_for_policy(reference, p.rejected)});
  }
  auto report = train_toy(reference, tokens, reference, config.dpo);
  auto doc = report.to_json(vocab);
  run.write_output("report", report_path, doc.dump(2) + "\n");

  Json stats{{"pairs", pairs.size()},
             {"vocab", vocab.size()},
             {"steps", report.loss.size()},
             {"initial_loss", report.loss.empty() ? report.final_loss : report.loss.front()},
             {"final_loss", report.final_loss},
             {"final_mean_margin", report.final_mean_margin}};
  std::string console = "dpo-train-toy: " + std::to_string(report.loss.size()) + " steps, loss " +
                        fmt("%.6f", report.loss.empty() ? report.final_loss : report.loss.front()) +
                        " -> " + fmt("%.6f", report.final_loss) + ", mean margin " +
                        fmt("%.6f", report.final_mean_margin) + "\n";
  return run.finish(std::move(stats), console, report_path + ".manifest.json", t0);
}

std::string table_path(const std::string& report_path) {
  fs::path p(report_path);
  if (p.extension() == ".txt") return report_path + ".txt";
  return p.replace_extension(".txt").string();
}

RunResult do_eval(Run& run, const RunConfig& config, std::chrono::steady_clock::time_point t0) {
  auto records = run.read_qa();
  auto predictions = read_jsonl<Prediction>(run.read_input("pred", run.require("pred")));
  const auto& report_path = run.require("report");
  const auto table_file = table_path(report_path);
  run.declare_output(report_path);
  run.declare_output(table_file);

  auto outcomes = judge_all(records, predictions, config.eval_style);
  auto report = aggregate(outcomes);
  auto table = render_table(report, to_string(config.eval_style));
  run.write_output("report", report_path, report.to_json().dump(2) + "\n");
  run.write_output("table", table_file, table);

  std::map<std::string, std::size_t> reasons;
  for (const auto& o : outcomes) {
    if (!o.reason.empty()) ++reasons[o.reason];
  }
  Json stats{{"records", records.size()},
             {"predictions", predictions.size()},
             {"correct", report.correct},
             {"overall_accuracy", report.overall_accuracy},
             {"incorrect_reasons", reasons}};
  return run.finish(std::move(stats), table, report_path + ".manifest.json", t0);
}

RunResult do_report(Run& run, const RunConfig& config, std::chrono::steady_clock::time_point t0) {
  const auto& path = run.require("report");
  auto parse = [](const std::string& text, const std::string& where) {
    auto j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::Validation, where + ": malformed JSON");
    return EvalReport::from_json(j);
  };
  auto candidate = parse(run.read_input("report", path), path);
  std::string console = render_table(candidate, "Candidate");
  Json stats{{"overall_accuracy", candidate.overall_accuracy}};

  if (auto ref_path = run.optional_path("reference")) {
    auto reference = parse(run.read_input("reference", *ref_path), *ref_path);
    console += render_table(reference, "Reference");
    auto deviations = compare_reports(candidate, reference, config.tolerance);
    Json devs = Json::array();
    console += "tolerance: " + fmt("%.4f", config.tolerance) + "\n";
    if (deviations.empty()) console += "all cells within tolerance\n";
    for (const auto& d : deviations) {
      console += "deviation " + d.cell + ": " + format_accuracy(d.candidate) + " vs " +
                 format_accuracy(d.reference) + " (|diff| " + format_accuracy(d.difference) + ")\n";
      devs.push_back(Json{{"cell", d.cell},
                          {"candidate", d.candidate},
                          {"reference", d.reference},
                          {"difference", d.difference}});
    }
    stats["tolerance"] = config.tolerance;
    stats["deviations"] = std::move(devs);
  }
  return run.finish(std::move(stats), console, path + ".report-manifest.json", t0);
}

}  // namespace

RunResult run_subcommand(std::string_view subcommand, const RunConfig& config,
                         const RunHooks& hooks) {
  const auto t0 = std::chrono::steady_clock::now();
  Run run(subcommand, config, hooks);
  if (hooks.logger) hooks.logger->event(subcommand, "start");
  RunResult result;
  if (subcommand == "distill") {
    result = do_distill(run, config, t0);
  } else if (subcommand == "build-pref") {
    result = do_build_pref(run, config, t0);
  } else if (subcommand == "sft-export") {
    result = do_sft_export(run, t0);
  } else if (subcommand == "dpo-loss") {
    result = do_dpo_loss(run, config, t0);
  } else if (subcommand == "dpo-train-toy") {
    result = do_dpo_train_toy(run, config, t0);
  } else if (subcommand == "eval") {
    result = do_eval(run, config, t0);
  } else if (subcommand == "report") {
    result = do_report(run, config, t0);
  } else {
    fail(ErrorKind::Validation, "unknown subcommand '" + std::string(subcommand) + "'\n" + usage_text());
  }
  if (hooks.logger) {
    hooks.logger->event(subcommand, "done", {}, Json{{"manifest", result.manifest_path}});
  }
  return result;
}

}  // namespace cotalign
