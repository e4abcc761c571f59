#include "sero/config.hpp"
#include "sero/embedding.hpp"
#include "sero/error.hpp"
#include "sero/evolution.hpp"
#include "sero/harness.hpp"
#include "sero/pool_io.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 42;
  std::string benchmark;
  std::string backend;
  std::string out_dir = "out";
};

void add_common(CLI::App *cmd, CommonArgs &args, bool config_required = true) {
  auto *opt = cmd->add_option("--config", args.config_path, "run config file");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "run seed");
  cmd->add_option("--benchmark", args.benchmark, "benchmark id override");
  cmd->add_option("--backend", args.backend, "backend kind (scripted|http)")
      ->check(CLI::IsMember({"scripted", "http"}));
  cmd->add_option("--out", args.out_dir, "output directory");
}

sero::RunConfig load_config(const CommonArgs &args) {
  sero::RunConfig cfg = sero::RunConfig::from_file(args.config_path);
  if (!args.benchmark.empty()) cfg.benchmark_id = args.benchmark;
  if (!args.backend.empty()) cfg.backend_kind = args.backend;
  return cfg;
}

fs::path resolve_seed_pool(const sero::RunConfig &cfg) {
  if (!cfg.seed_pool_path.empty()) return cfg.seed_pool_path;
  return fs::path(SERO_SOURCE_DIR) / "data" / "pools" / "synth_seed.json";
}

std::unique_ptr<sero::Encoder> make_encoder(const sero::RunConfig &cfg) {
  if (cfg.encoder_kind == "http") {
    sero::HttpEncoderConfig ec;
    ec.base_url = cfg.embed_base_url;
    ec.model = cfg.embed_model;
    ec.dim = cfg.encoder_dim;
    return std::make_unique<sero::HttpEncoder>(ec);
  }
  return std::make_unique<sero::FeatureHashEncoder>(cfg.encoder_dim);
}

std::unique_ptr<sero::Backend> make_backend(const sero::RunConfig &cfg,
                                            const sero::Dataset &dataset) {
  if (cfg.backend_kind == "http") {
    sero::HttpBackendConfig bc;
    bc.base_url = cfg.http_base_url;
    bc.model = cfg.http_model;
    bc.max_parallel = cfg.http_max_parallel;
    bc.context_char_budget = cfg.context_char_budget;
    return std::make_unique<sero::HttpBackend>(bc);
  }
  if (cfg.scripted_behavior_file) {
    return std::make_unique<sero::ScriptedBackend>(
        sero::ScriptedBackend::from_file(*cfg.scripted_behavior_file));
  }
  return std::make_unique<sero::ScriptedBackend>(dataset.make_scripted_backend());
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path);
  if (!out) throw sero::Error("cannot write " + path.string());
  out << text;
}

json report_to_json(const sero::ScoreReport &report) {
  json per_task = json::array();
  for (const auto &t : report.per_task) {
    per_task.push_back(json::parse(sero::task_score_to_jsonl(t)));
  }
  return json{{"mean", report.mean},
              {"mean_exact", report.mean_exact},
              {"mean_partial", report.mean_partial},
              {"group_means", report.group_means},
              {"calls_per_instance", report.calls_per_instance},
              {"tokens_per_instance", report.tokens_per_instance},
              {"per_task", std::move(per_task)}};
}

void write_eval_outputs(const fs::path &out_dir, const sero::ScoreReport &report,
                        const std::string &stem) {
  write_text(out_dir / (stem + "_report.json"), report_to_json(report).dump(2) + "\n");
  std::string records;
  for (const auto &t : report.per_task) {
    records += sero::task_score_to_jsonl(t) + "\n";
  }
  write_text(out_dir / (stem + "_records.jsonl"), records);
}

int cmd_train(const CommonArgs &args) {
  const sero::RunConfig cfg = load_config(args);
  const sero::Dataset dataset = sero::synth_benchmark(
      cfg.dataset_seed, cfg.n_train, cfg.n_test, cfg.benchmark_id);
  auto encoder = make_encoder(cfg);
  auto backend = make_backend(cfg, dataset);
  auto [pool, ledger] = sero::load_pool(resolve_seed_pool(cfg));

  fs::create_directories(args.out_dir);
  const fs::path out_dir(args.out_dir);
  sero::TrainResult result =
      sero::train(dataset, cfg, args.seed, *backend, *encoder, std::move(pool),
                  std::move(ledger), out_dir / "checkpoints");

  sero::save_pool(result.pool, result.ledger, out_dir / "pool.json");
  result.controller.save(out_dir / "controller.json");
  std::string episodes;
  int committed = 0;
  for (const auto &e : result.episodes) {
    episodes += sero::episode_to_jsonl(e) + "\n";
    if (e.committed) ++committed;
  }
  write_text(out_dir / "episodes.jsonl", episodes);
  write_text(out_dir / "train_summary.json",
             json{{"episodes", result.episodes.size()},
                  {"committed_edits", committed},
                  {"early_stopped", result.early_stopped},
                  {"final_pool_size", result.pool.size()}}
                     .dump(2) +
                 "\n");

  std::cout << "trained " << result.episodes.size() << " episodes ("
            << committed << " committed edits"
            << (result.early_stopped ? ", early stop" : "") << ")\n"
            << "final pool size " << result.pool.size() << "\n"
            << "wrote " << (out_dir / "pool.json").string() << ", "
            << (out_dir / "controller.json").string() << ", "
            << (out_dir / "episodes.jsonl").string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs &args, const std::string &pool_path) {
  const sero::RunConfig cfg = load_config(args);
  const sero::Dataset dataset = sero::synth_benchmark(
      cfg.dataset_seed, cfg.n_train, cfg.n_test, cfg.benchmark_id);
  auto encoder = make_encoder(cfg);
  auto backend = make_backend(cfg, dataset);

  const fs::path out_dir(args.out_dir);
  fs::create_directories(out_dir);
  const fs::path pool_file =
      pool_path.empty() ? out_dir / "pool.json" : fs::path(pool_path);
  auto [pool, ledger] = sero::load_pool(pool_file);

  const sero::ScoreReport report = sero::evaluate_pool(
      pool, ledger, dataset.test, *backend, cfg, *encoder);
  write_eval_outputs(out_dir, report, "eval");
  // kept under the legacy names exposed to analyze
  write_text(out_dir / "score_report.json", report_to_json(report).dump(2) + "\n");
  std::string records;
  for (const auto &t : report.per_task) records += sero::task_score_to_jsonl(t) + "\n";
  write_text(out_dir / "eval_records.jsonl", records);

  std::cout << sero::format_score_report(report);
  return 0;
}

int cmd_baseline(const CommonArgs &args, const std::string &kind_str) {
  const sero::BaselineKind kind = sero::baseline_kind_from_string(kind_str);
  const sero::RunConfig cfg = load_config(args);
  const sero::Dataset dataset = sero::synth_benchmark(
      cfg.dataset_seed, cfg.n_train, cfg.n_test, cfg.benchmark_id);
  auto encoder = make_encoder(cfg);
  auto backend = make_backend(cfg, dataset);
  auto [pool, ledger] = sero::load_pool(resolve_seed_pool(cfg));

  const sero::ScoreReport report = sero::run_baseline(
      kind, dataset, *backend, cfg, *encoder, pool, ledger, args.seed);

  fs::create_directories(args.out_dir);
  write_eval_outputs(args.out_dir, report, "baseline_" + kind_str);
  std::cout << "baseline " << kind_str << "\n"
            << sero::format_score_report(report);
  return 0;
}

int cmd_inspect_pool(const std::string &path) {
  auto [pool, ledger] = sero::load_pool(path);
  std::cout << "pool: " << path << " (" << pool.size() << " roles)\n";
  for (const auto &card : pool.roles()) {
    std::cout << "  " << card.name << "  [" << sero::to_string(card.role_type)
              << ", family " << card.family << ", protocol " << card.protocol
              << (card.protected_flag ? ", protected" : "") << "]  ema "
              << ledger.ema_or_zero(card.name) << "\n";
  }
  const sero::ContractReport report = sero::check_contracts(pool);
  std::cout << "contracts:\n" << sero::format_report(report);
  return report.all_pass() ? 0 : 1;
}

int cmd_analyze(const CommonArgs &args) {
  const fs::path out_dir(args.out_dir);
  std::vector<sero::EpisodeRecord> episodes;
  std::vector<sero::TaskScore> records;

  std::ifstream ep(out_dir / "episodes.jsonl");
  if (!ep) throw sero::Error("no episodes.jsonl under " + out_dir.string());
  std::string line;
  while (std::getline(ep, line)) {
    if (!line.empty()) episodes.push_back(sero::episode_from_jsonl(line));
  }
  std::ifstream ev(out_dir / "eval_records.jsonl");
  if (ev) {
    while (std::getline(ev, line)) {
      if (!line.empty()) records.push_back(sero::task_score_from_jsonl(line));
    }
  }
  auto [pool, ledger] = sero::load_pool(out_dir / "pool.json");
  const sero::RunAnalytics analytics = sero::analyze(episodes, records, pool, ledger);
  write_text(out_dir / "analytics.json", sero::analytics_to_json(analytics) + "\n");
  std::cout << sero::format_analytics(analytics);
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"sero: contract-preserving role-pool orchestration"};
  app.require_subcommand(1);

  CommonArgs train_args;
  auto *train_cmd = app.add_subcommand("train", "run guarded evolution training");
  add_common(train_cmd, train_args);

  CommonArgs eval_args;
  std::string eval_pool;
  auto *eval_cmd = app.add_subcommand("eval", "evaluate a trained pool");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--pool", eval_pool, "pool file (default <out>/pool.json)");

  CommonArgs baseline_args;
  std::string baseline_kind;
  auto *baseline_cmd = app.add_subcommand("baseline", "run a comparison system");
  baseline_cmd->add_option("kind", baseline_kind, "cot|sc3|workflow|static_dag|static_orch|random_evo")
      ->required();
  add_common(baseline_cmd, baseline_args);

  std::string inspect_path;
  auto *inspect_cmd = app.add_subcommand("inspect-pool", "print cards and contract report");
  inspect_cmd->add_option("path", inspect_path, "pool JSON file")->required();

  CommonArgs analyze_args;
  auto *analyze_cmd = app.add_subcommand("analyze", "derive run analytics from logs");
  add_common(analyze_cmd, analyze_args, /*config_required=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e); // --help
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_pool);
    if (baseline_cmd->parsed()) return cmd_baseline(baseline_args, baseline_kind);
    if (inspect_cmd->parsed()) return cmd_inspect_pool(inspect_path);
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_args);
  } catch (const sero::UsageError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
