#pragma once

#include "sero/backend.hpp"
#include "sero/config.hpp"
#include "sero/credit.hpp"
#include "sero/embedding.hpp"
#include "sero/orchestrator.hpp"
#include "sero/role_pool.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sero {

struct Task {
  std::string id;
  std::string benchmark;
  std::string group; // subtask family
  std::string prompt;
  std::string gold;
  std::string answer_format; // regex the final answer line must satisfy
  bool has_partial = false;  // scheduling family carries a slot-level channel
};

// Synthetic desk-scale benchmark plus the scripted behaviors that make
// specific role families necessary for specific task groups.
struct Dataset {
  std::string benchmark_id;
  std::vector<Task> train;
  std::vector<Task> test;
  std::vector<ScriptedRule> behaviors;
  std::string default_response;

  ScriptedBackend make_scripted_backend() const {
    return ScriptedBackend(behaviors, default_response);
  }
};

// Deterministic generator: three task families (arithmetic word problems,
// reference-table lookups, strict-format scheduling strings) whose gold
// answers are computable by rule.
Dataset synth_benchmark(std::uint64_t seed, int n_train, int n_test,
                        const std::string &benchmark_id = "synth");

void save_dataset(const Dataset &dataset, const std::filesystem::path &path);
Dataset load_dataset(const std::filesystem::path &path);

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct ScoreChannels {
  double primary = 0.0; // the per-task s_i
  double exact = 0.0;
  double partial = 0.0;
};

// Canonical answer extraction: the last line matching the task's answer
// format; nullopt is an extraction failure.
std::optional<std::string> extract_answer(const Task &task,
                                          const std::string &text);

// Exact channel: normalized string equality (numeric family with 10% relative
// tolerance). Partial channel for the scheduling family: fraction of matching
// day slots. The primary score is the partial channel where one exists.
ScoreChannels score_channels(const Task &task, const std::string &answer);
double score_task(const Task &task, const std::string &answer);

struct TaskScore {
  std::string task_id;
  std::string group;
  double score = 0.0;
  double exact = 0.0;
  double partial = 0.0;
  int calls = 0;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  std::string answer;
  std::vector<std::string> active_roles;
  std::vector<std::vector<std::string>> dag_levels;
};

struct ScoreReport {
  std::vector<TaskScore> per_task;
  double mean = 0.0;
  double mean_exact = 0.0;
  double mean_partial = 0.0;
  std::map<std::string, double> group_means;
  double calls_per_instance = 0.0;
  double tokens_per_instance = 0.0;

  void finalize(); // recomputes the aggregates from per_task
};

std::string format_score_report(const ScoreReport &report);

// Runs the same inference operator used in training over the test split with
// a read-only ledger, and aggregates mean and per-group scores.
ScoreReport evaluate_pool(const RolePool &pool, const CreditLedger &ledger,
                          const std::vector<Task> &tasks, Backend &backend,
                          const RunConfig &cfg, const Encoder &encoder);

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

enum class BaselineKind { Cot, Sc3, Workflow, StaticDag, StaticOrch, RandomEvo };

BaselineKind baseline_kind_from_string(const std::string &s); // throws UsageError
std::string to_string(BaselineKind k);

ScoreReport run_baseline(BaselineKind kind, const Dataset &dataset,
                         Backend &backend, const RunConfig &cfg,
                         const Encoder &encoder, const RolePool &seed_pool,
                         const CreditLedger &seed_ledger, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Analytics
// ---------------------------------------------------------------------------

struct EpisodeRecord {
  int episode = 0;
  std::string phase;
  std::string op;
  std::string target;
  bool committed = false;
  std::string reason;
  double reward = 0.0;
  double score_pre = 0.0;
  double score_post = 0.0;
  int pool_size = 0;
  int calls = 0;
  std::int64_t tokens = 0;
  double target_ema_pre = 0.0;
};

std::string episode_to_jsonl(const EpisodeRecord &e);
EpisodeRecord episode_from_jsonl(const std::string &line);

std::string task_score_to_jsonl(const TaskScore &t);
TaskScore task_score_from_jsonl(const std::string &line);

// Role lifecycle, evaluation-time active-set diversity, and credit/DAG
// alignment statistics derived from the episode log and eval transcripts.
struct RunAnalytics {
  // lifecycle
  int added = 0;
  int removed = 0;
  int surviving_additions = 0;
  double survival_rate = 0.0;
  bool survival_defined = false;
  int evolved_roles_used = 0;
  double unused_role_ratio = 0.0;

  // active-set diversity
  int instances = 0;
  int unique_active_sets = 0;
  double unique_ratio = 0.0;
  double entropy = 0.0; // Shannon entropy normalized by log(#distinct sets)
  double simpson = 0.0; // 1 - sum p^2
  double mean_active_roles = 0.0;

  // credit / DAG alignment
  double credit_usage_correlation = 0.0;
  bool credit_usage_defined = false;
  double removed_pre_credit = 0.0;
  bool removed_pre_credit_defined = false;
  double early_dag_credit = 0.0;
  double late_dag_credit = 0.0;
  bool dag_credit_defined = false;

  bool empty_episode_log = false;
  bool empty_eval_log = false;
};

RunAnalytics analyze(const std::vector<EpisodeRecord> &episodes,
                     const std::vector<TaskScore> &eval_records,
                     const RolePool &final_pool,
                     const CreditLedger &final_ledger);

std::string analytics_to_json(const RunAnalytics &a);
std::string format_analytics(const RunAnalytics &a);

} // namespace sero
