#pragma once

#include "sero/backend.hpp"
#include "sero/config.hpp"
#include "sero/credit.hpp"
#include "sero/embedding.hpp"
#include "sero/error.hpp"
#include "sero/role_pool.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sero {

// The task-conditioned active subset: specialist/setup and validator slots are
// filled from separate retrieval budgets, and the protected aggregator is
// always appended after retrieval.
struct ActiveTeam {
  std::vector<RoleCard> specialists_and_setup;
  std::vector<RoleCard> validators;
  RoleCard aggregator;

  std::vector<RoleCard> non_terminals() const;
  std::vector<RoleCard> all() const;
};

// Communication DAG over the non-terminal team: bounded forward edges among
// the ranked vertices, one edge from every vertex to the aggregator sink, and
// a topological level partition for parallel invocation.
struct CommDag {
  std::vector<std::string> order;        // ranked non-terminal role names
  std::vector<std::pair<int, int>> edges; // intra edges, indices into order
  std::vector<std::vector<int>> levels;   // level partition, indices into order
  int b_in = 0;
  int b_out = 0;
};

struct RoleMessage {
  std::string role;
  std::string text;
  double fast_credit = 0.0;
  int tokens_in = 0;
  int tokens_out = 0;
};

struct InferenceResult {
  std::string answer;
  std::vector<RoleMessage> transcript; // non-terminals in DAG order, then Agg
  ActiveTeam team;
  CommDag dag;
  bool validator_check_invoked = false;
  bool validator_flagged = false;
  bool repair_invoked = false;
  bool repair_changed_answer = false;
  int call_count = 0;
  std::int64_t tokens_in = 0;
  std::int64_t tokens_out = 0;
  CreditLedger ledger_out; // pass-local snapshot with this pass's fast credits
};

class InferenceFailure : public Error {
public:
  InferenceFailure(const std::string &what, std::vector<RoleMessage> partial)
      : Error(what), partial_transcript(std::move(partial)) {}
  std::vector<RoleMessage> partial_transcript;
};

// Ranks non-Agg roles by rho = alpha * cos(e(prompt), e(task)) +
// (1 - alpha) * norm(ema), fills the two budgets, applies the n_max cap, and
// appends the aggregator. Ties break by role name.
ActiveTeam retrieve_active(const std::string &task_text, const RolePool &pool,
                           const CreditLedger &ledger, const Encoder &encoder,
                           double alpha, int n_spec, int n_val,
                           std::optional<int> n_max = std::nullopt);

// Credit-ranked DAG construction. Vertices are ordered by the lexicographic
// key (stage, -fast_credit, index) with Setup < Spec < Val; forward edges are
// added greedily under the degree caps b_out = max(1, min(2, n-1)) and
// b_in = max(1, floor(n/2)) unless overridden.
CommDag build_dag(const std::vector<RoleCard> &non_terminals,
                  const std::map<std::string, double> &fast_credits,
                  std::optional<int> b_in = std::nullopt,
                  std::optional<int> b_out = std::nullopt);

// Executes the DAG level by level (roles within a level may run in parallel),
// then invokes the aggregator on every non-terminal message. Each role sees
// the task, its DAG predecessors' messages, and its own protocol. Fast credits
// are computed against the task embedding and the consensus of all active
// messages.
std::vector<RoleMessage>
execute_dag(const std::string &task_text, const CommDag &dag,
            const ActiveTeam &team, Backend &backend, const Encoder &encoder,
            double beta, const RunConfig &cfg, int *call_count = nullptr,
            const std::vector<RoleMessage> *previous_round = nullptr);

struct RepairOutcome {
  std::string answer;
  bool check_invoked = false;
  bool flagged = false;
  bool repaired = false;
  bool changed_answer = false;
};

// Conditional validator repair: when a validator is active and the draft fails
// the benchmark's answer-format check, the validator is invoked on the draft;
// a reply starting with "ISSUE:" triggers exactly one aggregator re-invocation
// with the draft and feedback.
RepairOutcome aggregate_and_repair(const std::string &task_text,
                                   std::vector<RoleMessage> &transcript,
                                   const ActiveTeam &team, Backend &backend,
                                   const std::string &answer_format,
                                   const RunConfig &cfg,
                                   int *call_count = nullptr);

// The full inference operator F: retrieval, DAG construction, level execution,
// aggregation and repair. The same operator is used for training-time
// rescoring and for evaluation. ledger_in is read-only; the pass's fast
// credits are returned in the result's ledger snapshot.
InferenceResult infer(const std::string &task_text,
                      const std::string &answer_format, const RolePool &pool,
                      const CreditLedger &ledger_in, const RunConfig &cfg,
                      Backend &backend, const Encoder &encoder);

// Function-pointer identity of the operator shared by training and evaluation.
using InferFn = InferenceResult (*)(const std::string &, const std::string &,
                                    const RolePool &, const CreditLedger &,
                                    const RunConfig &, Backend &,
                                    const Encoder &);
inline constexpr InferFn kInferenceOperator = &infer;

} // namespace sero
