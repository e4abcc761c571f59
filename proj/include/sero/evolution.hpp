#pragma once

#include "sero/backend.hpp"
#include "sero/config.hpp"
#include "sero/controller.hpp"
#include "sero/credit.hpp"
#include "sero/embedding.hpp"
#include "sero/harness.hpp"
#include "sero/role_pool.hpp"
#include "sero/rng.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sero {

// Contract-induced action mask: removal is disabled in Warmup, Add/Remove are
// disabled at the pool-size bounds, and the admissible target set excludes
// protected roles, the last role of any required family, and the last
// validators while the validator pass is reserved. Noop is always allowed.
ActionMask action_mask(const RolePool &pool, const CreditLedger &ledger,
                       Phase phase, const RunConfig &cfg);

struct Candidate {
  RolePool pool;
  CreditLedger ledger;
  bool changed = false;
  std::string reason;     // rejection reason when unchanged for a real edit
  std::string added_name; // name of the inserted card, for Add
};

// Role editor: asks the backend for one new card given the task, the current
// role summaries, the credit summary, coverage diagnostics, and the
// highest-EMA anchor card. The reply must contain exactly one fenced JSON
// role card.
struct EditorProposal {
  std::optional<RoleCard> card;
  std::string reason; // set when card is absent
};
EditorProposal editor_propose_card(const Task &task, const RolePool &pool,
                                   const CreditLedger &ledger, Backend &backend,
                                   const RunConfig &cfg, int *calls = nullptr,
                                   std::int64_t *tokens = nullptr);

// Realizes a masked action as a schema-valid, guard-checked candidate state.
// Any rejection yields the unchanged state with a recorded reason.
Candidate generate_candidate(const Action &action, const Task &task,
                             const RolePool &pool, const CreditLedger &ledger,
                             Backend &backend, const Encoder &encoder,
                             const RunConfig &cfg, int *calls = nullptr,
                             std::int64_t *tokens = nullptr);

// The commitment rule: a candidate persists only when it differs, satisfies
// the five contracts, and passes the phase-dependent score gate (R >= 0 in
// Warmup on non-strict benchmarks, R > 0 otherwise).
bool commit_decision(bool changed, bool contracts_pass, double reward,
                     Phase phase, const std::string &benchmark_id,
                     const RunConfig &cfg);

struct TrainState {
  RolePool pool;
  CreditLedger ledger;
  ControllerParams controller;
  Phase phase = Phase::Warmup;
  int episode = 0;       // global episode counter
  int main_episodes = 0; // episodes run in the Main phase
  std::vector<BatchItem> pending;
  std::vector<bool> commit_window; // per Main episode: did the pool change
  Rng rng{0};
};

struct TrainDeps {
  Backend *backend = nullptr;
  const Encoder *encoder = nullptr;
};

// One full training step: pre-edit rollout, observation, masked sampling,
// candidate generation, rescoring, reward, batched policy update, and
// score-gated commit or exact rollback.
EpisodeRecord train_step(TrainState &state, const Task &task,
                         const RunConfig &cfg, const TrainDeps &deps);

struct TrainResult {
  RolePool pool;
  CreditLedger ledger;
  ControllerParams controller;
  std::vector<EpisodeRecord> episodes;
  bool early_stopped = false;
};

// Warmup then Main epochs over shuffled training tasks, REINFORCE per batch
// (flushed at the phase boundary), periodic leave-one-out refreshes, and the
// collapse-based early stop. The final pool is frozen for evaluation.
TrainResult train(const Dataset &dataset, const RunConfig &cfg,
                  std::uint64_t seed, Backend &backend, const Encoder &encoder,
                  RolePool seed_pool, CreditLedger seed_ledger,
                  const std::optional<std::filesystem::path> &checkpoint_dir =
                      std::nullopt);

} // namespace sero
