#pragma once

#include "sero/config.hpp"
#include "sero/credit.hpp"
#include "sero/embedding.hpp"
#include "sero/orchestrator.hpp"
#include "sero/rng.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sero {

enum class Phase { Warmup, Main };

std::string to_string(Phase p);

// Controller observation: e(task || "\n" || answer), the mean prompt embedding
// of the active team, and the 5-vector of pool credit statistics. The credit
// slots are masked to zero during Warmup. Flattened length is 2D + 5.
struct Observation {
  EmbeddingVector task_answer_emb;
  EmbeddingVector team_emb;
  std::array<double, 5> credit_stats{};

  std::vector<double> flat() const;
};

enum class EditOp { Add = 0, Remove = 1, Noop = 2 };

std::string to_string(EditOp op);

struct Action {
  EditOp op = EditOp::Noop;
  std::optional<std::string> target; // required iff op == Remove
};

// Allowed operations plus the admissible removal target set. Noop is always
// allowed; protected roles are never admissible targets.
struct ActionMask {
  bool allow_add = true;
  bool allow_remove = true;
  std::vector<std::string> removal_targets;

  bool allows(EditOp op) const {
    switch (op) {
    case EditOp::Add: return allow_add;
    case EditOp::Remove: return allow_remove && !removal_targets.empty();
    case EditOp::Noop: return true;
    }
    return false;
  }
};

// Per-target features consumed by the target head: the role's prompt
// embedding plus its two local credit features.
struct TargetFeature {
  std::string name;
  EmbeddingVector prompt_emb;
  double ema = 0.0;
  double recent_loo = 0.0;
};

// Everything the policy needs to reproduce a decision later: observation,
// mask, and the admissible targets' features frozen at decision time.
struct PolicyInput {
  Observation obs;
  ActionMask mask;
  std::vector<TargetFeature> targets; // aligned with mask.removal_targets
};

// Factorized policy parameters: a shared two-layer ReLU trunk, an operation
// head, a learned per-operation embedding table, a role-embedding projection,
// and a scalar target head, all stored in one flat vector so the optimizer,
// gradient clipping, and finite-difference checks can treat parameters
// uniformly.
class ControllerParams {
public:
  ControllerParams() = default;
  ControllerParams(int encoder_dim, int hidden_width, int op_embedding_dim,
                   int role_projection_dim, Rng &rng);

  int encoder_dim = 0;
  int hidden = 0;
  int op_emb_dim = 0;
  int role_proj_dim = 0;

  std::vector<double> theta;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  long adam_t = 0;
  double baseline = 0.0;

  int obs_dim() const { return 2 * encoder_dim + 5; }
  int target_feature_dim() const { return hidden + op_emb_dim + role_proj_dim + 2; }
  std::size_t param_count() const { return theta.size(); }

  // offsets into theta
  std::size_t off_w1() const;
  std::size_t off_b1() const;
  std::size_t off_w2() const;
  std::size_t off_b2() const;
  std::size_t off_wop() const;
  std::size_t off_bop() const;
  std::size_t off_eop() const;
  std::size_t off_proj() const;
  std::size_t off_proj_b() const;
  std::size_t off_wt() const;
  std::size_t off_bt() const;

  void save(const std::filesystem::path &path) const;
  static ControllerParams load(const std::filesystem::path &path,
                               int expect_encoder_dim, int expect_hidden,
                               int expect_op_emb, int expect_role_proj);
};

struct ForwardResult {
  std::array<double, 3> op_logits{};
  std::array<double, 3> op_probs{}; // exactly 0 for masked ops
  std::vector<double> target_scores; // xi over admissible targets
  std::vector<double> target_probs;  // masked-conditional softmax
};

Observation build_observation(const std::string &task_text,
                              const std::string &answer,
                              const ActiveTeam &team,
                              const CreditSummary &summary, Phase phase,
                              const Encoder &encoder);

PolicyInput build_policy_input(Observation obs, ActionMask mask,
                               const RolePool &pool, const CreditLedger &ledger,
                               const Encoder &encoder);

ForwardResult policy_forward(const ControllerParams &params,
                             const PolicyInput &input);

// Epsilon-mixed sampling: with probability gamma the op is uniform over the
// allowed set, otherwise drawn from the policy. A Remove target is always
// drawn from the masked conditional.
Action sample_action(const ForwardResult &forward, const PolicyInput &input,
                     Rng &rng, double gamma);

struct BatchItem {
  PolicyInput input;
  Action action;
  double reward = 0.0;
};

struct GradStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  double mean_reward = 0.0;
  double entropy = 0.0;
  bool aborted = false;
};

// Loss for a batch at fixed advantages: the negative advantage-weighted log
// probability of the taken actions minus the entropy bonus of the op head,
// averaged over the batch. Pure in params; `grad` (same length as theta) is
// filled when non-null. This is the function the finite-difference oracle
// differentiates.
double policy_loss(const ControllerParams &params,
                   const std::vector<BatchItem> &batch,
                   const std::vector<double> &advantages, double entropy_coef,
                   std::vector<double> *grad);

// One REINFORCE step: batch-normalized rewards, EMA baseline update, loss and
// gradients, global-norm clipping, and an Adam step.
GradStats reinforce_update(ControllerParams &params,
                           const std::vector<BatchItem> &batch,
                           const RunConfig &cfg);

} // namespace sero
