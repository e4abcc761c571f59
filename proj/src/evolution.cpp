#include "sero/evolution.hpp"

#include "sero/error.hpp"
#include "sero/format.hpp"
#include "sero/orchestrator.hpp"
#include "sero/pool_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sero {

ActionMask action_mask(const RolePool &pool, const CreditLedger &ledger,
                       Phase phase, const RunConfig &cfg) {
  (void)ledger;
  ActionMask mask;
  mask.allow_add = pool.size() < cfg.max_pool_size;
  mask.allow_remove = phase != Phase::Warmup && pool.size() > cfg.min_pool_size;

  if (mask.allow_remove) {
    const auto &required = pool.contract().required_families;
    const int n_val = pool.count_type(RoleType::Val);
    for (const auto &card : pool.roles()) {
      if (card.protected_flag) continue;
      if (required.count(card.family) != 0 &&
          pool.count_family(card.family) <= 1) {
        continue; // last role of a required capability family
      }
      if (card.role_type == RoleType::Val &&
          pool.contract().validator_pass_enabled &&
          n_val <= pool.contract().min_validators) {
        continue; // validator-count minimum under the reserved pass
      }
      mask.removal_targets.push_back(card.name);
    }
    if (mask.removal_targets.empty()) mask.allow_remove = false;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Role editor
// ---------------------------------------------------------------------------

namespace {

const RoleCard *highest_ema_role(const RolePool &pool,
                                 const CreditLedger &ledger) {
  const RoleCard *best = nullptr;
  double best_ema = 0.0;
  for (const auto &card : pool.roles()) {
    const double e = ledger.ema_or_zero(card.name);
    if (best == nullptr || e > best_ema ||
        (e == best_ema && card.name < best->name)) {
      best = &card;
      best_ema = e;
    }
  }
  return best;
}

std::string role_summaries(const RolePool &pool) {
  std::ostringstream out;
  for (const auto &card : pool.roles()) {
    out << "- " << card.name << " (" << to_string(card.role_type) << ", family "
        << card.family << ")\n";
  }
  return out.str();
}

std::string coverage_diagnostics(const RolePool &pool) {
  std::ostringstream out;
  for (const auto &fam : pool.contract().required_families) {
    out << "- " << fam << ": " << pool.count_family(fam) << " role(s)\n";
  }
  std::set<std::string> extra;
  for (const auto &card : pool.roles()) {
    if (pool.contract().required_families.count(card.family) == 0) {
      extra.insert(card.family);
    }
  }
  for (const auto &fam : extra) {
    out << "- " << fam << ": " << pool.count_family(fam)
        << " role(s), not required\n";
  }
  return out.str();
}

std::string card_json(const RoleCard &card) {
  nlohmann::json j{{"name", card.name},
                   {"prompt", card.prompt},
                   {"tags", card.tags},
                   {"family", card.family},
                   {"protocol", card.protocol},
                   {"temperature", card.temperature},
                   {"role_type", to_string(card.role_type)}};
  return j.dump(2);
}

// Extracts the body of exactly one fenced code block; nullopt otherwise.
std::optional<std::string> single_fenced_block(const std::string &text) {
  std::vector<std::string> blocks;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = text.find("```", pos);
    if (open == std::string::npos) break;
    std::size_t body = text.find('\n', open);
    if (body == std::string::npos) break;
    ++body;
    const std::size_t close = text.find("```", body);
    if (close == std::string::npos) return std::nullopt; // unterminated fence
    blocks.push_back(text.substr(body, close - body));
    pos = close + 3;
  }
  if (blocks.size() != 1) return std::nullopt;
  return blocks.front();
}

const char *kEditorSystemPrompt =
    "You maintain the role-card pool of a multi-agent system. Given the task, "
    "the current roles, their credit summary, and the coverage diagnostics, "
    "propose exactly one new role card that would most improve the pool. "
    "Reply with exactly one fenced JSON block containing the keys name, "
    "prompt, tags, family, protocol, temperature, role_type.";

} // namespace

EditorProposal editor_propose_card(const Task &task, const RolePool &pool,
                                   const CreditLedger &ledger, Backend &backend,
                                   const RunConfig &cfg, int *calls,
                                   std::int64_t *tokens) {
  EditorProposal out;

  RoleCard editor;
  editor.name = "role_editor";
  editor.prompt = kEditorSystemPrompt;
  editor.family = "editor";
  editor.protocol = "role-card-json";
  editor.role_type = RoleType::Setup;

  const CreditSummary summary = credit_summary(ledger, pool);
  std::ostringstream credit_line;
  credit_line << "ema mean " << summary.mean << ", std " << summary.stddev
              << ", min " << summary.min << ", max " << summary.max
              << ", mean recent LOO " << summary.mean_recent_loo;

  const RoleCard *anchor = highest_ema_role(pool, ledger);

  InvocationContext ctx;
  ctx.task_text = task.prompt;
  ctx.upstream.emplace_back("current_roles", role_summaries(pool));
  ctx.upstream.emplace_back("credit_summary", credit_line.str());
  ctx.upstream.emplace_back("coverage_diagnostics", coverage_diagnostics(pool));
  if (anchor != nullptr) {
    ctx.upstream.emplace_back("anchor_card", card_json(*anchor));
  }
  ctx.protocol_hint = editor.protocol;

  Completion reply;
  try {
    reply = backend.complete(editor, ctx);
  } catch (const BackendError &) {
    out.reason = "BackendError";
    return out;
  }
  if (calls != nullptr) ++*calls;
  if (tokens != nullptr) *tokens += reply.tokens_in + reply.tokens_out;

  const auto block = single_fenced_block(reply.text);
  if (!block) {
    out.reason = "ParseFailure";
    return out;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*block);
  } catch (const nlohmann::json::exception &) {
    out.reason = "ParseFailure";
    return out;
  }
  RoleCard card;
  try {
    card.name = j.at("name").get<std::string>();
    card.prompt = j.at("prompt").get<std::string>();
    if (j.contains("tags")) card.tags = j["tags"].get<std::set<std::string>>();
    card.family = j.value("family", std::string());
    card.protocol = j.value("protocol", std::string());
    card.temperature = j.value("temperature", 0.0);
    card.role_type = role_type_from_string(j.value("role_type", std::string("Spec")));
    card.protected_flag = j.value("protected", false);
    out.card = new_role_card(std::move(card));
  } catch (const nlohmann::json::exception &) {
    out.reason = "ParseFailure";
    return out;
  } catch (const SchemaViolation &) {
    out.reason = "SchemaViolation";
    return out;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

Candidate generate_candidate(const Action &action, const Task &task,
                             const RolePool &pool, const CreditLedger &ledger,
                             Backend &backend, const Encoder &encoder,
                             const RunConfig &cfg, int *calls,
                             std::int64_t *tokens) {
  Candidate cand;
  cand.pool = pool;
  cand.ledger = ledger;

  switch (action.op) {
  case EditOp::Noop:
    return cand;

  case EditOp::Add: {
    if (pool.size() >= cfg.max_pool_size) {
      cand.reason = "PoolFull";
      return cand;
    }
    EditorProposal proposal =
        editor_propose_card(task, pool, ledger, backend, cfg, calls, tokens);
    if (!proposal.card) {
      cand.reason = proposal.reason;
      return cand;
    }
    const RoleCard &card = *proposal.card;
    if (card.role_type == RoleType::Val &&
        pool.contract().validator_pass_enabled) {
      cand.reason = "ReservedValidatorPass";
      return cand;
    }
    // Diversity guards: no family may dominate, no near-duplicate prompts.
    const int fam_after = pool.count_family(card.family) + 1;
    const int size_after = pool.size() + 1;
    if (static_cast<double>(fam_after) / size_after >=
        cfg.dominant_family_fraction) {
      cand.reason = "DominantFamily";
      return cand;
    }
    const EmbeddingVector new_emb = encoder.encode(card.prompt);
    for (const auto &existing : pool.roles()) {
      if (cosine(new_emb, encoder.encode(existing.prompt)) >=
          cfg.duplicate_cosine_threshold) {
        cand.reason = "NearDuplicate";
        return cand;
      }
    }
    try {
      cand.pool.add_role(card);
    } catch (const SchemaViolation &) {
      cand.reason = "SchemaViolation";
      return cand;
    }
    cand.ledger.ensure_role(card.name, cfg.new_role_initial_updates);
    cand.changed = true;
    cand.added_name = card.name;
    return cand;
  }

  case EditOp::Remove: {
    if (!action.target) {
      cand.reason = "MissingTarget";
      return cand;
    }
    if (!pool.contains(*action.target)) {
      cand.reason = "UnknownTarget";
      return cand;
    }
    RolePool next = pool;
    next.remove_role(*action.target);
    if (!check_contracts(next).all_pass()) {
      cand.reason = "ContractViolation";
      return cand;
    }
    cand.pool = std::move(next);
    cand.ledger.erase_role(*action.target);
    cand.changed = true;
    return cand;
  }
  }
  return cand;
}

bool commit_decision(bool changed, bool contracts_pass, double reward,
                     Phase phase, const std::string &benchmark_id,
                     const RunConfig &cfg) {
  if (!changed || !contracts_pass) return false;
  if (reward > 0.0) return true;
  const bool strict = cfg.strict_add_benchmarks.count(benchmark_id) != 0;
  return phase == Phase::Warmup && !strict && reward >= 0.0;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

void flush_batch(TrainState &state, const RunConfig &cfg) {
  if (state.pending.empty()) return;
  reinforce_update(state.controller, state.pending, cfg);
  state.pending.clear();
}

bool early_stop_due(const TrainState &state, const RunConfig &cfg) {
  if (state.phase != Phase::Main) return false;
  if (static_cast<int>(state.commit_window.size()) < cfg.collapse_window) {
    return false;
  }
  int unchanged = 0;
  const std::size_t start = state.commit_window.size() -
                            static_cast<std::size_t>(cfg.collapse_window);
  for (std::size_t i = start; i < state.commit_window.size(); ++i) {
    if (!state.commit_window[i]) ++unchanged;
  }
  return static_cast<double>(unchanged) / cfg.collapse_window >
         cfg.collapse_fraction;
}

void loo_refresh(TrainState &state, const std::vector<Task> &train_tasks,
                 const RunConfig &cfg, const TrainDeps &deps) {
  if (state.pool.size() < cfg.loo_min_pool) return;

  // Sample up to three distinct training tasks for this refresh.
  std::vector<std::size_t> order(train_tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  state.rng.shuffle(order);
  const std::size_t n_tasks = std::min<std::size_t>(3, order.size());

  std::vector<std::string> names;
  for (const auto &card : state.pool.roles()) {
    if (card.role_type != RoleType::Agg) names.push_back(card.name);
  }
  for (const auto &name : names) {
    double phi_sum = 0.0;
    for (std::size_t k = 0; k < n_tasks; ++k) {
      const Task &task = train_tasks[order[k]];
      const double phi = loo_credit(
          state.pool, state.ledger, name,
          [&](const RolePool &p, const CreditLedger &l) {
            InferenceResult r =
                kInferenceOperator(task.prompt, task.answer_format, p, l, cfg,
                                   *deps.backend, *deps.encoder);
            return score_task(task, r.answer);
          });
      phi_sum += phi;
    }
    ema_update(state.ledger, name, phi_sum / static_cast<double>(n_tasks),
               cfg.ema_mu);
  }
}

} // namespace

EpisodeRecord train_step(TrainState &state, const Task &task,
                         const RunConfig &cfg, const TrainDeps &deps) {
  Backend &backend = *deps.backend;
  const Encoder &encoder = *deps.encoder;

  EpisodeRecord rec;
  rec.episode = state.episode;
  rec.phase = to_string(state.phase);
  rec.pool_size = state.pool.size();

  int calls = 0;
  std::int64_t tokens = 0;

  // Phase 1: pre-edit rollout, observation, masked action sampling.
  InferenceResult pre;
  try {
    pre = kInferenceOperator(task.prompt, task.answer_format, state.pool,
                             state.ledger, cfg, backend, encoder);
  } catch (const InferenceFailure &e) {
    rec.op = to_string(EditOp::Noop);
    rec.reason = std::string("InferenceFailure: ") + e.what();
    state.episode += 1;
    if (state.phase == Phase::Main) {
      state.main_episodes += 1;
      state.commit_window.push_back(false);
    }
    return rec;
  }
  calls += pre.call_count;
  tokens += pre.tokens_in + pre.tokens_out;
  const double score_pre = score_task(task, pre.answer);
  CreditLedger ledger_pre = pre.ledger_out;

  const Observation obs = build_observation(
      task.prompt, pre.answer, pre.team, credit_summary(ledger_pre, state.pool),
      state.phase, encoder);
  const ActionMask mask = action_mask(state.pool, ledger_pre, state.phase, cfg);
  PolicyInput input =
      build_policy_input(obs, mask, state.pool, ledger_pre, encoder);
  const ForwardResult forward = policy_forward(state.controller, input);
  const Action action =
      sample_action(forward, input, state.rng, cfg.exploration_gamma);

  rec.op = to_string(action.op);
  if (action.target) {
    rec.target = *action.target;
    rec.target_ema_pre = ledger_pre.ema_or_zero(*action.target);
  }

  // Phase 2: candidate generation and rescoring. Noop and unchanged
  // candidates skip the second inference pass.
  Candidate cand;
  double reward = 0.0;
  double score_post = score_pre;
  bool candidate_failed = false;
  if (action.op == EditOp::Noop) {
    cand.pool = state.pool;
    cand.ledger = ledger_pre;
    rec.reason = "Noop";
  } else {
    cand = generate_candidate(action, task, state.pool, ledger_pre, backend,
                              encoder, cfg, &calls, &tokens);
    if (!cand.changed) {
      rec.reason = cand.reason;
    } else {
      try {
        InferenceResult post =
            kInferenceOperator(task.prompt, task.answer_format, cand.pool,
                               cand.ledger, cfg, backend, encoder);
        calls += post.call_count;
        tokens += post.tokens_in + post.tokens_out;
        score_post = score_task(task, post.answer);
        reward = score_post - score_pre;
        cand.ledger = post.ledger_out;
      } catch (const InferenceFailure &e) {
        candidate_failed = true;
        rec.reason = std::string("InferenceFailure: ") + e.what();
        reward = 0.0;
      }
    }
  }
  if (action.op == EditOp::Add && cand.changed) rec.target = cand.added_name;

  // Phase 3: policy update (batched) and score-gated commitment.
  state.pending.push_back(BatchItem{std::move(input), action, reward});
  if (static_cast<int>(state.pending.size()) >= cfg.batch_size) {
    flush_batch(state, cfg);
  }

  const bool contracts_pass =
      cand.changed && !candidate_failed && check_contracts(cand.pool).all_pass();
  const bool commit =
      commit_decision(cand.changed && !candidate_failed, contracts_pass, reward,
                      state.phase, task.benchmark, cfg);
  if (commit) {
    state.pool = std::move(cand.pool);
    state.ledger = std::move(cand.ledger);
  } else {
    // Rejection restores the pre-edit pool and credit state exactly.
    state.ledger = std::move(ledger_pre);
    if (cand.changed && !candidate_failed && rec.reason.empty()) {
      rec.reason = contracts_pass ? "ScoreGate" : "ContractViolation";
    }
  }
  // Fast credits are bootstrap signals within the episode's two passes; they
  // never persist across episodes, so a rejected episode leaves the ledger
  // byte-identical to the pre-episode checkpoint.
  state.ledger.clear_fast();

  rec.committed = commit;
  rec.reward = reward;
  rec.score_pre = score_pre;
  rec.score_post = score_post;
  rec.pool_size = state.pool.size();
  rec.calls = calls;
  rec.tokens = tokens;

  state.episode += 1;
  if (state.phase == Phase::Main) {
    state.main_episodes += 1;
    state.commit_window.push_back(commit);
  }
  return rec;
}

TrainResult train(const Dataset &dataset, const RunConfig &cfg,
                  std::uint64_t seed, Backend &backend, const Encoder &encoder,
                  RolePool seed_pool, CreditLedger seed_ledger,
                  const std::optional<std::filesystem::path> &checkpoint_dir) {
  if (dataset.train.empty()) throw UsageError("train: empty training split");

  TrainState state;
  state.rng = Rng(seed);
  state.pool = std::move(seed_pool);
  state.ledger = std::move(seed_ledger);
  // Profile pool-size bounds take precedence over whatever the pool file says.
  state.pool.contract().min_pool_size = cfg.min_pool_size;
  state.pool.contract().max_pool_size = cfg.max_pool_size;
  for (const auto &card : state.pool.roles()) {
    state.ledger.ensure_role(card.name);
  }
  state.ledger.clear_fast();
  state.controller = ControllerParams(cfg.encoder_dim, cfg.hidden_width,
                                      cfg.op_embedding_dim,
                                      cfg.role_projection_dim, state.rng);

  TrainResult result;
  bool stopped = false;
  const int total_epochs = cfg.warmup_epochs + cfg.main_epochs;
  for (int epoch = 0; epoch < total_epochs && !stopped; ++epoch) {
    const Phase phase =
        epoch < cfg.warmup_epochs ? Phase::Warmup : Phase::Main;
    if (state.phase == Phase::Warmup && phase == Phase::Main) {
      flush_batch(state, cfg); // batches do not straddle the phase boundary
    }
    state.phase = phase;

    const TrainDeps deps{&backend, &encoder};
    std::vector<Task> tasks = dataset.train;
    state.rng.shuffle(tasks);
    for (const Task &task : tasks) {
      if (early_stop_due(state, cfg)) {
        stopped = true;
        break;
      }
      result.episodes.push_back(train_step(state, task, cfg, deps));
      if (cfg.loo_refresh_interval > 0 &&
          state.episode % cfg.loo_refresh_interval == 0) {
        loo_refresh(state, dataset.train, cfg, deps);
      }
    }

    if (checkpoint_dir) {
      std::filesystem::create_directories(*checkpoint_dir);
      const std::string tag = "epoch" + std::to_string(epoch);
      save_pool(state.pool, state.ledger, *checkpoint_dir / ("pool_" + tag + ".json"));
      state.controller.save(*checkpoint_dir / ("controller_" + tag + ".json"));
    }
  }
  flush_batch(state, cfg);

  result.pool = std::move(state.pool);
  result.ledger = std::move(state.ledger);
  result.controller = std::move(state.controller);
  result.early_stopped = stopped;
  return result;
}

} // namespace sero
