#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sero/evolution.hpp"
#include "sero/pool_io.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

using namespace sero;

namespace {

std::filesystem::path seed_pool_path() {
  return std::filesystem::path(SERO_SOURCE_DIR) / "data" / "pools" /
         "synth_seed.json";
}

struct Fixture {
  RunConfig cfg = RunConfig::profile_gpt();
  Dataset dataset;
  RolePool pool;
  CreditLedger ledger;
  FeatureHashEncoder encoder;

  Fixture() : encoder(128) {
    cfg.encoder_dim = 128;
    cfg.hidden_width = 32;
    cfg.op_embedding_dim = 8;
    cfg.role_projection_dim = 8;
    cfg.n_train = 12;
    cfg.n_test = 12;
    dataset = synth_benchmark(cfg.dataset_seed, cfg.n_train, cfg.n_test,
                              cfg.benchmark_id);
    auto [p, l] = load_pool(seed_pool_path());
    pool = std::move(p);
    ledger = std::move(l);
    pool.contract().min_pool_size = cfg.min_pool_size;
    pool.contract().max_pool_size = cfg.max_pool_size;
    for (const auto &card : pool.roles()) ledger.ensure_role(card.name);
  }

  Task task_of_group(const std::string &group) const {
    for (const auto &t : dataset.train) {
      if (t.group == group) return t;
    }
    REQUIRE(false);
    return {};
  }
};

} // namespace

TEST_CASE("action mask: phase, bounds, and admissible targets") {
  Fixture fx;

  SUBCASE("warmup disables removal; Noop and Add stay available") {
    const ActionMask mask = action_mask(fx.pool, fx.ledger, Phase::Warmup, fx.cfg);
    CHECK(mask.allow_add);
    CHECK_FALSE(mask.allows(EditOp::Remove));
    CHECK(mask.allows(EditOp::Noop));
  }

  SUBCASE("pool at max size masks Add") {
    fx.cfg.max_pool_size = fx.pool.size();
    const ActionMask mask = action_mask(fx.pool, fx.ledger, Phase::Main, fx.cfg);
    CHECK_FALSE(mask.allow_add);
  }

  SUBCASE("pool at min size masks Remove") {
    fx.cfg.min_pool_size = fx.pool.size();
    const ActionMask mask = action_mask(fx.pool, fx.ledger, Phase::Main, fx.cfg);
    CHECK_FALSE(mask.allows(EditOp::Remove));
  }

  SUBCASE("targets exclude protected roles, last-of-family, last validator") {
    const ActionMask mask = action_mask(fx.pool, fx.ledger, Phase::Main, fx.cfg);
    // Seed pool: every required family has exactly one member and the
    // validator pass is reserved, so only the unprotected, non-required
    // notes_summarizer is admissible.
    CHECK(mask.removal_targets == std::vector<std::string>{"notes_summarizer"});
  }

  SUBCASE("second validator becomes admissible") {
    RoleCard extra_val;
    extra_val.name = "second_checker";
    extra_val.prompt = "You double-check drafts for slips.";
    extra_val.family = "validation";
    extra_val.protocol = "critique";
    extra_val.role_type = RoleType::Val;
    fx.pool.add_role(extra_val);
    const ActionMask mask = action_mask(fx.pool, fx.ledger, Phase::Main, fx.cfg);
    // With two validators the family and count minima are both satisfied by
    // the other one.
    CHECK(std::find(mask.removal_targets.begin(), mask.removal_targets.end(),
                    "second_checker") != mask.removal_targets.end());
    CHECK(std::find(mask.removal_targets.begin(), mask.removal_targets.end(),
                    "format_validator") != mask.removal_targets.end());
  }
}

TEST_CASE("editor proposals parse the fenced card") {
  Fixture fx;
  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const Task lookup = fx.task_of_group("lookup");
  int calls = 0;
  const EditorProposal p =
      editor_propose_card(lookup, fx.pool, fx.ledger, backend, fx.cfg, &calls);
  REQUIRE(p.card.has_value());
  CHECK(p.card->name == "table_lookup_solver");
  CHECK(p.card->family == "table");
  CHECK(p.card->role_type == RoleType::Spec);
  CHECK(calls == 1);

  SUBCASE("garbage replies are ParseFailure") {
    ScriptedBackend bad({{"role_editor", ".*", std::nullopt, "no card here"}},
                        "x");
    const EditorProposal q =
        editor_propose_card(lookup, fx.pool, fx.ledger, bad, fx.cfg);
    CHECK_FALSE(q.card.has_value());
    CHECK(q.reason == "ParseFailure");
  }

  SUBCASE("two fenced blocks are ParseFailure") {
    ScriptedBackend bad(
        {{"role_editor", ".*", std::nullopt,
          "```json\n{\"name\":\"a\",\"prompt\":\"p\"}\n```\n"
          "```json\n{\"name\":\"b\",\"prompt\":\"p\"}\n```"}},
        "x");
    const EditorProposal q =
        editor_propose_card(lookup, fx.pool, fx.ledger, bad, fx.cfg);
    CHECK_FALSE(q.card.has_value());
    CHECK(q.reason == "ParseFailure");
  }
}

TEST_CASE("candidate generation guards") {
  Fixture fx;
  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const Task lookup = fx.task_of_group("lookup");

  SUBCASE("valid Add inserts with conservative initial updates") {
    const Candidate cand =
        generate_candidate(Action{EditOp::Add, std::nullopt}, lookup, fx.pool,
                           fx.ledger, backend, fx.encoder, fx.cfg);
    CHECK(cand.changed);
    CHECK(cand.added_name == "table_lookup_solver");
    CHECK(cand.pool.contains("table_lookup_solver"));
    CHECK(cand.ledger.entry("table_lookup_solver").ema == 0.0);
    CHECK(cand.ledger.entry("table_lookup_solver").n_updates ==
          fx.cfg.new_role_initial_updates);
    CHECK_FALSE(fx.pool.contains("table_lookup_solver")); // input untouched
  }

  SUBCASE("near-duplicate prompts are rejected") {
    // An editor that proposes a card whose prompt replicates an existing one.
    RoleCard dup = *fx.pool.find("arithmetic_solver");
    ScriptedBackend dup_editor(
        {{"role_editor", ".*", std::nullopt,
          "```json\n{\"name\":\"arith_clone\",\"prompt\":\"" + dup.prompt +
              "\",\"family\":\"fresh\",\"protocol\":\"notes\",\"role_type\":"
              "\"Spec\"}\n```"}},
        "x");
    const Candidate cand =
        generate_candidate(Action{EditOp::Add, std::nullopt}, lookup, fx.pool,
                           fx.ledger, dup_editor, fx.encoder, fx.cfg);
    CHECK_FALSE(cand.changed);
    CHECK(cand.reason == "NearDuplicate");
  }

  SUBCASE("dominant family additions are rejected") {
    ScriptedBackend fam_editor(
        {{"role_editor", ".*", std::nullopt,
          "```json\n{\"name\":\"another_router\",\"prompt\":\"You route "
          "tasks a second way entirely.\",\"family\":\"routing\","
          "\"protocol\":\"notes\",\"role_type\":\"Setup\"}\n```"}},
        "x");
    RunConfig tight = fx.cfg;
    tight.dominant_family_fraction = 0.28; // 2/7 would reach it
    const Candidate cand =
        generate_candidate(Action{EditOp::Add, std::nullopt}, lookup, fx.pool,
                           fx.ledger, fam_editor, fx.encoder, tight);
    CHECK_FALSE(cand.changed);
    CHECK(cand.reason == "DominantFamily");
  }

  SUBCASE("new validators are rejected while the validator pass is reserved") {
    ScriptedBackend val_editor(
        {{"role_editor", ".*", std::nullopt,
          "```json\n{\"name\":\"extra_val\",\"prompt\":\"You verify "
          "everything twice over.\",\"family\":\"validation\",\"protocol\":"
          "\"critique\",\"role_type\":\"Val\"}\n```"}},
        "x");
    const Candidate cand =
        generate_candidate(Action{EditOp::Add, std::nullopt}, lookup, fx.pool,
                           fx.ledger, val_editor, fx.encoder, fx.cfg);
    CHECK_FALSE(cand.changed);
    CHECK(cand.reason == "ReservedValidatorPass");
  }

  SUBCASE("Remove keeps contracts or is rejected") {
    const Candidate ok = generate_candidate(
        Action{EditOp::Remove, std::string("notes_summarizer")}, lookup,
        fx.pool, fx.ledger, backend, fx.encoder, fx.cfg);
    CHECK(ok.changed);
    CHECK_FALSE(ok.pool.contains("notes_summarizer"));
    CHECK_FALSE(ok.ledger.has_role("notes_summarizer"));

    const Candidate bad = generate_candidate(
        Action{EditOp::Remove, std::string("arithmetic_solver")}, lookup,
        fx.pool, fx.ledger, backend, fx.encoder, fx.cfg);
    CHECK_FALSE(bad.changed);
    CHECK(bad.reason == "ContractViolation");
  }

  SUBCASE("Noop returns the state unchanged") {
    const Candidate cand =
        generate_candidate(Action{EditOp::Noop, std::nullopt}, lookup, fx.pool,
                           fx.ledger, backend, fx.encoder, fx.cfg);
    CHECK_FALSE(cand.changed);
    CHECK(cand.pool == fx.pool);
    CHECK(cand.ledger == fx.ledger);
  }
}

TEST_CASE("commitment rule") {
  RunConfig cfg = RunConfig::profile_gpt(); // strict set: {"synth-strict"}

  CHECK(commit_decision(true, true, 0.5, Phase::Main, "synth", cfg));
  CHECK_FALSE(commit_decision(true, true, 0.0, Phase::Main, "synth", cfg));
  CHECK_FALSE(commit_decision(true, true, -0.5, Phase::Warmup, "synth", cfg));
  CHECK(commit_decision(true, true, 0.0, Phase::Warmup, "synth", cfg));
  CHECK_FALSE(commit_decision(true, true, 0.0, Phase::Warmup, "synth-strict", cfg));
  CHECK(commit_decision(true, true, 0.5, Phase::Warmup, "synth-strict", cfg));
  CHECK_FALSE(commit_decision(false, true, 1.0, Phase::Main, "synth", cfg));
  CHECK_FALSE(commit_decision(true, false, 1.0, Phase::Main, "synth", cfg));
}

TEST_CASE("train_step: Noop costs one pass and changes nothing") {
  Fixture fx;
  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  TrainDeps deps{&backend, &fx.encoder};

  TrainState state;
  state.rng = Rng(3);
  state.pool = fx.pool;
  state.ledger = fx.ledger;
  state.controller = ControllerParams(fx.cfg.encoder_dim, fx.cfg.hidden_width,
                                      fx.cfg.op_embedding_dim,
                                      fx.cfg.role_projection_dim, state.rng);
  state.phase = Phase::Main;

  RunConfig cfg = fx.cfg;
  cfg.exploration_gamma = 0.0;
  cfg.max_pool_size = state.pool.size(); // Add masked
  cfg.min_pool_size = state.pool.size(); // Remove masked -> Noop forced

  const std::string before = pool_state_json(state.pool, state.ledger);
  const Task task = fx.task_of_group("arith");
  const std::int64_t calls_before = backend.call_count();
  const EpisodeRecord rec = train_step(state, task, cfg, deps);

  CHECK(rec.op == "noop");
  CHECK(rec.reward == 0.0);
  CHECK_FALSE(rec.committed);
  // One inference pass: |team| calls, no editor, no second pass. The arith
  // specialist answers, so the draft is well-formed and skips the validator.
  CHECK(backend.call_count() - calls_before == rec.calls);
  CHECK(pool_state_json(state.pool, state.ledger) == before);
}

TEST_CASE("train_step: committed Add lifts the score from 0 to 1") {
  Fixture fx;
  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  TrainDeps deps{&backend, &fx.encoder};

  TrainState state;
  state.rng = Rng(5);
  state.pool = fx.pool;
  state.ledger = fx.ledger;
  state.controller = ControllerParams(fx.cfg.encoder_dim, fx.cfg.hidden_width,
                                      fx.cfg.op_embedding_dim,
                                      fx.cfg.role_projection_dim, state.rng);
  state.phase = Phase::Main;

  const Task lookup = fx.task_of_group("lookup");

  // Drive steps until the sampler picks Add on this lookup task; the scripted
  // editor then proposes the missing table specialist, which fixes the task.
  RunConfig cfg = fx.cfg;
  cfg.min_pool_size = state.pool.size(); // keep Remove masked
  bool committed_add = false;
  for (int i = 0; i < 50 && !committed_add; ++i) {
    const EpisodeRecord rec = train_step(state, lookup, cfg, deps);
    if (rec.op == "add" && rec.committed) {
      committed_add = true;
      CHECK(rec.score_pre == 0.0);
      CHECK(rec.score_post == 1.0);
      CHECK(rec.reward == doctest::Approx(1.0));
      CHECK(rec.target == "table_lookup_solver");
    }
  }
  CHECK(committed_add);
  CHECK(state.pool.contains("table_lookup_solver"));
}

TEST_CASE("train_step: rejected edits roll back byte-identically") {
  Fixture fx;
  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  TrainDeps deps{&backend, &fx.encoder};

  TrainState state;
  state.rng = Rng(11);
  state.pool = fx.pool;
  state.ledger = fx.ledger;
  state.controller = ControllerParams(fx.cfg.encoder_dim, fx.cfg.hidden_width,
                                      fx.cfg.op_embedding_dim,
                                      fx.cfg.role_projection_dim, state.rng);
  state.phase = Phase::Main;

  RunConfig cfg = fx.cfg;
  const Task arith = fx.task_of_group("arith");

  int rejected_seen = 0;
  for (int i = 0; i < 60; ++i) {
    const std::string before = pool_state_json(state.pool, state.ledger);
    const EpisodeRecord rec = train_step(state, arith, cfg, deps);
    if (!rec.committed) {
      ++rejected_seen;
      CHECK(pool_state_json(state.pool, state.ledger) == before);
    }
  }
  CHECK(rejected_seen > 0);
}

TEST_CASE("train: same seed gives identical episode logs") {
  Fixture fx;
  RunConfig cfg = fx.cfg;
  cfg.warmup_epochs = 1;
  cfg.main_epochs = 2;

  auto run = [&]() {
    ScriptedBackend backend = fx.dataset.make_scripted_backend();
    auto [pool, ledger] = load_pool(seed_pool_path());
    return train(fx.dataset, cfg, 42, backend, fx.encoder, std::move(pool),
                 std::move(ledger));
  };
  const TrainResult a = run();
  const TrainResult b = run();
  REQUIRE(a.episodes.size() == b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    CHECK(episode_to_jsonl(a.episodes[i]) == episode_to_jsonl(b.episodes[i]));
  }
  CHECK(pool_state_json(a.pool, a.ledger) == pool_state_json(b.pool, b.ledger));
}

TEST_CASE("train: early stop fires after a full unchanged window") {
  Fixture fx;
  RunConfig cfg = fx.cfg;
  // Freeze the pool size so every episode is a forced Noop.
  cfg.warmup_epochs = 0;
  cfg.main_epochs = 10;
  cfg.min_pool_size = fx.pool.size();
  cfg.max_pool_size = fx.pool.size();
  cfg.collapse_window = 24;
  cfg.collapse_fraction = 0.85;
  cfg.loo_refresh_interval = 0; // isolate the stop rule

  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const TrainResult result =
      train(fx.dataset, cfg, 42, backend, fx.encoder, fx.pool, fx.ledger);
  CHECK(result.early_stopped);
  // Main episodes 1..24 run; the check before episode 25 halts training.
  CHECK(result.episodes.size() == 24);
  for (const auto &e : result.episodes) CHECK(e.op == "noop");
}

TEST_CASE("train: one edit attempt per task occurrence") {
  Fixture fx;
  RunConfig cfg = fx.cfg;
  cfg.warmup_epochs = 1;
  cfg.main_epochs = 1;
  cfg.loo_refresh_interval = 0;

  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const TrainResult result =
      train(fx.dataset, cfg, 7, backend, fx.encoder, fx.pool, fx.ledger);
  // Without an early stop, exactly one episode per task per epoch.
  CHECK(result.episodes.size() ==
        static_cast<std::size_t>(2 * static_cast<int>(fx.dataset.train.size())));
  // Episode indices are strictly increasing and dense.
  for (std::size_t i = 0; i < result.episodes.size(); ++i) {
    CHECK(result.episodes[i].episode == static_cast<int>(i));
  }
}

TEST_CASE("train: commit soundness holds over the log") {
  Fixture fx;
  RunConfig cfg = fx.cfg;
  cfg.warmup_epochs = 1;
  cfg.main_epochs = 3;

  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const TrainResult result =
      train(fx.dataset, cfg, 42, backend, fx.encoder, fx.pool, fx.ledger);
  const bool strict =
      cfg.strict_add_benchmarks.count(fx.dataset.benchmark_id) != 0;
  for (const auto &e : result.episodes) {
    if (!e.committed) continue;
    if (e.phase == "main") {
      CHECK(e.reward > 0.0);
    } else if (!strict) {
      CHECK(e.reward >= 0.0);
    }
    CHECK(e.pool_size >= cfg.min_pool_size);
    CHECK(e.pool_size <= cfg.max_pool_size);
  }
}

TEST_CASE("periodic LOO refresh updates historical credit") {
  Fixture fx;
  RunConfig cfg = fx.cfg;
  cfg.warmup_epochs = 1;
  cfg.main_epochs = 1;
  cfg.loo_refresh_interval = 5;
  cfg.loo_min_pool = 4;

  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const TrainResult result =
      train(fx.dataset, cfg, 21, backend, fx.encoder, fx.pool, fx.ledger);

  // 24 episodes at interval 5: at least four refreshes ran, so every non-Agg
  // seed role carries a recorded LOO value and an incremented update count.
  int refreshed = 0;
  for (const auto &card : result.pool.roles()) {
    if (card.role_type == RoleType::Agg) continue;
    if (!result.ledger.has_role(card.name)) continue;
    const CreditEntry &e = result.ledger.entry(card.name);
    if (e.recent_loo.has_value() && e.n_updates > 0) ++refreshed;
  }
  CHECK(refreshed >= 4);
}

TEST_CASE("train writes per-epoch checkpoints when asked") {
  Fixture fx;
  RunConfig cfg = fx.cfg;
  cfg.warmup_epochs = 1;
  cfg.main_epochs = 1;
  cfg.loo_refresh_interval = 0;

  const auto dir =
      std::filesystem::temp_directory_path() / "sero_ckpt_test";
  std::filesystem::remove_all(dir);
  ScriptedBackend backend = fx.dataset.make_scripted_backend();
  const TrainResult result = train(fx.dataset, cfg, 1, backend, fx.encoder,
                                   fx.pool, fx.ledger, dir);
  (void)result;
  CHECK(std::filesystem::exists(dir / "pool_epoch0.json"));
  CHECK(std::filesystem::exists(dir / "controller_epoch0.json"));
  CHECK(std::filesystem::exists(dir / "pool_epoch1.json"));
  std::filesystem::remove_all(dir);
}
