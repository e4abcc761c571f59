// Acceptance suite: runs every acceptance criterion end to end against the
// scripted backend and prints one pass/fail line per criterion.
#include "sero/evolution.hpp"
#include "sero/harness.hpp"
#include "sero/pool_io.hpp"
#include "sero/rng.hpp"

#include "gradcheck.hpp"
#include "oracle_infer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>

using namespace sero;

namespace {

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(int index, const std::string &name, bool pass,
            const std::string &detail, double seconds) {
  std::printf("[%s] %2d. %-24s %s (%.1f s)\n", pass ? "PASS" : "FAIL", index,
              name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run_criterion(int index, const std::string &name,
                   const std::function<std::pair<bool, std::string>()> &fn) {
  const auto t0 = Clock::now();
  bool pass = false;
  std::string detail;
  try {
    auto [p, d] = fn();
    pass = p;
    detail = d;
  } catch (const std::exception &e) {
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(Clock::now() - t0).count();
  report(index, name, pass, detail, secs);
}

std::filesystem::path seed_pool_path() {
  return std::filesystem::path(SERO_SOURCE_DIR) / "data" / "pools" /
         "synth_seed.json";
}

RunConfig gpt_config() {
  RunConfig cfg = RunConfig::profile_gpt();
  cfg.benchmark_id = "synth";
  return cfg;
}

double population_std(const std::vector<double> &xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// 1. Contract fuzzing
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_contract_fuzzing() {
  const auto t0 = Clock::now();
  const RunConfig cfg = [] {
    RunConfig c = gpt_config();
    c.n_train = 6;
    c.n_test = 6;
    return c;
  }();
  const Dataset dataset = synth_benchmark(cfg.dataset_seed, 6, 6, "synth");
  FeatureHashEncoder encoder(cfg.encoder_dim);

  // Three editor temperaments rotated across sequences: the matched dataset
  // editor, an adversarial editor pushing validators and duplicates, and a
  // garbage editor.
  ScriptedBackend normal = dataset.make_scripted_backend();
  std::vector<ScriptedRule> adversarial = dataset.behaviors;
  adversarial.insert(
      adversarial.begin(),
      {"^role_editor$", "-arith-", std::nullopt,
       "```json\n{\"name\":\"sneaky_validator\",\"prompt\":\"You verify "
       "everything twice.\",\"family\":\"validation\",\"protocol\":"
       "\"critique\",\"role_type\":\"Val\"}\n```"});
  adversarial.insert(
      adversarial.begin(),
      {"^role_editor$", "-sched-", std::nullopt,
       "```json\n{\"name\":\"second_router\",\"prompt\":\"You read the "
       "incoming task first. Identify which kind of problem it is, restate "
       "the deliverable, and note the exact output format the task demands "
       "so later roles can comply.\",\"family\":\"routing\",\"protocol\":"
       "\"notes\",\"role_type\":\"Setup\"}\n```"});
  ScriptedBackend pushy(adversarial, dataset.default_response);
  std::vector<ScriptedRule> broken = dataset.behaviors;
  broken.insert(broken.begin(),
                {"^role_editor$", ".*", std::nullopt, "no card today"});
  ScriptedBackend garbage(broken, dataset.default_response);
  ScriptedBackend *backends[3] = {&normal, &pushy, &garbage};

  const int kSequences = 500;
  const int kEditsPerSequence = 20;
  long long edits = 0;
  long long commits = 0;
  long long violations = 0;

  for (int seq = 0; seq < kSequences; ++seq) {
    Rng rng(1000 + static_cast<std::uint64_t>(seq));
    auto [pool, ledger] = load_pool(seed_pool_path());
    pool.contract().min_pool_size = cfg.min_pool_size;
    pool.contract().max_pool_size = cfg.max_pool_size;
    for (const auto &card : pool.roles()) ledger.ensure_role(card.name);
    ScriptedBackend &backend = *backends[seq % 3];

    for (int k = 0; k < kEditsPerSequence; ++k) {
      const Phase phase = k < 5 ? Phase::Warmup : Phase::Main;
      const Task &task = dataset.train[rng.index(dataset.train.size())];
      const ActionMask mask = action_mask(pool, ledger, phase, cfg);

      std::vector<EditOp> allowed;
      for (EditOp op : {EditOp::Add, EditOp::Remove, EditOp::Noop}) {
        if (mask.allows(op)) allowed.push_back(op);
      }
      Action action;
      action.op = allowed[rng.index(allowed.size())];
      if (action.op == EditOp::Remove) {
        action.target = mask.removal_targets[rng.index(mask.removal_targets.size())];
      }
      ++edits;

      Candidate cand = generate_candidate(action, task, pool, ledger, backend,
                                          encoder, cfg);
      double reward = 0.0;
      if (cand.changed) {
        const InferenceResult pre = infer(task.prompt, task.answer_format, pool,
                                          ledger, cfg, backend, encoder);
        const InferenceResult post =
            infer(task.prompt, task.answer_format, cand.pool, cand.ledger, cfg,
                  backend, encoder);
        reward = score_task(task, post.answer) - score_task(task, pre.answer);
      }
      const bool contracts_ok =
          cand.changed && check_contracts(cand.pool).all_pass();
      if (commit_decision(cand.changed, contracts_ok, reward, phase,
                          task.benchmark, cfg)) {
        pool = std::move(cand.pool);
        ledger = std::move(cand.ledger);
        ++commits;
        if (!check_contracts(pool).all_pass()) ++violations;
      }
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ostringstream detail;
  detail << edits << " edits, " << commits << " commits, " << violations
         << " violations, " << std::fixed << secs << " s";
  return {violations == 0 && edits >= 10000 && secs < 60.0, detail.str()};
}

// ---------------------------------------------------------------------------
// 2. DAG invariants
// ---------------------------------------------------------------------------

bool kahn_acyclic(int n, const std::vector<std::pair<int, int>> &edges) {
  std::vector<int> indeg(static_cast<std::size_t>(n), 0);
  for (const auto &[a, b] : edges) {
    (void)a;
    ++indeg[static_cast<std::size_t>(b)];
  }
  std::vector<int> stack;
  for (int v = 0; v < n; ++v) {
    if (indeg[static_cast<std::size_t>(v)] == 0) stack.push_back(v);
  }
  int seen = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    ++seen;
    for (const auto &[a, b] : edges) {
      if (a == v && --indeg[static_cast<std::size_t>(b)] == 0) stack.push_back(b);
    }
  }
  return seen == n;
}

std::pair<bool, std::string> criterion_dag_invariants() {
  Rng rng(777);
  RunConfig cfg = gpt_config();
  cfg.encoder_dim = 64;
  FeatureHashEncoder encoder(64);
  long long violations = 0;
  const int kTrials = 10000;

  // Worked example first: exact edges and levels.
  {
    std::vector<RoleCard> team;
    for (int i = 0; i < 3; ++i) {
      RoleCard c;
      c.name = "r" + std::to_string(i);
      c.prompt = "p";
      c.protocol = "notes";
      c.role_type = RoleType::Spec;
      team.push_back(c);
    }
    const CommDag dag =
        build_dag(team, {{"r0", 0.9}, {"r1", 0.5}, {"r2", 0.7}});
    const bool example_ok =
        dag.order == std::vector<std::string>{"r0", "r2", "r1"} &&
        dag.edges == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}} &&
        dag.levels == std::vector<std::vector<int>>{{0}, {1, 2}} &&
        dag.b_out == 2 && dag.b_in == 1;
    if (!example_ok) return {false, "worked n=3 example mismatch"};
  }

  for (int trial = 0; trial < kTrials; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(12));
    std::vector<RoleCard> team;
    std::map<std::string, double> fast;
    for (int i = 0; i < n; ++i) {
      RoleCard c;
      c.name = "r" + std::to_string(i);
      c.prompt = "role " + c.name + " prompt";
      c.protocol = "notes";
      const std::size_t pick = rng.index(3);
      c.role_type = pick == 0   ? RoleType::Setup
                    : pick == 1 ? RoleType::Spec
                                : RoleType::Val;
      fast[c.name] = rng.uniform();
      team.push_back(c);
    }
    const CommDag dag = build_dag(team, fast);

    const int expect_bout = std::max(1, std::min(2, n - 1));
    const int expect_bin = std::max(1, n / 2);
    if (dag.b_out != expect_bout || dag.b_in != expect_bin) ++violations;
    if (!kahn_acyclic(n, dag.edges)) ++violations;

    std::vector<int> din(static_cast<std::size_t>(n), 0);
    std::vector<int> dout(static_cast<std::size_t>(n), 0);
    for (const auto &[a, b] : dag.edges) {
      if (a >= b) ++violations;
      ++dout[static_cast<std::size_t>(a)];
      ++din[static_cast<std::size_t>(b)];
    }
    for (int v = 0; v < n; ++v) {
      if (dout[static_cast<std::size_t>(v)] > dag.b_out) ++violations;
      if (din[static_cast<std::size_t>(v)] > dag.b_in) ++violations;
    }

    auto stage_of = [&](const std::string &name) {
      for (const auto &c : team) {
        if (c.name == name) {
          return c.role_type == RoleType::Setup ? -1
                 : c.role_type == RoleType::Val ? 1
                                                : 0;
        }
      }
      return 99;
    };
    for (std::size_t i = 0; i + 1 < dag.order.size(); ++i) {
      if (stage_of(dag.order[i]) > stage_of(dag.order[i + 1])) ++violations;
    }

    // Aggregator observability, checked behaviorally through execution.
    ActiveTeam active;
    for (const auto &c : team) {
      if (c.role_type == RoleType::Val) active.validators.push_back(c);
      else active.specialists_and_setup.push_back(c);
    }
    RoleCard agg;
    agg.name = "agg";
    agg.prompt = "aggregate";
    agg.protocol = "final-line";
    agg.role_type = RoleType::Agg;
    agg.protected_flag = true;
    active.aggregator = agg;

    class CaptureBackend : public Backend {
    public:
      Completion complete(const RoleCard &card,
                          const InvocationContext &ctx) override {
        Completion c;
        c.text = "msg from " + card.name;
        if (card.name == "agg") {
          agg_upstream.clear();
          for (const auto &[role, text] : ctx.upstream) {
            agg_upstream.insert(role);
          }
        }
        record(c);
        return c;
      }
      std::set<std::string> agg_upstream;
    } capture;

    const CommDag dag2 = build_dag(active.non_terminals(), fast);
    const auto transcript =
        execute_dag("fuzz task", dag2, active, capture, encoder, 0.5, cfg);
    (void)transcript;
    for (const auto &c : team) {
      if (capture.agg_upstream.count(c.name) == 0) ++violations;
    }
  }
  std::ostringstream detail;
  detail << kTrials << " random teams, " << violations << " violations";
  return {violations == 0, detail.str()};
}

// ---------------------------------------------------------------------------
// 3. Gradient check
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_gradient_check() {
  Rng rng(4242);
  double worst = 0.0;
  const int kTrials = 100;
  for (int trial = 0; trial < kTrials; ++trial) {
    const gradcheck::Instance inst = gradcheck::random_instance(rng);
    const gradcheck::Result res = gradcheck::compare(inst, 1e-5);
    worst = std::max(worst, res.max_rel_error);
  }
  std::ostringstream detail;
  detail << kTrials << " trials, max rel err " << std::scientific << worst;
  return {worst < 1e-4, detail.str()};
}

// ---------------------------------------------------------------------------
// 4. Credit oracles
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_credit_oracles() {
  Rng rng(9090);

  // EMA closed form to 1e-12.
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const double mu = rng.uniform();
    const double c0 = 2.0 * rng.uniform() - 1.0;
    CreditLedger ledger;
    ledger.ensure_role("r");
    ledger.entry("r").ema = c0;
    const int k = 1 + static_cast<int>(rng.index(30));
    std::vector<double> phis;
    for (int i = 0; i < k; ++i) phis.push_back(2.0 * rng.uniform() - 1.0);
    for (double phi : phis) ema_update(ledger, "r", phi, mu);
    double expect = std::pow(1.0 - mu, k) * c0;
    for (int j = 0; j < k; ++j) {
      expect += mu * std::pow(1.0 - mu, k - 1 - j) * phis[static_cast<std::size_t>(j)];
    }
    worst = std::max(worst, std::abs(ledger.entry("r").ema - expect));
  }
  if (worst >= 1e-12) {
    return {false, "ema deviates from closed form by " + std::to_string(worst)};
  }

  // LOO against the independent transcript-rebuilding oracle, exact, on every
  // pool of <= 5 roles drawn from a 4-role universe plus the aggregator.
  RunConfig cfg = gpt_config();
  cfg.encoder_dim = 64;
  FeatureHashEncoder encoder(64);
  auto make = [](const std::string &name, RoleType type) {
    RoleCard c;
    c.name = name;
    c.prompt = "You handle " + name + " duties.";
    c.protocol = type == RoleType::Agg ? "final-line" : "notes";
    c.role_type = type;
    c.protected_flag = type == RoleType::Agg;
    c.family = name;
    return c;
  };
  const std::vector<RoleCard> universe = {
      make("alpha_solver", RoleType::Spec), make("beta_solver", RoleType::Spec),
      make("gamma_setup", RoleType::Setup), make("checker", RoleType::Val)};
  const RoleCard agg = make("agg", RoleType::Agg);

  Task task;
  task.id = "loo-acc";
  task.prompt = "Task loo-acc. Recover the code.";
  task.gold = "Z55";
  task.answer_format = "^[A-Z][0-9]{2}$";
  std::vector<ScriptedRule> rules = {
      {"alpha", "loo-acc", std::nullopt, "ANSWER: Z55"},
      {"^agg$", "loo-acc", std::string("ANSWER: Z55"), "Z55"},
      {"checker", ".*", std::nullopt, "OK"}};
  const std::string default_response = "hmm";

  CreditLedger ledger;
  for (const auto &c : universe) ledger.ensure_role(c.name);
  ledger.ensure_role(agg.name);
  ledger.entry("alpha_solver").ema = 0.8;
  ledger.entry("beta_solver").ema = 0.3;

  int checked = 0;
  int mismatches = 0;
  for (unsigned mask = 1; mask < 16; ++mask) {
    std::vector<RoleCard> cards;
    for (unsigned b = 0; b < 4; ++b) {
      if (mask & (1u << b)) cards.push_back(universe[b]);
    }
    cards.push_back(agg);
    ContractConfig contract;
    RolePool pool(cards, {}, contract);
    if (pool.size() < 2) continue;
    for (const auto &card : pool.roles()) {
      if (card.role_type == RoleType::Agg) continue;
      ScriptedBackend backend(rules, default_response);
      const double got = loo_credit(
          pool, ledger, card.name,
          [&](const RolePool &p, const CreditLedger &l) {
            const InferenceResult r = infer(task.prompt, task.answer_format, p,
                                            l, cfg, backend, encoder);
            return score_task(task, r.answer);
          });
      const double want =
          oracle::loo(task.prompt, task.answer_format, task.gold, pool, ledger,
                      cfg, rules, default_response, encoder, card.name);
      if (got != want) ++mismatches;
      ++checked;
    }
  }
  std::ostringstream detail;
  detail << "ema max err " << std::scientific << worst << ", loo " << checked
         << " cases, " << mismatches << " mismatches";
  return {mismatches == 0 && checked >= 20, detail.str()};
}

// ---------------------------------------------------------------------------
// 5. Commitment soundness
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_commitment_soundness() {
  RunConfig cfg = gpt_config();
  const Dataset dataset =
      synth_benchmark(cfg.dataset_seed, cfg.n_train, cfg.n_test, "synth");
  FeatureHashEncoder encoder(cfg.encoder_dim);
  ScriptedBackend backend = dataset.make_scripted_backend();
  auto [pool, ledger] = load_pool(seed_pool_path());

  const TrainResult result =
      train(dataset, cfg, 42, backend, encoder, pool, ledger);

  const bool strict = cfg.strict_add_benchmarks.count("synth") != 0;
  int main_commits = 0;
  int warmup_commits = 0;
  for (const auto &e : result.episodes) {
    if (!e.committed) continue;
    if (e.phase == "main") {
      ++main_commits;
      if (!(e.reward > 0.0)) {
        return {false, "main-phase commit with R <= 0 at episode " +
                           std::to_string(e.episode)};
      }
    } else {
      ++warmup_commits;
      if (!strict && !(e.reward >= 0.0)) {
        return {false, "warmup commit with R < 0 at episode " +
                           std::to_string(e.episode)};
      }
    }
  }

  // Rollback exactness, asserted per rejected episode via state snapshots.
  ScriptedBackend backend2 = dataset.make_scripted_backend();
  TrainDeps deps{&backend2, &encoder};
  TrainState state;
  state.rng = Rng(43);
  auto [p2, l2] = load_pool(seed_pool_path());
  state.pool = std::move(p2);
  state.ledger = std::move(l2);
  state.pool.contract().min_pool_size = cfg.min_pool_size;
  state.pool.contract().max_pool_size = cfg.max_pool_size;
  for (const auto &card : state.pool.roles()) state.ledger.ensure_role(card.name);
  state.controller =
      ControllerParams(cfg.encoder_dim, cfg.hidden_width, cfg.op_embedding_dim,
                       cfg.role_projection_dim, state.rng);
  state.phase = Phase::Main;

  int rejected = 0;
  int restore_failures = 0;
  for (int i = 0; i < 80; ++i) {
    const Task &task = dataset.train[static_cast<std::size_t>(i) % dataset.train.size()];
    const std::string before = pool_state_json(state.pool, state.ledger);
    const EpisodeRecord rec = train_step(state, task, cfg, deps);
    if (!rec.committed) {
      ++rejected;
      if (pool_state_json(state.pool, state.ledger) != before) ++restore_failures;
    }
  }

  std::ostringstream detail;
  detail << main_commits << " main / " << warmup_commits
         << " warmup commits sound; " << rejected << " rejections, "
         << restore_failures << " restore failures";
  return {restore_failures == 0 && rejected > 0, detail.str()};
}

// ---------------------------------------------------------------------------
// 6. Early stop
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_early_stop() {
  RunConfig cfg = gpt_config();
  const Dataset dataset = synth_benchmark(cfg.dataset_seed, 30, 10, "synth");
  FeatureHashEncoder encoder(cfg.encoder_dim);
  ScriptedBackend backend = dataset.make_scripted_backend();
  auto [pool, ledger] = load_pool(seed_pool_path());

  // Pool frozen at its current size: every episode is a Noop, so the first 24
  // main episodes are unchanged and the stop must fire at episode 25.
  cfg.warmup_epochs = 0;
  cfg.main_epochs = 5;
  cfg.min_pool_size = pool.size();
  cfg.max_pool_size = pool.size();
  cfg.loo_refresh_interval = 0;

  const TrainResult result =
      train(dataset, cfg, 42, backend, encoder, pool, ledger);
  std::ostringstream detail;
  detail << result.episodes.size() << " main episodes before halt, early_stop="
         << (result.early_stopped ? "yes" : "no");
  return {result.early_stopped && result.episodes.size() == 24, detail.str()};
}

// ---------------------------------------------------------------------------
// 7. End-to-end lift
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_end_to_end_lift() {
  const auto t0 = Clock::now();
  const RunConfig cfg = gpt_config();
  const Dataset dataset =
      synth_benchmark(cfg.dataset_seed, cfg.n_train, cfg.n_test, "synth");
  FeatureHashEncoder encoder(cfg.encoder_dim);

  const std::vector<std::uint64_t> seeds = {42, 43, 44};

  std::vector<double> sero_means;
  int adds_seed42 = -1;
  for (std::uint64_t seed : seeds) {
    ScriptedBackend backend = dataset.make_scripted_backend();
    auto [pool, ledger] = load_pool(seed_pool_path());
    const TrainResult result =
        train(dataset, cfg, seed, backend, encoder, pool, ledger);
    int adds = 0;
    for (const auto &e : result.episodes) {
      if (e.committed && e.op == "add") ++adds;
    }
    if (seed == 42) adds_seed42 = adds;
    ScriptedBackend eval_backend = dataset.make_scripted_backend();
    const ScoreReport report = evaluate_pool(result.pool, result.ledger,
                                             dataset.test, eval_backend, cfg,
                                             encoder);
    sero_means.push_back(report.mean);
  }

  ScriptedBackend static_backend = dataset.make_scripted_backend();
  auto [seed_pool, seed_ledger] = load_pool(seed_pool_path());
  const ScoreReport static_report =
      run_baseline(BaselineKind::StaticOrch, dataset, static_backend, cfg,
                   encoder, seed_pool, seed_ledger, 42);

  std::vector<double> random_means;
  for (std::uint64_t seed : seeds) {
    ScriptedBackend backend = dataset.make_scripted_backend();
    const ScoreReport report =
        run_baseline(BaselineKind::RandomEvo, dataset, backend, cfg, encoder,
                     seed_pool, seed_ledger, seed);
    random_means.push_back(report.mean);
  }

  const double lift = sero_means[0] - static_report.mean;
  const double sero_std = population_std(sero_means);
  const double random_std = population_std(random_means);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(3);
  detail << "sero " << sero_means[0] << " vs static " << static_report.mean
         << " (lift " << lift << "), adds " << adds_seed42 << ", std sero "
         << sero_std << " vs random " << random_std << ", " << secs << " s";
  const bool pass = adds_seed42 >= 1 && lift >= 0.10 &&
                    random_std >= 2.0 * sero_std && secs < 300.0;
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 8. Cost accounting
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_cost_accounting() {
  const RunConfig cfg = gpt_config();
  const Dataset dataset = synth_benchmark(cfg.dataset_seed, 10, 20, "synth");
  FeatureHashEncoder encoder(cfg.encoder_dim);
  auto [pool, ledger] = load_pool(seed_pool_path());

  ScriptedBackend cot_backend = dataset.make_scripted_backend();
  const ScoreReport cot = run_baseline(BaselineKind::Cot, dataset, cot_backend,
                                       cfg, encoder, pool, ledger, 42);
  if (cot.calls_per_instance != 1.0) {
    return {false, "CoT calls/instance != 1.00"};
  }

  ScriptedBackend sc_backend = dataset.make_scripted_backend();
  const ScoreReport sc3 = run_baseline(BaselineKind::Sc3, dataset, sc_backend,
                                       cfg, encoder, pool, ledger, 42);
  if (sc3.calls_per_instance != 3.0) {
    return {false, "SC@3 calls/instance != 3.00"};
  }

  // SERO: per-instance calls equal |active team| plus validator-check and
  // repair calls, reconciled against an independent spy counter.
  class CountingSpy : public Backend {
  public:
    explicit CountingSpy(ScriptedBackend inner) : inner_(std::move(inner)) {}
    Completion complete(const RoleCard &card, const InvocationContext &ctx) override {
      ++independent_count;
      return inner_.complete(card, ctx);
    }
    long long independent_count = 0;

  private:
    ScriptedBackend inner_;
  };

  CountingSpy spy(dataset.make_scripted_backend());
  long long reported_total = 0;
  int structure_mismatches = 0;
  for (const Task &task : dataset.test) {
    const InferenceResult r = infer(task.prompt, task.answer_format, pool,
                                    ledger, cfg, spy, encoder);
    reported_total += r.call_count;
    const int expected = static_cast<int>(r.team.all().size()) +
                         (r.validator_check_invoked ? 1 : 0) +
                         (r.repair_invoked ? 1 : 0);
    if (r.call_count != expected) ++structure_mismatches;
  }
  std::ostringstream detail;
  detail << "CoT 1.00, SC@3 3.00, sero reported " << reported_total
         << " vs spy " << spy.independent_count << ", structure mismatches "
         << structure_mismatches;
  return {reported_total == spy.independent_count && structure_mismatches == 0,
          detail.str()};
}

// ---------------------------------------------------------------------------
// 9. Determinism
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_determinism() {
  const RunConfig cfg = gpt_config();
  const Dataset dataset =
      synth_benchmark(cfg.dataset_seed, cfg.n_train, cfg.n_test, "synth");
  FeatureHashEncoder encoder(cfg.encoder_dim);

  auto full_run = [&]() {
    ScriptedBackend backend = dataset.make_scripted_backend();
    auto [pool, ledger] = load_pool(seed_pool_path());
    const TrainResult result =
        train(dataset, cfg, 42, backend, encoder, pool, ledger);
    std::string episodes;
    for (const auto &e : result.episodes) episodes += episode_to_jsonl(e) + "\n";
    ScriptedBackend eval_backend = dataset.make_scripted_backend();
    const ScoreReport report = evaluate_pool(result.pool, result.ledger,
                                             dataset.test, eval_backend, cfg,
                                             encoder);
    std::string records;
    for (const auto &t : report.per_task) records += task_score_to_jsonl(t) + "\n";
    return std::tuple<std::string, std::string, std::string>(
        episodes, records, pool_state_json(result.pool, result.ledger));
  };

  const auto [ep1, rec1, pool1] = full_run();
  const auto [ep2, rec2, pool2] = full_run();
  const bool pass = ep1 == ep2 && rec1 == rec2 && pool1 == pool2;
  std::ostringstream detail;
  detail << "episode log " << (ep1 == ep2 ? "identical" : "DIFFERS")
         << ", score report " << (rec1 == rec2 ? "identical" : "DIFFERS")
         << ", final pool " << (pool1 == pool2 ? "identical" : "DIFFERS");
  return {pass, detail.str()};
}

// ---------------------------------------------------------------------------
// 10. Analytics
// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_analytics() {
  auto [pool, ledger] = load_pool(seed_pool_path());

  // Anchor: a single distinct active set has entropy 0.000 and Simpson 0.000.
  std::vector<TaskScore> single_set;
  for (int i = 0; i < 8; ++i) {
    TaskScore t;
    t.task_id = "t" + std::to_string(i);
    for (const auto &card : pool.roles()) t.active_roles.push_back(card.name);
    single_set.push_back(t);
  }
  const RunAnalytics a1 = analyze({}, single_set, pool, ledger);
  if (a1.entropy != 0.0 || a1.simpson != 0.0 || a1.unique_active_sets != 1) {
    return {false, "single-set anchor mismatch"};
  }

  // Anchor: 3 added, 0 removed -> survival rate 100%.
  std::vector<EpisodeRecord> episodes;
  for (int i = 0; i < 3; ++i) {
    EpisodeRecord e;
    e.episode = i;
    e.phase = "warmup";
    e.op = "add";
    e.committed = true;
    e.target = pool.roles()[static_cast<std::size_t>(i)].name;
    episodes.push_back(e);
  }
  const RunAnalytics a2 = analyze(episodes, single_set, pool, ledger);
  if (!a2.survival_defined || a2.added != 3 || a2.removed != 0 ||
      a2.survival_rate != 1.0) {
    return {false, "survival anchor mismatch"};
  }

  // Fuzzed logs against a brute-force recomputation.
  Rng rng(606);
  for (const auto &card : pool.roles()) {
    ledger.ensure_role(card.name);
    ledger.entry(card.name).ema = rng.uniform();
  }
  int mismatches = 0;
  const int kTrials = 200;
  for (int trial = 0; trial < kTrials; ++trial) {
    std::vector<TaskScore> records;
    const int n = 1 + static_cast<int>(rng.index(30));
    for (int i = 0; i < n; ++i) {
      TaskScore t;
      t.task_id = "t" + std::to_string(i);
      for (const auto &card : pool.roles()) {
        if (rng.uniform() < 0.5) t.active_roles.push_back(card.name);
      }
      records.push_back(t);
    }
    const RunAnalytics a = analyze({}, records, pool, ledger);

    std::map<std::vector<std::string>, int> hist;
    double role_sum = 0.0;
    for (auto r : records) {
      role_sum += static_cast<double>(r.active_roles.size());
      std::sort(r.active_roles.begin(), r.active_roles.end());
      hist[r.active_roles] += 1;
    }
    double entropy = 0.0;
    double sq = 0.0;
    for (const auto &[k, c] : hist) {
      const double p = static_cast<double>(c) / n;
      entropy -= p * std::log(p);
      sq += p * p;
    }
    const double expect_entropy =
        hist.size() > 1 ? entropy / std::log(static_cast<double>(hist.size()))
                        : 0.0;
    const double expect_unique =
        static_cast<double>(hist.size()) / static_cast<double>(n);
    if (std::abs(a.entropy - expect_entropy) > 1e-9 ||
        std::abs(a.simpson - (1.0 - sq)) > 1e-9 ||
        std::abs(a.unique_ratio - expect_unique) > 1e-9 ||
        std::abs(a.mean_active_roles - role_sum / n) > 1e-9 ||
        a.entropy < 0.0 || a.entropy > 1.0 + 1e-12 || a.simpson < 0.0 ||
        a.simpson > 1.0 + 1e-12) {
      ++mismatches;
    }
  }
  std::ostringstream detail;
  detail << "anchors ok, " << kTrials << " fuzz trials, " << mismatches
         << " mismatches";
  return {mismatches == 0, detail.str()};
}

} // namespace

int main() {
  std::printf("acceptance suite (scripted backend, no network)\n");
  run_criterion(1, "contract fuzzing", criterion_contract_fuzzing);
  run_criterion(2, "dag invariants", criterion_dag_invariants);
  run_criterion(3, "gradient check", criterion_gradient_check);
  run_criterion(4, "credit oracles", criterion_credit_oracles);
  run_criterion(5, "commitment soundness", criterion_commitment_soundness);
  run_criterion(6, "early stop", criterion_early_stop);
  run_criterion(7, "end-to-end lift", criterion_end_to_end_lift);
  run_criterion(8, "cost accounting", criterion_cost_accounting);
  run_criterion(9, "determinism", criterion_determinism);
  run_criterion(10, "analytics", criterion_analytics);
  if (g_failures > 0) {
    std::printf("%d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("all 10 criteria passed\n");
  return 0;
}
