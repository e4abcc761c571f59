#include "sero/harness.hpp"

#include "sero/error.hpp"
#include "sero/evolution.hpp"
#include "sero/format.hpp"
#include "sero/rng.hpp"

#include <algorithm>
#include <map>

namespace sero {

BaselineKind baseline_kind_from_string(const std::string &s) {
  if (s == "cot") return BaselineKind::Cot;
  if (s == "sc3") return BaselineKind::Sc3;
  if (s == "workflow") return BaselineKind::Workflow;
  if (s == "static_dag") return BaselineKind::StaticDag;
  if (s == "static_orch") return BaselineKind::StaticOrch;
  if (s == "random_evo") return BaselineKind::RandomEvo;
  throw UsageError("unknown baseline kind '" + s +
                   "' (expected cot, sc3, workflow, static_dag, static_orch, "
                   "random_evo)");
}

std::string to_string(BaselineKind k) {
  switch (k) {
  case BaselineKind::Cot: return "cot";
  case BaselineKind::Sc3: return "sc3";
  case BaselineKind::Workflow: return "workflow";
  case BaselineKind::StaticDag: return "static_dag";
  case BaselineKind::StaticOrch: return "static_orch";
  case BaselineKind::RandomEvo: return "random_evo";
  }
  return "cot";
}

namespace {

RoleCard simple_card(std::string name, std::string prompt, RoleType type,
                     std::string family, std::string protocol,
                     double temperature = 0.0, bool protected_flag = false) {
  RoleCard c;
  c.name = std::move(name);
  c.prompt = std::move(prompt);
  c.role_type = type;
  c.family = std::move(family);
  c.protocol = std::move(protocol);
  c.temperature = temperature;
  c.protected_flag = protected_flag;
  return c;
}

RoleCard single_agent_card(double temperature) {
  return simple_card(
      "solo_cot_solver",
      "Solve the task directly. Think through the constraints step by step, "
      "then put the final answer alone on the last line.",
      RoleType::Spec, "general", "final-line", temperature);
}

TaskScore score_one(const Task &task, const std::string &answer, int calls,
                    std::int64_t tokens_in, std::int64_t tokens_out) {
  const ScoreChannels s = score_channels(task, answer);
  TaskScore ts;
  ts.task_id = task.id;
  ts.group = task.group;
  ts.score = s.primary;
  ts.exact = s.exact;
  ts.partial = s.partial;
  ts.calls = calls;
  ts.tokens_in = tokens_in;
  ts.tokens_out = tokens_out;
  ts.answer = answer;
  return ts;
}

ScoreReport run_cot(const Dataset &dataset, Backend &backend) {
  ScoreReport report;
  const RoleCard card = single_agent_card(0.0);
  for (const Task &task : dataset.test) {
    InvocationContext ctx;
    ctx.task_text = task.prompt;
    ctx.protocol_hint = card.protocol;
    const Completion c = backend.complete(card, ctx);
    report.per_task.push_back(
        score_one(task, c.text, 1, c.tokens_in, c.tokens_out));
  }
  report.finalize();
  return report;
}

ScoreReport run_sc3(const Dataset &dataset, Backend &backend) {
  ScoreReport report;
  const RoleCard card = single_agent_card(0.7);
  for (const Task &task : dataset.test) {
    std::vector<std::string> raw;
    std::vector<std::optional<std::string>> extracted;
    std::int64_t tin = 0;
    std::int64_t tout = 0;
    for (int j = 0; j < 3; ++j) {
      InvocationContext ctx;
      ctx.task_text = task.prompt;
      ctx.protocol_hint = card.protocol;
      const Completion c = backend.complete(card, ctx);
      raw.push_back(c.text);
      extracted.push_back(extract_answer(task, c.text));
      tin += c.tokens_in;
      tout += c.tokens_out;
    }
    // Majority vote over canonical answers; ties resolve to the earliest
    // sampled response; if every extraction fails, score the first sample.
    std::map<std::string, int> counts;
    for (const auto &z : extracted) {
      if (z) counts[*z] += 1;
    }
    std::string answer;
    if (counts.empty()) {
      answer = raw.front();
    } else {
      int best = 0;
      for (const auto &[z, n] : counts) best = std::max(best, n);
      for (const auto &z : extracted) {
        if (z && counts[*z] == best) {
          answer = *z;
          break;
        }
      }
    }
    report.per_task.push_back(score_one(task, answer, 3, tin, tout));
  }
  report.finalize();
  return report;
}

// Fixed-graph executor shared by the Workflow chain and the Static DAG
// baseline: vertices run in topological levels, each seeing its predecessors'
// messages; the last card is the terminal.
struct FixedGraph {
  std::vector<RoleCard> cards;
  std::vector<std::pair<int, int>> edges;
};

std::string run_fixed_graph(const FixedGraph &graph, const Task &task,
                            Backend &backend, int *calls, std::int64_t *tin,
                            std::int64_t *tout) {
  const int n = static_cast<int>(graph.cards.size());
  std::vector<std::string> messages(static_cast<std::size_t>(n));
  std::vector<bool> done(static_cast<std::size_t>(n), false);
  int remaining = n;
  while (remaining > 0) {
    std::vector<int> level;
    for (int v = 0; v < n; ++v) {
      if (done[static_cast<std::size_t>(v)]) continue;
      bool ready = true;
      for (const auto &[a, b] : graph.edges) {
        if (b == v && !done[static_cast<std::size_t>(a)]) {
          ready = false;
          break;
        }
      }
      if (ready) level.push_back(v);
    }
    const int ln = static_cast<int>(level.size());
#pragma omp parallel for schedule(static) if (ln > 1)
    for (int k = 0; k < ln; ++k) {
      const int v = level[static_cast<std::size_t>(k)];
      InvocationContext ctx;
      ctx.task_text = task.prompt;
      for (const auto &[a, b] : graph.edges) {
        if (b == v) {
          ctx.upstream.emplace_back(graph.cards[static_cast<std::size_t>(a)].name,
                                    messages[static_cast<std::size_t>(a)]);
        }
      }
      ctx.protocol_hint = graph.cards[static_cast<std::size_t>(v)].protocol;
      const Completion c =
          backend.complete(graph.cards[static_cast<std::size_t>(v)], ctx);
      messages[static_cast<std::size_t>(v)] = c.text;
#pragma omp atomic
      ++*calls;
#pragma omp atomic
      *tin += c.tokens_in;
#pragma omp atomic
      *tout += c.tokens_out;
    }
    for (int v : level) done[static_cast<std::size_t>(v)] = true;
    remaining -= ln;
  }
  return messages.back();
}

FixedGraph workflow_graph() {
  FixedGraph g;
  g.cards.push_back(simple_card(
      "task_contract_parser",
      "Restate the task's requirements and the exact output format it demands.",
      RoleType::Setup, "routing", "notes"));
  g.cards.push_back(simple_card(
      "plan_drafter",
      "Draft a concrete solution for the task using the parsed requirements. "
      "State your candidate result on its own line as 'ANSWER: <value>'.",
      RoleType::Spec, "drafting", "kv-report"));
  g.cards.push_back(simple_card(
      "draft_checker",
      "Check the draft against the task constraints and list any problems.",
      RoleType::Val, "validation", "critique"));
  g.cards.push_back(simple_card(
      "final_answerer",
      "Read the upstream messages and output only the final answer line in the "
      "required format.",
      RoleType::Agg, "synthesis", "final-line", 0.0, true));
  g.edges = {{0, 1}, {1, 2}, {2, 3}};
  return g;
}

FixedGraph static_dag_graph() {
  FixedGraph g;
  g.cards.push_back(simple_card(
      "task_contract_parser",
      "Restate the task's requirements and the exact output format it demands.",
      RoleType::Setup, "routing", "notes"));
  g.cards.push_back(simple_card(
      "arith_expert",
      "Solve the arithmetic in the task and state the result as 'ANSWER: <n>'.",
      RoleType::Spec, "arith", "kv-report"));
  g.cards.push_back(simple_card(
      "table_expert",
      "Resolve reference-table lookups and state the value as 'ANSWER: <v>'.",
      RoleType::Spec, "table", "kv-report"));
  g.cards.push_back(simple_card(
      "sched_expert",
      "Lay out the day-by-day schedule and state it as 'ANSWER: <itinerary>'.",
      RoleType::Spec, "sched", "kv-report"));
  g.cards.push_back(simple_card(
      "cross_auditor",
      "Compare the specialist proposals and flag disagreements.",
      RoleType::Val, "validation", "critique"));
  g.cards.push_back(simple_card(
      "final_answerer",
      "Read the upstream messages and output only the final answer line in the "
      "required format.",
      RoleType::Agg, "synthesis", "final-line", 0.0, true));
  // parser feeds the specialists; specialists feed both the auditor and the
  // protected finalizer.
  g.edges = {{0, 1}, {0, 2}, {0, 3}, {1, 4}, {2, 4}, {3, 4},
             {1, 5}, {2, 5}, {3, 5}, {4, 5}};
  return g;
}

ScoreReport run_graph_baseline(const FixedGraph &graph, const Dataset &dataset,
                               Backend &backend) {
  ScoreReport report;
  for (const Task &task : dataset.test) {
    int calls = 0;
    std::int64_t tin = 0;
    std::int64_t tout = 0;
    const std::string answer =
        run_fixed_graph(graph, task, backend, &calls, &tin, &tout);
    TaskScore ts = score_one(task, answer, calls, tin, tout);
    for (const auto &card : graph.cards) ts.active_roles.push_back(card.name);
    report.per_task.push_back(std::move(ts));
  }
  report.finalize();
  return report;
}

// Uniform edit choices with only the protected-role and pool-size guards, no
// score gate; the perturbed pool is then frozen and evaluated normally.
ScoreReport run_random_evolution(const Dataset &dataset, Backend &backend,
                                 const RunConfig &cfg, const Encoder &encoder,
                                 RolePool pool, CreditLedger ledger,
                                 std::uint64_t seed) {
  Rng rng(seed);
  for (const auto &card : pool.roles()) ledger.ensure_role(card.name);

  const int total_epochs = cfg.warmup_epochs + cfg.main_epochs;
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    std::vector<Task> tasks = dataset.train;
    rng.shuffle(tasks);
    for (const Task &task : tasks) {
      const std::size_t op = rng.index(3);
      if (op == 0) { // Add
        if (pool.size() >= cfg.max_pool_size) continue;
        EditorProposal proposal =
            editor_propose_card(task, pool, ledger, backend, cfg);
        if (!proposal.card) continue;
        try {
          pool.add_role(*proposal.card);
          ledger.ensure_role(proposal.card->name, cfg.new_role_initial_updates);
        } catch (const SchemaViolation &) {
          // duplicate name or pool-structure violation: no-op
        }
      } else if (op == 1) { // Remove
        const std::size_t pick = rng.index(static_cast<std::size_t>(pool.size()));
        const RoleCard &target = pool.roles()[pick];
        if (target.protected_flag || pool.size() <= cfg.min_pool_size) continue;
        const std::string name = target.name;
        pool.remove_role(name);
        ledger.erase_role(name);
      }
      // op == 2: Noop
    }
  }
  return evaluate_pool(pool, ledger, dataset.test, backend, cfg, encoder);
}

} // namespace

ScoreReport run_baseline(BaselineKind kind, const Dataset &dataset,
                         Backend &backend, const RunConfig &cfg,
                         const Encoder &encoder, const RolePool &seed_pool,
                         const CreditLedger &seed_ledger, std::uint64_t seed) {
  switch (kind) {
  case BaselineKind::Cot:
    return run_cot(dataset, backend);
  case BaselineKind::Sc3:
    return run_sc3(dataset, backend);
  case BaselineKind::Workflow:
    return run_graph_baseline(workflow_graph(), dataset, backend);
  case BaselineKind::StaticDag:
    return run_graph_baseline(static_dag_graph(), dataset, backend);
  case BaselineKind::StaticOrch:
    // The frozen seed pool under the identical inference operator.
    return evaluate_pool(seed_pool, seed_ledger, dataset.test, backend, cfg,
                         encoder);
  case BaselineKind::RandomEvo:
    return run_random_evolution(dataset, backend, cfg, encoder, seed_pool,
                                seed_ledger, seed);
  }
  throw UsageError("unhandled baseline kind");
}

} // namespace sero
