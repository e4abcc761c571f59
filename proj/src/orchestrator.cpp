#include "sero/orchestrator.hpp"

#include "sero/format.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

namespace sero {

std::string trim(const std::string &s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::optional<std::string> last_matching_line(const std::string &text,
                                              const std::string &pattern) {
  std::optional<std::string> found;
  std::istringstream stream(text);
  std::string line;
  std::optional<std::regex> re;
  if (!pattern.empty()) re.emplace(pattern);
  while (std::getline(stream, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (!re || std::regex_search(t, *re)) found = t;
  }
  return found;
}

std::vector<RoleCard> ActiveTeam::non_terminals() const {
  std::vector<RoleCard> out = specialists_and_setup;
  out.insert(out.end(), validators.begin(), validators.end());
  return out;
}

std::vector<RoleCard> ActiveTeam::all() const {
  std::vector<RoleCard> out = non_terminals();
  out.push_back(aggregator);
  return out;
}

ActiveTeam retrieve_active(const std::string &task_text, const RolePool &pool,
                           const CreditLedger &ledger, const Encoder &encoder,
                           double alpha, int n_spec, int n_val,
                           std::optional<int> n_max) {
  const RoleCard *agg = pool.aggregator();
  if (agg == nullptr) throw Error("retrieve_active: pool has no aggregator");

  const EmbeddingVector task_emb = encoder.encode(task_text);
  const auto norm = normalize_credit(ledger, pool);

  struct Scored {
    const RoleCard *card;
    double rho;
  };
  std::vector<Scored> candidates;
  candidates.reserve(pool.roles().size());

  // Prompt-task similarities for the whole pool; independent per role.
  const auto &roles = pool.roles();
  std::vector<double> sims(roles.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(roles.size()); ++i) {
    if (roles[i].role_type != RoleType::Agg) {
      sims[i] = cosine(encoder.encode(roles[i].prompt), task_emb);
    }
  }
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i].role_type == RoleType::Agg) continue;
    const double rho =
        alpha * sims[i] + (1.0 - alpha) * norm.at(roles[i].name);
    candidates.push_back({&roles[i], rho});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Scored &a, const Scored &b) {
              if (a.rho != b.rho) return a.rho > b.rho;
              return a.card->name < b.card->name;
            });

  ActiveTeam team;
  team.aggregator = *agg;
  for (const auto &c : candidates) {
    if (c.card->role_type == RoleType::Val) {
      if (static_cast<int>(team.validators.size()) < n_val) {
        team.validators.push_back(*c.card);
      }
    } else if (static_cast<int>(team.specialists_and_setup.size()) < n_spec) {
      team.specialists_and_setup.push_back(*c.card);
    }
  }

  // n_max caps the non-terminal team after budget fill; the lowest-scored
  // members are dropped first.
  if (n_max && *n_max >= 0) {
    auto rho_of = [&](const RoleCard &card) {
      for (const auto &c : candidates) {
        if (c.card->name == card.name) return c.rho;
      }
      return 0.0;
    };
    std::vector<RoleCard> kept = team.non_terminals();
    if (static_cast<int>(kept.size()) > *n_max) {
      std::sort(kept.begin(), kept.end(),
                [&](const RoleCard &a, const RoleCard &b) {
                  const double ra = rho_of(a);
                  const double rb = rho_of(b);
                  if (ra != rb) return ra > rb;
                  return a.name < b.name;
                });
      kept.resize(static_cast<std::size_t>(*n_max));
      auto keep = [&](const RoleCard &card) {
        return std::any_of(kept.begin(), kept.end(), [&](const RoleCard &k) {
          return k.name == card.name;
        });
      };
      std::erase_if(team.specialists_and_setup,
                    [&](const RoleCard &c) { return !keep(c); });
      std::erase_if(team.validators,
                    [&](const RoleCard &c) { return !keep(c); });
    }
  }
  return team;
}

namespace {

int stage_rank(RoleType t) {
  switch (t) {
  case RoleType::Setup: return -1;
  case RoleType::Spec: return 0;
  case RoleType::Val: return 1;
  case RoleType::Agg: return 2; // never appears among non-terminals
  }
  return 0;
}

} // namespace

CommDag build_dag(const std::vector<RoleCard> &non_terminals,
                  const std::map<std::string, double> &fast_credits,
                  std::optional<int> b_in, std::optional<int> b_out) {
  CommDag dag;
  const int n = static_cast<int>(non_terminals.size());
  if (n == 0) {
    dag.b_in = 0;
    dag.b_out = 0;
    return dag;
  }
  dag.b_out = b_out.value_or(std::max(1, std::min(2, n - 1)));
  dag.b_in = b_in.value_or(std::max(1, n / 2));

  // Phase 1: stage- and credit-ranked total order.
  struct Key {
    int stage;
    double neg_fast;
    int index;
  };
  std::vector<int> ranked(static_cast<std::size_t>(n));
  std::vector<Key> keys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ranked[static_cast<std::size_t>(i)] = i;
    double fast = 0.0;
    auto it = fast_credits.find(non_terminals[static_cast<std::size_t>(i)].name);
    if (it != fast_credits.end()) fast = it->second;
    keys[static_cast<std::size_t>(i)] = {
        stage_rank(non_terminals[static_cast<std::size_t>(i)].role_type), -fast,
        i};
  }
  std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    const Key &ka = keys[static_cast<std::size_t>(a)];
    const Key &kb = keys[static_cast<std::size_t>(b)];
    if (ka.stage != kb.stage) return ka.stage < kb.stage;
    if (ka.neg_fast != kb.neg_fast) return ka.neg_fast < kb.neg_fast;
    return ka.index < kb.index;
  });
  for (int idx : ranked) {
    dag.order.push_back(non_terminals[static_cast<std::size_t>(idx)].name);
  }

  // Phase 2: bounded forward edges, earlier to later only.
  std::vector<int> d_in(static_cast<std::size_t>(n), 0);
  std::vector<int> d_out(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (d_out[static_cast<std::size_t>(i)] >= dag.b_out) break;
      if (d_in[static_cast<std::size_t>(j)] < dag.b_in) {
        dag.edges.emplace_back(i, j);
        ++d_out[static_cast<std::size_t>(i)];
        ++d_in[static_cast<std::size_t>(j)];
      }
    }
  }

  // Phase 3: dependency levels, preserving ranked order inside a level. The
  // terminal edges to the aggregator are implicit: every vertex has one.
  std::vector<bool> done(static_cast<std::size_t>(n), false);
  std::vector<int> remaining;
  for (int i = 0; i < n; ++i) remaining.push_back(i);
  while (!remaining.empty()) {
    std::vector<int> level;
    for (int v : remaining) {
      bool ready = true;
      for (const auto &[a, b] : dag.edges) {
        if (b == v && !done[static_cast<std::size_t>(a)]) {
          ready = false;
          break;
        }
      }
      if (ready) level.push_back(v);
    }
    for (int v : level) done[static_cast<std::size_t>(v)] = true;
    std::erase_if(remaining, [&](int v) { return done[static_cast<std::size_t>(v)]; });
    dag.levels.push_back(std::move(level));
  }
  return dag;
}

namespace {

const RoleCard *card_by_name(const ActiveTeam &team, const std::string &name) {
  for (const auto &c : team.specialists_and_setup) {
    if (c.name == name) return &c;
  }
  for (const auto &c : team.validators) {
    if (c.name == name) return &c;
  }
  if (team.aggregator.name == name) return &team.aggregator;
  return nullptr;
}

void apply_fast_credits(std::vector<RoleMessage> &transcript,
                        const EmbeddingVector &task_emb, const Encoder &encoder,
                        double beta) {
  if (transcript.empty()) return;
  std::vector<EmbeddingVector> message_embs(transcript.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(transcript.size()); ++i) {
    message_embs[static_cast<std::size_t>(i)] =
        encoder.encode(transcript[static_cast<std::size_t>(i)].text);
  }
  const EmbeddingVector consensus = mean_embedding(message_embs);
  for (std::size_t i = 0; i < transcript.size(); ++i) {
    transcript[i].fast_credit =
        fast_credit(message_embs[i], task_emb, consensus, beta);
  }
}

} // namespace

std::vector<RoleMessage>
execute_dag(const std::string &task_text, const CommDag &dag,
            const ActiveTeam &team, Backend &backend, const Encoder &encoder,
            double beta, const RunConfig &cfg, int *call_count,
            const std::vector<RoleMessage> *previous_round) {
  const int n = static_cast<int>(dag.order.size());
  std::vector<RoleMessage> transcript(static_cast<std::size_t>(n));
  std::vector<bool> produced(static_cast<std::size_t>(n), false);

  std::vector<std::pair<std::string, std::string>> prior;
  if (previous_round != nullptr) {
    for (const auto &m : *previous_round) prior.emplace_back(m.role, m.text);
  }

  int calls = 0;
  std::exception_ptr failure;

  for (const auto &level : dag.levels) {
    const int ln = static_cast<int>(level.size());
#pragma omp parallel for schedule(static) if (ln > 1)
    for (int k = 0; k < ln; ++k) {
      const int v = level[static_cast<std::size_t>(k)];
      const RoleCard *card = card_by_name(team, dag.order[static_cast<std::size_t>(v)]);
      InvocationContext ctx;
      ctx.task_text = task_text;
      ctx.upstream = prior;
      for (const auto &[a, b] : dag.edges) {
        if (b == v && produced[static_cast<std::size_t>(a)]) {
          ctx.upstream.emplace_back(transcript[static_cast<std::size_t>(a)].role,
                                    transcript[static_cast<std::size_t>(a)].text);
        }
      }
      ctx.protocol_hint = card->protocol;
      try {
        Completion c = backend.complete(*card, ctx);
        RoleMessage &m = transcript[static_cast<std::size_t>(v)];
        m.role = card->name;
        m.text = c.text;
        m.tokens_in = c.tokens_in;
        m.tokens_out = c.tokens_out;
#pragma omp atomic
        ++calls;
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) {
      std::vector<RoleMessage> partial;
      for (int i = 0; i < n; ++i) {
        if (produced[static_cast<std::size_t>(i)]) {
          partial.push_back(transcript[static_cast<std::size_t>(i)]);
        }
      }
      try {
        std::rethrow_exception(failure);
      } catch (const std::exception &e) {
        throw InferenceFailure(std::string("inference aborted: ") + e.what(),
                               std::move(partial));
      }
    }
    for (int v : level) produced[static_cast<std::size_t>(v)] = true;
  }

  // Terminal stage: the aggregator observes every non-terminal message.
  InvocationContext agg_ctx;
  agg_ctx.task_text = task_text;
  agg_ctx.upstream = prior;
  for (const auto &m : transcript) agg_ctx.upstream.emplace_back(m.role, m.text);
  agg_ctx.protocol_hint = team.aggregator.protocol;
  try {
    Completion c = backend.complete(team.aggregator, agg_ctx);
    RoleMessage agg_msg;
    agg_msg.role = team.aggregator.name;
    agg_msg.text = c.text;
    agg_msg.tokens_in = c.tokens_in;
    agg_msg.tokens_out = c.tokens_out;
    transcript.push_back(std::move(agg_msg));
    ++calls;
  } catch (const BackendError &e) {
    throw InferenceFailure(std::string("aggregator failed: ") + e.what(),
                           transcript);
  }

  apply_fast_credits(transcript, encoder.encode(task_text), encoder,
                     beta);
  if (call_count != nullptr) *call_count += calls;
  return transcript;
}

RepairOutcome aggregate_and_repair(const std::string &task_text,
                                   std::vector<RoleMessage> &transcript,
                                   const ActiveTeam &team, Backend &backend,
                                   const std::string &answer_format,
                                   const RunConfig &cfg, int *call_count) {
  RepairOutcome out;
  if (transcript.empty()) throw Error("aggregate_and_repair: empty transcript");
  RoleMessage &agg_msg = transcript.back();
  const std::string draft = agg_msg.text;
  out.answer = draft;

  const bool format_ok =
      answer_format.empty() || last_matching_line(draft, answer_format).has_value();
  if (format_ok || team.validators.empty()) return out;

  // The draft is contract-risky: ask the validator to check it.
  const RoleCard &validator = team.validators.front();
  InvocationContext check_ctx;
  check_ctx.task_text = task_text;
  check_ctx.upstream.emplace_back(team.aggregator.name, draft);
  check_ctx.protocol_hint = validator.protocol;
  Completion verdict;
  try {
    verdict = backend.complete(validator, check_ctx);
  } catch (const BackendError &e) {
    throw InferenceFailure(std::string("validator failed: ") + e.what(),
                           transcript);
  }
  if (call_count != nullptr) ++*call_count;
  out.check_invoked = true;
  // The check call's tokens land on the validator's transcript entry.
  for (auto &m : transcript) {
    if (m.role == validator.name) {
      m.tokens_in += verdict.tokens_in;
      m.tokens_out += verdict.tokens_out;
      break;
    }
  }

  out.flagged = trim(verdict.text).rfind("ISSUE:", 0) == 0;
  if (!out.flagged) return out;

  // One repair round: re-invoke the aggregator with draft and feedback.
  InvocationContext repair_ctx;
  repair_ctx.task_text = task_text;
  for (std::size_t i = 0; i + 1 < transcript.size(); ++i) {
    repair_ctx.upstream.emplace_back(transcript[i].role, transcript[i].text);
  }
  repair_ctx.protocol_hint = team.aggregator.protocol;
  repair_ctx.draft_and_feedback = {draft, verdict.text};
  Completion repaired;
  try {
    repaired = backend.complete(team.aggregator, repair_ctx);
  } catch (const BackendError &e) {
    throw InferenceFailure(std::string("repair failed: ") + e.what(),
                           transcript);
  }
  if (call_count != nullptr) ++*call_count;

  out.repaired = true;
  out.changed_answer = repaired.text != draft;
  out.answer = repaired.text;
  agg_msg.text = repaired.text;
  agg_msg.tokens_in += repaired.tokens_in;
  agg_msg.tokens_out += repaired.tokens_out;
  return out;
}

InferenceResult infer(const std::string &task_text,
                      const std::string &answer_format, const RolePool &pool,
                      const CreditLedger &ledger_in, const RunConfig &cfg,
                      Backend &backend, const Encoder &encoder) {
  InferenceResult result;

  // Fast credits known so far bootstrap the DAG order; the pass-local snapshot
  // starts with cleared fast slots and receives this pass's values at the end.
  std::map<std::string, double> prior_fast;
  for (const auto &[name, e] : ledger_in.entries()) {
    if (e.fast) prior_fast[name] = *e.fast;
  }
  CreditLedger snapshot = ledger_in;
  snapshot.clear_fast();

  result.team = retrieve_active(task_text, pool, ledger_in, encoder,
                                cfg.retrieval_alpha, cfg.n_spec, cfg.n_val,
                                cfg.n_max);
  result.dag = build_dag(result.team.non_terminals(), prior_fast,
                         cfg.b_in_override, cfg.b_out_override);

  int calls = 0;
  const int rounds = std::max(1, cfg.collaboration_rounds);
  std::vector<RoleMessage> transcript;
  for (int round = 0; round < rounds; ++round) {
    const std::vector<RoleMessage> *prev = round > 0 ? &transcript : nullptr;
    std::vector<RoleMessage> next = execute_dag(
        task_text, result.dag, result.team, backend, encoder,
        cfg.fast_credit_beta, cfg, &calls, prev);
    transcript = std::move(next);
  }

  RepairOutcome repair = aggregate_and_repair(
      task_text, transcript, result.team, backend, answer_format, cfg, &calls);
  result.validator_check_invoked = repair.check_invoked;
  result.validator_flagged = repair.flagged;
  result.repair_invoked = repair.repaired;
  result.repair_changed_answer = repair.changed_answer;
  result.answer = repair.answer;

  if (repair.repaired) {
    // The final messages changed; recompute fast credits against them.
    apply_fast_credits(transcript, encoder.encode(task_text), encoder,
                       cfg.fast_credit_beta);
  }
  for (auto &m : transcript) {
    const RoleCard *card = card_by_name(result.team, m.role);
    if (card != nullptr && card->role_type == RoleType::Val) {
      m.fast_credit =
          validator_fast_credit(repair.flagged, repair.changed_answer);
    }
    snapshot.set_fast(m.role, m.fast_credit);
    result.tokens_in += m.tokens_in;
    result.tokens_out += m.tokens_out;
  }

  result.transcript = std::move(transcript);
  result.call_count = calls;
  result.ledger_out = std::move(snapshot);
  return result;
}

} // namespace sero
