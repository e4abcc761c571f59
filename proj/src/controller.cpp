#include "sero/controller.hpp"

#include "sero/error.hpp"
#include "sero/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace sero {

std::string to_string(Phase p) { return p == Phase::Warmup ? "warmup" : "main"; }

std::string to_string(EditOp op) {
  switch (op) {
  case EditOp::Add: return "add";
  case EditOp::Remove: return "remove";
  case EditOp::Noop: return "noop";
  }
  return "noop";
}

std::vector<double> Observation::flat() const {
  std::vector<double> out;
  out.reserve(task_answer_emb.size() + team_emb.size() + 5);
  out.insert(out.end(), task_answer_emb.begin(), task_answer_emb.end());
  out.insert(out.end(), team_emb.begin(), team_emb.end());
  out.insert(out.end(), credit_stats.begin(), credit_stats.end());
  return out;
}

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

std::size_t ControllerParams::off_w1() const { return 0; }
std::size_t ControllerParams::off_b1() const {
  return off_w1() + static_cast<std::size_t>(hidden) * obs_dim();
}
std::size_t ControllerParams::off_w2() const {
  return off_b1() + static_cast<std::size_t>(hidden);
}
std::size_t ControllerParams::off_b2() const {
  return off_w2() + static_cast<std::size_t>(hidden) * hidden;
}
std::size_t ControllerParams::off_wop() const {
  return off_b2() + static_cast<std::size_t>(hidden);
}
std::size_t ControllerParams::off_bop() const {
  return off_wop() + 3u * static_cast<std::size_t>(hidden);
}
std::size_t ControllerParams::off_eop() const { return off_bop() + 3u; }
std::size_t ControllerParams::off_proj() const {
  return off_eop() + 3u * static_cast<std::size_t>(op_emb_dim);
}
std::size_t ControllerParams::off_proj_b() const {
  return off_proj() + static_cast<std::size_t>(role_proj_dim) * encoder_dim;
}
std::size_t ControllerParams::off_wt() const {
  return off_proj_b() + static_cast<std::size_t>(role_proj_dim);
}
std::size_t ControllerParams::off_bt() const {
  return off_wt() + static_cast<std::size_t>(target_feature_dim());
}

ControllerParams::ControllerParams(int encoder_dim_, int hidden_width,
                                   int op_embedding_dim, int role_projection_dim,
                                   Rng &rng) {
  encoder_dim = encoder_dim_;
  hidden = hidden_width;
  op_emb_dim = op_embedding_dim;
  role_proj_dim = role_projection_dim;
  theta.assign(off_bt() + 1u, 0.0);
  adam_m.assign(theta.size(), 0.0);
  adam_v.assign(theta.size(), 0.0);

  // Uniform fan-in initialization; biases start at zero.
  auto init_block = [&](std::size_t off, std::size_t count, int fan_in) {
    const double limit = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
    for (std::size_t i = 0; i < count; ++i) {
      theta[off + i] = (2.0 * rng.uniform() - 1.0) * limit;
    }
  };
  init_block(off_w1(), static_cast<std::size_t>(hidden) * obs_dim(), obs_dim());
  init_block(off_w2(), static_cast<std::size_t>(hidden) * hidden, hidden);
  init_block(off_wop(), 3u * static_cast<std::size_t>(hidden), hidden);
  init_block(off_eop(), 3u * static_cast<std::size_t>(op_emb_dim), op_emb_dim);
  init_block(off_proj(), static_cast<std::size_t>(role_proj_dim) * encoder_dim,
             encoder_dim);
  init_block(off_wt(), static_cast<std::size_t>(target_feature_dim()),
             target_feature_dim());
}

void ControllerParams::save(const std::filesystem::path &path) const {
  nlohmann::json j{{"version", 1},
                   {"fingerprint",
                    {{"encoder_dim", encoder_dim},
                     {"hidden_width", hidden},
                     {"op_embedding_dim", op_emb_dim},
                     {"role_projection_dim", role_proj_dim}}},
                   {"theta", theta},
                   {"adam_m", adam_m},
                   {"adam_v", adam_v},
                   {"adam_t", adam_t},
                   {"baseline", baseline}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write controller checkpoint: " + path.string());
  out << j.dump() << "\n";
}

ControllerParams ControllerParams::load(const std::filesystem::path &path,
                                        int expect_encoder_dim,
                                        int expect_hidden, int expect_op_emb,
                                        int expect_role_proj) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read controller checkpoint: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw Error("invalid controller checkpoint: " + std::string(e.what()));
  }
  if (j.value("version", 0) != 1) {
    throw VersionMismatch("unsupported controller checkpoint version");
  }
  const auto fp = j.at("fingerprint");
  ControllerParams p;
  p.encoder_dim = fp.value("encoder_dim", 0);
  p.hidden = fp.value("hidden_width", 0);
  p.op_emb_dim = fp.value("op_embedding_dim", 0);
  p.role_proj_dim = fp.value("role_projection_dim", 0);
  if (p.encoder_dim != expect_encoder_dim || p.hidden != expect_hidden ||
      p.op_emb_dim != expect_op_emb || p.role_proj_dim != expect_role_proj) {
    throw VersionMismatch(
        "controller checkpoint fingerprint does not match the run config");
  }
  p.theta = j.at("theta").get<std::vector<double>>();
  p.adam_m = j.at("adam_m").get<std::vector<double>>();
  p.adam_v = j.at("adam_v").get<std::vector<double>>();
  p.adam_t = j.value("adam_t", 0L);
  p.baseline = j.value("baseline", 0.0);
  if (p.theta.size() != p.off_bt() + 1u) {
    throw VersionMismatch("controller checkpoint has wrong parameter count");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

Observation build_observation(const std::string &task_text,
                              const std::string &answer,
                              const ActiveTeam &team,
                              const CreditSummary &summary, Phase phase,
                              const Encoder &encoder) {
  Observation obs;
  obs.task_answer_emb = encoder.encode(task_text + "\n" + answer);
  std::vector<EmbeddingVector> prompts;
  for (const auto &card : team.all()) prompts.push_back(encoder.encode(card.prompt));
  obs.team_emb = mean_embedding(prompts);
  if (phase == Phase::Warmup) {
    obs.credit_stats = {0.0, 0.0, 0.0, 0.0, 0.0};
  } else {
    obs.credit_stats = {summary.mean, summary.stddev, summary.min, summary.max,
                        summary.mean_recent_loo};
  }
  return obs;
}

PolicyInput build_policy_input(Observation obs, ActionMask mask,
                               const RolePool &pool, const CreditLedger &ledger,
                               const Encoder &encoder) {
  PolicyInput input;
  input.obs = std::move(obs);
  input.mask = std::move(mask);
  for (const auto &name : input.mask.removal_targets) {
    const RoleCard *card = pool.find(name);
    if (card == nullptr) throw UnknownRole(name);
    TargetFeature f;
    f.name = name;
    f.prompt_emb = encoder.encode(card->prompt);
    f.ema = ledger.ema_or_zero(name);
    if (ledger.has_role(name) && ledger.entry(name).recent_loo) {
      f.recent_loo = *ledger.entry(name).recent_loo;
    }
    input.targets.push_back(std::move(f));
  }
  return input;
}

namespace {

struct ForwardCache {
  std::vector<double> obs_flat;
  std::vector<double> z1, h1, z2, h2;
  std::array<double, 3> op_logits{};
  std::array<double, 3> op_probs{};
  std::vector<std::vector<double>> proj; // per target
  std::vector<std::vector<double>> feat; // per target
  std::vector<double> xi;
  std::vector<double> q; // target probs
};

void masked_softmax3(const std::array<double, 3> &logits,
                     const std::array<bool, 3> &allowed,
                     std::array<double, 3> &probs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (allowed[static_cast<std::size_t>(k)]) {
      hi = std::max(hi, logits[static_cast<std::size_t>(k)]);
    }
  }
  double z = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (allowed[static_cast<std::size_t>(k)]) {
      probs[static_cast<std::size_t>(k)] =
          std::exp(logits[static_cast<std::size_t>(k)] - hi);
      z += probs[static_cast<std::size_t>(k)];
    } else {
      probs[static_cast<std::size_t>(k)] = 0.0;
    }
  }
  for (int k = 0; k < 3; ++k) probs[static_cast<std::size_t>(k)] /= z;
}

ForwardCache forward_pass(const ControllerParams &p, const PolicyInput &input) {
  ForwardCache c;
  c.obs_flat = input.obs.flat();
  if (static_cast<int>(c.obs_flat.size()) != p.obs_dim()) {
    throw Error("observation dimension mismatch");
  }
  const double *theta = p.theta.data();
  const int dh = p.hidden;
  const int dobs = p.obs_dim();

  c.z1.assign(static_cast<std::size_t>(dh), 0.0);
  kernels::matvec(theta + p.off_w1(), c.obs_flat.data(), c.z1.data(), dh, dobs);
  for (int i = 0; i < dh; ++i) c.z1[static_cast<std::size_t>(i)] += theta[p.off_b1() + i];
  c.h1.assign(static_cast<std::size_t>(dh), 0.0);
  kernels::relu(c.z1.data(), c.h1.data(), dh);

  c.z2.assign(static_cast<std::size_t>(dh), 0.0);
  kernels::matvec(theta + p.off_w2(), c.h1.data(), c.z2.data(), dh, dh);
  for (int i = 0; i < dh; ++i) c.z2[static_cast<std::size_t>(i)] += theta[p.off_b2() + i];
  c.h2.assign(static_cast<std::size_t>(dh), 0.0);
  kernels::relu(c.z2.data(), c.h2.data(), dh);

  double op_raw[3];
  kernels::matvec(theta + p.off_wop(), c.h2.data(), op_raw, 3, dh);
  for (int k = 0; k < 3; ++k) {
    c.op_logits[static_cast<std::size_t>(k)] = op_raw[k] + theta[p.off_bop() + k];
  }
  const std::array<bool, 3> allowed{input.mask.allows(EditOp::Add),
                                    input.mask.allows(EditOp::Remove),
                                    true};
  masked_softmax3(c.op_logits, allowed, c.op_probs);

  const int nt = static_cast<int>(input.targets.size());
  const int dr = p.role_proj_dim;
  const int de = p.op_emb_dim;
  const int df = p.target_feature_dim();
  const double *e_remove =
      theta + p.off_eop() + static_cast<std::size_t>(EditOp::Remove) * de;
  c.proj.resize(static_cast<std::size_t>(nt));
  c.feat.resize(static_cast<std::size_t>(nt));
  c.xi.assign(static_cast<std::size_t>(nt), 0.0);
  for (int t = 0; t < nt; ++t) {
    const TargetFeature &f = input.targets[static_cast<std::size_t>(t)];
    if (static_cast<int>(f.prompt_emb.size()) != p.encoder_dim) {
      throw Error("target prompt embedding dimension mismatch");
    }
    auto &proj = c.proj[static_cast<std::size_t>(t)];
    proj.assign(static_cast<std::size_t>(dr), 0.0);
    kernels::matvec(theta + p.off_proj(), f.prompt_emb.data(), proj.data(), dr,
                    p.encoder_dim);
    for (int i = 0; i < dr; ++i) proj[static_cast<std::size_t>(i)] += theta[p.off_proj_b() + i];

    auto &feat = c.feat[static_cast<std::size_t>(t)];
    feat.reserve(static_cast<std::size_t>(df));
    feat.insert(feat.end(), c.h2.begin(), c.h2.end());
    feat.insert(feat.end(), e_remove, e_remove + de);
    feat.insert(feat.end(), proj.begin(), proj.end());
    feat.push_back(f.ema);
    feat.push_back(f.recent_loo);
    c.xi[static_cast<std::size_t>(t)] =
        kernels::dot(theta + p.off_wt(), feat.data(), df) + theta[p.off_bt()];
  }

  if (nt > 0) {
    double hi = *std::max_element(c.xi.begin(), c.xi.end());
    double z = 0.0;
    c.q.assign(static_cast<std::size_t>(nt), 0.0);
    for (int t = 0; t < nt; ++t) {
      c.q[static_cast<std::size_t>(t)] = std::exp(c.xi[static_cast<std::size_t>(t)] - hi);
      z += c.q[static_cast<std::size_t>(t)];
    }
    for (int t = 0; t < nt; ++t) c.q[static_cast<std::size_t>(t)] /= z;
  }
  return c;
}

} // namespace

ForwardResult policy_forward(const ControllerParams &params,
                             const PolicyInput &input) {
  ForwardCache c = forward_pass(params, input);
  ForwardResult r;
  r.op_logits = c.op_logits;
  r.op_probs = c.op_probs;
  r.target_scores = c.xi;
  r.target_probs = c.q;
  return r;
}

Action sample_action(const ForwardResult &forward, const PolicyInput &input,
                     Rng &rng, double gamma) {
  std::vector<EditOp> allowed;
  for (EditOp op : {EditOp::Add, EditOp::Remove, EditOp::Noop}) {
    if (input.mask.allows(op)) allowed.push_back(op);
  }
  if (allowed.empty()) throw ImpossibleMask();

  const bool explore = rng.uniform() < gamma;
  const double draw = rng.uniform();
  EditOp op = EditOp::Noop;
  if (explore) {
    op = allowed[std::min(allowed.size() - 1,
                          static_cast<std::size_t>(draw * allowed.size()))];
  } else {
    double acc = 0.0;
    op = allowed.back();
    for (EditOp cand : allowed) {
      acc += forward.op_probs[static_cast<std::size_t>(cand)];
      if (draw < acc) {
        op = cand;
        break;
      }
    }
  }

  Action action;
  action.op = op;
  if (op == EditOp::Remove) {
    const double tdraw = rng.uniform();
    double acc = 0.0;
    std::size_t pick = input.targets.size() - 1;
    for (std::size_t t = 0; t < forward.target_probs.size(); ++t) {
      acc += forward.target_probs[t];
      if (tdraw < acc) {
        pick = t;
        break;
      }
    }
    action.target = input.targets[pick].name;
  }
  return action;
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

double policy_loss(const ControllerParams &p, const std::vector<BatchItem> &batch,
                   const std::vector<double> &advantages, double entropy_coef,
                   std::vector<double> *grad) {
  if (batch.empty()) throw Error("policy_loss: empty batch");
  if (advantages.size() != batch.size()) {
    throw Error("policy_loss: advantage count mismatch");
  }
  if (grad != nullptr) grad->assign(p.theta.size(), 0.0);

  const double scale = 1.0 / static_cast<double>(batch.size());
  const int dh = p.hidden;
  const int de = p.op_emb_dim;
  const int dr = p.role_proj_dim;
  const int df = p.target_feature_dim();
  const double *theta = p.theta.data();
  double loss = 0.0;

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchItem &item = batch[i];
    const double adv = advantages[i];
    ForwardCache c = forward_pass(p, item.input);

    const int op_idx = static_cast<int>(item.action.op);
    const double p_op = c.op_probs[static_cast<std::size_t>(op_idx)];
    if (p_op <= 0.0) throw Error("taken op has zero probability under the mask");
    double logp = std::log(p_op);

    int z_idx = -1;
    if (item.action.op == EditOp::Remove) {
      for (std::size_t t = 0; t < item.input.targets.size(); ++t) {
        if (item.input.targets[t].name == *item.action.target) {
          z_idx = static_cast<int>(t);
          break;
        }
      }
      if (z_idx < 0) throw Error("remove target not among admissible targets");
      logp += std::log(c.q[static_cast<std::size_t>(z_idx)]);
    }

    double entropy = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double pk = c.op_probs[static_cast<std::size_t>(k)];
      if (pk > 0.0) entropy -= pk * std::log(pk);
    }

    loss += scale * (-adv * logp - entropy_coef * entropy);
    if (grad == nullptr) continue;

    double *g = grad->data();

    // Operation head: policy-gradient and entropy terms share d loss / d u.
    std::array<double, 3> du{};
    for (int k = 0; k < 3; ++k) {
      const double pk = c.op_probs[static_cast<std::size_t>(k)];
      if (pk <= 0.0) continue; // masked op: logit does not participate
      const double indicator = (k == op_idx) ? 1.0 : 0.0;
      du[static_cast<std::size_t>(k)] = scale * (-adv * (indicator - pk) +
                                                 entropy_coef * pk *
                                                     (std::log(pk) + entropy));
    }

    std::vector<double> dh2(static_cast<std::size_t>(dh), 0.0);
    kernels::outer_accum(du.data(), c.h2.data(), g + p.off_wop(), 3, dh);
    for (int k = 0; k < 3; ++k) g[p.off_bop() + k] += du[static_cast<std::size_t>(k)];
    kernels::matvec_transpose_accum(theta + p.off_wop(), du.data(), dh2.data(),
                                    3, dh);

    // Target head (Remove only).
    if (z_idx >= 0) {
      const int nt = static_cast<int>(item.input.targets.size());
      for (int t = 0; t < nt; ++t) {
        const double indicator = (t == z_idx) ? 1.0 : 0.0;
        const double dxi =
            scale * (-adv * (indicator - c.q[static_cast<std::size_t>(t)]));
        if (dxi == 0.0) continue;
        const double *feat = c.feat[static_cast<std::size_t>(t)].data();
        for (int j = 0; j < df; ++j) g[p.off_wt() + j] += dxi * feat[j];
        g[p.off_bt()] += dxi;

        const double *wt = theta + p.off_wt();
        for (int j = 0; j < dh; ++j) dh2[static_cast<std::size_t>(j)] += dxi * wt[j];
        double *g_eop = g + p.off_eop() +
                        static_cast<std::size_t>(EditOp::Remove) * de;
        for (int j = 0; j < de; ++j) g_eop[j] += dxi * wt[dh + j];

        // Projection: d proj = dxi * wt[proj slice]; accumulate into P and bP.
        const EmbeddingVector &emb =
            item.input.targets[static_cast<std::size_t>(t)].prompt_emb;
        std::vector<double> dproj(static_cast<std::size_t>(dr), 0.0);
        for (int j = 0; j < dr; ++j) dproj[static_cast<std::size_t>(j)] = dxi * wt[dh + de + j];
        kernels::outer_accum(dproj.data(), emb.data(), g + p.off_proj(), dr,
                             p.encoder_dim);
        for (int j = 0; j < dr; ++j) g[p.off_proj_b() + j] += dproj[static_cast<std::size_t>(j)];
      }
    }

    // Trunk.
    std::vector<double> dz2(static_cast<std::size_t>(dh), 0.0);
    for (int j = 0; j < dh; ++j) {
      dz2[static_cast<std::size_t>(j)] =
          c.z2[static_cast<std::size_t>(j)] > 0.0 ? dh2[static_cast<std::size_t>(j)] : 0.0;
    }
    kernels::outer_accum(dz2.data(), c.h1.data(), g + p.off_w2(), dh, dh);
    for (int j = 0; j < dh; ++j) g[p.off_b2() + j] += dz2[static_cast<std::size_t>(j)];

    std::vector<double> dh1(static_cast<std::size_t>(dh), 0.0);
    kernels::matvec_transpose_accum(theta + p.off_w2(), dz2.data(), dh1.data(),
                                    dh, dh);
    std::vector<double> dz1(static_cast<std::size_t>(dh), 0.0);
    for (int j = 0; j < dh; ++j) {
      dz1[static_cast<std::size_t>(j)] =
          c.z1[static_cast<std::size_t>(j)] > 0.0 ? dh1[static_cast<std::size_t>(j)] : 0.0;
    }
    kernels::outer_accum(dz1.data(), c.obs_flat.data(), g + p.off_w1(), dh,
                         p.obs_dim());
    for (int j = 0; j < dh; ++j) g[p.off_b1() + j] += dz1[static_cast<std::size_t>(j)];
  }
  return loss;
}

GradStats reinforce_update(ControllerParams &params,
                           const std::vector<BatchItem> &batch,
                           const RunConfig &cfg) {
  GradStats stats;
  if (batch.empty()) throw Error("reinforce_update: empty batch");

  // Batch-normalize rewards.
  double mean = 0.0;
  for (const auto &b : batch) mean += b.reward;
  mean /= static_cast<double>(batch.size());
  double var = 0.0;
  for (const auto &b : batch) {
    const double d = b.reward - mean;
    var += d * d;
  }
  var /= static_cast<double>(batch.size());
  const double stddev = std::sqrt(var);
  std::vector<double> normalized(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    normalized[i] = (batch[i].reward - mean) / (stddev + 1e-8);
  }
  stats.mean_reward = mean;

  // EMA baseline over normalized rewards.
  double norm_mean = 0.0;
  for (double r : normalized) norm_mean += r;
  norm_mean /= static_cast<double>(normalized.size());
  const double old_baseline = params.baseline;
  params.baseline = (1.0 - cfg.baseline_decay) * params.baseline +
                    cfg.baseline_decay * norm_mean;

  std::vector<double> advantages(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    advantages[i] = normalized[i] - params.baseline;
  }

  std::vector<double> grad;
  stats.loss = policy_loss(params, batch, advantages, cfg.entropy_coef, &grad);

  {
    // Mean op-head entropy, for reporting.
    double h = 0.0;
    for (const auto &item : batch) {
      ForwardResult f = policy_forward(params, item.input);
      for (double pk : f.op_probs) {
        if (pk > 0.0) h -= pk * std::log(pk);
      }
    }
    stats.entropy = h / static_cast<double>(batch.size());
  }

  bool finite = std::isfinite(stats.loss);
  for (double gv : grad) {
    if (!std::isfinite(gv)) {
      finite = false;
      break;
    }
  }
  if (!finite) {
    params.baseline = old_baseline;
    stats.aborted = true;
    return stats;
  }

  // Global gradient-norm clip.
  const double gnorm = std::sqrt(
      kernels::dot(grad.data(), grad.data(), static_cast<int>(grad.size())));
  stats.grad_norm = gnorm;
  if (gnorm > cfg.grad_clip && gnorm > 0.0) {
    const double s = cfg.grad_clip / gnorm;
    for (double &gv : grad) gv *= s;
  }

  // Adam with standard defaults.
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  params.adam_t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(params.adam_t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(params.adam_t));
  const int n = static_cast<int>(params.theta.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    params.adam_m[k] = beta1 * params.adam_m[k] + (1.0 - beta1) * grad[k];
    params.adam_v[k] = beta2 * params.adam_v[k] + (1.0 - beta2) * grad[k] * grad[k];
    const double mhat = params.adam_m[k] / bc1;
    const double vhat = params.adam_v[k] / bc2;
    params.theta[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
  }
  return stats;
}

} // namespace sero
