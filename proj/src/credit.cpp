#include "sero/credit.hpp"

#include "sero/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sero {

void CreditLedger::ensure_role(const std::string &name, int initial_updates) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    CreditEntry e;
    e.ema = 0.0;
    e.n_updates = initial_updates;
    entries_.emplace(name, e);
  }
}

void CreditLedger::erase_role(const std::string &name) { entries_.erase(name); }

bool CreditLedger::has_role(const std::string &name) const {
  return entries_.count(name) != 0;
}

const CreditEntry &CreditLedger::entry(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UnknownRole(name);
  return it->second;
}

CreditEntry &CreditLedger::entry(const std::string &name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UnknownRole(name);
  return it->second;
}

void CreditLedger::clear_fast() {
  for (auto &[name, e] : entries_) e.fast.reset();
}

void CreditLedger::set_fast(const std::string &name, double value) {
  ensure_role(name);
  entries_[name].fast = value;
}

double CreditLedger::fast_or_zero(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || !it->second.fast) return 0.0;
  return *it->second.fast;
}

double CreditLedger::ema_or_zero(const std::string &name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? 0.0 : it->second.ema;
}

double fast_credit(const EmbeddingVector &msg_emb,
                   const EmbeddingVector &task_emb,
                   const EmbeddingVector &consensus_emb, double beta) {
  return beta * cosine(msg_emb, task_emb) +
         (1.0 - beta) * cosine(msg_emb, consensus_emb);
}

double validator_fast_credit(bool flagged, bool repair_changed_answer) {
  if (!flagged) return 0.6;
  return repair_changed_answer ? 0.9 : 0.5;
}

double loo_credit(const RolePool &pool, const CreditLedger &ledger,
                  const std::string &role_name, const PoolScoreFn &run) {
  const RoleCard *card = pool.find(role_name);
  if (card == nullptr) throw UnknownRole(role_name);
  if (card->role_type == RoleType::Agg) {
    throw Error("the aggregator is never leave-one-out evaluated");
  }
  const double full = run(pool, ledger);
  RolePool ablated = pool;
  ablated.remove_role(role_name);
  const double without = run(ablated, ledger);
  return full - without;
}

void ema_update(CreditLedger &ledger, const std::string &role_name,
                double phi_hat, double mu) {
  CreditEntry &e = ledger.entry(role_name);
  e.ema = (1.0 - mu) * e.ema + mu * phi_hat;
  e.n_updates += 1;
  e.recent_loo = phi_hat;
}

std::map<std::string, double> normalize_credit(const CreditLedger &ledger,
                                               const RolePool &pool) {
  std::map<std::string, double> out;
  if (pool.roles().empty()) return out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto &r : pool.roles()) {
    const double c = ledger.ema_or_zero(r.name);
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  for (const auto &r : pool.roles()) {
    const double c = ledger.ema_or_zero(r.name);
    out[r.name] = (hi > lo) ? (c - lo) / (hi - lo) : 0.5;
  }
  return out;
}

CreditSummary credit_summary(const CreditLedger &ledger, const RolePool &pool) {
  CreditSummary s;
  const auto &roles = pool.roles();
  if (roles.empty()) return s;

  double sum = 0.0;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  for (const auto &r : roles) {
    const double c = ledger.ema_or_zero(r.name);
    sum += c;
    s.min = std::min(s.min, c);
    s.max = std::max(s.max, c);
  }
  s.mean = sum / static_cast<double>(roles.size());

  double sq = 0.0;
  for (const auto &r : roles) {
    const double d = ledger.ema_or_zero(r.name) - s.mean;
    sq += d * d;
  }
  // Population standard deviation: defined for singleton pools.
  s.stddev = std::sqrt(sq / static_cast<double>(roles.size()));

  double loo_sum = 0.0;
  int loo_n = 0;
  for (const auto &r : roles) {
    if (ledger.has_role(r.name)) {
      const auto &e = ledger.entry(r.name);
      if (e.recent_loo) {
        loo_sum += *e.recent_loo;
        ++loo_n;
      }
    }
  }
  s.mean_recent_loo = loo_n > 0 ? loo_sum / loo_n : 0.0;
  return s;
}

} // namespace sero
