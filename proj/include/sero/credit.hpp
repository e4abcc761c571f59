#pragma once

#include "sero/embedding.hpp"
#include "sero/role_pool.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace sero {

struct CreditEntry {
  double ema = 0.0;               // historical credit
  int n_updates = 0;              // EMA update count
  std::optional<double> recent_loo; // latest leave-one-out value
  std::optional<double> fast;     // fast credit from the current pass

  bool operator==(const CreditEntry &) const = default;
};

// Per-role credit state. Fast values are pass-local: each inference pass
// starts from a cleared-fast snapshot and writes values only for the roles it
// activated. EMA and LOO state persist across passes.
class CreditLedger {
public:
  // Registers a role if absent; new roles start at ema = 0 with the
  // configured conservative update count.
  void ensure_role(const std::string &name, int initial_updates = 0);
  void erase_role(const std::string &name);
  bool has_role(const std::string &name) const;

  const CreditEntry &entry(const std::string &name) const; // throws UnknownRole
  CreditEntry &entry(const std::string &name);             // throws UnknownRole

  void clear_fast();
  void set_fast(const std::string &name, double value);
  double fast_or_zero(const std::string &name) const;
  double ema_or_zero(const std::string &name) const;

  const std::map<std::string, CreditEntry> &entries() const { return entries_; }

  bool operator==(const CreditLedger &) const = default;

private:
  std::map<std::string, CreditEntry> entries_;
};

// The 5-vector of pool-level credit statistics: population mean/std/min/max of
// EMA credit plus the mean of recorded recent LOO values (0 when none).
struct CreditSummary {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  double mean_recent_loo = 0.0;
};

// beta * cos(msg, task) + (1 - beta) * cos(msg, consensus).
double fast_credit(const EmbeddingVector &msg_emb,
                   const EmbeddingVector &task_emb,
                   const EmbeddingVector &consensus_emb, double beta);

// Structured validator signal: 0.9 when the validator flagged and the repair
// changed the answer, 0.6 when it did not flag, 0.5 when it flagged but the
// repair left the answer unchanged.
double validator_fast_credit(bool flagged, bool repair_changed_answer);

// Score difference from removing one role and re-running the same operator:
// run(pool) - run(pool without role). The caller supplies the operator so the
// two passes share one deterministic backend. The Agg role is never evaluated.
using PoolScoreFn =
    std::function<double(const RolePool &, const CreditLedger &)>;
double loo_credit(const RolePool &pool, const CreditLedger &ledger,
                  const std::string &role_name, const PoolScoreFn &run);

// ema <- (1 - mu) * ema + mu * phi_hat; increments the update count and
// records phi_hat as the role's recent LOO value.
void ema_update(CreditLedger &ledger, const std::string &role_name,
                double phi_hat, double mu);

// Min-max rescale of EMA credit over the current pool; all 0.5 when degenerate.
std::map<std::string, double> normalize_credit(const CreditLedger &ledger,
                                               const RolePool &pool);

CreditSummary credit_summary(const CreditLedger &ledger, const RolePool &pool);

} // namespace sero
