#pragma once

#include "sero/credit.hpp"
#include "sero/role_pool.hpp"

#include <filesystem>
#include <string>
#include <utility>

namespace sero {

// Pool file format: {"version": 1, "roles": [...], "credit": {...}} plus the
// contract block and seed families, diff-able and hand-editable. Round trips
// preserve role order, all card fields, and ledger values bit-for-bit.
void save_pool(const RolePool &pool, const CreditLedger &credit,
               const std::filesystem::path &path);

std::pair<RolePool, CreditLedger> load_pool(const std::filesystem::path &path);

// Canonical serialization of (pool, ledger); equality of these strings is the
// byte-identity check used by rollback tests.
std::string pool_state_json(const RolePool &pool, const CreditLedger &credit);

RolePool pool_from_json_text(const std::string &text, CreditLedger *credit);

} // namespace sero
