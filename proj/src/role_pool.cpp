#include "sero/role_pool.hpp"

#include "sero/error.hpp"
#include "sero/pool_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sero {

std::string to_string(RoleType t) {
  switch (t) {
  case RoleType::Setup: return "Setup";
  case RoleType::Spec: return "Spec";
  case RoleType::Val: return "Val";
  case RoleType::Agg: return "Agg";
  }
  return "Spec";
}

RoleType role_type_from_string(const std::string &s) {
  if (s == "Setup") return RoleType::Setup;
  if (s == "Spec") return RoleType::Spec;
  if (s == "Val") return RoleType::Val;
  if (s == "Agg") return RoleType::Agg;
  throw SchemaViolation("role_type", "unknown role type '" + s + "'");
}

RoleCard new_role_card(RoleCard card) {
  if (card.name.empty()) throw SchemaViolation("name", "must be nonempty");
  if (card.prompt.empty()) throw SchemaViolation("prompt", "must be nonempty");
  if (!std::isfinite(card.temperature) || card.temperature < 0.0) {
    throw SchemaViolation("temperature", "must be finite and >= 0");
  }
  if (card.role_type == RoleType::Agg && !card.protected_flag) {
    throw SchemaViolation("protected", "Agg cards must be protected");
  }
  return card;
}

RolePool::RolePool(std::vector<RoleCard> roles,
                   std::set<std::string> seed_families, ContractConfig contract)
    : seed_families_(std::move(seed_families)), contract_(std::move(contract)) {
  for (auto &card : roles) add_role(card);
}

const RoleCard *RolePool::find(const std::string &name) const {
  for (const auto &r : roles_) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void RolePool::add_role(const RoleCard &card) {
  RoleCard validated = new_role_card(card);
  if (find(validated.name) != nullptr) {
    throw SchemaViolation("name", "duplicate role name '" + validated.name + "'");
  }
  if (validated.role_type == RoleType::Agg && aggregator() != nullptr) {
    throw SchemaViolation("role_type", "pool already has an Agg role");
  }
  roles_.push_back(std::move(validated));
}

void RolePool::remove_role(const std::string &name) {
  for (auto it = roles_.begin(); it != roles_.end(); ++it) {
    if (it->name == name) {
      roles_.erase(it);
      return;
    }
  }
  throw UnknownRole(name);
}

const RoleCard *RolePool::aggregator() const {
  for (const auto &r : roles_) {
    if (r.role_type == RoleType::Agg) return &r;
  }
  return nullptr;
}

int RolePool::count_type(RoleType t) const {
  int n = 0;
  for (const auto &r : roles_) {
    if (r.role_type == t) ++n;
  }
  return n;
}

int RolePool::count_family(const std::string &family) const {
  int n = 0;
  for (const auto &r : roles_) {
    if (r.family == family) ++n;
  }
  return n;
}

ContractReport check_contracts(const RolePool &pool) {
  ContractReport report;
  const ContractConfig &cfg = pool.contract();

  // (i) capability: at least one role per required family.
  std::string missing;
  for (const auto &fam : cfg.required_families) {
    if (pool.count_family(fam) == 0) {
      if (!missing.empty()) missing += ", ";
      missing += fam;
    }
  }
  if (missing.empty()) {
    report.capability = {true, "all required families covered"};
  } else {
    report.capability = {false, "uncovered families: " + missing};
  }

  // (ii) communication: every card declares a protocol. The runtime half of
  // this contract is constructive: the DAG builder always connects
  // non-terminals to the aggregator.
  report.communication = {true, "every role declares a protocol"};
  for (const auto &r : pool.roles()) {
    if (r.protocol.empty()) {
      report.communication = {false, "role '" + r.name + "' has no protocol"};
      break;
    }
  }

  // (iii) validation: validator head-count when the validator pass is on.
  if (!cfg.validator_pass_enabled) {
    report.validation = {true, "validator pass disabled"};
  } else {
    const int n_val = pool.count_type(RoleType::Val);
    if (n_val >= cfg.min_validators) {
      report.validation = {true, std::to_string(n_val) + " validator(s)"};
    } else {
      report.validation = {false, "need >= " +
                                      std::to_string(cfg.min_validators) +
                                      " validators, have " +
                                      std::to_string(n_val)};
    }
  }

  // (iv) aggregation: exactly one Agg role, protected.
  int n_agg = 0;
  bool agg_protected = false;
  for (const auto &r : pool.roles()) {
    if (r.role_type == RoleType::Agg) {
      ++n_agg;
      agg_protected = r.protected_flag;
    }
  }
  if (n_agg == 1 && agg_protected) {
    report.aggregation = {true, "one protected aggregator"};
  } else if (n_agg != 1) {
    report.aggregation = {false,
                          "expected exactly one Agg role, found " +
                              std::to_string(n_agg)};
  } else {
    report.aggregation = {false, "aggregator is not protected"};
  }

  // (v) output protocol: the aggregator speaks the required answer protocol.
  const RoleCard *agg = pool.aggregator();
  if (agg == nullptr) {
    report.output_protocol = {false, "no aggregator present"};
  } else if (cfg.required_answer_protocol.empty() ||
             agg->protocol == cfg.required_answer_protocol) {
    report.output_protocol = {true, "aggregator protocol matches"};
  } else {
    report.output_protocol = {false, "aggregator protocol '" + agg->protocol +
                                         "' != required '" +
                                         cfg.required_answer_protocol + "'"};
  }

  return report;
}

std::string format_report(const ContractReport &report) {
  std::ostringstream out;
  auto line = [&](const char *name, const ContractVerdict &v) {
    out << "  " << name << ": " << (v.pass ? "PASS" : "FAIL") << " (" << v.reason
        << ")\n";
  };
  line("capability     ", report.capability);
  line("communication  ", report.communication);
  line("validation     ", report.validation);
  line("aggregation    ", report.aggregation);
  line("output_protocol", report.output_protocol);
  return out.str();
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json card_to_json(const RoleCard &c) {
  return json{{"name", c.name},
              {"prompt", c.prompt},
              {"tags", c.tags},
              {"family", c.family},
              {"protocol", c.protocol},
              {"temperature", c.temperature},
              {"role_type", to_string(c.role_type)},
              {"protected", c.protected_flag}};
}

RoleCard card_from_json(const json &j) {
  RoleCard c;
  try {
    c.name = j.at("name").get<std::string>();
    c.prompt = j.at("prompt").get<std::string>();
    if (j.contains("tags")) c.tags = j.at("tags").get<std::set<std::string>>();
    c.family = j.value("family", std::string());
    c.protocol = j.value("protocol", std::string());
    c.temperature = j.value("temperature", 0.0);
    c.role_type = role_type_from_string(j.value("role_type", std::string("Spec")));
    c.protected_flag = j.value("protected", false);
  } catch (const json::exception &e) {
    throw SchemaViolation("role", e.what());
  }
  return new_role_card(std::move(c));
}

json ledger_to_json(const CreditLedger &ledger) {
  json out = json::object();
  for (const auto &[name, e] : ledger.entries()) {
    json entry{{"ema", e.ema}, {"n_updates", e.n_updates}};
    if (e.recent_loo) entry["recent_loo"] = *e.recent_loo;
    if (e.fast) entry["fast"] = *e.fast;
    out[name] = std::move(entry);
  }
  return out;
}

CreditLedger ledger_from_json(const json &j) {
  CreditLedger ledger;
  for (auto it = j.begin(); it != j.end(); ++it) {
    ledger.ensure_role(it.key());
    CreditEntry &e = ledger.entry(it.key());
    e.ema = it.value().value("ema", 0.0);
    e.n_updates = it.value().value("n_updates", 0);
    if (it.value().contains("recent_loo")) {
      e.recent_loo = it.value()["recent_loo"].get<double>();
    }
    if (it.value().contains("fast")) {
      e.fast = it.value()["fast"].get<double>();
    }
  }
  return ledger;
}

json contract_to_json(const ContractConfig &c) {
  return json{{"required_families", c.required_families},
              {"min_validators", c.min_validators},
              {"validator_pass_enabled", c.validator_pass_enabled},
              {"required_answer_protocol", c.required_answer_protocol},
              {"min_pool_size", c.min_pool_size},
              {"max_pool_size", c.max_pool_size}};
}

ContractConfig contract_from_json(const json &j) {
  ContractConfig c;
  if (j.contains("required_families")) {
    c.required_families = j["required_families"].get<std::set<std::string>>();
  }
  c.min_validators = j.value("min_validators", 1);
  c.validator_pass_enabled = j.value("validator_pass_enabled", true);
  c.required_answer_protocol = j.value("required_answer_protocol", std::string());
  c.min_pool_size = j.value("min_pool_size", 1);
  c.max_pool_size = j.value("max_pool_size", 16);
  return c;
}

json pool_to_json(const RolePool &pool, const CreditLedger &credit) {
  json roles = json::array();
  for (const auto &r : pool.roles()) roles.push_back(card_to_json(r));
  return json{{"version", 1},
              {"roles", std::move(roles)},
              {"seed_families", pool.seed_families()},
              {"contract", contract_to_json(pool.contract())},
              {"credit", ledger_to_json(credit)}};
}

} // namespace

std::string pool_state_json(const RolePool &pool, const CreditLedger &credit) {
  return pool_to_json(pool, credit).dump(2);
}

RolePool pool_from_json_text(const std::string &text, CreditLedger *credit) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw SchemaViolation("pool", std::string("invalid JSON: ") + e.what());
  }
  if (!j.contains("version") || !j["version"].is_number_integer()) {
    throw VersionMismatch("pool file has no version tag");
  }
  if (j["version"].get<int>() != 1) {
    throw VersionMismatch("unsupported pool file version " +
                          j["version"].dump());
  }
  std::vector<RoleCard> cards;
  for (const auto &rj : j.value("roles", json::array())) {
    cards.push_back(card_from_json(rj));
  }
  std::set<std::string> seed_families;
  if (j.contains("seed_families")) {
    seed_families = j["seed_families"].get<std::set<std::string>>();
  }
  ContractConfig contract = contract_from_json(j.value("contract", json::object()));
  RolePool pool(std::move(cards), std::move(seed_families), std::move(contract));
  if (credit != nullptr) {
    *credit = ledger_from_json(j.value("credit", json::object()));
  }
  return pool;
}

void save_pool(const RolePool &pool, const CreditLedger &credit,
               const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << pool_state_json(pool, credit) << "\n";
  if (!out) throw Error("write failed: " + path.string());
}

std::pair<RolePool, CreditLedger> load_pool(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  CreditLedger ledger;
  RolePool pool = pool_from_json_text(buf.str(), &ledger);
  return {std::move(pool), std::move(ledger)};
}

} // namespace sero
