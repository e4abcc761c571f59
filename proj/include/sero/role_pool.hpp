#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sero {

enum class RoleType { Setup, Spec, Val, Agg };

std::string to_string(RoleType t);
RoleType role_type_from_string(const std::string &s);

// One editable unit: an agent as structured fields, so contract checks can
// operate on typed data instead of raw prompt text.
struct RoleCard {
  std::string name;
  std::string prompt;
  std::set<std::string> tags;
  std::string family;
  std::string protocol;
  double temperature = 0.0;
  RoleType role_type = RoleType::Spec;
  bool protected_flag = false;

  bool operator==(const RoleCard &) const = default;
};

// Validates field invariants and returns the card; throws SchemaViolation.
RoleCard new_role_card(RoleCard card);

struct ContractConfig {
  std::set<std::string> required_families;
  int min_validators = 1;
  bool validator_pass_enabled = true;
  std::string required_answer_protocol;
  int min_pool_size = 1;
  int max_pool_size = 16;

  bool operator==(const ContractConfig &) const = default;
};

struct ContractVerdict {
  bool pass = false;
  std::string reason;
};

// Verdict for each of the five structural contracts. All keys always present.
struct ContractReport {
  ContractVerdict capability;
  ContractVerdict communication;
  ContractVerdict validation;
  ContractVerdict aggregation;
  ContractVerdict output_protocol;

  bool all_pass() const {
    return capability.pass && communication.pass && validation.pass &&
           aggregation.pass && output_protocol.pass;
  }
};

// Ordered collection of role cards plus the contract configuration they are
// checked against. A pool is a value owned by one logical writer; snapshots
// are plain copies.
class RolePool {
public:
  RolePool() = default;
  RolePool(std::vector<RoleCard> roles, std::set<std::string> seed_families,
           ContractConfig contract);

  const std::vector<RoleCard> &roles() const { return roles_; }
  const std::set<std::string> &seed_families() const { return seed_families_; }
  const ContractConfig &contract() const { return contract_; }
  ContractConfig &contract() { return contract_; }

  int size() const { return static_cast<int>(roles_.size()); }
  const RoleCard *find(const std::string &name) const;
  bool contains(const std::string &name) const { return find(name) != nullptr; }

  // Enforces pool-level structure: unique names and at most one Agg card.
  void add_role(const RoleCard &card);
  void remove_role(const std::string &name);

  const RoleCard *aggregator() const;
  int count_type(RoleType t) const;
  int count_family(const std::string &family) const;

  bool operator==(const RolePool &) const = default;

private:
  std::vector<RoleCard> roles_;
  std::set<std::string> seed_families_;
  ContractConfig contract_;
};

// Evaluates the five contracts: capability (required families covered),
// communication (every card declares a protocol), validation (validator count
// when the validator pass is on), aggregation (exactly one protected Agg),
// output protocol (the Agg card's protocol matches the required one).
ContractReport check_contracts(const RolePool &pool);

std::string format_report(const ContractReport &report);

} // namespace sero
