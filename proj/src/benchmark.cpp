#include "sero/harness.hpp"

#include "sero/error.hpp"
#include "sero/format.hpp"
#include "sero/rng.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sero {

namespace {

const std::vector<std::string> kKeys = {
    "alpha", "bravo", "delta", "echo", "hotel", "kilo", "lima", "oscar",
    "sierra", "tango", "victor", "zulu"};

const std::vector<std::string> kCities = {
    "Rome", "Lima", "Oslo", "Cairo", "Quito", "Hanoi",
    "Porto", "Kyoto", "Dakar", "Turin", "Malmo", "Bergen"};

const std::vector<std::string> kArithItems = {
    "crates", "parcels", "cartons", "pallets", "drums", "bundles"};

std::string four_digits(int n) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", n);
  return buf;
}

std::string code_value(Rng &rng) {
  // Format: one uppercase letter then two digits, e.g. "Q31".
  std::string v;
  v.push_back(static_cast<char>('A' + rng.index(26)));
  v.push_back(static_cast<char>('0' + rng.index(10)));
  v.push_back(static_cast<char>('0' + rng.index(10)));
  return v;
}

Task make_arith(const std::string &benchmark_id, int n, Rng &rng) {
  Task t;
  t.benchmark = benchmark_id;
  t.group = "arith";
  t.id = benchmark_id + "-arith-" + four_digits(n);
  const int a = 20 + static_cast<int>(rng.index(80));
  const int b = 5 + static_cast<int>(rng.index(60));
  const std::string &item = kArithItems[rng.index(kArithItems.size())];
  const bool add = rng.index(2) == 0;
  std::ostringstream p;
  p << "Task " << t.id << ". A depot holds " << a << " " << item
    << " at opening time";
  if (add) {
    p << " and " << b << " more arrive before noon. What is the total number of "
      << item << " in the depot?";
    t.gold = std::to_string(a + b);
  } else {
    const int lo = std::min(a, b);
    const int hi = std::max(a, b);
    p << " and " << lo << " are shipped out before noon. How many " << item
      << " remain in the depot?";
    t.gold = std::to_string(hi - lo);
  }
  p << " Work the arithmetic on the counts and answer with a single integer.";
  t.prompt = p.str();
  t.answer_format = "^-?[0-9]+$";
  return t;
}

Task make_lookup(const std::string &benchmark_id, int n, Rng &rng) {
  Task t;
  t.benchmark = benchmark_id;
  t.group = "lookup";
  t.id = benchmark_id + "-lookup-" + four_digits(n);
  std::vector<std::string> keys = kKeys;
  rng.shuffle(keys);
  keys.resize(4);
  std::vector<std::string> values;
  for (int i = 0; i < 4; ++i) values.push_back(code_value(rng));
  const std::size_t pick = rng.index(4);
  std::ostringstream p;
  p << "Task " << t.id << ". Reference table of key=value records: ";
  for (int i = 0; i < 4; ++i) {
    if (i > 0) p << ", ";
    p << keys[static_cast<std::size_t>(i)] << "="
      << values[static_cast<std::size_t>(i)];
  }
  p << ". Look up the key '" << keys[pick]
    << "' in the table and answer with its value only.";
  t.prompt = p.str();
  t.gold = values[pick];
  t.answer_format = "^[A-Z][0-9]{2}$";
  return t;
}

Task make_sched(const std::string &benchmark_id, int n, Rng &rng) {
  Task t;
  t.benchmark = benchmark_id;
  t.group = "sched";
  t.id = benchmark_id + "-sched-" + four_digits(n);
  std::vector<std::string> cities = kCities;
  rng.shuffle(cities);
  cities.resize(4);
  static const char *kDays[4] = {"Mon", "Tue", "Wed", "Thu"};
  std::ostringstream p;
  p << "Task " << t.id << ". Plan the four-day visit schedule: ";
  std::ostringstream gold;
  for (int i = 0; i < 4; ++i) {
    if (i > 0) {
      p << ", ";
      gold << ",";
    }
    p << "on " << kDays[i] << " the team visits " << cities[static_cast<std::size_t>(i)];
    gold << kDays[i] << "=" << cities[static_cast<std::size_t>(i)];
  }
  p << ". Produce the itinerary in exactly the form "
       "Mon=CITY,Tue=CITY,Wed=CITY,Thu=CITY with no extra words.";
  t.prompt = p.str();
  t.gold = gold.str();
  t.answer_format = "^Mon=[A-Za-z]+,Tue=[A-Za-z]+,Wed=[A-Za-z]+,Thu=[A-Za-z]+$";
  t.has_partial = true;
  return t;
}

constexpr const char *kTableCardReply = R"(The coverage diagnostics show no role handles reference-table lookups, so the pool misses those tasks entirely. Anchoring on the strongest current card, one new specialist:

```json
{
  "name": "table_lookup_solver",
  "prompt": "You answer reference table lookup questions. Scan the key=value records in the task, find the requested key, and report its value exactly as written. State your result on its own line as 'ANSWER: <value>'.",
  "tags": ["table", "lookup", "retrieval"],
  "family": "table",
  "protocol": "kv-report",
  "temperature": 0.2,
  "role_type": "Spec"
}
```
)";

constexpr const char *kArithCardReply = R"(The task at hand is numeric, so a second worker on that family is the most plausible addition:

```json
{
  "name": "arith_recount_solver",
  "prompt": "You recount the quantities named in the task from scratch, redo the additions and subtractions independently, and state the resulting integer on its own line as 'ANSWER: <n>'.",
  "tags": ["arith", "recount"],
  "family": "arith",
  "protocol": "kv-report",
  "temperature": 0.1,
  "role_type": "Spec"
}
```
)";

constexpr const char *kSchedCardReply = R"(This task is an itinerary, so a second route-focused planner is the most plausible addition:

```json
{
  "name": "sched_route_mapper",
  "prompt": "You map the stated day-to-city assignments into the strict itinerary line Mon=CITY,Tue=CITY,Wed=CITY,Thu=CITY, double-checking each day against the task, and state it as 'ANSWER: <itinerary>'.",
  "tags": ["sched", "route"],
  "family": "sched",
  "protocol": "kv-report",
  "temperature": 0.1,
  "role_type": "Spec"
}
```
)";

constexpr const char *kGenericCardReply = R"(Nothing in the diagnostics stands out, so a light support role is the safest addition:

```json
{
  "name": "constraint_notes_writer",
  "prompt": "You restate the decisive constraints of the task as two terse bullet points so later roles do not overlook them.",
  "tags": ["notes", "support"],
  "family": "writing",
  "protocol": "bullets",
  "temperature": 0.3,
  "role_type": "Spec"
}
```
)";

std::string specialist_pattern(const std::string &group) {
  if (group == "arith") return "arith|calc";
  if (group == "lookup") return "table|lookup";
  return "sched|plan";
}

} // namespace

Dataset synth_benchmark(std::uint64_t seed, int n_train, int n_test,
                        const std::string &benchmark_id) {
  if (n_train < 1 || n_test < 1) {
    throw UsageError("synth_benchmark: split sizes must be >= 1");
  }
  Dataset d;
  d.benchmark_id = benchmark_id;
  Rng rng(seed);

  const int total = n_train + n_test;
  std::vector<Task> all;
  for (int i = 0; i < total; ++i) {
    switch (i % 3) {
    case 0: all.push_back(make_arith(benchmark_id, i, rng)); break;
    case 1: all.push_back(make_lookup(benchmark_id, i, rng)); break;
    default: all.push_back(make_sched(benchmark_id, i, rng)); break;
    }
  }
  d.train.assign(all.begin(), all.begin() + n_train);
  d.test.assign(all.begin() + n_train, all.end());

  // Matched scripted behaviors: the family specialist knows each task's
  // answer, and the aggregator only repeats an answer it actually received.
  for (const auto &t : all) {
    d.behaviors.push_back(ScriptedRule{specialist_pattern(t.group), t.id,
                                       std::nullopt, "ANSWER: " + t.gold});
    d.behaviors.push_back(ScriptedRule{"^final_answerer$", t.id,
                                       "ANSWER: " + t.gold, t.gold});
  }
  // Role editor: proposals follow the task at hand. Lookup tasks draw the
  // missing table specialist; arithmetic and scheduling tasks draw redundant
  // family cards; anything else falls back to a generic support card.
  d.behaviors.push_back(ScriptedRule{"^role_editor$",
                                     benchmark_id + "-lookup-", std::nullopt,
                                     kTableCardReply});
  d.behaviors.push_back(ScriptedRule{"^role_editor$", benchmark_id + "-arith-",
                                     std::nullopt, kArithCardReply});
  d.behaviors.push_back(ScriptedRule{"^role_editor$", benchmark_id + "-sched-",
                                     std::nullopt, kSchedCardReply});
  d.behaviors.push_back(
      ScriptedRule{"^role_editor$", ".*", std::nullopt, kGenericCardReply});
  // Validators see nothing alarming in scripted runs.
  d.behaviors.push_back(ScriptedRule{"validator|checker", ".*", std::nullopt,
                                     "OK: the draft is consistent with the "
                                     "stated constraints."});
  d.default_response = "I cannot help with that.";
  return d;
}

void save_dataset(const Dataset &dataset, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset: " + path.string());
  auto dump_task = [&](const Task &t, const char *split) {
    nlohmann::json j{{"id", t.id},         {"benchmark", t.benchmark},
                     {"group", t.group},   {"prompt", t.prompt},
                     {"gold", t.gold},     {"answer_format", t.answer_format},
                     {"has_partial", t.has_partial}, {"split", split}};
    out << j.dump() << "\n";
  };
  for (const auto &t : dataset.train) dump_task(t, "train");
  for (const auto &t : dataset.test) dump_task(t, "test");
}

Dataset load_dataset(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read dataset: " + path.string());
  Dataset d;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Task t;
    t.id = j.at("id").get<std::string>();
    t.benchmark = j.value("benchmark", std::string());
    t.group = j.value("group", std::string());
    t.prompt = j.at("prompt").get<std::string>();
    t.gold = j.at("gold").get<std::string>();
    t.answer_format = j.value("answer_format", std::string());
    t.has_partial = j.value("has_partial", false);
    if (d.benchmark_id.empty()) d.benchmark_id = t.benchmark;
    if (j.value("split", std::string("test")) == "train") {
      d.train.push_back(std::move(t));
    } else {
      d.test.push_back(std::move(t));
    }
  }
  return d;
}

} // namespace sero
