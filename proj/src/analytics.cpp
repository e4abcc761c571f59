#include "sero/harness.hpp"

#include "sero/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace sero {

using nlohmann::json;

std::string episode_to_jsonl(const EpisodeRecord &e) {
  json j{{"episode", e.episode},
         {"phase", e.phase},
         {"op", e.op},
         {"target", e.target},
         {"committed", e.committed},
         {"reason", e.reason},
         {"R", e.reward},
         {"score_pre", e.score_pre},
         {"score_post", e.score_post},
         {"pool_size", e.pool_size},
         {"calls", e.calls},
         {"tokens", e.tokens},
         {"target_ema_pre", e.target_ema_pre}};
  return j.dump();
}

EpisodeRecord episode_from_jsonl(const std::string &line) {
  json j = json::parse(line);
  EpisodeRecord e;
  e.episode = j.value("episode", 0);
  e.phase = j.value("phase", std::string());
  e.op = j.value("op", std::string());
  e.target = j.value("target", std::string());
  e.committed = j.value("committed", false);
  e.reason = j.value("reason", std::string());
  e.reward = j.value("R", 0.0);
  e.score_pre = j.value("score_pre", 0.0);
  e.score_post = j.value("score_post", 0.0);
  e.pool_size = j.value("pool_size", 0);
  e.calls = j.value("calls", 0);
  e.tokens = j.value("tokens", static_cast<std::int64_t>(0));
  e.target_ema_pre = j.value("target_ema_pre", 0.0);
  return e;
}

std::string task_score_to_jsonl(const TaskScore &t) {
  json j{{"task_id", t.task_id},
         {"group", t.group},
         {"score", t.score},
         {"exact", t.exact},
         {"partial", t.partial},
         {"calls", t.calls},
         {"tokens_in", t.tokens_in},
         {"tokens_out", t.tokens_out},
         {"answer", t.answer},
         {"active_roles", t.active_roles},
         {"dag_levels", t.dag_levels}};
  return j.dump();
}

TaskScore task_score_from_jsonl(const std::string &line) {
  json j = json::parse(line);
  TaskScore t;
  t.task_id = j.value("task_id", std::string());
  t.group = j.value("group", std::string());
  t.score = j.value("score", 0.0);
  t.exact = j.value("exact", 0.0);
  t.partial = j.value("partial", 0.0);
  t.calls = j.value("calls", 0);
  t.tokens_in = j.value("tokens_in", static_cast<std::int64_t>(0));
  t.tokens_out = j.value("tokens_out", static_cast<std::int64_t>(0));
  t.answer = j.value("answer", std::string());
  if (j.contains("active_roles")) {
    t.active_roles = j["active_roles"].get<std::vector<std::string>>();
  }
  if (j.contains("dag_levels")) {
    t.dag_levels = j["dag_levels"].get<std::vector<std::vector<std::string>>>();
  }
  return t;
}

RunAnalytics analyze(const std::vector<EpisodeRecord> &episodes,
                     const std::vector<TaskScore> &eval_records,
                     const RolePool &final_pool,
                     const CreditLedger &final_ledger) {
  RunAnalytics a;
  a.empty_episode_log = episodes.empty();
  a.empty_eval_log = eval_records.empty();

  // Role lifecycle.
  std::set<std::string> added_names;
  std::vector<double> removed_pre;
  for (const auto &e : episodes) {
    if (!e.committed) continue;
    if (e.op == "add") {
      ++a.added;
      if (!e.target.empty()) added_names.insert(e.target);
    } else if (e.op == "remove") {
      ++a.removed;
      removed_pre.push_back(e.target_ema_pre);
    }
  }
  for (const auto &name : added_names) {
    if (final_pool.contains(name)) ++a.surviving_additions;
  }
  if (a.added > 0) {
    a.survival_defined = true;
    a.survival_rate =
        static_cast<double>(a.surviving_additions) / a.added;
  }
  if (!removed_pre.empty()) {
    a.removed_pre_credit_defined = true;
    for (double v : removed_pre) a.removed_pre_credit += v;
    a.removed_pre_credit /= static_cast<double>(removed_pre.size());
  }

  // Active-set diversity over evaluation instances.
  a.instances = static_cast<int>(eval_records.size());
  std::map<std::vector<std::string>, int> set_counts;
  std::set<std::string> ever_active;
  double role_sum = 0.0;
  for (const auto &r : eval_records) {
    std::vector<std::string> key = r.active_roles;
    std::sort(key.begin(), key.end());
    set_counts[key] += 1;
    for (const auto &name : r.active_roles) ever_active.insert(name);
    role_sum += static_cast<double>(r.active_roles.size());
  }
  a.unique_active_sets = static_cast<int>(set_counts.size());
  if (a.instances > 0) {
    a.unique_ratio = static_cast<double>(a.unique_active_sets) / a.instances;
    a.mean_active_roles = role_sum / a.instances;
    double h = 0.0;
    double sq = 0.0;
    for (const auto &[key, n] : set_counts) {
      const double p = static_cast<double>(n) / a.instances;
      h -= p * std::log(p);
      sq += p * p;
    }
    a.simpson = 1.0 - sq;
    a.entropy = set_counts.size() > 1
                    ? h / std::log(static_cast<double>(set_counts.size()))
                    : 0.0;
  }

  int used_evolved = 0;
  for (const auto &name : added_names) {
    if (final_pool.contains(name) && ever_active.count(name) != 0) {
      ++used_evolved;
    }
  }
  a.evolved_roles_used = used_evolved;
  if (final_pool.size() > 0 && a.instances > 0) {
    int unused = 0;
    for (const auto &card : final_pool.roles()) {
      if (ever_active.count(card.name) == 0) ++unused;
    }
    a.unused_role_ratio = static_cast<double>(unused) / final_pool.size();
  }

  // Credit-usage correlation: Pearson between EMA credit and evaluation-time
  // selection frequency over the final pool.
  if (final_pool.size() > 1 && a.instances > 0) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto &card : final_pool.roles()) {
      int n = 0;
      for (const auto &r : eval_records) {
        if (std::find(r.active_roles.begin(), r.active_roles.end(),
                      card.name) != r.active_roles.end()) {
          ++n;
        }
      }
      xs.push_back(final_ledger.ema_or_zero(card.name));
      ys.push_back(static_cast<double>(n) / a.instances);
    }
    const auto mean_of = [](const std::vector<double> &v) {
      double m = 0.0;
      for (double x : v) m += x;
      return m / static_cast<double>(v.size());
    };
    const double mx = mean_of(xs);
    const double my = mean_of(ys);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx > 0.0 && syy > 0.0) {
      a.credit_usage_defined = true;
      a.credit_usage_correlation = sxy / std::sqrt(sxx * syy);
    }
  }

  // Early vs late DAG credit: mean EMA of first-level and last-level vertices
  // across evaluation instances.
  double early_sum = 0.0;
  double late_sum = 0.0;
  int early_n = 0;
  int late_n = 0;
  for (const auto &r : eval_records) {
    if (r.dag_levels.empty()) continue;
    for (const auto &name : r.dag_levels.front()) {
      early_sum += final_ledger.ema_or_zero(name);
      ++early_n;
    }
    for (const auto &name : r.dag_levels.back()) {
      late_sum += final_ledger.ema_or_zero(name);
      ++late_n;
    }
  }
  if (early_n > 0 && late_n > 0) {
    a.dag_credit_defined = true;
    a.early_dag_credit = early_sum / early_n;
    a.late_dag_credit = late_sum / late_n;
  }
  return a;
}

std::string analytics_to_json(const RunAnalytics &a) {
  json j{{"lifecycle",
          {{"added", a.added},
           {"removed", a.removed},
           {"surviving_additions", a.surviving_additions},
           {"survival_rate", a.survival_defined ? json(a.survival_rate) : json()},
           {"evolved_roles_used", a.evolved_roles_used},
           {"unused_role_ratio", a.unused_role_ratio}}},
         {"diversity",
          {{"instances", a.instances},
           {"unique_active_sets", a.unique_active_sets},
           {"unique_ratio", a.unique_ratio},
           {"entropy", a.entropy},
           {"simpson", a.simpson},
           {"mean_active_roles", a.mean_active_roles}}},
         {"alignment",
          {{"credit_usage_correlation",
            a.credit_usage_defined ? json(a.credit_usage_correlation) : json()},
           {"removed_pre_credit", a.removed_pre_credit_defined
                                      ? json(a.removed_pre_credit)
                                      : json()},
           {"early_dag_credit",
            a.dag_credit_defined ? json(a.early_dag_credit) : json()},
           {"late_dag_credit",
            a.dag_credit_defined ? json(a.late_dag_credit) : json()}}},
         {"flags",
          {{"empty_episode_log", a.empty_episode_log},
           {"empty_eval_log", a.empty_eval_log}}}};
  return j.dump(2);
}

std::string format_analytics(const RunAnalytics &a) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  auto opt = [&](bool defined, double v) {
    std::ostringstream s;
    if (!defined) return std::string("--");
    s << std::fixed << std::setprecision(3) << v;
    return s.str();
  };
  out << "metric                     value\n";
  out << "added                      " << a.added << "\n";
  out << "removed                    " << a.removed << "\n";
  out << "surviving additions        " << a.surviving_additions << "\n";
  out << "survival rate              "
      << (a.survival_defined ? opt(true, 100.0 * a.survival_rate) + "%" : "--")
      << "\n";
  out << "evolved roles used         " << a.evolved_roles_used << "\n";
  out << "unused-role ratio          " << a.unused_role_ratio << "\n";
  out << "instances                  " << a.instances << "\n";
  out << "unique active sets         " << a.unique_active_sets << "\n";
  out << "unique ratio               " << a.unique_ratio << "\n";
  out << "entropy                    " << a.entropy << "\n";
  out << "simpson                    " << a.simpson << "\n";
  out << "mean active roles          " << a.mean_active_roles << "\n";
  out << "credit-usage corr.         "
      << opt(a.credit_usage_defined, a.credit_usage_correlation) << "\n";
  out << "removed pre-credit         "
      << opt(a.removed_pre_credit_defined, a.removed_pre_credit) << "\n";
  out << "early-DAG credit           " << opt(a.dag_credit_defined, a.early_dag_credit)
      << "\n";
  out << "late-DAG credit            " << opt(a.dag_credit_defined, a.late_dag_credit)
      << "\n";
  return out.str();
}

} // namespace sero
