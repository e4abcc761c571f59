#include "sero/harness.hpp"

#include "sero/format.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace sero {

namespace {

std::string fold(const std::string &s) {
  std::string out = trim(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool parse_number(const std::string &s, double *out) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) return false;
    *out = v;
    return true;
  } catch (...) {
    return false;
  }
}

// Slot map for the scheduling family: "Mon=Rome,Tue=Lima" -> {Mon: Rome}.
std::vector<std::pair<std::string, std::string>>
parse_slots(const std::string &s) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream stream(s);
  std::string item;
  while (std::getline(stream, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(fold(item.substr(0, eq)), fold(item.substr(eq + 1)));
  }
  return out;
}

} // namespace

std::optional<std::string> extract_answer(const Task &task,
                                          const std::string &text) {
  return last_matching_line(text, task.answer_format);
}

ScoreChannels score_channels(const Task &task, const std::string &answer) {
  ScoreChannels s;
  const auto canonical = extract_answer(task, answer);
  if (!canonical) return s; // extraction failure scores zero on all channels

  const std::string got = fold(*canonical);
  const std::string want = fold(task.gold);

  // Exact channel; the numeric family honors a 10% relative tolerance.
  double got_v = 0.0;
  double want_v = 0.0;
  if (task.group == "arith" && parse_number(got, &got_v) &&
      parse_number(want, &want_v)) {
    const double rel =
        std::abs(got_v - want_v) / std::max(std::abs(want_v), 1e-9);
    s.exact = rel <= 0.1 ? 1.0 : 0.0;
  } else {
    s.exact = got == want ? 1.0 : 0.0;
  }

  if (task.has_partial) {
    const auto gold_slots = parse_slots(task.gold);
    const auto got_slots = parse_slots(got);
    int matched = 0;
    for (const auto &[day, city] : gold_slots) {
      for (const auto &[gday, gcity] : got_slots) {
        if (gday == day) {
          if (gcity == city) ++matched;
          break;
        }
      }
    }
    s.partial = gold_slots.empty()
                    ? 0.0
                    : static_cast<double>(matched) /
                          static_cast<double>(gold_slots.size());
    s.primary = s.partial;
  } else {
    s.partial = s.exact;
    s.primary = s.exact;
  }
  return s;
}

double score_task(const Task &task, const std::string &answer) {
  return score_channels(task, answer).primary;
}

void ScoreReport::finalize() {
  mean = 0.0;
  mean_exact = 0.0;
  mean_partial = 0.0;
  calls_per_instance = 0.0;
  tokens_per_instance = 0.0;
  group_means.clear();
  if (per_task.empty()) return;
  std::map<std::string, std::pair<double, int>> group_acc;
  for (const auto &t : per_task) {
    mean += t.score;
    mean_exact += t.exact;
    mean_partial += t.partial;
    calls_per_instance += t.calls;
    tokens_per_instance += static_cast<double>(t.tokens_in + t.tokens_out);
    auto &[sum, n] = group_acc[t.group];
    sum += t.score;
    n += 1;
  }
  const double inv = 1.0 / static_cast<double>(per_task.size());
  mean *= inv;
  mean_exact *= inv;
  mean_partial *= inv;
  calls_per_instance *= inv;
  tokens_per_instance *= inv;
  for (const auto &[g, acc] : group_acc) {
    group_means[g] = acc.first / acc.second;
  }
}

std::string format_score_report(const ScoreReport &report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "instances        " << report.per_task.size() << "\n";
  out << "mean score       " << report.mean << "\n";
  out << "mean exact       " << report.mean_exact << "\n";
  out << "mean partial     " << report.mean_partial << "\n";
  for (const auto &[g, m] : report.group_means) {
    out << "group " << std::left << std::setw(10) << g << " " << m << "\n";
  }
  out << "calls/instance   " << std::setprecision(2) << report.calls_per_instance
      << "\n";
  out << "tokens/instance  " << report.tokens_per_instance << "\n";
  return out.str();
}

ScoreReport evaluate_pool(const RolePool &pool, const CreditLedger &ledger,
                          const std::vector<Task> &tasks, Backend &backend,
                          const RunConfig &cfg, const Encoder &encoder) {
  ScoreReport report;
  report.per_task.resize(tasks.size());
  std::exception_ptr failure;

  // Tasks are independent: the ledger is read-only during evaluation, so
  // results are identical for any execution order and are merged by index.
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
    try {
      const Task &task = tasks[static_cast<std::size_t>(i)];
      InferenceResult r = kInferenceOperator(task.prompt, task.answer_format,
                                             pool, ledger, cfg, backend,
                                             encoder);
      const ScoreChannels s = score_channels(task, r.answer);
      TaskScore &ts = report.per_task[static_cast<std::size_t>(i)];
      ts.task_id = task.id;
      ts.group = task.group;
      ts.score = s.primary;
      ts.exact = s.exact;
      ts.partial = s.partial;
      ts.calls = r.call_count;
      ts.tokens_in = r.tokens_in;
      ts.tokens_out = r.tokens_out;
      ts.answer = r.answer;
      for (const auto &card : r.team.all()) ts.active_roles.push_back(card.name);
      for (const auto &level : r.dag.levels) {
        std::vector<std::string> names;
        for (int v : level) names.push_back(r.dag.order[static_cast<std::size_t>(v)]);
        ts.dag_levels.push_back(std::move(names));
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  report.finalize();
  return report;
}

} // namespace sero
