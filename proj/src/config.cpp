#include "sero/config.hpp"

#include "sero/error.hpp"

#include <fstream>

#include <json.hpp>

namespace sero {

namespace {

using nlohmann::json;

void apply_overrides(RunConfig &c, const json &j) {
  auto get = [&](const char *key, auto &field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("encoder_dim", c.encoder_dim);
  get("encoder_kind", c.encoder_kind);
  get("embed_base_url", c.embed_base_url);
  get("embed_model", c.embed_model);
  get("retrieval_alpha", c.retrieval_alpha);
  get("fast_credit_beta", c.fast_credit_beta);
  get("n_spec", c.n_spec);
  get("n_val", c.n_val);
  get("n_max", c.n_max);
  get("collaboration_rounds", c.collaboration_rounds);
  if (j.contains("b_in")) c.b_in_override = j["b_in"].get<int>();
  if (j.contains("b_out")) c.b_out_override = j["b_out"].get<int>();
  get("ema_mu", c.ema_mu);
  get("new_role_initial_updates", c.new_role_initial_updates);
  get("loo_refresh_interval", c.loo_refresh_interval);
  get("loo_min_pool", c.loo_min_pool);
  get("hidden_width", c.hidden_width);
  get("op_embedding_dim", c.op_embedding_dim);
  get("role_projection_dim", c.role_projection_dim);
  get("learning_rate", c.learning_rate);
  get("entropy_coef", c.entropy_coef);
  get("exploration_gamma", c.exploration_gamma);
  get("baseline_decay", c.baseline_decay);
  get("grad_clip", c.grad_clip);
  get("warmup_epochs", c.warmup_epochs);
  get("main_epochs", c.main_epochs);
  get("batch_size", c.batch_size);
  get("min_pool_size", c.min_pool_size);
  get("max_pool_size", c.max_pool_size);
  get("dominant_family_fraction", c.dominant_family_fraction);
  get("duplicate_cosine_threshold", c.duplicate_cosine_threshold);
  get("collapse_fraction", c.collapse_fraction);
  get("collapse_window", c.collapse_window);
  if (j.contains("strict_add_benchmarks")) {
    c.strict_add_benchmarks =
        j["strict_add_benchmarks"].get<std::set<std::string>>();
  }
  get("benchmark_id", c.benchmark_id);
  get("n_train", c.n_train);
  get("n_test", c.n_test);
  get("dataset_seed", c.dataset_seed);
  get("seed_pool_path", c.seed_pool_path);
  get("backend_kind", c.backend_kind);
  get("http_base_url", c.http_base_url);
  get("http_model", c.http_model);
  if (j.contains("scripted_behavior_file")) {
    c.scripted_behavior_file =
        std::filesystem::path(j["scripted_behavior_file"].get<std::string>());
  }
  get("context_char_budget", c.context_char_budget);
  get("http_max_parallel", c.http_max_parallel);
}

} // namespace

RunConfig RunConfig::profile_gpt() {
  RunConfig c;
  c.warmup_epochs = 1;
  c.main_epochs = 9;
  c.batch_size = 4;
  c.collaboration_rounds = 1;
  c.n_max = 4;
  c.n_spec = 5;
  c.n_val = 1;
  c.max_pool_size = 10;
  c.min_pool_size = 3;
  c.loo_refresh_interval = 20;
  c.loo_min_pool = 4;
  c.new_role_initial_updates = 3;
  c.entropy_coef = 0.08;
  c.learning_rate = 0.001;
  c.ema_mu = 0.05;
  c.fast_credit_beta = 0.5;
  c.exploration_gamma = 0.15;
  c.collapse_fraction = 0.85;
  c.collapse_window = 24;
  return c;
}

RunConfig RunConfig::profile_qwen() {
  RunConfig c;
  c.warmup_epochs = 2;
  c.main_epochs = 8;
  c.batch_size = 8;
  c.collaboration_rounds = 1;
  c.n_max = 4;
  c.n_spec = 3;
  c.n_val = 1;
  c.max_pool_size = 12;
  c.min_pool_size = 4;
  c.loo_refresh_interval = 40;
  c.loo_min_pool = 4;
  c.new_role_initial_updates = 3;
  c.entropy_coef = 0.05;
  c.learning_rate = 0.001;
  c.ema_mu = 0.1;
  c.fast_credit_beta = 0.5;
  c.exploration_gamma = 0.1;
  c.collapse_fraction = 0.85;
  c.collapse_window = 24;
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ConfigError("invalid config JSON: " + std::string(e.what()));
  }
  RunConfig c;
  const std::string profile = j.value("profile", std::string("gpt"));
  if (profile == "gpt") {
    c = profile_gpt();
  } else if (profile == "qwen") {
    c = profile_qwen();
  } else {
    throw ConfigError("unknown profile '" + profile + "' (use gpt or qwen)");
  }
  apply_overrides(c, j);
  return c;
}

std::string RunConfig::to_json_text() const {
  json j{{"encoder_dim", encoder_dim},
         {"encoder_kind", encoder_kind},
         {"retrieval_alpha", retrieval_alpha},
         {"fast_credit_beta", fast_credit_beta},
         {"n_spec", n_spec},
         {"n_val", n_val},
         {"n_max", n_max},
         {"collaboration_rounds", collaboration_rounds},
         {"ema_mu", ema_mu},
         {"new_role_initial_updates", new_role_initial_updates},
         {"loo_refresh_interval", loo_refresh_interval},
         {"loo_min_pool", loo_min_pool},
         {"hidden_width", hidden_width},
         {"op_embedding_dim", op_embedding_dim},
         {"role_projection_dim", role_projection_dim},
         {"learning_rate", learning_rate},
         {"entropy_coef", entropy_coef},
         {"exploration_gamma", exploration_gamma},
         {"baseline_decay", baseline_decay},
         {"grad_clip", grad_clip},
         {"warmup_epochs", warmup_epochs},
         {"main_epochs", main_epochs},
         {"batch_size", batch_size},
         {"min_pool_size", min_pool_size},
         {"max_pool_size", max_pool_size},
         {"dominant_family_fraction", dominant_family_fraction},
         {"duplicate_cosine_threshold", duplicate_cosine_threshold},
         {"collapse_fraction", collapse_fraction},
         {"collapse_window", collapse_window},
         {"strict_add_benchmarks", strict_add_benchmarks},
         {"benchmark_id", benchmark_id},
         {"n_train", n_train},
         {"n_test", n_test},
         {"dataset_seed", dataset_seed},
         {"backend_kind", backend_kind}};
  return j.dump(2);
}

} // namespace sero
