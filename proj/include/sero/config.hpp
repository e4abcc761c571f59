#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

namespace sero {

// One structured configuration covering every training/inference knob. The two
// shipped presets ("gpt" and "qwen") mirror the published hyperparameter
// profiles; individual keys can be overridden from the config file.
struct RunConfig {
  // encoder
  int encoder_dim = 512;
  std::string encoder_kind = "feature_hash"; // or "http"
  std::string embed_base_url;
  std::string embed_model;

  // retrieval / inference
  double retrieval_alpha = 0.5;   // relevance-vs-credit weight in retrieval
  double fast_credit_beta = 0.5;  // task-vs-consensus weighting in fast credit
  int n_spec = 5;                 // specialist/setup retrieval budget
  int n_val = 1;                  // validator retrieval budget
  int n_max = 4;                  // cap on the non-terminal team size
  int collaboration_rounds = 1;
  std::optional<int> b_in_override;
  std::optional<int> b_out_override;

  // credit
  double ema_mu = 0.05;
  int new_role_initial_updates = 3;
  int loo_refresh_interval = 20;
  int loo_min_pool = 4;

  // controller
  int hidden_width = 256;
  int op_embedding_dim = 64;
  int role_projection_dim = 64;
  double learning_rate = 0.001;
  double entropy_coef = 0.08;
  double exploration_gamma = 0.15;
  double baseline_decay = 0.1;
  double grad_clip = 1.0;

  // evolution / training schedule
  int warmup_epochs = 1;
  int main_epochs = 9;
  int batch_size = 4;
  int min_pool_size = 3;
  int max_pool_size = 10;
  double dominant_family_fraction = 0.5;
  double duplicate_cosine_threshold = 0.95;
  double collapse_fraction = 0.85;
  int collapse_window = 24;
  std::set<std::string> strict_add_benchmarks = {"synth-strict"};

  // benchmark
  std::string benchmark_id = "synth";
  int n_train = 30;
  int n_test = 60;
  std::uint64_t dataset_seed = 7;
  std::string seed_pool_path; // empty: use the shipped synthetic seed pool

  // backend
  std::string backend_kind = "scripted"; // or "http"
  std::string http_base_url;
  std::string http_model;
  std::optional<std::filesystem::path> scripted_behavior_file;
  std::size_t context_char_budget = 24000;
  int http_max_parallel = 4;

  static RunConfig profile_gpt();
  static RunConfig profile_qwen();
  static RunConfig from_file(const std::filesystem::path &path);

  std::string to_json_text() const;
};

} // namespace sero
