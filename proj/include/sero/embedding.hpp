#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace sero {

// Fixed-length real vector produced by the run's shared text encoder. The
// dimension is run-global configuration; mixing dimensions is a bug.
using EmbeddingVector = std::vector<double>;

class Encoder {
public:
  virtual ~Encoder() = default;
  virtual EmbeddingVector encode(std::string_view text) const = 0;
  virtual int dim() const = 0;
};

// Default deterministic encoder: signed feature hashing of word unigrams and
// bigrams into `dim` buckets, L2-normalized. Dependency-free and stable across
// processes, so similar text maps to coarsely similar vectors without a model.
class FeatureHashEncoder : public Encoder {
public:
  explicit FeatureHashEncoder(int dim = 512);
  EmbeddingVector encode(std::string_view text) const override;
  int dim() const override { return dim_; }

private:
  int dim_;
};

struct HttpEncoderConfig {
  std::string base_url;
  std::string model;
  int dim = 512;
  std::string api_key_env = "SERO_EMBED_API_KEY";
  int max_retries = 3;
  double base_delay_s = 0.5;
};

// Remote encoder speaking the {model, input:[...]} -> {data:[{embedding}]}
// embeddings protocol. Same stateless contract as the hash encoder; transport
// failures surface as BackendError.
class HttpEncoder : public Encoder {
public:
  explicit HttpEncoder(HttpEncoderConfig config);
  ~HttpEncoder() override;
  EmbeddingVector encode(std::string_view text) const override;
  int dim() const override;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Standard cosine similarity; defined as 0 when either vector has zero norm.
double cosine(const EmbeddingVector &a, const EmbeddingVector &b);

// Per-coordinate arithmetic mean, not re-normalized. Throws EmptyMean.
EmbeddingVector mean_embedding(const std::vector<EmbeddingVector> &vectors);

double l2_norm(const EmbeddingVector &v);

} // namespace sero
