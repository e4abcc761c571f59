#include "sero/embedding.hpp"

#include "sero/error.hpp"
#include "sero/kernels.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>

namespace sero {

namespace {

// FNV-1a, fixed here so hashes never depend on the standard library.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

} // namespace

FeatureHashEncoder::FeatureHashEncoder(int dim) : dim_(dim) {
  if (dim <= 0) throw ConfigError("encoder dimension must be positive");
}

EmbeddingVector FeatureHashEncoder::encode(std::string_view text) const {
  EmbeddingVector v(static_cast<std::size_t>(dim_), 0.0);
  const auto tokens = tokenize(text);
  auto bump = [&](std::string_view feature, std::uint64_t seed) {
    const std::uint64_t h = fnv1a(feature, seed);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[h % static_cast<std::uint64_t>(dim_)] += sign;
  };
  for (const auto &t : tokens) bump(t, 0x1u);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    bump(tokens[i] + "\x1f" + tokens[i + 1], 0x2u);
  }
  const double norm = l2_norm(v);
  if (norm > 0.0) {
    for (double &x : v) x /= norm;
  }
  return v;
}

double l2_norm(const EmbeddingVector &v) {
  return std::sqrt(kernels::dot(v.data(), v.data(), static_cast<int>(v.size())));
}

double cosine(const EmbeddingVector &a, const EmbeddingVector &b) {
  if (a.size() != b.size()) {
    throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) +
                " vs " + std::to_string(b.size()) + ")");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double d = kernels::dot(a.data(), b.data(), static_cast<int>(a.size()));
  const double c = d / (na * nb);
  if (c > 1.0) return 1.0;
  if (c < -1.0) return -1.0;
  return c;
}

EmbeddingVector mean_embedding(const std::vector<EmbeddingVector> &vectors) {
  if (vectors.empty()) throw EmptyMean();
  const std::size_t dim = vectors.front().size();
  EmbeddingVector out(dim, 0.0);
  for (const auto &v : vectors) {
    if (v.size() != dim) throw Error("mean_embedding: dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (double &x : out) x /= n;
  return out;
}

} // namespace sero
