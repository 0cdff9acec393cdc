#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "arquest/error.hpp"

namespace arquest {

using Embedding = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) const = 0;
};

// Lowercased maximal runs of ASCII letters and digits.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur += static_cast<char>(std::tolower(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline double dot(const Embedding& a, const Embedding& b) {
  double s = 0;
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw ProviderError("embedding dimensions differ");
  double na = std::sqrt(dot(a, a));
  double nb = std::sqrt(dot(b, b));
  if (na == 0 || nb == 0) return 0;
  return dot(a, b) / (na * nb);
}

inline void l2_normalize(Embedding& v) {
  double n = std::sqrt(dot(v, v));
  if (n > 0)
    for (auto& x : v) x /= n;
}

// Hashed bag-of-words term frequencies: bucket = FNV-1a(token) mod dim.
// Text without any token maps to the zero vector.
class LocalEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDimension = 256;

  explicit LocalEmbedder(std::size_t dimension = kDimension) : dim_(dimension) {}

  Embedding embed(std::string_view text) const override {
    Embedding v(dim_, 0.0);
    for (const auto& tok : tokenize(text)) v[fnv1a64(tok) % dim_] += 1.0;
    l2_normalize(v);
    return v;
  }

 private:
  std::size_t dim_;
};

}  // namespace arquest
