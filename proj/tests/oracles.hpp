#pragma once

// Test-only reference implementations. Written from the behavioural
// contracts, not by calling into the library, so a shared bug shows up as a
// mismatch instead of agreeing with itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "arquest/kb.hpp"

namespace oracle {

// Sum of chosen weights plus every rule whose terms all hold.
inline int brute_score(const std::map<std::string, int>& answers, const arquest::KnowledgeBase& kb) {
  int total = 0;
  for (const auto& [id, index] : answers) {
    for (const auto& f : kb.factors)
      if (f.id == id) total += f.choices.at(static_cast<std::size_t>(index)).weight;
  }
  for (const auto& rule : kb.interactions) {
    int held = 0;
    for (const auto& t : rule.condition) {
      auto it = answers.find(t.factor_id);
      if (it != answers.end() && it->second >= t.min_index) ++held;
    }
    if (held == static_cast<int>(rule.condition.size())) total += rule.bonus;
  }
  return total;
}

// Plain Lloyd iteration, labels as ranks 0..4.
inline std::vector<int> lloyd_ranks(const std::vector<double>& values, int k) {
  std::vector<double> d(values);
  std::sort(d.begin(), d.end());
  d.erase(std::unique(d.begin(), d.end()), d.end());
  int kk = std::min<int>(k, static_cast<int>(d.size()));
  if (kk == 1) return std::vector<int>(values.size(), 2);

  std::vector<double> c;
  for (int i = 0; i < kk; ++i) {
    int pos = static_cast<int>(std::floor((i + 0.5) * static_cast<double>(d.size()) / kk));
    c.push_back(d[std::min<int>(pos, static_cast<int>(d.size()) - 1)]);
  }
  std::vector<int> a(values.size(), -1);
  for (;;) {
    std::vector<int> next(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      int best = 0;
      for (int j = 1; j < kk; ++j)
        if (std::abs(values[i] - c[j]) < std::abs(values[i] - c[best])) best = j;
      next[i] = best;
    }
    if (next == a) break;
    a = next;
    for (int j = 0; j < kk; ++j) {
      double s = 0;
      int n = 0;
      for (std::size_t i = 0; i < values.size(); ++i)
        if (a[i] == j) s += values[i], ++n;
      if (n) c[j] = s / n;
    }
  }
  // Position of each cluster in ascending centroid order, lower index first on ties.
  std::vector<int> pos(kk);
  for (int j = 0; j < kk; ++j) {
    int below = 0;
    for (int o = 0; o < kk; ++o)
      if (c[o] < c[j] || (c[o] == c[j] && o < j)) ++below;
    pos[j] = below;
  }
  std::vector<int> out;
  for (int x : a) out.push_back(static_cast<int>(std::lround(pos[x] * 4.0 / (kk - 1))));
  return out;
}

// Term counts per hash bucket, with its own tokenizer and FNV-1a.
inline std::map<unsigned, long> bucket_counts(const std::string& text, unsigned dim = 256) {
  std::map<unsigned, long> out;
  std::string tok;
  auto flush = [&] {
    if (tok.empty()) return;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : tok) h = (h ^ static_cast<unsigned char>(ch)) * 0x100000001b3ULL;
    ++out[static_cast<unsigned>(h % dim)];
    tok.clear();
  };
  for (char ch : text) {
    bool alnum = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
    if (alnum)
      tok += static_cast<char>(ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch);
    else
      flush();
  }
  flush();
  return out;
}

// Exact cosine as (dot, |a|^2 * |b|^2) in integers: cos = dot / sqrt(norms).
struct ExactCosine {
  long dot = 0;
  long norms = 0;
};

inline ExactCosine exact_cosine(const std::map<unsigned, long>& a, const std::map<unsigned, long>& b) {
  ExactCosine c;
  long na = 0, nb = 0;
  for (const auto& [k, v] : a) {
    na += v * v;
    auto it = b.find(k);
    if (it != b.end()) c.dot += v * it->second;
  }
  for (const auto& [k, v] : b) nb += v * v;
  c.norms = na * nb;
  return c;
}

// a > b, for non-negative dots; a zero-norm vector has cosine 0.
inline bool exact_greater(const ExactCosine& a, const ExactCosine& b) {
  long double lhs = a.norms ? static_cast<long double>(a.dot) * a.dot * b.norms : 0;
  long double rhs = b.norms ? static_cast<long double>(b.dot) * b.dot * a.norms : 0;
  if (!a.norms || !b.norms) {
    double ca = a.norms ? a.dot / std::sqrt(static_cast<double>(a.norms)) : 0;
    double cb = b.norms ? b.dot / std::sqrt(static_cast<double>(b.norms)) : 0;
    return ca > cb;
  }
  return lhs > rhs;
}

// Ids of the top-m snippets by exact cosine, ties by id.
inline std::vector<std::string> rank_ids(const std::string& query,
                                         const std::vector<std::pair<std::string, std::string>>& id_text,
                                         std::size_t m) {
  auto q = bucket_counts(query);
  std::vector<std::pair<std::string, ExactCosine>> scored;
  for (const auto& [id, text] : id_text) scored.push_back({id, exact_cosine(q, bucket_counts(text))});
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (exact_greater(x.second, y.second)) return true;
    if (exact_greater(y.second, x.second)) return false;
    return x.first < y.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < m; ++i) out.push_back(scored[i].first);
  return out;
}

inline long double mae(const std::vector<double>& x, const std::vector<double>& y) {
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(static_cast<long double>(x[i]) - y[i]);
  return s / x.size();
}

// Textbook single-pass sums in extended precision.
inline long double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    long double a = x[i], b = y[i];
    sx += a, sy += b, sxx += a * a, syy += b * b, sxy += a * b;
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

inline long double geometric_mean(const std::vector<double>& p) {
  long double s = 0;
  for (double v : p) s += std::log(static_cast<long double>(v));
  return std::exp(s / p.size());
}

// Random valid knowledge base: up to `max_factors` scored factors split
// round-robin over the three scored categories, up to `max_rules` rules.
inline arquest::KnowledgeBase random_kb(std::mt19937_64& rng, int max_factors, int max_rules) {
  using namespace arquest;
  std::uniform_int_distribution<int> nf(1, max_factors), nc(2, 5), step(0, 6), nr(0, max_rules), bonus(1, 9);
  const Category cats[] = {Category::LifestyleHabits, Category::FamilyHistory, Category::HealthStatus};
  std::vector<RiskFactor> factors;
  int n = nf(rng);
  for (int i = 0; i < n; ++i) {
    RiskFactor f;
    f.id = "f" + std::to_string(i);
    f.category = cats[i % 3];
    f.name = "factor " + std::to_string(i);
    f.summary = "summary " + std::to_string(i);
    f.question_text = "question " + std::to_string(i) + "?";
    int choices = nc(rng), w = 0;
    for (int c = 0; c < choices; ++c) {
      f.choices.push_back({"c" + std::to_string(c), w});
      w += 1 + step(rng);
    }
    factors.push_back(std::move(f));
  }
  std::vector<InteractionRule> rules;
  if (n >= 2) {
    int r = nr(rng);
    for (int i = 0; i < r; ++i) {
      InteractionRule rule{"r" + std::to_string(i), {}, bonus(rng)};
      std::vector<int> idx(n);
      for (int j = 0; j < n; ++j) idx[j] = j;
      std::shuffle(idx.begin(), idx.end(), rng);
      int terms = std::uniform_int_distribution<int>(2, std::min(3, n))(rng);
      for (int t = 0; t < terms; ++t) {
        const auto& f = factors[idx[t]];
        int mi = std::uniform_int_distribution<int>(1, static_cast<int>(f.choices.size()) - 1)(rng);
        rule.condition.push_back({f.id, mi});
      }
      rules.push_back(std::move(rule));
    }
  }
  return KnowledgeBase(std::move(factors), std::move(rules), {});
}

inline std::map<std::string, int> random_answers(std::mt19937_64& rng, const arquest::KnowledgeBase& kb,
                                                 bool total) {
  std::map<std::string, int> out;
  for (const auto& f : kb.factors) {
    if (!total && std::uniform_int_distribution<int>(0, 2)(rng) == 0) continue;
    out[f.id] = std::uniform_int_distribution<int>(0, static_cast<int>(f.choices.size()) - 1)(rng);
  }
  return out;
}

}  // namespace oracle
