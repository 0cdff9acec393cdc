#pragma once

// Municipality health indicators and their ordinal labelling by 1-D k-means.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "arquest/error.hpp"
#include "arquest/kb.hpp"

namespace arquest {

enum class Polarity { HighIsAdverse, HighIsFavorable };

inline const std::vector<std::string>& indicator_categories() {
  static const std::vector<std::string> k{"mortality",     "morbidity",   "healthcare",
                                          "lifestyle",     "education",   "socioeconomic",
                                          "environment",   "infrastructure", "security"};
  return k;
}

struct IndicatorDef {
  std::string id;
  std::string category;
  Polarity polarity = Polarity::HighIsAdverse;

  bool operator==(const IndicatorDef&) const = default;
};

enum class OrdinalLabel { VeryLow = 0, Low = 1, Moderate = 2, High = 3, VeryHigh = 4 };

inline int rank(OrdinalLabel l) { return static_cast<int>(l); }

inline OrdinalLabel label_from_rank(int r) {
  if (r < 0 || r > 4) throw ValidationError("ordinal rank out of range");
  return static_cast<OrdinalLabel>(r);
}

inline std::string_view to_string(OrdinalLabel l) {
  switch (l) {
    case OrdinalLabel::VeryLow: return "very low";
    case OrdinalLabel::Low: return "low";
    case OrdinalLabel::Moderate: return "moderate";
    case OrdinalLabel::High: return "high";
    case OrdinalLabel::VeryHigh: return "very high";
  }
  return "?";
}

inline OrdinalLabel label_from_string(std::string_view s) {
  for (int r = 0; r <= 4; ++r)
    if (to_string(static_cast<OrdinalLabel>(r)) == s) return static_cast<OrdinalLabel>(r);
  throw ParseError("unknown ordinal label '" + std::string(s) + "'");
}

struct IndicatorTable {
  std::vector<IndicatorDef> defs;
  std::vector<std::string> municipalities;  // CSV row order
  std::map<std::pair<std::string, std::string>, double> values;  // (municipality, indicator)

  const IndicatorDef* def(std::string_view id) const {
    for (const auto& d : defs)
      if (d.id == id) return &d;
    return nullptr;
  }
  std::optional<double> value(const std::string& municipality, const std::string& indicator) const {
    auto it = values.find({municipality, indicator});
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
};

struct RegionProfile {
  std::string municipality;
  std::map<std::string, OrdinalLabel> labels;
  std::set<std::string> adverse_ids;

  bool operator==(const RegionProfile&) const = default;
};

// ---------------------------------------------------------------------------
// Labelling

// Lloyd's k-means on the real line. Centroids start at the (i + 0.5)/k'
// nearest-rank quantiles of the sorted distinct values, so the result is
// deterministic. Output labels follow input order.
inline std::vector<OrdinalLabel> label_values(const std::vector<double>& values, int k = 5) {
  if (values.empty()) throw EmptyInput("label_values: no values");
  if (k < 1) throw ConfigError("label_values: k must be at least 1");

  std::vector<double> distinct = values;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const std::size_t d = distinct.size();
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), d);
  if (kk == 1) return std::vector<OrdinalLabel>(values.size(), OrdinalLabel::Moderate);

  std::vector<double> centroids(kk);
  for (std::size_t i = 0; i < kk; ++i) {
    auto pos = static_cast<std::size_t>(std::floor((static_cast<double>(i) + 0.5) *
                                                   static_cast<double>(d) /
                                                   static_cast<double>(kk)));
    centroids[i] = distinct[std::min(pos, d - 1)];
  }

  auto nearest = [&](double v) {
    std::size_t best = 0;
    double best_dist = std::abs(v - centroids[0]);
    for (std::size_t c = 1; c < kk; ++c) {
      double dist = std::abs(v - centroids[c]);
      if (dist < best_dist) {
        best = c;
        best_dist = dist;
      }
    }
    return best;
  };

  std::vector<std::size_t> assign(values.size(), kk);
  constexpr int kMaxIterations = 1000;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::size_t c = nearest(values[i]);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<double> sum(kk, 0.0);
    std::vector<std::size_t> count(kk, 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum[assign[i]] += values[i];
      ++count[assign[i]];
    }
    for (std::size_t c = 0; c < kk; ++c)
      if (count[c] > 0) centroids[c] = sum[c] / static_cast<double>(count[c]);
  }

  // Rank clusters by centroid; stable so equal centroids keep index order.
  std::vector<std::size_t> order(kk);
  for (std::size_t c = 0; c < kk; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return centroids[a] < centroids[b]; });
  std::vector<int> cluster_rank(kk);
  for (std::size_t j = 0; j < kk; ++j) {
    cluster_rank[order[j]] = static_cast<int>(
        std::lround(static_cast<double>(j) * 4.0 / static_cast<double>(kk - 1)));
  }

  std::vector<OrdinalLabel> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = label_from_rank(cluster_rank[assign[i]]);
  return out;
}

inline bool is_adverse(Polarity p, OrdinalLabel l) {
  return p == Polarity::HighIsAdverse ? rank(l) >= 3 : rank(l) <= 1;
}

// Labels every indicator column across all municipalities at once.
inline std::vector<RegionProfile> region_profiles(const IndicatorTable& table, int k = 5) {
  std::map<std::string, RegionProfile> by_name;
  for (const auto& m : table.municipalities) by_name[m].municipality = m;
  for (const auto& def : table.defs) {
    std::vector<std::string> who;
    std::vector<double> column;
    for (const auto& m : table.municipalities) {
      if (auto v = table.value(m, def.id)) {
        who.push_back(m);
        column.push_back(*v);
      }
    }
    if (column.empty()) continue;
    auto labels = label_values(column, k);
    for (std::size_t i = 0; i < who.size(); ++i) {
      auto& p = by_name[who[i]];
      p.labels[def.id] = labels[i];
      if (is_adverse(def.polarity, labels[i])) p.adverse_ids.insert(def.id);
    }
  }
  std::vector<RegionProfile> out;
  for (const auto& m : table.municipalities) out.push_back(by_name[m]);
  return out;
}

inline RegionProfile region_profile(const IndicatorTable& table, const std::string& municipality,
                                    int k = 5) {
  if (std::find(table.municipalities.begin(), table.municipalities.end(), municipality) ==
      table.municipalities.end())
    throw UnknownMunicipality("unknown municipality '" + municipality + "'");
  for (auto& p : region_profiles(table, k))
    if (p.municipality == municipality) return p;
  throw UnknownMunicipality("unknown municipality '" + municipality + "'");
}

// Severity of an adverse label once polarity is folded in: 2 for the extreme
// label, 1 for the next one, 0 when not adverse.
inline int adverse_severity(const RegionProfile& region, const std::string& indicator) {
  if (!region.adverse_ids.count(indicator)) return 0;
  auto it = region.labels.find(indicator);
  if (it == region.labels.end()) return 0;
  int r = rank(it->second);
  return (r == 0 || r == 4) ? 2 : 1;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += ch;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field");
  out.push_back(cell);
  return out;
}

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace detail

inline Polarity polarity_from_string(std::string_view s) {
  if (s == "HighIsAdverse") return Polarity::HighIsAdverse;
  if (s == "HighIsFavorable") return Polarity::HighIsFavorable;
  throw ParseError("unknown polarity '" + std::string(s) + "'");
}

inline std::string_view to_string(Polarity p) {
  return p == Polarity::HighIsAdverse ? "HighIsAdverse" : "HighIsFavorable";
}

inline std::vector<IndicatorDef> indicator_defs_from_json(const json& doc) {
  if (!doc.is_array()) throw ParseError("indicator defs: expected a JSON list");
  std::vector<IndicatorDef> defs;
  std::set<std::string> ids;
  const auto& cats = indicator_categories();
  for (const auto& j : doc) {
    IndicatorDef d;
    d.id = detail::require<std::string>(j, "id", "indicator");
    d.category = detail::require<std::string>(j, "category", "indicator '" + d.id + "'");
    d.polarity = polarity_from_string(
        detail::require<std::string>(j, "polarity", "indicator '" + d.id + "'"));
    if (std::find(cats.begin(), cats.end(), d.category) == cats.end())
      throw ValidationError("indicator '" + d.id + "': unknown category '" + d.category + "'");
    if (!ids.insert(d.id).second) throw ValidationError("duplicate indicator id '" + d.id + "'");
    defs.push_back(std::move(d));
  }
  return defs;
}

inline std::vector<IndicatorDef> load_indicator_defs(const std::string& path) {
  return indicator_defs_from_json(read_json_file(path));
}

inline IndicatorTable parse_indicators(std::istream& in, const std::vector<IndicatorDef>& defs) {
  IndicatorTable table;
  table.defs = defs;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("indicator CSV: empty input");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.empty() || detail::trim(header[0]) != "municipality")
    throw ParseError("indicator CSV: first column must be 'municipality'");
  std::vector<std::string> columns;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto id = detail::trim(header[c]);
    if (!table.def(id)) throw UnknownIndicator(id);
    columns.push_back(id);
  }
  std::size_t line_no = 1;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("indicator CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells");
    auto name = detail::trim(cells[0]);
    if (name.empty()) throw ParseError("indicator CSV line " + std::to_string(line_no) + ": empty municipality");
    if (!seen.insert(name).second) throw ParseError("indicator CSV: duplicate municipality '" + name + "'");
    table.municipalities.push_back(name);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      auto cell = detail::trim(cells[c + 1]);
      if (cell.empty()) continue;
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cell.size() || !std::isfinite(v))
        throw ParseError("indicator CSV line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      table.values[{name, columns[c]}] = v;
    }
  }
  return table;
}

inline IndicatorTable ingest_indicators(const std::string& path, const std::vector<IndicatorDef>& defs) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_indicators(in, defs);
}

// ---------------------------------------------------------------------------
// Region profile JSON

inline json to_json(const RegionProfile& p) {
  json labels = json::object();
  for (const auto& [id, l] : p.labels) labels[id] = std::string(to_string(l));
  return json{{"municipality", p.municipality}, {"labels", labels}, {"adverse_ids", p.adverse_ids}};
}

inline RegionProfile region_profile_from_json(const json& j) {
  RegionProfile p;
  p.municipality = detail::require<std::string>(j, "municipality", "region profile");
  const std::string where = "region '" + p.municipality + "'";
  const json labels = detail::require<json>(j, "labels", where);
  for (const auto& [id, l] : labels.items())
    p.labels[id] = label_from_string(l.get<std::string>());
  for (const auto& id : detail::require<std::vector<std::string>>(j, "adverse_ids", where)) {
    if (!p.labels.count(id)) throw ValidationError(where + ": adverse id '" + id + "' has no label");
    p.adverse_ids.insert(id);
  }
  return p;
}

// Labelled regions keyed by municipality; what synth, eval and the service consume.
using RegionIndex = std::map<std::string, RegionProfile>;

inline json region_index_to_json(const std::vector<RegionProfile>& profiles) {
  json out = json::array();
  for (const auto& p : profiles) out.push_back(to_json(p));
  return out;
}

inline RegionIndex region_index_from_json(const json& doc) {
  if (!doc.is_array()) throw ParseError("region profiles: expected a JSON list");
  RegionIndex out;
  for (const auto& j : doc) {
    auto p = region_profile_from_json(j);
    auto name = p.municipality;
    out.emplace(std::move(name), std::move(p));
  }
  return out;
}

inline RegionIndex load_region_index(const std::string& path) {
  return region_index_from_json(read_json_file(path));
}

}  // namespace arquest
