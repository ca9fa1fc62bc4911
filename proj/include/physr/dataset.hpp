#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "physr/error.hpp"
#include "physr/mcq.hpp"
#include "physr/rng.hpp"
#include "physr/text.hpp"

namespace physr::dataset {

/// Uniformly permutes option texts and relabels A.. in the new order;
/// correct_label follows the original correct text.
inline McqItem shuffle_options(const McqItem& item, SeededRng& rng) {
  const std::string& correct_text = item.correct_option().text;
  std::vector<std::size_t> order(item.options.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  McqItem out = item;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.options[i] = {label_at(i), item.options[order[i]].text};
    if (item.options[order[i]].text == correct_text) out.correct_label = label_at(i);
  }
  return out;
}

struct BalanceBucket {
  std::size_t option_count = 0;
  std::vector<std::size_t> counts;  // correct answers per position
  std::size_t total = 0;
  double max_deviation = 0.0;       // max_i |counts[i]/total - 1/k|
};

struct BalanceReport {
  std::vector<BalanceBucket> buckets;  // one per distinct option count, ascending
  std::size_t total = 0;
  double max_deviation = 0.0;          // worst bucket

  /// Counts of the single bucket when every item has the same option count.
  const std::vector<std::size_t>& counts() const {
    if (buckets.size() != 1) throw Error(ErrorCode::InvalidArgument, "report has mixed option counts");
    return buckets.front().counts;
  }
};

inline BalanceReport balance_report(std::span<const McqItem> items) {
  if (items.empty()) throw Error(ErrorCode::EmptyInput, "balance_report needs at least one item");
  std::map<std::size_t, BalanceBucket> by_k;
  for (const auto& item : items) {
    const std::size_t k = item.options.size();
    auto& bucket = by_k[k];
    if (bucket.counts.empty()) {
      bucket.option_count = k;
      bucket.counts.assign(k, 0);
    }
    const auto pos = static_cast<std::size_t>(item.correct_label - 'A');
    if (pos >= k) {
      throw Error(ErrorCode::InvalidArgument, "item " + item.id + " has correct_label outside its options");
    }
    ++bucket.counts[pos];
    ++bucket.total;
  }
  BalanceReport report;
  for (auto& [k, bucket] : by_k) {
    const double uniform = 1.0 / static_cast<double>(k);
    for (std::size_t c : bucket.counts) {
      const double frac = static_cast<double>(c) / static_cast<double>(bucket.total);
      bucket.max_deviation = std::max(bucket.max_deviation, std::abs(frac - uniform));
    }
    report.total += bucket.total;
    report.max_deviation = std::max(report.max_deviation, bucket.max_deviation);
    report.buckets.push_back(std::move(bucket));
  }
  return report;
}

struct CleanResult {
  std::string text;
  bool residual = false;  // "caption"/"description" still present after rewriting
};

/// Rewrites "the caption", "the description", "the provided caption" and
/// "the provided description" (any case, whole words) to "the video".
inline CleanResult rewrite_clean(std::string_view input) {
  static constexpr std::string_view kNouns[] = {"caption", "description"};
  const auto word_start = [](std::string_view s, std::size_t pos) {
    return pos == 0 || !text::is_alpha(s[pos - 1]);
  };
  const auto word_end = [](std::string_view s, std::size_t pos) {
    return pos >= s.size() || !text::is_alpha(s[pos]);
  };

  CleanResult result;
  std::string& out = result.text;
  std::size_t i = 0;
  while (i < input.size()) {
    std::size_t matched = 0;
    if (word_start(input, i) && text::ifind(input.substr(i, 4), "the ") == 0) {
      std::size_t p = i + 4;
      if (text::ifind(input.substr(p, 9), "provided ") == 0) p += 9;
      for (auto noun : kNouns) {
        if (text::ifind(input.substr(p, noun.size()), noun) == 0 && word_end(input, p + noun.size())) {
          matched = p + noun.size() - i;
          break;
        }
      }
    }
    if (matched) {
      out.append(input[i] == 'T' ? "The video" : "the video");
      i += matched;
    } else {
      out.push_back(input[i]);
      ++i;
    }
  }
  for (auto noun : kNouns) {
    for (std::size_t p = text::ifind(out, noun); p != std::string::npos; p = text::ifind(out, noun, p + 1)) {
      if (word_start(out, p)) {
        result.residual = true;
        break;
      }
    }
  }
  return result;
}

using SourceMap = std::map<Source, std::vector<McqItem>>;

/// Each draw picks a non-empty source uniformly, then an item uniformly
/// within it, with replacement.
inline std::vector<McqItem> sample_rl_batch(const SourceMap& sources, std::size_t batch_size,
                                            SeededRng& rng) {
  if (batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  std::vector<const std::vector<McqItem>*> pools;
  for (const auto& [source, items] : sources) {
    if (!items.empty()) pools.push_back(&items);
  }
  if (pools.empty()) throw Error(ErrorCode::AllSourcesEmpty, "no source has items");
  std::vector<McqItem> batch;
  batch.reserve(batch_size);
  for (std::size_t n = 0; n < batch_size; ++n) {
    const auto& pool = *pools[rng.uniform_below(pools.size())];
    batch.push_back(pool[rng.uniform_below(pool.size())]);
  }
  return batch;
}

inline SourceMap group_by_source(std::vector<McqItem> items) {
  SourceMap out;
  for (auto& item : items) out[item.source].push_back(std::move(item));
  return out;
}

// --- JSONL --------------------------------------------------------------

struct JsonLine {
  std::size_t line = 0;  // 1-based
  nlohmann::json value;
};

/// Parses every non-blank line; throws ParseError carrying the line number.
inline std::vector<JsonLine> read_json_lines(std::istream& in) {
  std::vector<JsonLine> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back({number, nlohmann::json::parse(line)});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(number, e.what());
    }
  }
  return out;
}

inline McqItem item_from_line(const JsonLine& line) {
  try {
    return line.value.get<McqItem>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line.line, e.what());
  } catch (const Error& e) {
    throw ParseError(line.line, e.what());
  }
}

inline std::vector<McqItem> read_items(std::istream& in) {
  std::vector<McqItem> items;
  for (const auto& line : read_json_lines(in)) items.push_back(item_from_line(line));
  return items;
}

inline void write_items(std::ostream& out, std::span<const McqItem> items) {
  for (const auto& item : items) out << nlohmann::json(item).dump() << '\n';
}

/// Opens `path` for reading; "-" selects standard input.
class InputFile {
 public:
  explicit InputFile(const std::string& path) {
    if (path == "-") return;
    file_.open(path);
    if (!file_) throw Error(ErrorCode::Io, "cannot open " + path);
  }
  std::istream& stream() { return file_.is_open() ? static_cast<std::istream&>(file_) : std::cin; }

 private:
  std::ifstream file_;
};

/// Opens `path` for writing (truncating, or appending); "-" selects standard output.
class OutputFile {
 public:
  explicit OutputFile(const std::string& path, bool append = false) {
    if (path == "-") return;
    file_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!file_) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

inline std::vector<McqItem> load_items(const std::string& path) {
  InputFile f(path);
  return read_items(f.stream());
}

inline void save_items(const std::string& path, std::span<const McqItem> items) {
  OutputFile f(path);
  write_items(f.stream(), items);
}

// --- Benchmark manifests ------------------------------------------------

struct Manifest {
  std::map<Source, std::size_t> expected_counts;
  bool has_header = false;
  std::vector<McqItem> items;
  std::vector<std::size_t> item_lines;  // source line of each item
};

enum class HeaderPolicy { Required, Optional };

/// First line: {"expected_counts": {"common_sense": 604, ...}}; then one McqItem per line.
inline Manifest read_manifest(std::istream& in, HeaderPolicy policy = HeaderPolicy::Required) {
  Manifest m;
  const auto lines = read_json_lines(in);
  std::size_t first = 0;
  if (!lines.empty() && lines.front().value.is_object() && lines.front().value.contains("expected_counts")) {
    const auto& header = lines.front();
    try {
      for (const auto& [name, count] : header.value.at("expected_counts").items()) {
        m.expected_counts[parse_source(name)] = count.get<std::size_t>();
      }
    } catch (const std::exception& e) {
      throw ParseError(header.line, std::string("bad expected_counts header: ") + e.what());
    }
    m.has_header = true;
    first = 1;
  } else if (policy == HeaderPolicy::Required) {
    throw ParseError(lines.empty() ? 1 : lines.front().line, "missing expected_counts header");
  }
  for (std::size_t i = first; i < lines.size(); ++i) {
    m.items.push_back(item_from_line(lines[i]));
    m.item_lines.push_back(lines[i].line);
  }
  return m;
}

inline Manifest load_manifest(const std::string& path, HeaderPolicy policy = HeaderPolicy::Required) {
  InputFile f(path);
  return read_manifest(f.stream(), policy);
}

inline void write_manifest(std::ostream& out, const std::map<Source, std::size_t>& expected,
                           std::span<const McqItem> items) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [s, n] : expected) counts[std::string(machine_name(s))] = n;
  out << nlohmann::json{{"expected_counts", counts}}.dump() << '\n';
  write_items(out, items);
}

struct CountMismatch {
  Source source;
  std::size_t expected = 0;
  std::size_t actual = 0;
};

struct ItemViolation {
  std::size_t line = 0;
  std::string item_id;
  std::string message;
};

struct ManifestReport {
  std::map<Source, std::size_t> counts;
  std::size_t total = 0;
  std::vector<CountMismatch> mismatches;
  std::vector<ItemViolation> violations;

  bool valid() const { return mismatches.empty() && violations.empty(); }
};

inline ManifestReport validate_manifest(const Manifest& m) {
  ManifestReport r;
  std::unordered_set<std::string_view> ids;
  ids.reserve(m.items.size());
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const auto& item = m.items[i];
    const std::size_t line = i < m.item_lines.size() ? m.item_lines[i] : 0;
    ++r.counts[item.source];
    ++r.total;
    for (auto& msg : item_violations(item)) r.violations.push_back({line, item.id, std::move(msg)});
    if (!item.id.empty() && !ids.insert(item.id).second) {
      r.violations.push_back({line, item.id, "duplicate id"});
    }
  }
  if (m.has_header) {
    std::set<Source> all;
    for (const auto& [s, n] : m.expected_counts) all.insert(s);
    for (const auto& [s, n] : r.counts) all.insert(s);
    for (Source s : all) {
      const auto e = m.expected_counts.count(s) ? m.expected_counts.at(s) : 0;
      const auto a = r.counts.count(s) ? r.counts.at(s) : 0;
      if (e != a) r.mismatches.push_back({s, e, a});
    }
  }
  return r;
}

inline nlohmann::json to_json(const ManifestReport& r) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [s, n] : r.counts) counts[std::string(machine_name(s))] = n;
  nlohmann::json mismatches = nlohmann::json::array();
  for (const auto& mm : r.mismatches) {
    mismatches.push_back({{"source", machine_name(mm.source)}, {"expected", mm.expected}, {"actual", mm.actual}});
  }
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : r.violations) {
    violations.push_back({{"line", v.line}, {"id", v.item_id}, {"message", v.message}});
  }
  return {{"valid", r.valid()}, {"total", r.total}, {"counts", counts},
          {"mismatches", mismatches}, {"violations", violations}};
}

}  // namespace physr::dataset
