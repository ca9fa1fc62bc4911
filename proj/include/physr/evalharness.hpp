#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "physr/dataset.hpp"
#include "physr/error.hpp"
#include "physr/mcq.hpp"
#include "physr/ontology.hpp"
#include "physr/reward.hpp"
#include "physr/rng.hpp"
#include "physr/rollout.hpp"

namespace physr::eval {

struct EvalRunSpec {
  std::string benchmark;  // manifest path, echoed in the report
  std::string model_label = "model";
  int n_runs = 5;
  double temperature = 0.6;
  double top_p = 0.95;
  int max_tokens = 6144;
  reward::AnswerMode answer_mode = reward::AnswerMode::LetterOrText;
  reward::Extraction extraction = reward::Extraction::Lenient;
  bool shuffle = false;
  std::uint64_t base_seed = 0;
};

inline void validate(const EvalRunSpec& s) {
  if (s.n_runs < 1) throw Error(ErrorCode::InvalidArgument, "n_runs must be >= 1");
}

/// How the overall average is formed: over common-sense categories (when
/// every item is a tagged common-sense question) or over sources.
enum class Grouping { Source, Category };

struct ErroredTrial {
  int run = 0;
  std::string item_id;
  std::string message;
};

struct EvalReport {
  std::string label;
  Grouping grouping = Grouping::Source;
  std::vector<std::map<Source, double>> per_run;
  std::vector<std::map<ontology::Category, double>> per_run_category;
  std::map<Source, double> per_source_mean;
  std::map<ontology::Category, double> per_category_mean;
  std::optional<double> overall;
  std::map<Source, std::size_t> item_counts;
  std::size_t items = 0;
  std::size_t trials = 0;
  std::size_t errored = 0;
  std::vector<ErroredTrial> errored_trials;
  nlohmann::json config = nlohmann::json::object();
};

namespace detail {

template <typename Key>
std::map<Key, double> mean_over_runs(const std::vector<std::map<Key, double>>& runs) {
  std::map<Key, double> sum;
  std::map<Key, std::size_t> n;
  for (const auto& run : runs) {
    for (const auto& [k, v] : run) {
      sum[k] += v;
      ++n[k];
    }
  }
  for (auto& [k, v] : sum) v /= static_cast<double>(n[k]);
  return sum;
}

template <typename Key>
std::optional<double> unweighted_mean(const std::map<Key, double>& m) {
  if (m.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& [k, v] : m) s += v;
  return s / static_cast<double>(m.size());
}

inline std::set<ontology::Category> categories_of(const McqItem& item) {
  std::set<ontology::Category> out;
  for (const auto& t : item.common_sense_tags) out.insert(t.category);
  return out;
}

}  // namespace detail

/// Fills means and the overall average from per-run tables.
inline void aggregate(EvalReport& r) {
  r.per_source_mean = detail::mean_over_runs(r.per_run);
  r.per_category_mean = detail::mean_over_runs(r.per_run_category);
  r.overall = r.grouping == Grouping::Category ? detail::unweighted_mean(r.per_category_mean)
                                               : detail::unweighted_mean(r.per_source_mean);
}

/// Poses every item once per run, scores the final answer by string match and
/// averages accuracies: per run, then across runs, then unweighted across
/// sources or categories. Failed requests count as incorrect.
inline EvalReport run_eval(const EvalRunSpec& spec, std::span<const McqItem> items, rollout::Client& client) {
  validate(spec);
  EvalReport report;
  report.label = spec.model_label;
  report.items = items.size();
  bool all_tagged_common_sense = !items.empty();
  for (const auto& item : items) {
    ++report.item_counts[item.source];
    if (item.source != Source::CommonSense || item.common_sense_tags.empty()) all_tagged_common_sense = false;
  }
  report.grouping = all_tagged_common_sense ? Grouping::Category : Grouping::Source;
  report.config = {{"benchmark", spec.benchmark},
                   {"model", client.config().model},
                   {"n_runs", spec.n_runs},
                   {"temperature", spec.temperature},
                   {"top_p", spec.top_p},
                   {"max_tokens", spec.max_tokens},
                   {"answer_mode", reward::machine_name(spec.answer_mode)},
                   {"extraction", spec.extraction == reward::Extraction::Lenient ? "lenient" : "strict"},
                   {"shuffle", spec.shuffle},
                   {"base_seed", spec.base_seed}};

  for (int run = 0; run < spec.n_runs; ++run) {
    const std::uint64_t seed = spec.base_seed + static_cast<std::uint64_t>(run);
    SeededRng rng(seed);
    std::vector<McqItem> presented;
    std::vector<rollout::GenerationRequest> requests;
    presented.reserve(items.size());
    for (const auto& item : items) {
      presented.push_back(spec.shuffle ? dataset::shuffle_options(item, rng) : item);
      auto req = rollout::make_mcq_request(presented.back(), item.id + "#run" + std::to_string(run), 1,
                                           spec.temperature, spec.top_p, spec.max_tokens);
      req.seed = seed;
      requests.push_back(std::move(req));
    }
    const auto results = client.generate_batch(requests);

    std::map<Source, std::size_t> correct;
    std::map<ontology::Category, std::size_t> cat_correct, cat_total;
    for (std::size_t i = 0; i < presented.size(); ++i) {
      const auto& item = presented[i];
      int score = 0;
      ++report.trials;
      if (!results[i].ok() || results[i].completions.empty()) {
        ++report.errored;
        report.errored_trials.push_back({run, item.id, results[i].error.value_or("no completion")});
      } else {
        const auto parsed = reward::parse_response(results[i].completions.front().text);
        score = reward::accuracy_reward(reward::extract_answer(parsed, item, spec.extraction), item, spec.answer_mode);
      }
      correct[item.source] += static_cast<std::size_t>(score);
      for (auto c : detail::categories_of(item)) {
        ++cat_total[c];
        cat_correct[c] += static_cast<std::size_t>(score);
      }
    }
    std::map<Source, double> acc;
    for (const auto& [source, n] : report.item_counts) {
      acc[source] = static_cast<double>(correct[source]) / static_cast<double>(n);
    }
    std::map<ontology::Category, double> cat_acc;
    for (const auto& [c, n] : cat_total) {
      cat_acc[c] = static_cast<double>(cat_correct[c]) / static_cast<double>(n);
    }
    report.per_run.push_back(std::move(acc));
    report.per_run_category.push_back(std::move(cat_acc));
  }
  aggregate(report);
  return report;
}

/// Report holding only final means, e.g. to re-render published tables.
inline EvalReport report_from_category_means(std::string label, const std::map<ontology::Category, double>& means) {
  EvalReport r;
  r.label = std::move(label);
  r.grouping = Grouping::Category;
  r.per_run_category.push_back(means);
  r.per_run.push_back({{Source::CommonSense, detail::unweighted_mean(means).value_or(0.0)}});
  aggregate(r);
  return r;
}

inline EvalReport report_from_source_means(std::string label, const std::map<Source, double>& means) {
  EvalReport r;
  r.label = std::move(label);
  r.grouping = Grouping::Source;
  r.per_run.push_back(means);
  aggregate(r);
  return r;
}

// --- Rendering ----------------------------------------------------------

enum class ReportFormat { Markdown, Csv, Json };

inline ReportFormat parse_report_format(std::string_view s) {
  if (text::iequals(s, "markdown") || text::iequals(s, "md")) return ReportFormat::Markdown;
  if (text::iequals(s, "csv")) return ReportFormat::Csv;
  if (text::iequals(s, "json")) return ReportFormat::Json;
  throw Error(ErrorCode::InvalidArgument, "report format must be markdown, csv or json");
}

inline std::string percent(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
  return buf;
}

inline nlohmann::json to_json(const EvalReport& r) {
  const auto src_map = [](const std::map<Source, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::string(machine_name(k))] = v;
    return j;
  };
  const auto cat_map = [](const std::map<ontology::Category, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::string(ontology::machine_name(k))] = v;
    return j;
  };
  nlohmann::json per_run = nlohmann::json::array();
  for (std::size_t i = 0; i < r.per_run.size(); ++i) {
    per_run.push_back({{"run", i},
                       {"per_source", src_map(r.per_run[i])},
                       {"per_category", i < r.per_run_category.size() ? cat_map(r.per_run_category[i])
                                                                      : nlohmann::json::object()}});
  }
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [k, v] : r.item_counts) counts[std::string(machine_name(k))] = v;
  nlohmann::json errored = nlohmann::json::array();
  for (const auto& e : r.errored_trials) errored.push_back({{"run", e.run}, {"id", e.item_id}, {"message", e.message}});
  return {{"label", r.label},
          {"grouping", r.grouping == Grouping::Category ? "category" : "source"},
          {"per_run", per_run},
          {"per_source_mean", src_map(r.per_source_mean)},
          {"per_category_mean", cat_map(r.per_category_mean)},
          {"overall", r.overall ? nlohmann::json(*r.overall) : nlohmann::json()},
          {"counts", {{"items", r.items}, {"trials", r.trials}, {"errored", r.errored}, {"per_source", counts}}},
          {"errored_trials", errored},
          {"config", r.config}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.label = j.value("label", std::string("model"));
    r.grouping = j.value("grouping", std::string("source")) == "category" ? Grouping::Category : Grouping::Source;
    for (const auto& run : j.at("per_run")) {
      std::map<Source, double> ps;
      for (const auto& [k, v] : run.at("per_source").items()) ps[parse_source(k)] = v.get<double>();
      r.per_run.push_back(std::move(ps));
      std::map<ontology::Category, double> pc;
      if (run.contains("per_category")) {
        for (const auto& [k, v] : run.at("per_category").items()) {
          const auto c = ontology::find_category(k);
          if (!c) throw Error(ErrorCode::UnknownCategory, k);
          pc[*c] = v.get<double>();
        }
      }
      r.per_run_category.push_back(std::move(pc));
    }
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      r.items = c.value("items", std::size_t{0});
      r.trials = c.value("trials", std::size_t{0});
      r.errored = c.value("errored", std::size_t{0});
      if (c.contains("per_source")) {
        for (const auto& [k, v] : c.at("per_source").items()) r.item_counts[parse_source(k)] = v.get<std::size_t>();
      }
    }
    if (j.contains("config")) r.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("bad report: ") + e.what());
  }
  aggregate(r);
  return r;
}

namespace detail {

struct Column {
  std::string title;
  std::string key;
  std::optional<double> (*get)(const EvalReport&, int);
  int index;
};

inline std::vector<Column> columns_for(std::span<const EvalReport> reports) {
  std::vector<Column> cols;
  const bool by_category =
      !reports.empty() && std::all_of(reports.begin(), reports.end(),
                                      [](const EvalReport& r) { return r.grouping == Grouping::Category; });
  if (by_category) {
    for (auto c : ontology::kCategories) {
      cols.push_back({std::string(ontology::display_name(c)), std::string(ontology::machine_name(c)),
                      [](const EvalReport& r, int i) -> std::optional<double> {
                        const auto it = r.per_category_mean.find(static_cast<ontology::Category>(i));
                        if (it == r.per_category_mean.end()) return std::nullopt;
                        return it->second;
                      },
                      static_cast<int>(c)});
    }
    return cols;
  }
  std::set<Source> present;
  for (const auto& r : reports) {
    for (const auto& [s, v] : r.per_source_mean) present.insert(s);
  }
  for (Source s : present) {
    cols.push_back({std::string(display_name(s)), std::string(machine_name(s)),
                    [](const EvalReport& r, int i) -> std::optional<double> {
                      const auto it = r.per_source_mean.find(static_cast<Source>(i));
                      if (it == r.per_source_mean.end()) return std::nullopt;
                      return it->second;
                    },
                    static_cast<int>(s)});
  }
  return cols;
}

}  // namespace detail

/// One row per report; group columns, then "Avg.", item count and run count.
/// Accuracies are percentages with one decimal; missing values read "n/a".
inline std::string render_reports(std::span<const EvalReport> reports, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    return (reports.size() == 1 ? arr.front() : arr).dump(2) + "\n";
  }
  const auto cols = detail::columns_for(reports);
  std::string out;
  if (format == ReportFormat::Markdown) {
    out += "| Model |";
    for (const auto& c : cols) out += " " + c.title + " |";
    out += " Avg. | Items | Runs |\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out += "---|";
    out += "---|---|---|\n";
    for (const auto& r : reports) {
      out += "| " + r.label + " |";
      for (const auto& c : cols) out += " " + percent(c.get(r, c.index)) + " |";
      out += " " + percent(r.overall) + " | " + std::to_string(r.items) + " | " + std::to_string(r.per_run.size()) +
             " |\n";
    }
    return out;
  }
  out += "model";
  for (const auto& c : cols) out += "," + c.key;
  out += ",avg,items,runs\n";
  for (const auto& r : reports) {
    out += r.label;
    for (const auto& c : cols) out += "," + percent(c.get(r, c.index));
    out += "," + percent(r.overall) + "," + std::to_string(r.items) + "," + std::to_string(r.per_run.size()) + "\n";
  }
  return out;
}

inline std::string render_report(const EvalReport& report, ReportFormat format) {
  return render_reports(std::span<const EvalReport>(&report, 1), format);
}

}  // namespace physr::eval
