#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "physr/dataset.hpp"
#include "physr/error.hpp"
#include "physr/evalharness.hpp"
#include "physr/grpo_loop.hpp"
#include "physr/mcq.hpp"
#include "physr/mock_endpoint.hpp"
#include "physr/reward.hpp"
#include "physr/rng.hpp"
#include "physr/rollout.hpp"
#include "physr/synthetic.hpp"
#include "physr/taskgen.hpp"
#include "physr/toml.hpp"

namespace physr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

enum class LogLevel { Error, Warn, Info, Debug };

class Log {
 public:
  Log(std::ostream& err, LogLevel level) : err_(err), level_(level) {}
  void warn(const std::string& m) const { emit(LogLevel::Warn, "warn", m); }
  void info(const std::string& m) const { emit(LogLevel::Info, "info", m); }
  void debug(const std::string& m) const { emit(LogLevel::Debug, "debug", m); }

 private:
  void emit(LogLevel at, const char* tag, const std::string& m) const {
    if (level_ >= at) err_ << "[" << tag << "] " << m << '\n';
  }
  std::ostream& err_;
  LogLevel level_;
};

inline LogLevel parse_log_level(std::string_view s) {
  if (s == "error") return LogLevel::Error;
  if (s == "warn") return LogLevel::Warn;
  if (s == "info") return LogLevel::Info;
  if (s == "debug") return LogLevel::Debug;
  throw Error(ErrorCode::InvalidArgument, "log level must be error, warn, info or debug");
}

namespace detail {

// Config-file lookup: `[section] key` first, then a top-level `key`.
class ConfigFile {
 public:
  ConfigFile() = default;
  explicit ConfigFile(nlohmann::json root) : root_(std::move(root)) {}

  const nlohmann::json* find(std::string_view section, const std::string& key) const {
    if (!section.empty()) {
      const auto s = root_.find(std::string(section));
      if (s != root_.end() && s->is_object() && s->contains(key)) return &(*s)[key];
    }
    const auto it = root_.find(key);
    if (it != root_.end() && !it->is_object()) return &*it;
    return nullptr;
  }

  // Assigns the config value unless the flag was given on the command line.
  template <typename T>
  void fill(std::string_view section, const std::string& key, const CLI::Option* flag, T& var) const {
    if (flag && flag->count() > 0) return;
    const auto* v = find(section, key);
    if (!v) return;
    try {
      var = v->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' has the wrong type");
    }
  }

 private:
  nlohmann::json root_ = nlohmann::json::object();
};

// Writes through `out` for "-", else to the named file.
inline void write_output(const std::string& path, std::ostream& out, const std::function<void(std::ostream&)>& body) {
  if (path == "-") {
    body(out);
    out.flush();
    return;
  }
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  body(f);
  if (!f.flush()) throw Error(ErrorCode::Io, "cannot write " + path);
}

inline void write_jsonl(std::ostream& os, const std::vector<nlohmann::json>& lines) {
  for (const auto& j : lines) os << j.dump() << '\n';
}

inline std::string numbered(const char* prefix, std::size_t n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, n);
  return buf;
}

inline reward::RewardWeights parse_weights(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw Error(ErrorCode::InvalidArgument, "weights must be ACCURACY,FORMAT");
  try {
    std::size_t a_used = 0, f_used = 0;
    const std::string a(text::trim(s.substr(0, comma))), f(text::trim(s.substr(comma + 1)));
    reward::RewardWeights w{std::stod(a, &a_used), std::stod(f, &f_used)};
    if (a_used != a.size() || f_used != f.size()) throw std::invalid_argument(s);
    if (w.accuracy < 0.0 || w.format < 0.0) throw Error(ErrorCode::InvalidArgument, "reward weights must be non-negative");
    return w;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "weights must be ACCURACY,FORMAT numbers, got '" + s + "'");
  }
}

// A client plus, for mock:rigged:<p> endpoints, the in-process mock behind it.
struct Endpoint {
  std::shared_ptr<rollout::MockEndpoint> mock;
  std::unique_ptr<rollout::Client> client;
};

inline Endpoint open_endpoint(const std::string& spec, rollout::EndpointConfig config, std::uint64_t seed,
                              std::span<const McqItem> answer_key) {
  Endpoint e;
  constexpr std::string_view kRigged = "mock:rigged:";
  if (spec.rfind(kRigged, 0) == 0) {
    double p = 0.0;
    try {
      std::size_t used = 0;
      const std::string tail = spec.substr(kRigged.size());
      p = std::stod(tail, &used);
      if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "mock endpoint must be mock:rigged:<p>");
    }
    rollout::MockBehavior behavior;
    behavior.mode = rollout::MockMode::Rigged;
    behavior.p = p;
    behavior.seed = seed;
    e.mock = std::make_shared<rollout::MockEndpoint>(behavior);
    e.mock->add_answer_keys(answer_key);
    config.base_url = "mock://rigged/v1";
    config.auth_token_env.clear();
    e.client = std::make_unique<rollout::Client>(config, std::make_shared<rollout::MockTransport>(e.mock));
    return e;
  }
  if (spec.rfind("mock:", 0) == 0) throw Error(ErrorCode::InvalidArgument, "mock endpoint must be mock:rigged:<p>");
  config.base_url = spec;
  e.client = std::make_unique<rollout::Client>(
      config, std::make_shared<rollout::HttpTransport>(rollout::parse_base_url(spec).origin));
  return e;
}

struct EndpointFlags {
  std::string model = "default";
  std::string auth_env;
  double timeout_seconds = 600.0;
  int max_retries = 3;
  int max_in_flight = 16;
  CLI::Option* model_opt = nullptr;
  CLI::Option* auth_opt = nullptr;
  CLI::Option* timeout_opt = nullptr;
  CLI::Option* retries_opt = nullptr;
  CLI::Option* in_flight_opt = nullptr;

  void add_to(CLI::App* app) {
    model_opt = app->add_option("--model", model, "Model name sent to the endpoint");
    auth_opt = app->add_option("--auth-env", auth_env, "Environment variable holding the bearer token");
    timeout_opt = app->add_option("--timeout", timeout_seconds, "Per-request timeout in seconds");
    retries_opt = app->add_option("--max-retries", max_retries, "Retries on 429/5xx/transport errors");
    in_flight_opt = app->add_option("--max-in-flight", max_in_flight, "Concurrent request cap");
  }

  rollout::EndpointConfig resolve(const ConfigFile& cfg) {
    cfg.fill("endpoint", "model", model_opt, model);
    cfg.fill("endpoint", "auth_env", auth_opt, auth_env);
    cfg.fill("endpoint", "timeout_seconds", timeout_opt, timeout_seconds);
    cfg.fill("endpoint", "max_retries", retries_opt, max_retries);
    cfg.fill("endpoint", "max_in_flight", in_flight_opt, max_in_flight);
    rollout::EndpointConfig c;
    c.model = model;
    c.auth_token_env = auth_env;
    c.timeout_seconds = timeout_seconds;
    c.max_retries = max_retries;
    c.max_in_flight = max_in_flight;
    return c;
  }
};

}  // namespace detail

/// Parses argv, runs one subcommand and returns the process exit code:
/// 0 success, 1 domain error, 2 usage error.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Physical-reasoning MCQ data, reward, evaluation and GRPO loop tools", "physr"};
  app.fallthrough(true);
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string config_path;
  std::string log_level = "warn";
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every random draw");
  app.add_option("--config", config_path, "TOML config; command-line flags take precedence")->check(CLI::ExistingFile);
  auto* log_opt = app.add_option("--log-level", log_level, "error|warn|info|debug")
                      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  // gen
  auto* gen = app.add_subcommand("gen", "Generate self-supervised MCQs");
  gen->require_subcommand(1);
  std::string gen_out = "-", gen_truth;
  std::size_t gen_count = 1;

  auto* puzzle = gen->add_subcommand("puzzle", "Spatial patch puzzles from synthetic images");
  std::size_t distractors = 7;
  std::string puzzle_task = "direction", direction_name;
  int same_k = 3;
  puzzle->add_option("--distractors", distractors, "Distractor images per puzzle")->check(CLI::Range(1, 1000));
  puzzle->add_option("--count", gen_count, "Puzzles to generate");
  puzzle->add_option("--task", puzzle_task, "direction|same_image|mixed")
      ->check(CLI::IsMember({"direction", "same_image", "mixed"}));
  puzzle->add_option("--direction", direction_name, "Fix the asked direction (default: random)")
      ->check(CLI::IsMember({"left", "right", "top", "bottom"}));
  puzzle->add_option("--k", same_k, "Frames per same-image answer (2 or 3)")->check(CLI::IsMember({2, 3}));
  puzzle->add_option("--out", gen_out, "Output JSONL ('-' for stdout)");
  puzzle->add_option("--truth", gen_truth, "Sidecar JSONL with frame provenance");

  auto* aot = gen->add_subcommand("aot", "Arrow-of-time MCQs");
  std::string clips_path;
  aot->add_option("--clips", clips_path, "JSONL clip records {clip_id, playback, motion_summary}");
  aot->add_option("--count", gen_count, "Synthetic forward clips when --clips is absent");
  aot->add_option("--out", gen_out, "Output JSONL ('-' for stdout)");
  aot->add_option("--truth", gen_truth, "Sidecar JSONL with presented clip records");

  auto* perm = gen->add_subcommand("permanence", "Object-permanence MCQs from simulated scene logs");
  taskgen::PermanenceConfig perm_config;
  perm->add_option("--count", gen_count, "Scenes to generate");
  perm->add_option("--objects", perm_config.object_count, "Objects per scene")->check(CLI::Range(1, 12));
  perm->add_option("--occlusion-prob", perm_config.occlusion_probability)->check(CLI::Range(0.0, 1.0));
  perm->add_option("--removal-prob", perm_config.removal_probability)->check(CLI::Range(0.0, 1.0));
  perm->add_option("--out", gen_out, "Output JSONL ('-' for stdout)");
  perm->add_option("--truth", gen_truth, "Sidecar JSONL with scene event logs");

  auto* bench = gen->add_subcommand("benchmark", "Placeholder manifest with the published per-source counts");
  bench->add_option("--out", gen_out, "Output manifest ('-' for stdout)");

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check a benchmark manifest");
  std::string manifest_path;
  bool require_header = false;
  validate_cmd->add_option("--manifest", manifest_path, "Manifest JSONL ('-' for stdin)")->required();
  validate_cmd->add_flag("--require-header", require_header, "Fail when the expected_counts header is absent");

  // score
  auto* score = app.add_subcommand("score", "Rewards and group advantages for recorded responses");
  std::string responses_path, dataset_path, score_out = "-", format_mode = "strict", answer_mode = "letter_or_text",
                                             weights = "1.0,0.1";
  std::size_t group_size = 9;
  score->add_option("--responses", responses_path, "JSONL {question_id, response}")->required();
  score->add_option("--dataset", dataset_path, "MCQ JSONL or manifest")->required();
  score->add_option("--group-size", group_size, "Responses per group")->check(CLI::Range(2, 1 << 20));
  score->add_option("--format", format_mode, "strict|lenient")->check(CLI::IsMember({"strict", "lenient"}));
  score->add_option("--mode", answer_mode, "letter_or_text|exact_set")
      ->check(CLI::IsMember({"letter_or_text", "exact_set"}));
  score->add_option("--weights", weights, "ACCURACY,FORMAT reward weights");
  score->add_option("--out", score_out, "Output JSONL ('-' for stdout)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate an endpoint on a manifest");
  eval::EvalRunSpec spec;
  std::string eval_endpoint, eval_out, eval_format = "markdown", eval_answer_mode = "letter_or_text",
                                       eval_extraction = "lenient";
  detail::EndpointFlags eval_ep;
  eval_cmd->add_option("--manifest", spec.benchmark, "Manifest JSONL")->required();
  eval_cmd->add_option("--endpoint", eval_endpoint, "Base URL, or mock:rigged:<p>")->required();
  auto* runs_opt = eval_cmd->add_option("--runs", spec.n_runs, "Independent runs")->check(CLI::PositiveNumber);
  auto* temp_opt = eval_cmd->add_option("--temperature", spec.temperature);
  auto* top_p_opt = eval_cmd->add_option("--top-p", spec.top_p);
  auto* eval_tokens_opt = eval_cmd->add_option("--max-tokens", spec.max_tokens);
  auto* label_opt = eval_cmd->add_option("--label", spec.model_label, "Row label in rendered reports");
  auto* shuffle_opt = eval_cmd->add_flag("--shuffle", spec.shuffle, "Shuffle options per run");
  auto* eval_mode_opt = eval_cmd->add_option("--mode", eval_answer_mode, "letter_or_text|exact_set")
                            ->check(CLI::IsMember({"letter_or_text", "exact_set"}));
  auto* extraction_opt = eval_cmd->add_option("--extraction", eval_extraction, "strict|lenient")
                             ->check(CLI::IsMember({"strict", "lenient"}));
  eval_cmd->add_option("--out", eval_out, "Report file ('-' for stdout)");
  auto* eval_format_opt = eval_cmd->add_option("--format", eval_format, "markdown|csv|json (default: from --out extension)")
                              ->check(CLI::IsMember({"markdown", "csv", "json"}));
  eval_ep.add_to(eval_cmd);

  // grpo
  auto* grpo_cmd = app.add_subcommand("grpo", "Simulated GRPO iterations against an endpoint");
  grpo::LoopConfig loop;
  std::string grpo_endpoint, grpo_out, grpo_data, checkpoint_path, policy_log, events_log;
  std::string grpo_format = "strict", grpo_mode = "letter_or_text", grpo_weights;
  std::optional<std::size_t> stop_after;
  detail::EndpointFlags grpo_ep;
  grpo_cmd->add_option("--endpoint", grpo_endpoint, "Base URL, or mock:rigged:<p>")->required();
  grpo_cmd->add_option("--out", grpo_out, "Metrics JSONL (one line per iteration)")->required();
  auto* data_opt = grpo_cmd->add_option("--data", grpo_data, "RL question pool (MCQ JSONL or manifest)");
  auto* ckpt_opt = grpo_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint (default: loop.ckpt beside --out)");
  auto* iter_opt = grpo_cmd->add_option("--iterations", loop.iterations);
  auto* bq_opt = grpo_cmd->add_option("--batch-questions", loop.batch_questions);
  auto* gs_opt = grpo_cmd->add_option("--group-size", loop.group_size);
  auto* gtok_opt = grpo_cmd->add_option("--max-tokens", loop.max_tokens);
  auto* gfmt_opt = grpo_cmd->add_option("--format", grpo_format, "strict|lenient")
                       ->check(CLI::IsMember({"strict", "lenient"}));
  auto* gw_opt = grpo_cmd->add_option("--weights", grpo_weights, "ACCURACY,FORMAT reward weights");
  grpo_cmd->add_option("--policy-log", policy_log, "JSONL of recorded policy updates");
  grpo_cmd->add_option("--events-log", events_log, "JSONL of stage events");
  grpo_cmd->add_option("--stop-after", stop_after, "Run at most this many iterations, then exit");
  grpo_ep.add_to(grpo_cmd);

  // report
  auto* report_cmd = app.add_subcommand("report", "Render saved evaluation reports as one table");
  std::vector<std::string> report_inputs;
  std::string report_format = "markdown", report_out = "-";
  report_cmd->add_option("--in", report_inputs, "Report JSON files from eval --out")->required();
  report_cmd->add_option("--format", report_format, "markdown|csv|json")
      ->check(CLI::IsMember({"markdown", "csv", "json"}));
  report_cmd->add_option("--out", report_out, "Output ('-' for stdout)");

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    detail::ConfigFile cfg;
    if (!config_path.empty()) cfg = detail::ConfigFile(toml::parse_file(config_path));
    cfg.fill("", "seed", seed_opt, seed);
    cfg.fill("", "log_level", log_opt, log_level);
    const Log log(err, parse_log_level(log_level));
    log.debug("seed " + std::to_string(seed));

    if (bench->parsed()) {
      const auto items = synthetic::benchmark_items(seed);
      detail::write_output(gen_out, out,
                           [&](std::ostream& os) { dataset::write_manifest(os, synthetic::benchmark_counts(), items); });
      log.info("wrote " + std::to_string(items.size()) + " items");
      return kExitOk;
    }

    if (gen->parsed()) {
      SeededRng rng(seed);
      std::vector<McqItem> items;
      std::vector<nlohmann::json> truth;
      if (puzzle->parsed()) {
        for (std::size_t n = 1; n <= gen_count; ++n) {
          const std::string id = detail::numbered("puzzle", n);
          const auto target = taskgen::synthetic_patch_grid(id + "/img0", rng);
          std::vector<taskgen::PatchGrid> others;
          for (std::size_t d = 1; d <= distractors; ++d) {
            others.push_back(taskgen::synthetic_patch_grid(id + "/img" + std::to_string(d), rng));
          }
          std::string kind = puzzle_task;
          if (kind == "mixed") kind = rng.bernoulli(0.5) ? "direction" : "same_image";
          taskgen::PuzzleTask task;
          if (kind == "direction") {
            task = taskgen::DirectionTask{direction_name.empty()
                                              ? taskgen::kDirections[rng.uniform_below(taskgen::kDirections.size())]
                                              : taskgen::parse_direction(direction_name)};
          } else {
            task = taskgen::SameImageTask{same_k};
          }
          auto p = taskgen::gen_puzzle(target, others, task, rng, id);
          truth.push_back(taskgen::provenance_json(p));
          items.push_back(std::move(p.mcq));
        }
      } else if (aot->parsed()) {
        std::vector<taskgen::ClipRecord> clips;
        if (!clips_path.empty()) {
          dataset::InputFile in(clips_path);
          for (const auto& line : dataset::read_json_lines(in.stream())) {
            try {
              clips.push_back(line.value.get<taskgen::ClipRecord>());
            } catch (const nlohmann::json::exception& e) {
              throw ParseError(line.line, std::string("bad clip record: ") + e.what());
            } catch (const Error& e) {
              throw ParseError(line.line, std::string("bad clip record: ") + e.what());
            }
          }
        } else {
          for (std::size_t n = 1; n <= gen_count; ++n) clips.push_back({detail::numbered("clip", n), taskgen::Playback::Forward, ""});
        }
        for (auto& a : taskgen::gen_aot_items(clips, rng)) {
          truth.push_back({{"id", a.mcq.id}, {"clip", a.clip}, {"reversed_by_generator", a.reversed_by_generator}});
          items.push_back(std::move(a.mcq));
        }
      } else {
        for (std::size_t n = 1; n <= gen_count; ++n) {
          const std::string id = detail::numbered("permanence", n);
          const auto scene = taskgen::gen_permanence_scene(perm_config, rng);
          truth.push_back({{"id", id}, {"log", scene}, {"violation", taskgen::label_permanence(scene)}});
          items.push_back(taskgen::permanence_to_mcq(scene, id));
        }
      }
      detail::write_output(gen_out, out, [&](std::ostream& os) { dataset::write_items(os, items); });
      if (!gen_truth.empty()) detail::write_output(gen_truth, out, [&](std::ostream& os) { detail::write_jsonl(os, truth); });
      log.info("wrote " + std::to_string(items.size()) + " items");
      return kExitOk;
    }

    if (validate_cmd->parsed()) {
      const auto manifest = dataset::load_manifest(
          manifest_path, require_header ? dataset::HeaderPolicy::Required : dataset::HeaderPolicy::Optional);
      const auto report = dataset::validate_manifest(manifest);
      out << dataset::to_json(report).dump() << '\n';
      if (!manifest.has_header) log.warn("no expected_counts header; per-source counts not checked");
      for (const auto& m : report.mismatches) {
        err << "count mismatch: " << machine_name(m.source) << " expected " << m.expected << ", found " << m.actual
            << '\n';
      }
      for (const auto& v : report.violations) {
        err << "line " << v.line << ": item " << (v.item_id.empty() ? "<no id>" : v.item_id) << ": " << v.message
            << '\n';
      }
      return report.valid() ? kExitOk : kExitDomain;
    }

    if (score->parsed()) {
      const auto dataset_items = dataset::load_manifest(dataset_path, dataset::HeaderPolicy::Optional).items;
      std::map<std::string, const McqItem*> by_id;
      for (const auto& item : dataset_items) by_id[item.id] = &item;
      const reward::ScoreOptions options{detail::parse_weights(weights), reward::parse_format_mode(format_mode),
                                         reward::parse_answer_mode(answer_mode)};

      std::vector<std::string> order;
      std::map<std::string, std::vector<std::string>> responses;
      dataset::InputFile in(responses_path);
      for (const auto& line : dataset::read_json_lines(in.stream())) {
        std::string qid, text;
        try {
          qid = line.value.at("question_id").get<std::string>();
          text = line.value.at("response").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(line.line, std::string("response record needs question_id and response: ") + e.what());
        }
        if (!by_id.count(qid)) throw ParseError(line.line, "unknown question id " + qid);
        if (!responses.count(qid)) order.push_back(qid);
        responses[qid].push_back(std::move(text));
      }

      std::vector<nlohmann::json> lines;
      for (const auto& qid : order) {
        const auto& rs = responses[qid];
        if (rs.size() % group_size != 0) {
          throw Error(ErrorCode::InvalidArgument, "question " + qid + " has " + std::to_string(rs.size()) +
                                                      " responses, not a multiple of group size " +
                                                      std::to_string(group_size));
        }
        for (std::size_t g = 0; g * group_size < rs.size(); ++g) {
          std::vector<double> totals;
          nlohmann::json breakdowns = nlohmann::json::array();
          for (std::size_t k = g * group_size; k < (g + 1) * group_size; ++k) {
            const auto b = reward::score_response(reward::parse_response(rs[k]), *by_id[qid], options);
            totals.push_back(b.total);
            breakdowns.push_back({{"accuracy", b.accuracy}, {"format", b.format}, {"total", b.total}});
          }
          auto j = reward::to_json(reward::make_group(qid, totals));
          j["group"] = g;
          j["breakdowns"] = std::move(breakdowns);
          lines.push_back(std::move(j));
        }
      }
      detail::write_output(score_out, out, [&](std::ostream& os) { detail::write_jsonl(os, lines); });
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      cfg.fill("eval", "runs", runs_opt, spec.n_runs);
      cfg.fill("eval", "temperature", temp_opt, spec.temperature);
      cfg.fill("eval", "top_p", top_p_opt, spec.top_p);
      cfg.fill("eval", "max_tokens", eval_tokens_opt, spec.max_tokens);
      cfg.fill("eval", "label", label_opt, spec.model_label);
      cfg.fill("eval", "shuffle", shuffle_opt, spec.shuffle);
      cfg.fill("eval", "answer_mode", eval_mode_opt, eval_answer_mode);
      cfg.fill("eval", "extraction", extraction_opt, eval_extraction);
      spec.answer_mode = reward::parse_answer_mode(eval_answer_mode);
      spec.extraction = reward::parse_extraction(eval_extraction);
      spec.base_seed = seed;

      const auto manifest = dataset::load_manifest(spec.benchmark, dataset::HeaderPolicy::Optional);
      auto endpoint = detail::open_endpoint(eval_endpoint, eval_ep.resolve(cfg), seed, manifest.items);
      log.info("evaluating " + std::to_string(manifest.items.size()) + " items x " + std::to_string(spec.n_runs) +
               " runs");
      const auto report = eval::run_eval(spec, manifest.items, *endpoint.client);
      if (report.errored > 0) log.warn(std::to_string(report.errored) + " trials errored and were scored incorrect");
      if (eval_out.empty()) eval_out = "-";
      if (eval_format_opt->count() == 0) {
        const auto ext = std::filesystem::path(eval_out).extension().string();
        if (ext == ".json") eval_format = "json";
        if (ext == ".csv") eval_format = "csv";
      }
      const auto rendered = eval::render_report(report, eval::parse_report_format(eval_format));
      detail::write_output(eval_out, out, [&](std::ostream& os) { os << rendered; });
      return kExitOk;
    }

    if (grpo_cmd->parsed()) {
      cfg.fill("grpo", "iterations", iter_opt, loop.iterations);
      cfg.fill("grpo", "batch_questions", bq_opt, loop.batch_questions);
      cfg.fill("grpo", "group_size", gs_opt, loop.group_size);
      cfg.fill("grpo", "max_tokens", gtok_opt, loop.max_tokens);
      cfg.fill("grpo", "format_mode", gfmt_opt, grpo_format);
      cfg.fill("grpo", "data", data_opt, grpo_data);
      cfg.fill("grpo", "checkpoint", ckpt_opt, checkpoint_path);
      cfg.fill("grpo", "learning_rate", nullptr, loop.learning_rate);
      cfg.fill("grpo", "kl_coefficient", nullptr, loop.kl_coefficient);
      cfg.fill("grpo", "shuffle", nullptr, loop.shuffle);
      cfg.fill("grpo", "temperature", nullptr, loop.temperature);
      cfg.fill("grpo", "top_p", nullptr, loop.top_p);
      cfg.fill("grpo", "request_logprobs", nullptr, loop.request_logprobs);
      cfg.fill("grpo", "record_wall_time", nullptr, loop.record_wall_time);
      cfg.fill("grpo", "seconds_per_token", nullptr, loop.seconds_per_token);
      cfg.fill("grpo", "min_fill", nullptr, loop.min_fill);
      cfg.fill("grpo", "answer_mode", nullptr, grpo_mode);
      cfg.fill("grpo", "accuracy_weight", nullptr, loop.weights.accuracy);
      cfg.fill("grpo", "format_weight", nullptr, loop.weights.format);
      if (gw_opt->count() > 0) loop.weights = detail::parse_weights(grpo_weights);
      loop.format_mode = reward::parse_format_mode(grpo_format);
      loop.answer_mode = reward::parse_answer_mode(grpo_mode);
      loop.seed = seed;
      if (grpo_data.empty()) throw Error(ErrorCode::InvalidArgument, "grpo needs --data (or data = in the config)");

      auto pool = dataset::load_manifest(grpo_data, dataset::HeaderPolicy::Optional).items;
      auto endpoint = detail::open_endpoint(grpo_endpoint, grpo_ep.resolve(cfg), seed, pool);
      const auto sources = dataset::group_by_source(std::move(pool));

      grpo::LoopPaths paths;
      paths.metrics = grpo_out;
      paths.checkpoint = checkpoint_path.empty() ? std::filesystem::path(grpo_out).parent_path() / "loop.ckpt"
                                                 : std::filesystem::path(checkpoint_path);
      if (!policy_log.empty()) paths.policy_log = policy_log;
      if (!events_log.empty()) paths.events_log = events_log;

      std::unique_ptr<rollout::ReferenceScorer> reference;
      if (endpoint.mock) {
        reference = std::make_unique<rollout::MockReferenceScorer>(seed);
      } else {
        log.warn("no reference model for a live endpoint; mean_kl will be absent");
      }
      const auto metrics = grpo::run_loop(loop, sources, *endpoint.client, reference.get(), paths, stop_after);
      log.info("ran " + std::to_string(metrics.size()) + " iterations; checkpoint " + paths.checkpoint.string());
      return kExitOk;
    }

    if (report_cmd->parsed()) {
      std::vector<eval::EvalReport> reports;
      for (const auto& path : report_inputs) {
        std::ifstream f(path);
        if (!f) throw Error(ErrorCode::Io, "cannot open " + path);
        try {
          reports.push_back(eval::report_from_json(nlohmann::json::parse(f)));
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::ParseError, path + ": " + e.what());
        }
      }
      const auto rendered = eval::render_reports(reports, eval::parse_report_format(report_format));
      detail::write_output(report_out, out, [&](std::ostream& os) { os << rendered; });
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace physr::cli
