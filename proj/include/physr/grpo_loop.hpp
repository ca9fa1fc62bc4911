#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "physr/dataset.hpp"
#include "physr/dispatch.hpp"
#include "physr/error.hpp"
#include "physr/mcq.hpp"
#include "physr/reward.hpp"
#include "physr/rng.hpp"
#include "physr/rollout.hpp"
#include "physr/text.hpp"

namespace physr::grpo {

struct LoopConfig {
  std::size_t batch_questions = 128;
  std::size_t group_size = 9;
  int max_tokens = 6144;
  double learning_rate = 4e-6;  // recorded only
  double kl_coefficient = 0.005;
  std::size_t iterations = 500;
  reward::RewardWeights weights;
  bool shuffle = true;
  reward::FormatMode format_mode = reward::FormatMode::Strict;
  reward::AnswerMode answer_mode = reward::AnswerMode::LetterOrText;
  double temperature = 1.0;
  double top_p = 1.0;
  std::uint64_t seed = 0;
  bool request_logprobs = true;
  // Off by default so repeated runs write byte-identical metrics.
  bool record_wall_time = false;
  // Rollout-scheduling simulation: seconds per generated token and the
  // progressive batching threshold.
  double seconds_per_token = 0.02;
  std::size_t min_fill = 1;
};

inline void validate(const LoopConfig& c) {
  if (c.group_size < 2) throw Error(ErrorCode::GroupTooSmall, "group_size must be >= 2");
  if (c.batch_questions < 1) throw Error(ErrorCode::InvalidArgument, "batch_questions must be >= 1");
  if (c.max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
  if (c.learning_rate < 0.0 || c.kl_coefficient < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "learning_rate and kl_coefficient must be >= 0");
  }
  if (c.weights.accuracy < 0.0 || c.weights.format < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "reward weights must be non-negative");
  }
  if (c.min_fill < 1) throw Error(ErrorCode::InvalidBounds, "min_fill must be >= 1");
  if (!(c.seconds_per_token >= 0.0)) throw Error(ErrorCode::InvalidArgument, "seconds_per_token must be >= 0");
}

enum class Stage { Dataloader, Rollout, Reward, Reference, PolicyUpdate, WeightSync };

inline constexpr std::string_view machine_name(Stage s) {
  switch (s) {
    case Stage::Dataloader: return "dataloader";
    case Stage::Rollout: return "rollout";
    case Stage::Reward: return "reward";
    case Stage::Reference: return "reference";
    case Stage::PolicyUpdate: return "policy_update";
    case Stage::WeightSync: return "weight_sync";
  }
  return "unknown";
}

struct StageEvent {
  Stage stage = Stage::Dataloader;
  double start = 0.0;  // seconds since the iteration began, or logical ticks
  double end = 0.0;
  std::size_t payload = 0;
  bool skipped = false;
};

struct IterationMetrics {
  std::size_t iteration = 0;  // 1-based
  double mean_total_reward = 0.0;
  double accuracy_rate = 0.0;
  double format_rate = 0.0;
  double mean_abs_advantage = 0.0;
  double degenerate_group_fraction = 0.0;
  std::optional<double> mean_kl;
  std::map<Source, std::size_t> per_source_counts;
  std::size_t completions_requested = 0;
  std::size_t completions_received = 0;
  std::size_t errored_groups = 0;
  double wall_seconds = 0.0;
  double simulated_idle_seconds = 0.0;
  double simulated_barrier_idle_seconds = 0.0;
  double learning_rate = 0.0;
  double kl_coefficient = 0.0;
};

struct PolicyUpdateRecord {
  std::size_t iteration = 0;
  std::string question_id;
  std::vector<double> advantages;
  std::optional<double> mean_kl;
  double learning_rate = 0.0;
  double kl_coefficient = 0.0;
  bool errored = false;
};

struct IterationResult {
  IterationMetrics metrics;
  std::vector<StageEvent> events;
  std::vector<reward::RewardedGroup> groups;
  std::vector<PolicyUpdateRecord> updates;
};

inline nlohmann::json to_json(const IterationMetrics& m) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [s, n] : m.per_source_counts) counts[std::string(machine_name(s))] = n;
  return {{"iteration", m.iteration},
          {"mean_total_reward", m.mean_total_reward},
          {"accuracy_rate", m.accuracy_rate},
          {"format_rate", m.format_rate},
          {"mean_abs_advantage", m.mean_abs_advantage},
          {"degenerate_group_fraction", m.degenerate_group_fraction},
          {"mean_kl", m.mean_kl ? nlohmann::json(*m.mean_kl) : nlohmann::json(nullptr)},
          {"per_source_counts", counts},
          {"completions_requested", m.completions_requested},
          {"completions_received", m.completions_received},
          {"errored_groups", m.errored_groups},
          {"wall_seconds", m.wall_seconds},
          {"simulated_idle_seconds", m.simulated_idle_seconds},
          {"simulated_barrier_idle_seconds", m.simulated_barrier_idle_seconds},
          {"learning_rate", m.learning_rate},
          {"kl_coefficient", m.kl_coefficient}};
}

inline nlohmann::json to_json(const StageEvent& e) {
  return {{"stage", machine_name(e.stage)}, {"start", e.start}, {"end", e.end}, {"payload", e.payload},
          {"skipped", e.skipped}};
}

inline nlohmann::json to_json(const PolicyUpdateRecord& r) {
  return {{"iteration", r.iteration},
          {"question_id", r.question_id},
          {"advantages", r.advantages},
          {"mean_kl", r.mean_kl ? nlohmann::json(*r.mean_kl) : nlohmann::json(nullptr)},
          {"lr", r.learning_rate},
          {"kl_coefficient", r.kl_coefficient},
          {"errored", r.errored}};
}

namespace detail {

inline std::size_t whitespace_tokens(std::string_view s) {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    const bool space = text::is_space(c);
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

// Stage clock: wall seconds since the iteration began, or one tick per
// stage boundary when wall time is not recorded.
class StageClock {
 public:
  explicit StageClock(bool wall) : wall_(wall), t0_(std::chrono::steady_clock::now()) {}
  double now() {
    if (!wall_) return static_cast<double>(tick_++);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  bool wall_;
  std::chrono::steady_clock::time_point t0_;
  std::size_t tick_ = 0;
};

}  // namespace detail

/// One GRPO iteration: sample a batch, roll out group_size completions per
/// question, score, standardize within groups, estimate KL against the
/// reference when logprobs exist, then record the (stubbed) policy update.
/// `policy_log`, when given, receives one JSONL record per group.
inline IterationResult run_iteration(const LoopConfig& config, const dataset::SourceMap& sources,
                                     rollout::Client& client, rollout::ReferenceScorer* reference,
                                     SeededRng& rng, std::size_t iteration, std::ostream* policy_log = nullptr) {
  validate(config);
  IterationResult out;
  IterationMetrics& m = out.metrics;
  m.iteration = iteration;
  m.learning_rate = config.learning_rate;
  m.kl_coefficient = config.kl_coefficient;
  const auto wall_start = std::chrono::steady_clock::now();
  detail::StageClock clock(config.record_wall_time);

  // Dataloader
  double t = clock.now();
  std::vector<McqItem> batch = dataset::sample_rl_batch(sources, config.batch_questions, rng);
  std::vector<rollout::GenerationRequest> requests;
  requests.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (config.shuffle) batch[i] = dataset::shuffle_options(batch[i], rng);
    ++m.per_source_counts[batch[i].source];
    auto req = rollout::make_mcq_request(batch[i], "it" + std::to_string(iteration) + ":q" + std::to_string(i),
                                         static_cast<int>(config.group_size), config.temperature, config.top_p,
                                         config.max_tokens);
    req.logprobs = config.request_logprobs;
    req.seed = rng.next_u64();
    requests.push_back(std::move(req));
  }
  out.events.push_back({Stage::Dataloader, t, clock.now(), batch.size()});

  // Rollout
  t = clock.now();
  m.completions_requested = batch.size() * config.group_size;
  const auto results = client.generate_batch(requests);
  for (const auto& r : results) m.completions_received += r.completions.size();
  out.events.push_back({Stage::Rollout, t, clock.now(), m.completions_received});

  // Reward + advantages
  const double reward_start = clock.now();
  reward::ScoreOptions score_options{config.weights, config.format_mode, config.answer_mode};
  std::size_t scored = 0, correct = 0, formatted = 0, advantage_count = 0, degenerate = 0;
  double reward_sum = 0.0, abs_adv_sum = 0.0;
  std::vector<double> job_latency(batch.size(), 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!results[i].ok()) {
      reward::RewardedGroup g;
      g.question_id = batch[i].id;
      g.rewards.assign(config.group_size, 0.0);
      g.advantages.assign(config.group_size, 0.0);
      g.degenerate = true;
      ++m.errored_groups;
      ++degenerate;
      out.groups.push_back(std::move(g));
      continue;
    }
    std::vector<double> rewards;
    for (const auto& c : results[i].completions) {
      const auto b = reward::score_response(reward::parse_response(c.text), batch[i], score_options);
      rewards.push_back(b.total);
      reward_sum += b.total;
      correct += static_cast<std::size_t>(b.accuracy);
      formatted += static_cast<std::size_t>(b.format);
      ++scored;
      job_latency[i] += config.seconds_per_token * static_cast<double>(detail::whitespace_tokens(c.text));
    }
    auto g = reward::make_group(batch[i].id, rewards);
    if (g.degenerate) ++degenerate;
    for (double a : g.advantages) abs_adv_sum += std::abs(a);
    advantage_count += g.advantages.size();
    out.groups.push_back(std::move(g));
  }
  const double reward_end = clock.now();
  out.events.push_back({Stage::Reward, reward_start, reward_end, scored});

  // Reference: KL only when every received completion has policy and
  // reference logprobs; otherwise the stage is skipped and the metric absent.
  std::vector<std::optional<double>> group_kl(batch.size());
  bool have_kl = reference != nullptr && scored > 0;
  double kl_sum = 0.0;
  std::size_t kl_n = 0;
  for (std::size_t i = 0; i < batch.size() && have_kl; ++i) {
    double sum = 0.0;
    for (const auto& c : results[i].completions) {
      if (!c.token_logprobs || c.token_logprobs->empty()) {
        have_kl = false;
        break;
      }
      const auto ref = reference->score(requests[i], c);
      if (!ref || ref->size() != c.token_logprobs->size()) {
        have_kl = false;
        break;
      }
      const double kl = reward::kl_penalty(*c.token_logprobs, *ref);
      sum += kl;
      kl_sum += kl;
      ++kl_n;
    }
    if (have_kl && !results[i].completions.empty()) {
      group_kl[i] = sum / static_cast<double>(results[i].completions.size());
    }
  }
  if (have_kl && kl_n > 0) {
    m.mean_kl = kl_sum / static_cast<double>(kl_n);
  } else {
    group_kl.assign(batch.size(), std::nullopt);
  }
  const double ref_end = clock.now();
  out.events.push_back({Stage::Reference, reward_start, ref_end, m.mean_kl ? kl_n : 0, !m.mean_kl.has_value()});

  // Policy update (recorded, not executed)
  t = clock.now();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    PolicyUpdateRecord rec{iteration,          out.groups[i].question_id, out.groups[i].advantages, group_kl[i],
                           config.learning_rate, config.kl_coefficient,    !results[i].ok()};
    if (policy_log) *policy_log << to_json(rec).dump() << '\n';
    out.updates.push_back(std::move(rec));
  }
  if (policy_log) policy_log->flush();
  out.events.push_back({Stage::PolicyUpdate, t, clock.now(), out.updates.size()});

  t = clock.now();
  out.events.push_back({Stage::WeightSync, t, clock.now(), 0});

  if (scored > 0) {
    const double n = static_cast<double>(scored);
    m.mean_total_reward = reward_sum / n;
    m.accuracy_rate = static_cast<double>(correct) / n;
    m.format_rate = static_cast<double>(formatted) / n;
  }
  if (advantage_count > 0) m.mean_abs_advantage = abs_adv_sum / static_cast<double>(advantage_count);
  m.degenerate_group_fraction = static_cast<double>(degenerate) / static_cast<double>(batch.size());

  // Rollout scheduling on a simulated clock: one job per question, its
  // latency proportional to the tokens generated for it.
  const std::size_t cap = std::min<std::size_t>(static_cast<std::size_t>(client.config().max_in_flight), batch.size());
  const auto sched = dispatch::simulate(job_latency, std::min(config.min_fill, cap), cap);
  m.simulated_idle_seconds = sched.progressive.idle_seconds;
  m.simulated_barrier_idle_seconds = sched.barrier.idle_seconds;

  if (config.record_wall_time) {
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  }
  return out;
}

// --- Loop with checkpointing --------------------------------------------

struct Checkpoint {
  std::size_t next_iteration = 1;  // 1-based index of the next iteration to run
  std::uint64_t rng_state = 0;
};

inline nlohmann::json to_json(const Checkpoint& c) {
  return {{"next_iteration", c.next_iteration}, {"rng_state", c.rng_state}};
}

inline Checkpoint parse_checkpoint(const std::string& content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::CheckpointCorrupt, "checkpoint unreadable at byte offset " + std::to_string(e.byte));
  }
  const auto field_offset = [&](const char* key) {
    const auto p = content.find(std::string("\"") + key + "\"");
    return p == std::string::npos ? content.size() : p;
  };
  if (!j.is_object()) throw Error(ErrorCode::CheckpointCorrupt, "checkpoint is not an object at byte offset 0");
  for (const char* key : {"next_iteration", "rng_state"}) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) {
      throw Error(ErrorCode::CheckpointCorrupt, std::string("checkpoint field ") + key +
                                                    " missing or invalid at byte offset " +
                                                    std::to_string(field_offset(key)));
    }
  }
  Checkpoint c{j["next_iteration"].get<std::size_t>(), j["rng_state"].get<std::uint64_t>()};
  if (c.next_iteration < 1) {
    throw Error(ErrorCode::CheckpointCorrupt,
                "next_iteration must be >= 1 at byte offset " + std::to_string(field_offset("next_iteration")));
  }
  return c;
}

inline void write_file_atomically(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct LoopPaths {
  std::filesystem::path metrics;     // JSONL, one IterationMetrics per line
  std::filesystem::path checkpoint;  // resumes from here when present
  std::optional<std::filesystem::path> policy_log;
  std::optional<std::filesystem::path> events_log;
};

namespace detail {

// Drops metric lines for iterations at or beyond `next` (left behind by an
// interruption between the metrics write and the checkpoint write).
inline void truncate_metrics(const std::filesystem::path& path, std::size_t next) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::string kept, line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.value("iteration", std::size_t{0}) >= next) continue;
    } catch (const nlohmann::json::exception&) {
      continue;  // torn final line
    }
    kept += line;
    kept += '\n';
  }
  in.close();
  write_file_atomically(path, kept);
}

}  // namespace detail

/// Runs iterations [checkpoint.next_iteration, config.iterations], appending
/// one metrics line per iteration and checkpointing after each. `stop_after`
/// bounds how many iterations this call runs (to simulate interruption).
inline std::vector<IterationMetrics> run_loop(const LoopConfig& config, const dataset::SourceMap& sources,
                                              rollout::Client& client, rollout::ReferenceScorer* reference,
                                              const LoopPaths& paths,
                                              std::optional<std::size_t> stop_after = std::nullopt) {
  validate(config);
  Checkpoint ckpt{1, SeededRng(config.seed).state()};
  const bool resuming = std::filesystem::exists(paths.checkpoint);
  if (resuming) {
    std::ifstream f(paths.checkpoint, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    ckpt = parse_checkpoint(ss.str());
    detail::truncate_metrics(paths.metrics, ckpt.next_iteration);
  }
  SeededRng rng = SeededRng::from_state(ckpt.rng_state);

  std::ofstream metrics(paths.metrics, resuming ? std::ios::app : std::ios::trunc);
  if (!metrics) throw Error(ErrorCode::Io, "cannot open " + paths.metrics.string());
  std::ofstream policy, events;
  if (paths.policy_log) {
    policy.open(*paths.policy_log, resuming ? std::ios::app : std::ios::trunc);
    if (!policy) throw Error(ErrorCode::Io, "cannot open " + paths.policy_log->string());
  }
  if (paths.events_log) {
    events.open(*paths.events_log, resuming ? std::ios::app : std::ios::trunc);
    if (!events) throw Error(ErrorCode::Io, "cannot open " + paths.events_log->string());
  }

  std::vector<IterationMetrics> out;
  for (std::size_t it = ckpt.next_iteration; it <= config.iterations; ++it) {
    if (stop_after && out.size() >= *stop_after) break;
    auto r = run_iteration(config, sources, client, reference, rng, it, paths.policy_log ? &policy : nullptr);
    metrics << to_json(r.metrics).dump() << '\n';
    metrics.flush();
    if (paths.events_log) {
      for (const auto& e : r.events) {
        auto j = to_json(e);
        j["iteration"] = it;
        events << j.dump() << '\n';
      }
      events.flush();
    }
    write_file_atomically(paths.checkpoint, to_json(Checkpoint{it + 1, rng.state()}).dump() + "\n");
    out.push_back(std::move(r.metrics));
  }
  return out;
}

}  // namespace physr::grpo
