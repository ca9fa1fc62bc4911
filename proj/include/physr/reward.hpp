#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "physr/error.hpp"
#include "physr/mcq.hpp"
#include "physr/text.hpp"

namespace physr::reward {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

struct ParsedResponse {
  std::optional<std::string> think;
  std::optional<std::string> answer;
  std::string raw;
  bool strict_format_ok = false;   // exactly <think>..</think> <answer>..</answer>, nothing else
  bool lenient_format_ok = false;  // a think pair closes before an answer pair opens

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

namespace detail {

struct TagPair {
  std::size_t open = 0;   // offset of the opening tag
  std::size_t close = 0;  // offset of the closing tag
  std::string_view inner;
};

// Pairs each opening tag with the nearest following closing tag, scanning
// left to right; returns the last such pair.
inline std::optional<TagPair> last_pair(std::string_view s, std::string_view open, std::string_view close) {
  std::optional<TagPair> last;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t o = s.find(open, pos);
    if (o == std::string_view::npos) break;
    const std::size_t c = s.find(close, o + open.size());
    if (c == std::string_view::npos) break;
    last = TagPair{o, c, s.substr(o + open.size(), c - o - open.size())};
    pos = c + close.size();
  }
  return last;
}

inline bool contains_any_tag(std::string_view s) {
  for (auto tag : {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose}) {
    if (s.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

// Whole-string match of: <think>X</think>\s*<answer>Y</answer>, with X and Y
// free of tags. Hand-rolled because std::regex recurses per character and
// overflows the stack on long completions.
inline bool strict_match(std::string_view s) {
  s = text::trim(s);
  if (s.substr(0, kThinkOpen.size()) != kThinkOpen) return false;
  const std::size_t tc = s.find(kThinkClose, kThinkOpen.size());
  if (tc == std::string_view::npos) return false;
  if (contains_any_tag(s.substr(kThinkOpen.size(), tc - kThinkOpen.size()))) return false;
  std::string_view rest = s.substr(tc + kThinkClose.size());
  while (!rest.empty() && text::is_space(rest.front())) rest.remove_prefix(1);
  if (rest.substr(0, kAnswerOpen.size()) != kAnswerOpen) return false;
  if (rest.size() < kAnswerOpen.size() + kAnswerClose.size()) return false;
  if (rest.substr(rest.size() - kAnswerClose.size()) != kAnswerClose) return false;
  return !contains_any_tag(
      rest.substr(kAnswerOpen.size(), rest.size() - kAnswerOpen.size() - kAnswerClose.size()));
}

}  // namespace detail

inline ParsedResponse parse_response(std::string_view response) {
  ParsedResponse p;
  p.raw = std::string(response);
  const auto think = detail::last_pair(response, kThinkOpen, kThinkClose);
  const auto answer = detail::last_pair(response, kAnswerOpen, kAnswerClose);
  if (think) p.think = std::string(think->inner);
  if (answer) p.answer = std::string(answer->inner);
  p.strict_format_ok = detail::strict_match(response);
  p.lenient_format_ok = think && answer && think->close < answer->open;
  return p;
}

enum class FormatMode { Strict, Lenient };

inline FormatMode parse_format_mode(std::string_view s) {
  if (text::iequals(s, "strict")) return FormatMode::Strict;
  if (text::iequals(s, "lenient")) return FormatMode::Lenient;
  throw Error(ErrorCode::InvalidArgument, "format mode must be strict or lenient");
}

inline int format_reward(const ParsedResponse& parsed, FormatMode mode = FormatMode::Strict) {
  return (mode == FormatMode::Strict ? parsed.strict_format_ok : parsed.lenient_format_ok) ? 1 : 0;
}

enum class AnswerMode { LetterOrText, ExactSet };

inline constexpr std::string_view machine_name(AnswerMode m) {
  return m == AnswerMode::LetterOrText ? "letter_or_text" : "exact_set";
}

inline AnswerMode parse_answer_mode(std::string_view s) {
  if (text::iequals(s, "letter_or_text")) return AnswerMode::LetterOrText;
  if (text::iequals(s, "exact_set")) return AnswerMode::ExactSet;
  throw Error(ErrorCode::InvalidArgument, "answer mode must be letter_or_text or exact_set");
}

/// All "frame N" mentions (any case, optional whitespace before N).
inline std::set<int> frame_mentions(std::string_view s) {
  std::set<int> out;
  constexpr std::string_view kWord = "frame";
  for (std::size_t p = text::ifind(s, kWord); p != std::string_view::npos; p = text::ifind(s, kWord, p + 1)) {
    if (p > 0 && text::is_alpha(s[p - 1])) continue;
    std::size_t q = p + kWord.size();
    while (q < s.size() && text::is_space(s[q])) ++q;
    if (q >= s.size() || !std::isdigit(static_cast<unsigned char>(s[q]))) continue;
    int n = 0;
    while (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q])) && n < 100000000) {
      n = n * 10 + (s[q] - '0');
      ++q;
    }
    out.insert(n);
  }
  return out;
}

/// String match of an answer against the item's correct option.
inline int accuracy_reward(const std::optional<std::string>& answer, const McqItem& item,
                           AnswerMode mode = AnswerMode::LetterOrText) {
  if (!answer) return 0;
  const McqOption& correct = item.correct_option();
  if (mode == AnswerMode::ExactSet) {
    const auto truth = frame_mentions(correct.text);
    return !truth.empty() && frame_mentions(*answer) == truth ? 1 : 0;
  }
  const std::string a = text::normalize_answer(*answer);
  const std::string label(1, text::lower(correct.label));
  const std::string option_text = text::normalize_answer(correct.text);
  if (a == label || a == label + ": " + option_text || a == option_text) return 1;
  return 0;
}

inline int accuracy_reward(const ParsedResponse& parsed, const McqItem& item,
                           AnswerMode mode = AnswerMode::LetterOrText) {
  return accuracy_reward(parsed.answer, item, mode);
}

enum class Extraction { Strict, Lenient };

inline Extraction parse_extraction(std::string_view s) {
  if (text::iequals(s, "strict")) return Extraction::Strict;
  if (text::iequals(s, "lenient")) return Extraction::Lenient;
  throw Error(ErrorCode::InvalidArgument, "extraction must be strict or lenient");
}

/// Tagged answer if present; in lenient mode otherwise the last standalone
/// capital letter in the response that names one of the item's options.
inline std::optional<std::string> extract_answer(const ParsedResponse& parsed, const McqItem& item,
                                                 Extraction mode) {
  if (parsed.answer) return parsed.answer;
  if (mode == Extraction::Strict) return std::nullopt;
  const std::string& s = parsed.raw;
  for (std::size_t i = s.size(); i-- > 0;) {
    const char c = s[i];
    if (c < 'A' || c > 'Z' || !item.find_option(c)) continue;
    const bool left_ok = i == 0 || !text::is_alnum(s[i - 1]);
    const bool right_ok = i + 1 >= s.size() || !text::is_alnum(s[i + 1]);
    if (left_ok && right_ok) return std::string(1, c);
  }
  return std::nullopt;
}

struct RewardWeights {
  double accuracy = 1.0;
  double format = 0.1;

  friend bool operator==(const RewardWeights&, const RewardWeights&) = default;
};

struct RewardBreakdown {
  int accuracy = 0;
  int format = 0;
  double total = 0.0;
  RewardWeights weights;
};

inline double total_reward(int accuracy, int format, const RewardWeights& weights = {}) {
  if (weights.accuracy < 0.0 || weights.format < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "reward weights must be non-negative");
  }
  return weights.accuracy * accuracy + weights.format * format;
}

struct ScoreOptions {
  RewardWeights weights;
  FormatMode format_mode = FormatMode::Strict;
  AnswerMode answer_mode = AnswerMode::LetterOrText;
};

inline RewardBreakdown score_response(const ParsedResponse& parsed, const McqItem& item,
                                      const ScoreOptions& options = {}) {
  RewardBreakdown r;
  r.accuracy = accuracy_reward(parsed, item, options.answer_mode);
  r.format = format_reward(parsed, options.format_mode);
  r.weights = options.weights;
  r.total = total_reward(r.accuracy, r.format, options.weights);
  return r;
}

// --- GRPO ---------------------------------------------------------------

inline constexpr double kDegenerateEpsilon = 1e-12;

struct RewardedGroup {
  std::string question_id;
  std::vector<double> rewards;
  std::vector<double> advantages;
  bool degenerate = false;
};

/// A_i = (R_i - mean) / std with the population standard deviation. Groups
/// whose std falls below `epsilon` get all-zero advantages.
inline RewardedGroup grpo_advantages(std::span<const double> rewards, double epsilon = kDegenerateEpsilon) {
  if (rewards.size() < 2) {
    throw Error(ErrorCode::GroupTooSmall, "GRPO needs at least 2 rewards, got " + std::to_string(rewards.size()));
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);

  RewardedGroup g;
  g.rewards.assign(rewards.begin(), rewards.end());
  g.advantages.assign(rewards.size(), 0.0);
  g.degenerate = !(sd >= epsilon);
  if (!g.degenerate) {
    for (std::size_t i = 0; i < rewards.size(); ++i) g.advantages[i] = (rewards[i] - mean) / sd;
  }
  return g;
}

inline RewardedGroup make_group(std::string question_id, std::span<const double> rewards,
                                double epsilon = kDegenerateEpsilon) {
  RewardedGroup g = grpo_advantages(rewards, epsilon);
  g.question_id = std::move(question_id);
  return g;
}

/// Mean over tokens of exp(r) - r - 1 with r = ref - policy; never negative.
inline double kl_penalty(std::span<const double> policy_logprobs, std::span<const double> ref_logprobs) {
  if (policy_logprobs.size() != ref_logprobs.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(policy_logprobs.size()) + " policy vs " +
                                               std::to_string(ref_logprobs.size()) + " reference logprobs");
  }
  if (policy_logprobs.empty()) throw Error(ErrorCode::EmptySequence, "no tokens");
  double sum = 0.0;
  for (std::size_t i = 0; i < policy_logprobs.size(); ++i) {
    const double r = ref_logprobs[i] - policy_logprobs[i];
    sum += std::max(0.0, std::expm1(r) - r);
  }
  return sum / static_cast<double>(policy_logprobs.size());
}

inline nlohmann::json to_json(const RewardBreakdown& r) {
  return {{"accuracy", r.accuracy},
          {"format", r.format},
          {"total", r.total},
          {"weights", {{"accuracy", r.weights.accuracy}, {"format", r.weights.format}}}};
}

inline nlohmann::json to_json(const RewardedGroup& g) {
  return {{"question_id", g.question_id},
          {"rewards", g.rewards},
          {"advantages", g.advantages},
          {"degenerate", g.degenerate}};
}

}  // namespace physr::reward
