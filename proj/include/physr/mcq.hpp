#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "physr/error.hpp"
#include "physr/ontology.hpp"
#include "physr/text.hpp"

namespace physr {

enum class Source {
  CommonSense,
  BridgeV2,
  RoboVqa,
  RoboFail,
  Agibot,
  HoloAssist,
  Av,
  Puzzle,
  Aot,
  ObjectPermanence,
};

inline constexpr std::size_t kSourceCount = 10;

inline constexpr std::array<Source, kSourceCount> kSources = {
    Source::CommonSense, Source::BridgeV2,   Source::RoboVqa, Source::RoboFail,
    Source::Agibot,      Source::HoloAssist, Source::Av,      Source::Puzzle,
    Source::Aot,         Source::ObjectPermanence};

namespace detail {
inline constexpr std::array<std::string_view, kSourceCount> kSourceMachineNames = {
    "common_sense", "bridge_v2", "robovqa", "robofail",  "agibot",
    "holoassist",   "av",        "puzzle",  "aot",       "object_permanence"};
inline constexpr std::array<std::string_view, kSourceCount> kSourceDisplayNames = {
    "Common Sense", "BridgeData V2", "RoboVQA", "RoboFail", "Agibot",
    "HoloAssist",   "AV",            "Puzzle",  "AoT",      "Object Permanence"};
}  // namespace detail

inline constexpr std::string_view machine_name(Source s) {
  return detail::kSourceMachineNames[static_cast<std::size_t>(s)];
}
inline constexpr std::string_view display_name(Source s) {
  return detail::kSourceDisplayNames[static_cast<std::size_t>(s)];
}

inline std::optional<Source> find_source(std::string_view name) {
  for (Source s : kSources) {
    if (text::iequals(name, machine_name(s))) return s;
  }
  return std::nullopt;
}

inline Source parse_source(std::string_view name) {
  if (auto s = find_source(name)) return *s;
  throw Error(ErrorCode::InvalidArgument, "unknown source: " + std::string(name));
}

enum class Granularity { Action, Subtask, Goal };

inline constexpr std::string_view machine_name(Granularity g) {
  switch (g) {
    case Granularity::Action: return "action";
    case Granularity::Subtask: return "subtask";
    case Granularity::Goal: return "goal";
  }
  return "action";
}

inline Granularity parse_granularity(std::string_view name) {
  for (Granularity g : {Granularity::Action, Granularity::Subtask, Granularity::Goal}) {
    if (text::iequals(name, machine_name(g))) return g;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown granularity: " + std::string(name));
}

inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 6;

inline constexpr char label_at(std::size_t index) { return static_cast<char>('A' + index); }

struct McqOption {
  char label = 'A';
  std::string text;

  friend bool operator==(const McqOption&, const McqOption&) = default;
};

struct McqItem {
  std::string id;
  Source source = Source::CommonSense;
  std::string media_ref;
  std::string question;
  std::vector<McqOption> options;
  char correct_label = 'A';
  std::vector<ontology::CommonSenseTag> common_sense_tags;
  std::optional<ontology::EmbodiedTag> embodied_tag;
  std::optional<Granularity> granularity;

  const McqOption* find_option(char label) const {
    for (const auto& o : options) {
      if (o.label == label) return &o;
    }
    return nullptr;
  }

  /// The option whose label equals correct_label; throws if the item is malformed.
  const McqOption& correct_option() const {
    if (const auto* o = find_option(correct_label)) return *o;
    throw Error(ErrorCode::InvalidArgument, "item " + id + " has no option " + correct_label);
  }

  friend bool operator==(const McqItem&, const McqItem&) = default;
};

/// Every McqItem invariant the item breaks; empty means valid.
inline std::vector<std::string> item_violations(const McqItem& item) {
  std::vector<std::string> out;
  if (item.id.empty()) out.emplace_back("empty id");
  const std::size_t k = item.options.size();
  if (k < kMinOptions || k > kMaxOptions) {
    out.push_back("option count " + std::to_string(k) + " outside [2, 6]");
  }
  std::string seen;
  for (std::size_t i = 0; i < k; ++i) {
    const char label = item.options[i].label;
    if (seen.find(label) != std::string::npos) {
      out.push_back(std::string("duplicate label ") + label);
      continue;
    }
    seen.push_back(label);
    if (label != label_at(i)) {
      out.push_back(std::string("label ") + label + " at position " + std::to_string(i) +
                    ", expected " + label_at(i));
    }
  }
  std::size_t correct_matches = 0;
  for (const auto& o : item.options) correct_matches += (o.label == item.correct_label);
  if (correct_matches != 1) {
    out.push_back(std::string("correct_label ") + item.correct_label + " matches " +
                  std::to_string(correct_matches) + " options");
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (text::normalized_equal(item.options[i].text, item.options[j].text)) {
        out.push_back("duplicate option text \"" + item.options[i].text + "\"");
        break;
      }
    }
  }
  return out;
}

inline bool is_valid(const McqItem& item) { return item_violations(item).empty(); }

/// Builds an item with labels A.. assigned in order.
inline McqItem make_item(std::string id, Source source, std::string question,
                         const std::vector<std::string>& option_texts, std::size_t correct_index,
                         std::string media_ref = {}) {
  McqItem item;
  item.id = std::move(id);
  item.source = source;
  item.media_ref = std::move(media_ref);
  item.question = std::move(question);
  for (std::size_t i = 0; i < option_texts.size(); ++i) {
    item.options.push_back({label_at(i), option_texts[i]});
  }
  item.correct_label = label_at(correct_index);
  return item;
}

inline void to_json(nlohmann::json& j, const McqOption& o) {
  j = nlohmann::json{{"label", std::string(1, o.label)}, {"text", o.text}};
}

inline char parse_label(const nlohmann::json& j) {
  const auto s = j.get<std::string>();
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'Z') {
    throw Error(ErrorCode::InvalidArgument, "label must be a single capital letter, got \"" + s + "\"");
  }
  return s[0];
}

inline void from_json(const nlohmann::json& j, McqOption& o) {
  o.label = parse_label(j.at("label"));
  o.text = j.at("text").get<std::string>();
}

inline void to_json(nlohmann::json& j, const McqItem& item) {
  j = nlohmann::json{{"id", item.id},
                     {"source", machine_name(item.source)},
                     {"media_ref", item.media_ref},
                     {"question", item.question},
                     {"options", item.options},
                     {"correct_label", std::string(1, item.correct_label)}};
  if (!item.common_sense_tags.empty()) j["common_sense_tags"] = item.common_sense_tags;
  if (item.embodied_tag) j["embodied_tag"] = *item.embodied_tag;
  if (item.granularity) j["granularity"] = machine_name(*item.granularity);
}

/// Schema-level decode only; invariants are checked by `item_violations`.
inline void from_json(const nlohmann::json& j, McqItem& item) {
  item = McqItem{};
  item.id = j.at("id").get<std::string>();
  item.source = parse_source(j.at("source").get<std::string>());
  item.media_ref = j.value("media_ref", std::string{});
  item.question = j.at("question").get<std::string>();
  item.options = j.at("options").get<std::vector<McqOption>>();
  item.correct_label = parse_label(j.at("correct_label"));
  if (j.contains("common_sense_tags")) {
    item.common_sense_tags = j.at("common_sense_tags").get<std::vector<ontology::CommonSenseTag>>();
  }
  if (j.contains("embodied_tag") && !j.at("embodied_tag").is_null()) {
    item.embodied_tag = j.at("embodied_tag").get<ontology::EmbodiedTag>();
  }
  if (j.contains("granularity") && !j.at("granularity").is_null()) {
    item.granularity = parse_granularity(j.at("granularity").get<std::string>());
  }
}

}  // namespace physr
