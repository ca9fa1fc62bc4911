#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "physr/mcq.hpp"
#include "physr/ontology.hpp"
#include "physr/rng.hpp"

// Placeholder benchmark content with the published per-source and
// per-category counts, for exercising validation and evaluation end to end.
namespace physr::synthetic {

inline const std::map<Source, std::size_t>& benchmark_counts() {
  static const std::map<Source, std::size_t> counts = {
      {Source::CommonSense, 604}, {Source::BridgeV2, 100},   {Source::RoboVqa, 110}, {Source::RoboFail, 100},
      {Source::Agibot, 100},      {Source::HoloAssist, 100}, {Source::Av, 100}};
  return counts;
}

// Common-sense questions per category: 80 space, 298 time, 226 fundamental physics.
inline constexpr std::array<std::size_t, ontology::kCategoryCount> kCommonSenseCategoryCounts = {80, 298, 226};

/// Tags for the common-sense split, cycling through each category's subcategories.
inline std::vector<ontology::CommonSenseTag> common_sense_tags() {
  std::vector<ontology::CommonSenseTag> out;
  for (auto c : ontology::kCategories) {
    std::vector<ontology::Subcategory> subs;
    for (auto s : ontology::kSubcategories) {
      if (ontology::category_of(s) == c) subs.push_back(s);
    }
    for (std::size_t i = 0; i < kCommonSenseCategoryCounts[static_cast<std::size_t>(c)]; ++i) {
      out.push_back({c, subs[i % subs.size()]});
    }
  }
  return out;
}

/// `count` valid items for one source; RoboFail and AV items are binary,
/// the rest have four options. The correct position is drawn from `rng`.
inline std::vector<McqItem> items_for(Source source, std::size_t count, SeededRng& rng, std::size_t first_index = 1) {
  std::vector<McqItem> out;
  const std::size_t k = (source == Source::RoboFail || source == Source::Av) ? 2 : 4;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = std::string(machine_name(source)) + "-" + std::to_string(first_index + i);
    std::vector<std::string> texts;
    if (k == 2) {
      texts = {"Yes", "No"};
    } else {
      for (std::size_t o = 0; o < k; ++o) texts.push_back("choice " + std::to_string(o + 1) + " for " + id);
    }
    out.push_back(make_item(id, source, "Synthetic question " + id + "?", texts,
                            static_cast<std::size_t>(rng.uniform_below(k)), "synthetic:" + id));
  }
  return out;
}

/// All 1214 items in source order, common-sense items tagged.
inline std::vector<McqItem> benchmark_items(std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<McqItem> out;
  const auto tags = common_sense_tags();
  for (const auto& [source, n] : benchmark_counts()) {
    auto items = items_for(source, n, rng);
    if (source == Source::CommonSense) {
      for (std::size_t i = 0; i < items.size(); ++i) items[i].common_sense_tags = {tags[i]};
    }
    out.insert(out.end(), items.begin(), items.end());
  }
  return out;
}

}  // namespace physr::synthetic
