#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "physr/error.hpp"
#include "physr/text.hpp"

// Physical common-sense ontology (3 categories, 16 subcategories) and the
// embodied-reasoning ontology (4 capabilities x 5 agent types).
namespace physr::ontology {

enum class Category { Space, Time, FundamentalPhysics };

enum class Subcategory {
  // Space
  Relationship,
  Plausibility,
  Affordance,
  Environment,
  // Time
  Actions,
  Order,
  Causality,
  Camera,
  Planning,
  // Fundamental physics
  Attributes,
  States,
  ObjectPermanence,
  Mechanics,
  Electromagnetism,
  Thermodynamics,
  AntiPhysics,
};

inline constexpr std::size_t kCategoryCount = 3;
inline constexpr std::size_t kSubcategoryCount = 16;

inline constexpr std::array<Category, kCategoryCount> kCategories = {
    Category::Space, Category::Time, Category::FundamentalPhysics};

inline constexpr std::array<Subcategory, kSubcategoryCount> kSubcategories = {
    Subcategory::Relationship,     Subcategory::Plausibility,   Subcategory::Affordance,
    Subcategory::Environment,      Subcategory::Actions,        Subcategory::Order,
    Subcategory::Causality,        Subcategory::Camera,         Subcategory::Planning,
    Subcategory::Attributes,       Subcategory::States,         Subcategory::ObjectPermanence,
    Subcategory::Mechanics,        Subcategory::Electromagnetism, Subcategory::Thermodynamics,
    Subcategory::AntiPhysics};

namespace detail {

struct CategoryNames {
  std::string_view machine;
  std::string_view display;
};

inline constexpr std::array<CategoryNames, kCategoryCount> kCategoryNames = {{
    {"space", "Space"},
    {"time", "Time"},
    {"fundamental_physics", "Fundamental Physics"},
}};

struct SubcategoryNames {
  std::string_view machine;
  std::string_view display;
  Category parent;
};

inline constexpr std::array<SubcategoryNames, kSubcategoryCount> kSubcategoryNames = {{
    {"relationship", "Relationship", Category::Space},
    {"plausibility", "Plausibility", Category::Space},
    {"affordance", "Affordance", Category::Space},
    {"environment", "Environment", Category::Space},
    {"actions", "Actions", Category::Time},
    {"order", "Order", Category::Time},
    {"causality", "Causality", Category::Time},
    {"camera", "Camera", Category::Time},
    {"planning", "Planning", Category::Time},
    {"attributes", "Attributes", Category::FundamentalPhysics},
    {"states", "States", Category::FundamentalPhysics},
    {"object_permanence", "Object Permanence", Category::FundamentalPhysics},
    {"mechanics", "Mechanics", Category::FundamentalPhysics},
    {"electromagnetism", "Electromagnetism", Category::FundamentalPhysics},
    {"thermodynamics", "Thermodynamics", Category::FundamentalPhysics},
    {"anti_physics", "Anti-Physics", Category::FundamentalPhysics},
}};

// "Fundamental Physics", "fundamental-physics" and "FUNDAMENTAL_PHYSICS" all
// fold to the machine form.
inline std::string fold_name(std::string_view name) {
  std::string out;
  for (char c : text::trim(name)) {
    if (c == ' ' || c == '-' || c == '_') {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(text::lower(c));
    }
  }
  return out;
}

}  // namespace detail

inline constexpr std::string_view machine_name(Category c) {
  return detail::kCategoryNames[static_cast<std::size_t>(c)].machine;
}
inline constexpr std::string_view display_name(Category c) {
  return detail::kCategoryNames[static_cast<std::size_t>(c)].display;
}
inline constexpr std::string_view machine_name(Subcategory s) {
  return detail::kSubcategoryNames[static_cast<std::size_t>(s)].machine;
}
inline constexpr std::string_view display_name(Subcategory s) {
  return detail::kSubcategoryNames[static_cast<std::size_t>(s)].display;
}
inline constexpr Category category_of(Subcategory s) {
  return detail::kSubcategoryNames[static_cast<std::size_t>(s)].parent;
}

inline std::optional<Category> find_category(std::string_view name) {
  const std::string folded = detail::fold_name(name);
  for (Category c : kCategories) {
    if (folded == machine_name(c)) return c;
  }
  return std::nullopt;
}

inline std::optional<Subcategory> find_subcategory(std::string_view name) {
  const std::string folded = detail::fold_name(name);
  for (Subcategory s : kSubcategories) {
    if (folded == machine_name(s)) return s;
  }
  return std::nullopt;
}

struct CommonSenseTag {
  Category category;
  Subcategory subcategory;

  friend constexpr bool operator==(const CommonSenseTag&, const CommonSenseTag&) = default;
};

/// Case-insensitive lookup on canonical names (machine or display form).
inline CommonSenseTag parse_common_sense_tag(std::string_view category_name,
                                             std::string_view subcategory_name) {
  if (text::trim(category_name).empty() || text::trim(subcategory_name).empty()) {
    throw Error(ErrorCode::InvalidArgument, "category and subcategory names must be non-empty");
  }
  const auto category = find_category(category_name);
  if (!category) throw Error(ErrorCode::UnknownCategory, std::string(category_name));
  const auto sub = find_subcategory(subcategory_name);
  if (!sub) throw Error(ErrorCode::UnknownSubcategory, std::string(subcategory_name));
  if (category_of(*sub) != *category) {
    throw Error(ErrorCode::MismatchedPair,
                std::string(display_name(*sub)) + " belongs to " +
                    std::string(display_name(category_of(*sub))) + ", not " +
                    std::string(display_name(*category)));
  }
  return {*category, *sub};
}

/// "Time: Causality"
inline std::string render(const CommonSenseTag& tag) {
  return std::string(display_name(tag.category)) + ": " + std::string(display_name(tag.subcategory));
}

struct CategoryHistogram {
  std::array<std::size_t, kCategoryCount> counts{};

  std::size_t operator[](Category c) const { return counts[static_cast<std::size_t>(c)]; }
  std::size_t& operator[](Category c) { return counts[static_cast<std::size_t>(c)]; }
  std::size_t total() const { return counts[0] + counts[1] + counts[2]; }

  friend bool operator==(const CategoryHistogram&, const CategoryHistogram&) = default;
};

inline CategoryHistogram category_histogram(std::span<const CommonSenseTag> tags) {
  CategoryHistogram h;
  for (const auto& t : tags) ++h[t.category];
  return h;
}

enum class Capability {
  ProcessSensoryInputs,
  PredictActionEffects,
  RespectPhysicalConstraints,
  LearnFromInteractions,
};

enum class Agent { Human, Animal, RobotArm, HumanoidRobot, AutonomousVehicle };

inline constexpr std::array<std::string_view, 4> kCapabilityNames = {
    "process_sensory_inputs", "predict_action_effects", "respect_physical_constraints",
    "learn_from_interactions"};
inline constexpr std::array<std::string_view, 5> kAgentNames = {
    "human", "animal", "robot_arm", "humanoid_robot", "autonomous_vehicle"};

inline constexpr std::string_view machine_name(Capability c) {
  return kCapabilityNames[static_cast<std::size_t>(c)];
}
inline constexpr std::string_view machine_name(Agent a) {
  return kAgentNames[static_cast<std::size_t>(a)];
}

inline Capability parse_capability(std::string_view name) {
  const std::string folded = detail::fold_name(name);
  for (std::size_t i = 0; i < kCapabilityNames.size(); ++i) {
    if (folded == kCapabilityNames[i]) return static_cast<Capability>(i);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown capability: " + std::string(name));
}

inline Agent parse_agent(std::string_view name) {
  const std::string folded = detail::fold_name(name);
  for (std::size_t i = 0; i < kAgentNames.size(); ++i) {
    if (folded == kAgentNames[i]) return static_cast<Agent>(i);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown agent: " + std::string(name));
}

struct EmbodiedTag {
  Capability capability;
  Agent agent;

  friend constexpr bool operator==(const EmbodiedTag&, const EmbodiedTag&) = default;
};

// JSON: {"category": "time", "subcategory": "causality"}
inline void to_json(nlohmann::json& j, const CommonSenseTag& t) {
  j = nlohmann::json{{"category", machine_name(t.category)},
                     {"subcategory", machine_name(t.subcategory)}};
}
inline void from_json(const nlohmann::json& j, CommonSenseTag& t) {
  t = parse_common_sense_tag(j.at("category").get<std::string>(),
                             j.at("subcategory").get<std::string>());
}
inline void to_json(nlohmann::json& j, const EmbodiedTag& t) {
  j = nlohmann::json{{"capability", machine_name(t.capability)}, {"agent", machine_name(t.agent)}};
}
inline void from_json(const nlohmann::json& j, EmbodiedTag& t) {
  t = {parse_capability(j.at("capability").get<std::string>()),
       parse_agent(j.at("agent").get<std::string>())};
}

}  // namespace physr::ontology
