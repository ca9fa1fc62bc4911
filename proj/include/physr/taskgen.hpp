#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "physr/error.hpp"
#include "physr/mcq.hpp"
#include "physr/rng.hpp"
#include "physr/text.hpp"

namespace physr::taskgen {

// --- Spatial puzzles ----------------------------------------------------

enum class Position { TopLeft, TopRight, BottomLeft, BottomRight };
enum class Direction { Left, Right, Top, Bottom };

inline constexpr std::array<Position, 4> kPositions = {Position::TopLeft, Position::TopRight,
                                                      Position::BottomLeft, Position::BottomRight};
inline constexpr std::array<Direction, 4> kDirections = {Direction::Left, Direction::Right,
                                                        Direction::Top, Direction::Bottom};

inline constexpr std::string_view machine_name(Position p) {
  constexpr std::array<std::string_view, 4> names = {"top_left", "top_right", "bottom_left", "bottom_right"};
  return names[static_cast<std::size_t>(p)];
}

inline constexpr std::string_view machine_name(Direction d) {
  constexpr std::array<std::string_view, 4> names = {"left", "right", "top", "bottom"};
  return names[static_cast<std::size_t>(d)];
}

inline Position parse_position(std::string_view s) {
  for (Position p : kPositions) {
    if (text::iequals(s, machine_name(p))) return p;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown position: " + std::string(s));
}

inline Direction parse_direction(std::string_view s) {
  for (Direction d : kDirections) {
    if (text::iequals(s, machine_name(d))) return d;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown direction: " + std::string(s));
}

/// Strict 2x2 adjacency; no diagonals, no wrap-around.
inline constexpr std::optional<Position> neighbor(Position p, Direction d) {
  switch (p) {
    case Position::TopLeft:
      if (d == Direction::Right) return Position::TopRight;
      if (d == Direction::Bottom) return Position::BottomLeft;
      break;
    case Position::TopRight:
      if (d == Direction::Left) return Position::TopLeft;
      if (d == Direction::Bottom) return Position::BottomRight;
      break;
    case Position::BottomLeft:
      if (d == Direction::Top) return Position::TopLeft;
      if (d == Direction::Right) return Position::BottomRight;
      break;
    case Position::BottomRight:
      if (d == Direction::Top) return Position::TopRight;
      if (d == Direction::Left) return Position::BottomLeft;
      break;
  }
  return std::nullopt;
}

struct PatchGrid {
  std::string image_id;
  std::array<std::string, 4> descriptors;  // indexed by Position

  const std::string& at(Position p) const { return descriptors[static_cast<std::size_t>(p)]; }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Descriptors are given in TL, TR, BL, BR order.
inline PatchGrid split_into_patches(std::string image_id, std::span<const std::string> quadrant_descriptors) {
  if (quadrant_descriptors.size() != 4) {
    throw Error(ErrorCode::WrongArity,
                "expected 4 quadrant descriptors, got " + std::to_string(quadrant_descriptors.size()));
  }
  PatchGrid g{std::move(image_id), {}};
  std::copy(quadrant_descriptors.begin(), quadrant_descriptors.end(), g.descriptors.begin());
  return g;
}

struct DirectionTask {
  Direction direction;
};

struct SameImageTask {
  int k = 3;  // 2 or 3
};

using PuzzleTask = std::variant<DirectionTask, SameImageTask>;

struct PuzzleFrame {
  int index = 0;  // 1-based
  std::string image_id;
  Position position = Position::TopLeft;
  std::string descriptor;
};

struct PuzzleInstance {
  std::string id;
  std::string target_image_id;
  std::vector<PuzzleFrame> frames;
  int anchor_index = 1;
  PuzzleTask task;
  McqItem mcq;
  std::vector<int> ground_truth_frames;  // ascending
};

inline constexpr std::size_t kPuzzleOptions = 4;

namespace detail {

inline std::string frame_set_text(const std::vector<int>& frames) {
  std::vector<std::string> parts;
  for (int f : frames) parts.push_back("Frame " + std::to_string(f));
  return text::join(parts, ", ");
}

inline std::string puzzle_question(const PuzzleInstance& p, std::size_t images) {
  std::string q = "You are given " + std::to_string(p.frames.size()) + " frames cut from " +
                  std::to_string(images) + " different images, each image split into a 2x2 grid of patches. ";
  if (const auto* d = std::get_if<DirectionTask>(&p.task)) {
    q += "Looking at the first frame, which other frame is most likely to be at " +
         std::string(machine_name(d->direction)) + " of the first frame?";
  } else {
    const int k = std::get<SameImageTask>(p.task).k;
    q += "Looking at the first frame, which " + std::string(k == 2 ? "two" : "three") +
         " other frames are most likely to come from the same image as the first frame?";
  }
  q += "\n";
  for (const auto& f : p.frames) q += "\nFrame " + std::to_string(f.index) + ": " + f.descriptor;
  return q;
}

template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> pool, std::size_t n, SeededRng& rng) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

}  // namespace detail

/// Builds a shuffled-patch puzzle. Frame 1 is the anchor patch of `target`;
/// frames 2..N are a uniform shuffle of the remaining target patches and all
/// distractor patches. The hidden provenance of each frame defines the truth.
inline PuzzleInstance gen_puzzle(const PatchGrid& target, std::span<const PatchGrid> distractors,
                                 const PuzzleTask& task, SeededRng& rng, std::string id) {
  {
    std::set<std::string> ids{target.image_id};
    for (const auto& d : distractors) {
      if (!ids.insert(d.image_id).second) {
        throw Error(ErrorCode::InvalidArgument, "duplicate image id " + d.image_id);
      }
    }
  }
  if (const auto* s = std::get_if<SameImageTask>(&task); s && s->k != 2 && s->k != 3) {
    throw Error(ErrorCode::InvalidArgument, "same-image task needs k of 2 or 3");
  }
  if (distractors.empty()) {
    throw Error(ErrorCode::NotEnoughDistractors, "puzzle options need at least 1 distractor image");
  }

  std::vector<Position> anchors;
  for (Position p : kPositions) {
    if (const auto* d = std::get_if<DirectionTask>(&task); !d || neighbor(p, d->direction)) {
      anchors.push_back(p);
    }
  }
  const Position anchor = anchors[rng.uniform_below(anchors.size())];

  PuzzleInstance out;
  out.id = std::move(id);
  out.target_image_id = target.image_id;
  out.task = task;

  std::vector<PuzzleFrame> rest;
  for (Position p : kPositions) {
    if (p != anchor) rest.push_back({0, target.image_id, p, target.at(p)});
  }
  for (const auto& g : distractors) {
    for (Position p : kPositions) rest.push_back({0, g.image_id, p, g.at(p)});
  }
  rng.shuffle(std::span<PuzzleFrame>(rest));

  out.frames.push_back({1, target.image_id, anchor, target.at(anchor)});
  for (auto& f : rest) {
    f.index = static_cast<int>(out.frames.size()) + 1;
    out.frames.push_back(std::move(f));
  }

  std::vector<int> same_image;  // non-anchor target frames
  std::vector<int> foreign;     // distractor-image frames
  for (const auto& f : out.frames) {
    if (f.index == 1) continue;
    (f.image_id == target.image_id ? same_image : foreign).push_back(f.index);
  }

  std::vector<std::vector<int>> option_sets;
  if (const auto* d = std::get_if<DirectionTask>(&task)) {
    const Position want = *neighbor(anchor, d->direction);
    int answer = 0;
    for (const auto& f : out.frames) {
      if (f.image_id == target.image_id && f.position == want) answer = f.index;
    }
    out.ground_truth_frames = {answer};
    // Decoys: two from distractor images, the third from any non-answer frame.
    auto decoys = detail::draw_without_replacement(foreign, 2, rng);
    std::vector<int> third_pool;
    for (int f : foreign) {
      if (f != decoys[0] && f != decoys[1]) third_pool.push_back(f);
    }
    for (int f : same_image) {
      if (f != answer) third_pool.push_back(f);
    }
    decoys.push_back(third_pool[rng.uniform_below(third_pool.size())]);
    option_sets.push_back({answer});
    for (int f : decoys) option_sets.push_back({f});
  } else {
    const auto k = static_cast<std::size_t>(std::get<SameImageTask>(task).k);
    auto truth = detail::draw_without_replacement(same_image, k, rng);
    std::sort(truth.begin(), truth.end());
    out.ground_truth_frames = truth;
    option_sets.push_back(truth);
    // Decoys replace m >= 1 of the k frames with distractor-image frames, so
    // no decoy lies entirely inside the target image.
    std::set<std::vector<int>> used{truth};
    while (option_sets.size() < kPuzzleOptions) {
      const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform_below(k));
      auto set = detail::draw_without_replacement(foreign, m, rng);
      const auto keep = detail::draw_without_replacement(same_image, k - m, rng);
      set.insert(set.end(), keep.begin(), keep.end());
      std::sort(set.begin(), set.end());
      if (used.insert(set).second) option_sets.push_back(std::move(set));
    }
  }

  std::vector<std::size_t> order(option_sets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));

  McqItem& mcq = out.mcq;
  mcq.id = out.id;
  mcq.source = Source::Puzzle;
  mcq.media_ref = "puzzle:" + out.id;
  mcq.question = detail::puzzle_question(out, 1 + distractors.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    mcq.options.push_back({label_at(i), detail::frame_set_text(option_sets[order[i]])});
    if (order[i] == 0) mcq.correct_label = label_at(i);
  }
  return out;
}

inline nlohmann::json provenance_json(const PuzzleInstance& p) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : p.frames) {
    frames.push_back({{"index", f.index}, {"image_id", f.image_id}, {"position", machine_name(f.position)}});
  }
  nlohmann::json task;
  if (const auto* d = std::get_if<DirectionTask>(&p.task)) {
    task = {{"kind", "direction"}, {"direction", machine_name(d->direction)}};
  } else {
    task = {{"kind", "same_image"}, {"k", std::get<SameImageTask>(p.task).k}};
  }
  return {{"id", p.id},
          {"task", task},
          {"target_image_id", p.target_image_id},
          {"anchor_index", p.anchor_index},
          {"frames", frames},
          {"ground_truth_frames", p.ground_truth_frames}};
}

/// Opaque synthetic patch descriptors for generating puzzles without real images.
inline PatchGrid synthetic_patch_grid(std::string image_id, SeededRng& rng) {
  PatchGrid g{std::move(image_id), {}};
  for (auto& d : g.descriptors) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "patch %012llx",
                  static_cast<unsigned long long>(rng.next_u64() & 0xffffffffffffULL));
    d = buf;
  }
  return g;
}

// --- Arrow of time ------------------------------------------------------

enum class Playback { Forward, Backward };

inline constexpr std::string_view machine_name(Playback p) {
  return p == Playback::Forward ? "forward" : "backward";
}

inline Playback parse_playback(std::string_view s) {
  if (text::iequals(s, "forward")) return Playback::Forward;
  if (text::iequals(s, "backward")) return Playback::Backward;
  throw Error(ErrorCode::InvalidArgument, "unknown playback: " + std::string(s));
}

struct ClipRecord {
  std::string clip_id;
  Playback playback = Playback::Forward;
  std::string motion_summary;

  friend bool operator==(const ClipRecord&, const ClipRecord&) = default;
};

inline ClipRecord reverse_clip(ClipRecord clip) {
  clip.playback = clip.playback == Playback::Forward ? Playback::Backward : Playback::Forward;
  return clip;
}

inline void to_json(nlohmann::json& j, const ClipRecord& c) {
  j = {{"clip_id", c.clip_id}, {"playback", machine_name(c.playback)}, {"motion_summary", c.motion_summary}};
}
inline void from_json(const nlohmann::json& j, ClipRecord& c) {
  c.clip_id = j.at("clip_id").get<std::string>();
  c.playback = parse_playback(j.value("playback", std::string("forward")));
  c.motion_summary = j.value("motion_summary", std::string{});
}

inline constexpr std::string_view kAotQuestion = "Does this video play forward or backward?";

struct AotItem {
  McqItem mcq;
  ClipRecord clip;                 // as presented (after any balancing reversal)
  bool reversed_by_generator = false;
};

/// One binary MCQ per clip (A: forward, B: backward). Clips of the majority
/// playback are reversed at random until the two labels differ by at most 1.
inline std::vector<AotItem> gen_aot_items(std::span<const ClipRecord> clips, SeededRng& rng) {
  if (clips.empty()) throw Error(ErrorCode::EmptyInput, "gen_aot_mcqs needs at least one clip");
  std::vector<ClipRecord> work(clips.begin(), clips.end());
  std::vector<std::size_t> fwd, bwd;
  for (std::size_t i = 0; i < work.size(); ++i) {
    (work[i].playback == Playback::Forward ? fwd : bwd).push_back(i);
  }
  auto& majority = fwd.size() > bwd.size() ? fwd : bwd;
  const std::size_t flips = (std::max(fwd.size(), bwd.size()) - std::min(fwd.size(), bwd.size())) / 2;
  rng.shuffle(std::span<std::size_t>(majority));
  std::vector<bool> flipped(work.size(), false);
  for (std::size_t i = 0; i < flips; ++i) {
    work[majority[i]] = reverse_clip(work[majority[i]]);
    flipped[majority[i]] = true;
  }

  std::vector<AotItem> out;
  out.reserve(work.size());
  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto& c = work[i];
    const std::string tag(machine_name(c.playback));
    McqItem item = make_item(c.clip_id + ":" + tag, Source::Aot, std::string(kAotQuestion),
                             {"forward", "backward"}, c.playback == Playback::Forward ? 0 : 1,
                             c.clip_id + "@" + tag);
    out.push_back({std::move(item), c, flipped[i]});
  }
  return out;
}

inline std::vector<McqItem> gen_aot_mcqs(std::span<const ClipRecord> clips, SeededRng& rng) {
  std::vector<McqItem> out;
  for (auto& a : gen_aot_items(clips, rng)) out.push_back(std::move(a.mcq));
  return out;
}

// --- Object permanence --------------------------------------------------

enum class EventKind { Visible, OccludedStart, OccludedEnd, Removed };

inline constexpr std::string_view machine_name(EventKind k) {
  constexpr std::array<std::string_view, 4> names = {"visible", "occluded_start", "occluded_end", "removed"};
  return names[static_cast<std::size_t>(k)];
}

inline EventKind parse_event_kind(std::string_view s) {
  for (EventKind k : {EventKind::Visible, EventKind::OccludedStart, EventKind::OccludedEnd, EventKind::Removed}) {
    if (text::iequals(s, machine_name(k))) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown event kind: " + std::string(s));
}

struct SceneEvent {
  double time = 0.0;
  std::string object;
  EventKind kind = EventKind::Visible;

  friend bool operator==(const SceneEvent&, const SceneEvent&) = default;
};

inline constexpr double kDefaultClipEnd = 10.0;

struct SceneEventLog {
  std::vector<std::string> objects;
  std::vector<SceneEvent> events;  // time-ordered
  double clip_end = kDefaultClipEnd;
  std::string camera_note;

  friend bool operator==(const SceneEventLog&, const SceneEventLog&) = default;
};

/// Checks the log invariants, including the generator guarantee that a
/// surviving occluded object ends its occlusion and is seen again.
inline std::vector<std::string> log_violations(const SceneEventLog& log) {
  struct State {
    bool occluded = false;
    bool removed = false;
    bool awaiting_visible = false;
  };
  std::vector<std::string> out;
  std::map<std::string, State> state;
  for (const auto& o : log.objects) {
    if (!state.emplace(o, State{}).second) out.push_back("duplicate object \"" + o + "\"");
  }
  if (!(log.clip_end > 0.0)) out.push_back("clip_end must be positive");
  double last = 0.0;
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const auto& e = log.events[i];
    const std::string where = "event " + std::to_string(i) + " (" + e.object + ", " +
                              std::string(machine_name(e.kind)) + "): ";
    if (!(e.time >= 0.0 && e.time <= log.clip_end)) out.push_back(where + "time outside [0, clip_end]");
    if (e.time < last) out.push_back(where + "time decreases");
    last = std::max(last, e.time);
    auto it = state.find(e.object);
    if (it == state.end()) {
      out.push_back(where + "unknown object");
      continue;
    }
    State& s = it->second;
    switch (e.kind) {
      case EventKind::Visible:
        if (s.removed) out.push_back(where + "visible after removal");
        if (s.occluded) out.push_back(where + "visible while occluded");
        s.awaiting_visible = false;
        break;
      case EventKind::OccludedStart:
        if (s.removed) out.push_back(where + "occlusion after removal");
        if (s.occluded) out.push_back(where + "occlusion already open");
        if (s.awaiting_visible) out.push_back(where + "re-occluded before reappearing");
        s.occluded = true;
        break;
      case EventKind::OccludedEnd:
        if (!s.occluded) out.push_back(where + "no unmatched occluded_start");
        s.occluded = false;
        s.awaiting_visible = !s.removed;
        break;
      case EventKind::Removed:
        if (s.removed) out.push_back(where + "removed twice");
        if (!s.occluded) out.push_back(where + "removed while not occluded");
        s.removed = true;
        break;
    }
  }
  for (const auto& [name, s] : state) {
    if (!s.removed && s.occluded) out.push_back("\"" + name + "\" still occluded at clip end without removal");
    if (!s.removed && s.awaiting_visible) out.push_back("\"" + name + "\" never reappears after occlusion");
  }
  return out;
}

inline void require_valid(const SceneEventLog& log) {
  if (auto v = log_violations(log); !v.empty()) throw Error(ErrorCode::InvalidLog, v.front());
}

struct PermanenceConfig {
  std::size_t object_count = 4;
  double occlusion_probability = 0.5;
  double removal_probability = 0.5;
  double clip_end = kDefaultClipEnd;
};

inline constexpr std::array<std::string_view, 12> kSceneObjects = {
    "akita black bowl", "cookies",      "glazed rim porcelain ramekin", "plate",
    "wooden cabinet",   "flat stove",   "red plate",                    "silver plate",
    "ketchup bottle",   "butter",       "white mug",                    "wine bottle"};

inline SceneEventLog gen_permanence_scene(const PermanenceConfig& config, SeededRng& rng) {
  if (config.object_count < 1) throw Error(ErrorCode::InvalidArgument, "object_count must be >= 1");
  for (double p : {config.occlusion_probability, config.removal_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "probabilities must be in [0, 1]");
  }
  if (!(config.clip_end > 0.0)) throw Error(ErrorCode::InvalidArgument, "clip_end must be positive");

  SceneEventLog log;
  log.clip_end = config.clip_end;
  const double T = config.clip_end;

  std::vector<std::size_t> pick(kSceneObjects.size());
  for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
  rng.shuffle(std::span<std::size_t>(pick));
  for (std::size_t i = 0; i < config.object_count; ++i) {
    std::string name(kSceneObjects[pick[i % pick.size()]]);
    if (i >= pick.size()) name += " #" + std::to_string(i / pick.size() + 1);
    log.objects.push_back(std::move(name));
  }

  const double start_az = rng.uniform(0.0, 360.0);
  const double far_az = rng.uniform(0.0, 360.0);
  char note[160];
  std::snprintf(note, sizeof note,
                "camera faces the table center, orbits from azimuth %.1f to %.1f degrees, "
                "then returns near its start",
                start_az, far_az);
  log.camera_note = note;

  for (const auto& name : log.objects) {
    log.events.push_back({0.0, name, EventKind::Visible});
    if (!rng.bernoulli(config.occlusion_probability)) continue;
    const double start = T * rng.uniform(0.1, 0.5);
    const double end = start + T * rng.uniform(0.05, 0.3);
    log.events.push_back({start, name, EventKind::OccludedStart});
    if (rng.bernoulli(config.removal_probability)) {
      log.events.push_back({rng.uniform(start, end), name, EventKind::Removed});
      log.events.push_back({end, name, EventKind::OccludedEnd});
    } else {
      log.events.push_back({end, name, EventKind::OccludedEnd});
      log.events.push_back({end + T * rng.uniform(0.0, 0.05), name, EventKind::Visible});
    }
  }
  std::stable_sort(log.events.begin(), log.events.end(),
                   [](const SceneEvent& a, const SceneEvent& b) { return a.time < b.time; });
  return log;
}

/// True iff some object is removed while occluded, i.e. it never reappears.
inline bool label_permanence(const SceneEventLog& log) {
  require_valid(log);
  return std::any_of(log.events.begin(), log.events.end(),
                     [](const SceneEvent& e) { return e.kind == EventKind::Removed; });
}

inline constexpr std::string_view kPermanencePreamble =
    "This is a video of a robotic simulation environment. The robotic arm moves and may occlude "
    "objects. The camera moves around the scene and then returns to a position near its initial "
    "location. Occlusion can also occur due to the camera's movement.";

inline constexpr std::string_view kPermanenceQuestion =
    "Is there an object that becomes temporarily occluded but does not reappear in the end, "
    "contradicting object permanence?";

/// Binary MCQ, A: Yes / B: No; "Yes" is correct iff the log violates permanence.
inline McqItem permanence_to_mcq(const SceneEventLog& log, std::string id) {
  const bool violated = label_permanence(log);
  std::string objects;
  for (std::size_t i = 0; i < log.objects.size(); ++i) {
    if (i) objects += (i + 1 == log.objects.size()) ? " and " : ", ";
    objects += log.objects[i];
  }
  std::string question = std::string(kPermanencePreamble) + "\n\nThe objects in the video are " +
                         objects + ".\n\n" + std::string(kPermanenceQuestion);
  return make_item(id, Source::ObjectPermanence, std::move(question), {"Yes", "No"}, violated ? 0 : 1,
                   "sim:" + id);
}

inline void to_json(nlohmann::json& j, const SceneEvent& e) {
  j = {{"time", e.time}, {"object", e.object}, {"kind", machine_name(e.kind)}};
}
inline void from_json(const nlohmann::json& j, SceneEvent& e) {
  e.time = j.at("time").get<double>();
  e.object = j.at("object").get<std::string>();
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
}
inline void to_json(nlohmann::json& j, const SceneEventLog& l) {
  j = {{"objects", l.objects}, {"events", l.events}, {"clip_end", l.clip_end}, {"camera_note", l.camera_note}};
}
inline void from_json(const nlohmann::json& j, SceneEventLog& l) {
  l.objects = j.at("objects").get<std::vector<std::string>>();
  l.events = j.at("events").get<std::vector<SceneEvent>>();
  l.clip_end = j.value("clip_end", kDefaultClipEnd);
  l.camera_note = j.value("camera_note", std::string{});
}

}  // namespace physr::taskgen
