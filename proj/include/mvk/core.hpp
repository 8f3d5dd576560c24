#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mvk/errors.hpp"

namespace mvk {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Task taxonomy
// ---------------------------------------------------------------------------

enum class TaskKind {
  VqaOpen,
  VqaClosed,
  Classification,
  ReportGen,
  Detect2D,
  Detect3D,
  Landmark,
};

enum class Split { Train, Valid, Test };
enum class Language { En, Zh };

const char* to_string(TaskKind t);
const char* to_string(Split s);
const char* to_string(Language l);
TaskKind task_from_string(const std::string& s);
Split split_from_string(const std::string& s);
Language language_from_string(const std::string& s);

// Closed tasks carry an options list; open tasks must not.
inline bool task_is_closed(TaskKind t) {
  return t == TaskKind::VqaClosed || t == TaskKind::Classification;
}
inline bool task_is_open_text(TaskKind t) {
  return t == TaskKind::VqaOpen || t == TaskKind::ReportGen;
}

// Task family used for grouping metric reports (open and closed VQA fold
// into one "vqa" family so per-dataset tables can show open/close/total).
std::string task_family(TaskKind t);

// ---------------------------------------------------------------------------
// Grounded geometry
// ---------------------------------------------------------------------------

// Axis-aligned box on the 0-1000 normalized grid, half-open on each axis:
// width = x2 - x1, so zero-width boxes have zero area.
struct Box2D {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool operator==(const Box2D&) const = default;
};

// Volumetric box in raw voxel indices, half-open per axis.
struct Box3D {
  int x1 = 0, y1 = 0, z1 = 0, x2 = 0, y2 = 0, z2 = 0;
  bool operator==(const Box3D&) const = default;
};

struct Point2D {
  double x = 0.0, y = 0.0;
  std::optional<double> spacing_mm_per_px;
  bool operator==(const Point2D&) const = default;
};

struct NamedPoint {
  std::string name;
  Point2D point;
  bool operator==(const NamedPoint&) const = default;
};

// ---------------------------------------------------------------------------
// Ground truth / parsed output
// ---------------------------------------------------------------------------

struct TextAnswer {
  std::string text;
  bool operator==(const TextAnswer&) const = default;
};

struct ChoiceAnswer {
  int index = -1;
  bool operator==(const ChoiceAnswer&) const = default;
};

struct LandmarkPoints {
  std::vector<NamedPoint> points;
  bool operator==(const LandmarkPoints&) const = default;
};

struct ParseFailed {
  std::string reason;
  bool operator==(const ParseFailed&) const = default;
};

using GroundTruth = std::variant<TextAnswer, ChoiceAnswer, Box2D, Box3D, LandmarkPoints>;

// Mirrors GroundTruth, with two parse-side additions: a bare Point2D (the
// landmark grammar carries no name) and ParseFailed.
using ParsedOutput =
    std::variant<TextAnswer, ChoiceAnswer, Box2D, Box3D, LandmarkPoints, Point2D, ParseFailed>;

inline bool parse_failed(const ParsedOutput& p) {
  return std::holds_alternative<ParseFailed>(p);
}

// ---------------------------------------------------------------------------
// Unified record schema
// ---------------------------------------------------------------------------

struct Sample {
  std::string id;
  std::string dataset_id;
  TaskKind task = TaskKind::VqaOpen;
  Language language = Language::En;
  std::vector<std::string> image_refs;
  std::string question;
  std::optional<std::vector<std::string>> options;
  GroundTruth ground_truth;
  Split split = Split::Train;
  json extra = json::object();  // unknown fields, preserved on round-trip

  bool operator==(const Sample&) const = default;
};

struct Prediction {
  std::string sample_id;
  std::string raw_text;
  std::optional<ParsedOutput> parsed;
  std::string model_id;
  std::int64_t latency_ms = 0;

  bool operator==(const Prediction&) const = default;
};

// Returns every invariant violation; empty means valid.
std::vector<std::string> validate_sample(const Sample& s);

// ---------------------------------------------------------------------------
// JSON codecs (unified record file: UTF-8 JSON Lines, snake_case fields)
// ---------------------------------------------------------------------------

json encode_ground_truth(const GroundTruth& gt);
GroundTruth decode_ground_truth(const json& j);
json encode_parsed(const ParsedOutput& p);
ParsedOutput decode_parsed(const json& j);

json encode_sample(const Sample& s);
Sample decode_sample(const json& j);

json encode_prediction(const Prediction& p);
Prediction decode_prediction(const json& j);

// Streams a JSONL file, invoking fn(line_number, parsed_object) per line.
// Blank lines are skipped. Throws FormatError on malformed JSON.
void for_each_jsonl(const std::string& path,
                    const std::function<void(size_t, const json&)>& fn);

std::vector<Sample> read_sample_file(const std::string& path);
std::vector<Prediction> read_prediction_file(const std::string& path);

// Shortest round-trip decimal formatting (no exponent for the ranges the
// toolkit emits); integers print without a trailing ".0".
std::string format_number(double v);

}  // namespace mvk
