#include "mvk/core.hpp"

#include <charconv>
#include <fstream>
#include <set>

namespace mvk {

const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::VqaOpen: return "vqa_open";
    case TaskKind::VqaClosed: return "vqa_closed";
    case TaskKind::Classification: return "classification";
    case TaskKind::ReportGen: return "report_gen";
    case TaskKind::Detect2D: return "detect_2d";
    case TaskKind::Detect3D: return "detect_3d";
    case TaskKind::Landmark: return "landmark";
  }
  return "unknown";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "unknown";
}

const char* to_string(Language l) {
  return l == Language::Zh ? "zh" : "en";
}

TaskKind task_from_string(const std::string& s) {
  if (s == "vqa_open") return TaskKind::VqaOpen;
  if (s == "vqa_closed") return TaskKind::VqaClosed;
  if (s == "classification") return TaskKind::Classification;
  if (s == "report_gen") return TaskKind::ReportGen;
  if (s == "detect_2d") return TaskKind::Detect2D;
  if (s == "detect_3d") return TaskKind::Detect3D;
  if (s == "landmark") return TaskKind::Landmark;
  throw SchemaError("unknown task kind: " + s);
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw SchemaError("unknown split: " + s);
}

Language language_from_string(const std::string& s) {
  if (s == "en") return Language::En;
  if (s == "zh") return Language::Zh;
  throw SchemaError("unknown language: " + s);
}

std::string task_family(TaskKind t) {
  switch (t) {
    case TaskKind::VqaOpen:
    case TaskKind::VqaClosed: return "vqa";
    default: return to_string(t);
  }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

void validate_box2d(const Box2D& b, std::vector<std::string>& out) {
  if (b.x1 < 0 || b.y1 < 0 || b.x2 < 0 || b.y2 < 0) out.push_back("negative coordinate");
  if (b.x1 > b.x2) out.push_back("x1 > x2");
  if (b.y1 > b.y2) out.push_back("y1 > y2");
  if (b.x1 > 1000 || b.x2 > 1000 || b.y1 > 1000 || b.y2 > 1000)
    out.push_back("coordinate exceeds 1000");
}

void validate_box3d(const Box3D& b, std::vector<std::string>& out) {
  if (b.x1 < 0 || b.y1 < 0 || b.z1 < 0 || b.x2 < 0 || b.y2 < 0 || b.z2 < 0)
    out.push_back("negative coordinate");
  if (b.x1 > b.x2) out.push_back("x1 > x2");
  if (b.y1 > b.y2) out.push_back("y1 > y2");
  if (b.z1 > b.z2) out.push_back("z1 > z2");
}

void validate_points(const LandmarkPoints& lp, std::vector<std::string>& out) {
  if (lp.points.empty()) out.push_back("landmark points empty");
  std::set<std::string> names;
  for (const auto& np : lp.points) {
    if (!names.insert(np.name).second) out.push_back("duplicate landmark name: " + np.name);
    if (np.point.x < 0 || np.point.y < 0) out.push_back("negative coordinate");
    if (np.point.spacing_mm_per_px && *np.point.spacing_mm_per_px <= 0)
      out.push_back("spacing_mm_per_px must be positive");
  }
}

bool ground_truth_matches_task(const Sample& s) {
  switch (s.task) {
    case TaskKind::VqaOpen:
    case TaskKind::ReportGen: return std::holds_alternative<TextAnswer>(s.ground_truth);
    case TaskKind::VqaClosed:
    case TaskKind::Classification: return std::holds_alternative<ChoiceAnswer>(s.ground_truth);
    case TaskKind::Detect2D: return std::holds_alternative<Box2D>(s.ground_truth);
    case TaskKind::Detect3D: return std::holds_alternative<Box3D>(s.ground_truth);
    case TaskKind::Landmark: return std::holds_alternative<LandmarkPoints>(s.ground_truth);
  }
  return false;
}

}  // namespace

std::vector<std::string> validate_sample(const Sample& s) {
  std::vector<std::string> out;
  if (s.id.empty()) out.push_back("id is empty");
  if (task_is_closed(s.task)) {
    if (!s.options || s.options->empty()) out.push_back("closed task requires options");
  } else if (task_is_open_text(s.task)) {
    if (s.options) out.push_back("open task forbids options");
  }
  // The 2D detection template references the image implicitly, so that task
  // alone may carry an empty ref list.
  if (s.image_refs.empty() && s.task != TaskKind::Detect2D)
    out.push_back("image_refs empty");
  if (!ground_truth_matches_task(s)) {
    out.push_back("ground truth variant does not match task");
    return out;
  }
  if (const auto* c = std::get_if<ChoiceAnswer>(&s.ground_truth)) {
    const int n = s.options ? static_cast<int>(s.options->size()) : 0;
    if (c->index < 0 || c->index >= n) out.push_back("choice index out of range");
  } else if (const auto* b2 = std::get_if<Box2D>(&s.ground_truth)) {
    validate_box2d(*b2, out);
  } else if (const auto* b3 = std::get_if<Box3D>(&s.ground_truth)) {
    validate_box3d(*b3, out);
  } else if (const auto* lp = std::get_if<LandmarkPoints>(&s.ground_truth)) {
    validate_points(*lp, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Codecs
// ---------------------------------------------------------------------------

json encode_ground_truth(const GroundTruth& gt) {
  json j;
  if (const auto* t = std::get_if<TextAnswer>(&gt)) {
    j["type"] = "text";
    j["text"] = t->text;
  } else if (const auto* c = std::get_if<ChoiceAnswer>(&gt)) {
    j["type"] = "choice";
    j["index"] = c->index;
  } else if (const auto* b = std::get_if<Box2D>(&gt)) {
    j["type"] = "box_2d";
    j["box"] = {b->x1, b->y1, b->x2, b->y2};
  } else if (const auto* b3 = std::get_if<Box3D>(&gt)) {
    j["type"] = "box_3d";
    j["box"] = {b3->x1, b3->y1, b3->z1, b3->x2, b3->y2, b3->z2};
  } else if (const auto* lp = std::get_if<LandmarkPoints>(&gt)) {
    j["type"] = "points";
    json arr = json::array();
    for (const auto& np : lp->points) {
      json p;
      p["name"] = np.name;
      p["x"] = np.point.x;
      p["y"] = np.point.y;
      if (np.point.spacing_mm_per_px) p["spacing_mm_per_px"] = *np.point.spacing_mm_per_px;
      arr.push_back(std::move(p));
    }
    j["points"] = std::move(arr);
  }
  return j;
}

GroundTruth decode_ground_truth(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "text") return TextAnswer{j.at("text").get<std::string>()};
  if (type == "choice") return ChoiceAnswer{j.at("index").get<int>()};
  if (type == "box_2d") {
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 4) throw SchemaError("box_2d requires 4 coordinates");
    return Box2D{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  }
  if (type == "box_3d") {
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 6) throw SchemaError("box_3d requires 6 coordinates");
    return Box3D{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(),
                 b[3].get<int>(), b[4].get<int>(), b[5].get<int>()};
  }
  if (type == "points") {
    LandmarkPoints lp;
    for (const auto& p : j.at("points")) {
      NamedPoint np;
      np.name = p.at("name").get<std::string>();
      np.point.x = p.at("x").get<double>();
      np.point.y = p.at("y").get<double>();
      if (p.contains("spacing_mm_per_px"))
        np.point.spacing_mm_per_px = p["spacing_mm_per_px"].get<double>();
      lp.points.push_back(std::move(np));
    }
    return lp;
  }
  throw SchemaError("unknown ground_truth type: " + type);
}

json encode_parsed(const ParsedOutput& p) {
  if (const auto* f = std::get_if<ParseFailed>(&p)) {
    json j;
    j["type"] = "parse_failed";
    j["reason"] = f->reason;
    return j;
  }
  if (const auto* pt = std::get_if<Point2D>(&p)) {
    json j;
    j["type"] = "point";
    j["x"] = pt->x;
    j["y"] = pt->y;
    return j;
  }
  if (const auto* t = std::get_if<TextAnswer>(&p)) return encode_ground_truth(GroundTruth{*t});
  if (const auto* c = std::get_if<ChoiceAnswer>(&p)) return encode_ground_truth(GroundTruth{*c});
  if (const auto* b = std::get_if<Box2D>(&p)) return encode_ground_truth(GroundTruth{*b});
  if (const auto* b3 = std::get_if<Box3D>(&p)) return encode_ground_truth(GroundTruth{*b3});
  return encode_ground_truth(GroundTruth{std::get<LandmarkPoints>(p)});
}

ParsedOutput decode_parsed(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "parse_failed") return ParseFailed{j.at("reason").get<std::string>()};
  if (type == "point")
    return Point2D{j.at("x").get<double>(), j.at("y").get<double>(), std::nullopt};
  ParsedOutput out;
  std::visit([&out](auto&& v) { out = std::move(v); }, decode_ground_truth(j));
  return out;
}

namespace {
const std::set<std::string> kSampleKeys = {
    "id", "dataset_id", "task", "language", "image_refs",
    "question", "options", "ground_truth", "split"};
}

json encode_sample(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["dataset_id"] = s.dataset_id;
  j["task"] = to_string(s.task);
  j["language"] = to_string(s.language);
  j["image_refs"] = s.image_refs;
  j["question"] = s.question;
  if (s.options) j["options"] = *s.options;
  j["ground_truth"] = encode_ground_truth(s.ground_truth);
  j["split"] = to_string(s.split);
  for (const auto& [k, v] : s.extra.items()) {
    if (!kSampleKeys.count(k)) j[k] = v;
  }
  return j;
}

Sample decode_sample(const json& j) {
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.dataset_id = j.at("dataset_id").get<std::string>();
  s.task = task_from_string(j.at("task").get<std::string>());
  s.language = language_from_string(j.value("language", "en"));
  s.image_refs = j.at("image_refs").get<std::vector<std::string>>();
  s.question = j.value("question", "");
  if (j.contains("options") && !j["options"].is_null())
    s.options = j["options"].get<std::vector<std::string>>();
  s.ground_truth = decode_ground_truth(j.at("ground_truth"));
  s.split = split_from_string(j.value("split", "train"));
  for (const auto& [k, v] : j.items()) {
    if (!kSampleKeys.count(k)) s.extra[k] = v;
  }
  return s;
}

json encode_prediction(const Prediction& p) {
  json j;
  j["sample_id"] = p.sample_id;
  j["raw_text"] = p.raw_text;
  if (p.parsed) j["parsed"] = encode_parsed(*p.parsed);
  j["model_id"] = p.model_id;
  j["latency_ms"] = p.latency_ms;
  return j;
}

Prediction decode_prediction(const json& j) {
  Prediction p;
  p.sample_id = j.at("sample_id").get<std::string>();
  p.raw_text = j.at("raw_text").get<std::string>();
  if (j.contains("parsed") && !j["parsed"].is_null()) p.parsed = decode_parsed(j["parsed"]);
  p.model_id = j.value("model_id", "");
  p.latency_ms = j.value("latency_ms", static_cast<std::int64_t>(0));
  return p;
}

void for_each_jsonl(const std::string& path,
                    const std::function<void(size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw FormatError(path, line_no, "malformed JSON");
    fn(line_no, j);
  }
}

std::vector<Sample> read_sample_file(const std::string& path) {
  std::vector<Sample> out;
  for_each_jsonl(path, [&](size_t line_no, const json& j) {
    try {
      out.push_back(decode_sample(j));
    } catch (const std::exception& e) {
      throw FormatError(path, line_no, e.what());
    }
  });
  return out;
}

std::vector<Prediction> read_prediction_file(const std::string& path) {
  std::vector<Prediction> out;
  for_each_jsonl(path, [&](size_t line_no, const json& j) {
    try {
      out.push_back(decode_prediction(j));
    } catch (const std::exception& e) {
      throw FormatError(path, line_no, e.what());
    }
  });
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

}  // namespace mvk
