#include "mvk/dataengine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

#include "mvk/rng.hpp"
#include "mvk/runconfig.hpp"

namespace fs = std::filesystem;

namespace mvk {

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

const std::set<std::string> kTaskTags = {
    "vqa",        "vqa_open",  "vqa_closed", "classification",
    "report_gen", "detect_2d", "detect_3d",  "landmark"};
const std::set<std::string> kFormats = {
    "qa_jsonl", "caption_jsonl", "box2d_jsonl", "box3d_jsonl", "landmark_csv"};
const std::set<std::string> kManifestKeys = {
    "dataset_id", "task",           "language",       "format",
    "train_path", "valid_path",     "test_path",      "expected_train",
    "expected_valid", "expected_test", "dimensions_path", "spacing_mm_per_px",
    "image_mode"};

long parse_count(const std::string& key, const std::string& value) {
  try {
    const long v = std::stol(value);
    if (v < 0) throw ConfigError(key + " must be non-negative");
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a number: " + value);
  }
}

}  // namespace

DatasetManifest parse_manifest(const std::string& path) {
  const auto kv = read_kv_file(path);
  for (const auto& [k, _] : kv) {
    if (!kManifestKeys.count(k)) throw ConfigError(path + ": unknown manifest key: " + k);
  }
  auto req = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.empty())
      throw ConfigError(path + ": missing required key: " + key);
    return it->second;
  };
  auto opt = [&](const std::string& key) -> std::string {
    const auto it = kv.find(key);
    return it == kv.end() ? "" : it->second;
  };

  DatasetManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  m.dataset_id = req("dataset_id");
  m.task_tag = req("task");
  if (!kTaskTags.count(m.task_tag)) throw ConfigError(path + ": unknown task: " + m.task_tag);
  m.format = req("format");
  if (!kFormats.count(m.format)) throw ConfigError(path + ": unknown format: " + m.format);
  m.language = language_from_string(kv.count("language") ? kv.at("language") : "en");

  const std::pair<Split, std::string> split_keys[] = {
      {Split::Train, "train_path"}, {Split::Valid, "valid_path"}, {Split::Test, "test_path"}};
  std::set<std::string> seen_paths;
  for (const auto& [split, key] : split_keys) {
    const std::string p = opt(key);
    if (p.empty()) continue;
    if (!seen_paths.insert(p).second)
      throw ConfigError(path + ": split paths must be distinct: " + p);
    m.split_paths[split] = resolve_path(m.base_dir, p);
  }
  m.expected.train = kv.count("expected_train") ? parse_count("expected_train", kv.at("expected_train")) : 0;
  m.expected.valid = kv.count("expected_valid") ? parse_count("expected_valid", kv.at("expected_valid")) : 0;
  m.expected.test = kv.count("expected_test") ? parse_count("expected_test", kv.at("expected_test")) : 0;
  if (!opt("dimensions_path").empty())
    m.dimensions_path = resolve_path(m.base_dir, kv.at("dimensions_path"));
  if (!opt("spacing_mm_per_px").empty()) {
    m.spacing_mm_per_px = std::stod(kv.at("spacing_mm_per_px"));
    if (*m.spacing_mm_per_px <= 0) throw ConfigError(path + ": spacing_mm_per_px must be > 0");
  }
  if (!opt("image_mode").empty()) {
    m.image_mode = kv.at("image_mode");
    if (m.image_mode != "uri" && m.image_mode != "base64")
      throw ConfigError(path + ": image_mode must be uri or base64");
  }
  return m;
}

std::vector<DatasetManifest> load_manifest_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("manifest directory not found: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".manifest")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw ConfigError("no .manifest files in " + dir);
  std::vector<DatasetManifest> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(parse_manifest(p));
  return out;
}

// ---------------------------------------------------------------------------
// Source-format adapters
// ---------------------------------------------------------------------------

namespace {

using DimensionMap = std::unordered_map<std::string, std::pair<long, long>>;

DimensionMap load_dimensions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dimension map: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error("dimension map must be a JSON object: " + path);
  DimensionMap out;
  for (const auto& [ref, wh] : j.items()) {
    if (!wh.is_array() || wh.size() != 2)
      throw Error("dimension map entries must be [width, height]: " + path);
    out[ref] = {wh[0].get<long>(), wh[1].get<long>()};
  }
  return out;
}

std::vector<std::string> record_images(const json& j, const std::string& file, size_t line) {
  if (j.contains("images")) return j["images"].get<std::vector<std::string>>();
  if (j.contains("image")) return {j["image"].get<std::string>()};
  throw FormatError(file, line, "record needs image or images");
}

std::string record_id(const json& j, const DatasetManifest& m, Split split, size_t line) {
  if (j.contains("id")) {
    if (j["id"].is_string()) return j["id"].get<std::string>();
    return j["id"].dump();
  }
  return m.dataset_id + "-" + to_string(split) + "-" + std::to_string(line);
}

int norm_coord(double px, long dim) {
  const long v = std::lround(1000.0 * px / static_cast<double>(dim));
  return static_cast<int>(std::clamp<long>(v, 0, 1000));
}

void finish_sample(Sample&& s, const std::string& file, size_t line,
                   std::set<std::string>& seen_ids,
                   const std::function<void(Sample&&)>& sink) {
  if (!seen_ids.insert(s.id).second) throw FormatError(file, line, "duplicate id: " + s.id);
  const auto violations = validate_sample(s);
  if (!violations.empty()) {
    std::string msg = "invalid sample:";
    for (const auto& v : violations) msg += " " + v + ";";
    throw FormatError(file, line, msg);
  }
  sink(std::move(s));
}

void ingest_qa_jsonl(const DatasetManifest& m, Split split, const std::string& file,
                     const std::function<void(Sample&&)>& sink) {
  std::set<std::string> seen_ids;
  for_each_jsonl(file, [&](size_t line, const json& j) {
    Sample s;
    s.id = record_id(j, m, split, line);
    s.dataset_id = m.dataset_id;
    s.language = j.contains("language")
                     ? language_from_string(j["language"].get<std::string>())
                     : m.language;
    s.image_refs = record_images(j, file, line);
    s.split = split;
    if (!j.contains("question")) throw FormatError(file, line, "record needs question");
    s.question = j["question"].get<std::string>();

    const bool has_options = j.contains("options") && !j["options"].is_null();
    if (m.task_tag == "vqa_open" && has_options)
      throw FormatError(file, line, "open VQA dataset carries options");
    if ((m.task_tag == "vqa_closed" || m.task_tag == "classification") && !has_options)
      throw FormatError(file, line, "closed dataset record lacks options");

    if (has_options) {
      s.task = m.task_tag == "classification" ? TaskKind::Classification : TaskKind::VqaClosed;
      s.options = j["options"].get<std::vector<std::string>>();
      const json& answer = j.at("answer");
      int index = -1;
      if (answer.is_number_integer()) {
        index = answer.get<int>();
      } else if (answer.is_string()) {
        const std::string a = answer.get<std::string>();
        for (size_t k = 0; k < s.options->size(); ++k) {
          if ((*s.options)[k] == a) {
            index = static_cast<int>(k);
            break;
          }
        }
        if (index < 0) throw FormatError(file, line, "answer not among options: " + a);
      } else {
        throw FormatError(file, line, "answer must be a string or option index");
      }
      s.ground_truth = ChoiceAnswer{index};
    } else {
      s.task = TaskKind::VqaOpen;
      if (!j.contains("answer") || !j["answer"].is_string())
        throw FormatError(file, line, "open record needs a string answer");
      s.ground_truth = TextAnswer{j["answer"].get<std::string>()};
    }
    finish_sample(std::move(s), file, line, seen_ids, sink);
  });
}

void ingest_caption_jsonl(const DatasetManifest& m, Split split, const std::string& file,
                          const std::function<void(Sample&&)>& sink) {
  std::set<std::string> seen_ids;
  for_each_jsonl(file, [&](size_t line, const json& j) {
    Sample s;
    s.id = record_id(j, m, split, line);
    s.dataset_id = m.dataset_id;
    s.task = TaskKind::ReportGen;
    s.language = j.contains("language")
                     ? language_from_string(j["language"].get<std::string>())
                     : m.language;
    s.image_refs = record_images(j, file, line);
    s.split = split;
    std::string text;
    for (const char* key : {"caption", "report", "text"}) {
      if (j.contains(key)) {
        text = j[key].get<std::string>();
        break;
      }
    }
    if (text.empty()) throw FormatError(file, line, "record needs caption/report/text");
    s.ground_truth = TextAnswer{text};
    finish_sample(std::move(s), file, line, seen_ids, sink);
  });
}

void ingest_box2d_jsonl(const DatasetManifest& m, Split split, const std::string& file,
                        const std::function<void(Sample&&)>& sink) {
  std::optional<DimensionMap> dims;
  if (m.dimensions_path) dims = load_dimensions(*m.dimensions_path);
  std::set<std::string> seen_ids;
  for_each_jsonl(file, [&](size_t line, const json& j) {
    Sample s;
    s.id = record_id(j, m, split, line);
    s.dataset_id = m.dataset_id;
    s.task = TaskKind::Detect2D;
    s.language = m.language;
    s.image_refs = record_images(j, file, line);
    s.split = split;
    if (!j.contains("object")) throw FormatError(file, line, "record needs object");
    s.question = j["object"].get<std::string>();
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 4)
      throw FormatError(file, line, "box must be [x1,y1,x2,y2]");

    long width = 0, height = 0;
    if (j.contains("width") && j.contains("height")) {
      width = j["width"].get<long>();
      height = j["height"].get<long>();
    } else if (dims) {
      const auto it = dims->find(s.image_refs.front());
      if (it == dims->end())
        throw MissingDimensions(file + ":" + std::to_string(line) +
                                ": no dimensions for image " + s.image_refs.front());
      width = it->second.first;
      height = it->second.second;
    } else {
      throw MissingDimensions(file + ":" + std::to_string(line) +
                              ": 2D box dataset needs record width/height or a dimension map");
    }
    if (width <= 0 || height <= 0) throw FormatError(file, line, "non-positive image dimensions");

    Box2D box;
    box.x1 = norm_coord(std::min(b[0].get<double>(), b[2].get<double>()), width);
    box.x2 = norm_coord(std::max(b[0].get<double>(), b[2].get<double>()), width);
    box.y1 = norm_coord(std::min(b[1].get<double>(), b[3].get<double>()), height);
    box.y2 = norm_coord(std::max(b[1].get<double>(), b[3].get<double>()), height);
    s.ground_truth = box;
    finish_sample(std::move(s), file, line, seen_ids, sink);
  });
}

void ingest_box3d_jsonl(const DatasetManifest& m, Split split, const std::string& file,
                        const std::function<void(Sample&&)>& sink) {
  std::set<std::string> seen_ids;
  for_each_jsonl(file, [&](size_t line, const json& j) {
    Sample s;
    s.id = record_id(j, m, split, line);
    s.dataset_id = m.dataset_id;
    s.task = TaskKind::Detect3D;
    s.language = m.language;
    if (j.contains("volume"))
      s.image_refs = {j["volume"].get<std::string>()};
    else
      s.image_refs = record_images(j, file, line);
    s.split = split;
    if (!j.contains("object")) throw FormatError(file, line, "record needs object");
    s.question = j["object"].get<std::string>();
    const auto& b = j.at("box");
    if (!b.is_array() || b.size() != 6)
      throw FormatError(file, line, "box must be [x1,y1,z1,x2,y2,z2]");
    Box3D box;
    box.x1 = std::min(b[0].get<int>(), b[3].get<int>());
    box.x2 = std::max(b[0].get<int>(), b[3].get<int>());
    box.y1 = std::min(b[1].get<int>(), b[4].get<int>());
    box.y2 = std::max(b[1].get<int>(), b[4].get<int>());
    box.z1 = std::min(b[2].get<int>(), b[5].get<int>());
    box.z2 = std::max(b[2].get<int>(), b[5].get<int>());
    s.ground_truth = box;
    finish_sample(std::move(s), file, line, seen_ids, sink);
  });
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void ingest_landmark_csv(const DatasetManifest& m, Split split, const std::string& file,
                         const std::function<void(Sample&&)>& sink) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open file: " + file);
  std::string line;
  size_t line_no = 0;
  bool saw_header = false;
  bool has_spacing_col = false;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split_csv_line(line);
    if (!saw_header) {
      if (cols.size() < 4 || cols[0] != "image" || cols[1] != "landmark" || cols[2] != "x" ||
          cols[3] != "y")
        throw FormatError(file, line_no, "expected header image,landmark,x,y[,spacing_mm_per_px]");
      has_spacing_col = cols.size() >= 5 && cols[4] == "spacing_mm_per_px";
      saw_header = true;
      continue;
    }
    if (cols.size() < 4) throw FormatError(file, line_no, "row needs image,landmark,x,y");
    Sample s;
    s.id = m.dataset_id + "-" + to_string(split) + "-" + std::to_string(line_no);
    s.dataset_id = m.dataset_id;
    s.task = TaskKind::Landmark;
    s.language = m.language;
    s.image_refs = {cols[0]};
    s.question = cols[1];
    s.split = split;
    Point2D p;
    try {
      p.x = std::stod(cols[2]);
      p.y = std::stod(cols[3]);
    } catch (const std::exception&) {
      throw FormatError(file, line_no, "x,y must be numbers");
    }
    if (has_spacing_col && cols.size() >= 5 && !cols[4].empty()) {
      try {
        p.spacing_mm_per_px = std::stod(cols[4]);
      } catch (const std::exception&) {
        throw FormatError(file, line_no, "spacing_mm_per_px must be a number");
      }
    } else if (m.spacing_mm_per_px) {
      p.spacing_mm_per_px = m.spacing_mm_per_px;
    }
    s.ground_truth = LandmarkPoints{{NamedPoint{cols[1], p}}};
    finish_sample(std::move(s), file, line_no, seen_ids, sink);
  }
}

}  // namespace

void for_each_ingested(const DatasetManifest& m, Split split,
                       const std::function<void(Sample&&)>& sink) {
  const auto it = m.split_paths.find(split);
  if (it == m.split_paths.end()) return;  // absent split
  const std::string& file = it->second;
  if (m.format == "qa_jsonl") {
    if (m.task_tag != "vqa" && m.task_tag != "vqa_open" && m.task_tag != "vqa_closed" &&
        m.task_tag != "classification")
      throw ConfigError(m.dataset_id + ": qa_jsonl requires a vqa or classification task");
    ingest_qa_jsonl(m, split, file, sink);
  } else if (m.format == "caption_jsonl") {
    ingest_caption_jsonl(m, split, file, sink);
  } else if (m.format == "box2d_jsonl") {
    ingest_box2d_jsonl(m, split, file, sink);
  } else if (m.format == "box3d_jsonl") {
    ingest_box3d_jsonl(m, split, file, sink);
  } else if (m.format == "landmark_csv") {
    ingest_landmark_csv(m, split, file, sink);
  } else {
    throw ConfigError("unknown format: " + m.format);
  }
}

std::vector<Sample> ingest_split(const DatasetManifest& m, Split split) {
  std::vector<Sample> out;
  for_each_ingested(m, split, [&](Sample&& s) { out.push_back(std::move(s)); });
  return out;
}

SplitReport check_splits(const DatasetManifest& m) {
  SplitReport report;
  report.dataset_id = m.dataset_id;
  report.expected = m.expected;
  const Split splits[] = {Split::Train, Split::Valid, Split::Test};
  for (int i = 0; i < 3; ++i) {
    long count = 0;
    const bool present = m.split_paths.count(splits[i]) > 0;
    if (present) {
      for_each_ingested(m, splits[i], [&](Sample&&) { ++count; });
    }
    report.actual[i] = count;
    const long expected = m.expected.of(splits[i]);
    if (count != expected) {
      std::string msg = std::string(to_string(splits[i])) + ": expected " +
                        std::to_string(expected) + ", actual " + std::to_string(count);
      if (!present && expected > 0) msg += " (no file)";
      report.mismatches.push_back(std::move(msg));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Feature-alignment corpus
// ---------------------------------------------------------------------------

json encode_alignment_sample(const AlignmentSample& s) {
  json j;
  j["image_refs"] = s.image_refs;
  j["text"] = s.text;
  j["origin"] = s.origin;
  j["language"] = to_string(s.language);
  return j;
}

AlignmentSample decode_alignment_sample(const json& j) {
  AlignmentSample s;
  s.image_refs = j.at("image_refs").get<std::vector<std::string>>();
  s.text = j.at("text").get<std::string>();
  s.origin = j.at("origin").get<std::string>();
  s.language = language_from_string(j.value("language", "en"));
  return s;
}

json encode_synthesis_job(const SynthesisJob& job) {
  json j;
  j["job_id"] = job.job_id;
  j["image_refs"] = job.image_refs;
  j["captions"] = job.captions;
  j["prompt"] = job.prompt;
  j["rng_seed"] = job.rng_seed;
  j["language"] = to_string(job.language);
  return j;
}

SynthesisJob decode_synthesis_job(const json& j) {
  SynthesisJob job;
  job.job_id = j.at("job_id").get<std::string>();
  job.image_refs = j.at("image_refs").get<std::vector<std::string>>();
  job.captions = j.at("captions").get<std::vector<std::string>>();
  job.prompt = j.at("prompt").get<std::string>();
  job.rng_seed = j.value("rng_seed", static_cast<std::uint64_t>(0));
  job.language = language_from_string(j.value("language", "en"));
  return job;
}

std::vector<PoolEntry> read_pool_file(const std::string& path) {
  std::vector<PoolEntry> out;
  for_each_jsonl(path, [&](size_t line, const json& j) {
    PoolEntry e;
    if (!j.contains("image")) throw FormatError(path, line, "pool record needs image");
    e.image_ref = j["image"].get<std::string>();
    if (j.contains("caption"))
      e.caption = j["caption"].get<std::string>();
    else if (j.contains("text"))
      e.caption = j["text"].get<std::string>();
    else
      throw FormatError(path, line, "pool record needs caption/text");
    out.push_back(std::move(e));
  });
  return out;
}

std::string build_synthesis_prompt(const std::vector<std::string>& captions) {
  std::string prompt = "You are given " + std::to_string(captions.size()) +
                       " medical images with their descriptions.\n";
  for (size_t i = 0; i < captions.size(); ++i) {
    prompt += "Image " + std::to_string(i + 1) + ": " + captions[i] + "\n";
  }
  prompt += "Please answer their similarities and differences based on their titles and "
            "descriptions.";
  return prompt;
}

AlignmentPlan plan_alignment(const std::vector<PoolEntry>& pool, std::uint64_t seed,
                             double synthetic_fraction, int group_size, Language language) {
  if (group_size < 2) throw ConfigError("synthesis group size must be at least 2");
  if (synthetic_fraction < 0.0 || synthetic_fraction > 1.0)
    throw ConfigError("synthetic_fraction must lie in [0,1]");

  AlignmentPlan plan;
  plan.paired.reserve(pool.size());
  for (const auto& entry : pool) {
    plan.paired.push_back(AlignmentSample{{entry.image_ref}, entry.caption, "paired", language});
  }
  if (synthetic_fraction == 0.0) return plan;
  if (pool.size() < static_cast<size_t>(group_size))
    throw InsufficientPool("pool of " + std::to_string(pool.size()) +
                           " cannot form groups of " + std::to_string(group_size));

  const size_t budget = pool.size() / static_cast<size_t>(group_size);
  const auto target = static_cast<size_t>(
      std::llround(synthetic_fraction * static_cast<double>(pool.size()) / group_size));
  const size_t n_jobs = std::min(target, budget);

  std::vector<size_t> order(pool.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(seed);
  deterministic_shuffle(order, rng);

  std::vector<char> used(pool.size(), 0);
  std::set<std::string> refs_in_jobs;  // no image may appear in two jobs
  size_t cursor = 0;
  for (size_t j = 0; j < n_jobs; ++j) {
    SynthesisJob job;
    size_t probe = cursor;
    while (static_cast<int>(job.image_refs.size()) < group_size && probe < order.size()) {
      const size_t idx = order[probe];
      if (!used[idx] && !refs_in_jobs.count(pool[idx].image_ref)) {
        used[idx] = 1;
        refs_in_jobs.insert(pool[idx].image_ref);
        job.image_refs.push_back(pool[idx].image_ref);
        job.captions.push_back(pool[idx].caption);
      }
      ++probe;
    }
    while (cursor < order.size() && used[order[cursor]]) ++cursor;
    if (static_cast<int>(job.image_refs.size()) < group_size) break;  // pool exhausted
    char id[32];
    std::snprintf(id, sizeof(id), "job-%06zu", j);
    job.job_id = id;
    job.prompt = build_synthesis_prompt(job.captions);
    job.rng_seed = seed;
    job.language = language;
    plan.jobs.push_back(std::move(job));
  }
  return plan;
}

AlignmentSample assemble_alignment(const SynthesisJob& job, const std::string& llm_answer) {
  const size_t begin = llm_answer.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) throw EmptyAnswer("synthesis answer is empty: " + job.job_id);
  return AlignmentSample{job.image_refs, llm_answer, "synthetic", job.language};
}

// ---------------------------------------------------------------------------
// Instruction-tuning corpus
// ---------------------------------------------------------------------------

namespace {

std::string sft_line(const Sample& s, ChatFormat format, const TokenConfig& tokens) {
  json j = encode_rendered(render(s, tokens), format);
  j["target"] = render_label_for(s, tokens);
  return j.dump();
}

}  // namespace

std::vector<std::string> build_sft_lines(const std::vector<std::vector<Sample>>& datasets,
                                         std::uint64_t seed, ChatFormat format,
                                         const TokenConfig& tokens) {
  std::vector<std::string> lines;
  for (const auto& samples : datasets) {
    for (const auto& s : samples) lines.push_back(sft_line(s, format, tokens));
  }
  SplitMix64 rng(seed);
  deterministic_shuffle(lines, rng);
  return lines;
}

size_t build_sft(const std::vector<DatasetManifest>& manifests, std::uint64_t seed,
                 std::ostream& out, ChatFormat format, const TokenConfig& tokens) {
  std::vector<std::string> lines;
  for (const auto& m : manifests) {
    for_each_ingested(m, Split::Train,
                      [&](Sample&& s) { lines.push_back(sft_line(s, format, tokens)); });
  }
  SplitMix64 rng(seed);
  deterministic_shuffle(lines, rng);
  for (const auto& line : lines) out << line << "\n";
  return lines.size();
}

}  // namespace mvk
