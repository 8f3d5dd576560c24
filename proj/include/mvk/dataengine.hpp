#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvk/core.hpp"
#include "mvk/templates.hpp"

namespace mvk {

struct SplitCounts {
  long train = 0, valid = 0, test = 0;
  long of(Split s) const {
    switch (s) {
      case Split::Train: return train;
      case Split::Valid: return valid;
      case Split::Test: return test;
    }
    return 0;
  }
  bool operator==(const SplitCounts&) const = default;
};

// One declarative key-value document per dataset. Relative paths resolve
// against the manifest file's directory. Splits with no file are absent,
// not empty.
struct DatasetManifest {
  std::string dataset_id;
  // vqa (mixed open/closed) | vqa_open | vqa_closed | classification |
  // report_gen | detect_2d | detect_3d | landmark
  std::string task_tag;
  Language language = Language::En;
  // qa_jsonl | caption_jsonl | box2d_jsonl | box3d_jsonl | landmark_csv
  std::string format;
  std::map<Split, std::string> split_paths;
  SplitCounts expected;
  std::optional<std::string> dimensions_path;  // JSON object: image_ref -> [width, height]
  std::optional<double> spacing_mm_per_px;
  std::string image_mode = "uri";  // uri | base64, forwarded to the client
  std::string base_dir;
};

DatasetManifest parse_manifest(const std::string& path);
std::vector<DatasetManifest> load_manifest_dir(const std::string& dir);

// Streams one split through the dataset's source-format adapter. Every
// emitted sample has passed validate_sample; 2D boxes are converted to the
// 0-1000 grid (record-level width/height win over the manifest's dimension
// map). Throws FormatError with file/line context, MissingDimensions when a
// 2D box dataset has no usable dimensions.
void for_each_ingested(const DatasetManifest& m, Split split,
                       const std::function<void(Sample&&)>& sink);
std::vector<Sample> ingest_split(const DatasetManifest& m, Split split);

struct SplitReport {
  std::string dataset_id;
  std::array<long, 3> actual{0, 0, 0};  // train, valid, test
  SplitCounts expected;
  std::vector<std::string> mismatches;  // empty when counts agree
};

// Exact count comparison per split, streaming; mismatches are data, never
// fatal.
SplitReport check_splits(const DatasetManifest& m);

// ---------------------------------------------------------------------------
// Feature-alignment corpus
// ---------------------------------------------------------------------------

struct PoolEntry {
  std::string image_ref;
  std::string caption;
  bool operator==(const PoolEntry&) const = default;
};

struct AlignmentSample {
  std::vector<std::string> image_refs;
  std::string text;
  std::string origin;  // "paired" | "synthetic"
  Language language = Language::En;
  bool operator==(const AlignmentSample&) const = default;
};

// A planned compare-and-contrast prompt over a group of image-caption pairs,
// to be answered by an external LLM.
struct SynthesisJob {
  std::string job_id;
  std::vector<std::string> image_refs;
  std::vector<std::string> captions;
  std::string prompt;
  std::uint64_t rng_seed = 0;
  Language language = Language::En;
  bool operator==(const SynthesisJob&) const = default;
};

json encode_alignment_sample(const AlignmentSample& s);
AlignmentSample decode_alignment_sample(const json& j);
json encode_synthesis_job(const SynthesisJob& job);
SynthesisJob decode_synthesis_job(const json& j);

std::vector<PoolEntry> read_pool_file(const std::string& path);

std::string build_synthesis_prompt(const std::vector<std::string>& captions);

struct AlignmentPlan {
  std::vector<AlignmentSample> paired;
  std::vector<SynthesisJob> jobs;
};

// Paired samples pass through 1:1; synthesis jobs are formed by seeded
// random grouping without replacement (group size K, default pairs). The
// job count is round(synthetic_fraction * pool_size / K), capped by the
// without-replacement budget. Deterministic under a fixed seed.
AlignmentPlan plan_alignment(const std::vector<PoolEntry>& pool, std::uint64_t seed,
                             double synthetic_fraction, int group_size = 2,
                             Language language = Language::En);

AlignmentSample assemble_alignment(const SynthesisJob& job, const std::string& llm_answer);

// ---------------------------------------------------------------------------
// Instruction-tuning corpus
// ---------------------------------------------------------------------------

// Rendered instruction + target label lines for every train-split sample,
// globally shuffled across datasets under the seed (uniform interleave).
std::vector<std::string> build_sft_lines(const std::vector<std::vector<Sample>>& datasets,
                                         std::uint64_t seed,
                                         ChatFormat format = ChatFormat::Messages,
                                         const TokenConfig& tokens = {});
size_t build_sft(const std::vector<DatasetManifest>& manifests, std::uint64_t seed,
                 std::ostream& out, ChatFormat format = ChatFormat::Messages,
                 const TokenConfig& tokens = {});

}  // namespace mvk
