// mvk: corpus construction, inference, and evaluation for multi-task
// medical vision-language models. Subcommands cover the ingest -> build ->
// infer -> score -> report pipeline plus a single-config orchestrator.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "mvk/client.hpp"
#include "mvk/core.hpp"
#include "mvk/dataengine.hpp"
#include "mvk/metrics.hpp"
#include "mvk/parse.hpp"
#include "mvk/report.hpp"
#include "mvk/runconfig.hpp"
#include "mvk/scoring.hpp"
#include "mvk/templates.hpp"

namespace fs = std::filesystem;
using namespace mvk;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitFatal = 2;
// Pipeline stage failures get distinct codes so callers can tell them apart.
constexpr int kExitStageIngest = 3;
constexpr int kExitStageBuild = 4;
constexpr int kExitStageInfer = 5;
constexpr int kExitStageScore = 6;
constexpr int kExitStageReport = 7;

struct EndpointFlags {
  std::string base_url;
  std::string model_id = "default";
  std::string auth_env;
  double timeout_s = 30.0;
  int max_retries = 3;
  int parallelism = 4;
  double rps = 0.0;
  int backoff_ms = 250;
  std::string image_mode = "uri";

  EndpointConfig to_config() const {
    EndpointConfig cfg;
    cfg.base_url = base_url;
    cfg.model_id = model_id;
    cfg.auth_env = auth_env;
    cfg.timeout_s = timeout_s;
    cfg.max_retries = max_retries;
    cfg.parallelism = parallelism;
    cfg.rps = rps;
    cfg.backoff_ms = backoff_ms;
    cfg.image_mode = image_mode;
    return cfg;
  }
};

void add_endpoint_flags(CLI::App* sub, EndpointFlags& f, bool required) {
  auto* opt = sub->add_option("--endpoint", f.base_url, "endpoint base URL");
  if (required) opt->required();
  sub->add_option("--model", f.model_id, "model id sent in requests");
  sub->add_option("--auth-env", f.auth_env, "env var holding the bearer token");
  sub->add_option("--timeout", f.timeout_s, "request timeout in seconds");
  sub->add_option("--retries", f.max_retries, "max retries on transient failures");
  sub->add_option("--parallelism", f.parallelism, "max in-flight requests");
  sub->add_option("--rps", f.rps, "requests-per-second ceiling (0 = off)");
  sub->add_option("--backoff-ms", f.backoff_ms, "retry backoff base in ms");
  sub->add_option("--image-mode", f.image_mode, "image transmission: uri|base64");
}

std::ofstream open_out(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write: " + path);
  return out;
}

void print_split_report(const SplitReport& r) {
  std::cout << r.dataset_id << ": train=" << r.actual[0] << " valid=" << r.actual[1]
            << " test=" << r.actual[2];
  if (r.mismatches.empty()) {
    std::cout << " (splits match)\n";
  } else {
    std::cout << " MISMATCH:";
    for (const auto& m : r.mismatches) std::cout << " [" << m << "]";
    std::cout << "\n";
  }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

SplitReport ingest_dataset(const DatasetManifest& m, const std::string& out_dir) {
  fs::create_directories(out_dir);
  SplitReport report;
  report.dataset_id = m.dataset_id;
  report.expected = m.expected;
  const Split splits[] = {Split::Train, Split::Valid, Split::Test};
  for (int i = 0; i < 3; ++i) {
    long count = 0;
    if (m.split_paths.count(splits[i])) {
      const std::string out_path =
          (fs::path(out_dir) / (m.dataset_id + "." + to_string(splits[i]) + ".jsonl")).string();
      auto out = open_out(out_path);
      for_each_ingested(m, splits[i], [&](Sample&& s) {
        out << encode_sample(s).dump() << "\n";
        ++count;
      });
    }
    report.actual[i] = count;
    const long expected = m.expected.of(splits[i]);
    if (count != expected)
      report.mismatches.push_back(std::string(to_string(splits[i])) + ": expected " +
                                  std::to_string(expected) + ", actual " + std::to_string(count));
  }
  for (const auto& mm : report.mismatches)
    log_event("split_mismatch", {{"dataset_id", m.dataset_id}, {"detail", mm}});
  return report;
}

int cmd_ingest(const std::string& manifest_path, const std::string& out_dir) {
  const DatasetManifest m = parse_manifest(manifest_path);
  print_split_report(ingest_dataset(m, out_dir));
  return kExitOk;
}

// ---------------------------------------------------------------------------
// build-align
// ---------------------------------------------------------------------------

int cmd_build_align(const std::string& pool_path, std::uint64_t seed, double fraction,
                    int group_size, const std::string& out_dir, const EndpointFlags& endpoint,
                    const std::string& cache_dir) {
  const auto pool = read_pool_file(pool_path);
  const AlignmentPlan plan = plan_alignment(pool, seed, fraction, group_size);
  fs::create_directories(out_dir);
  {
    auto out = open_out((fs::path(out_dir) / "paired.jsonl").string());
    for (const auto& s : plan.paired) out << encode_alignment_sample(s).dump() << "\n";
  }
  {
    auto out = open_out((fs::path(out_dir) / "jobs.jsonl").string());
    for (const auto& j : plan.jobs) out << encode_synthesis_job(j).dump() << "\n";
  }
  std::cout << "paired=" << plan.paired.size() << " jobs=" << plan.jobs.size() << "\n";
  if (endpoint.base_url.empty()) return kExitOk;

  std::optional<DiskCache> cache;
  if (!cache_dir.empty()) cache.emplace(cache_dir);
  RunStats stats;
  const SynthesisOutcome outcome =
      run_synthesis(plan.jobs, endpoint.to_config(), cache ? &*cache : nullptr, &stats);
  {
    auto out = open_out((fs::path(out_dir) / "synthetic.jsonl").string());
    for (const auto& s : outcome.samples) out << encode_alignment_sample(s).dump() << "\n";
  }
  std::cout << "synthetic=" << outcome.samples.size() << " failed=" << outcome.failed << "\n";
  return outcome.failed > 0 ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// build-sft
// ---------------------------------------------------------------------------

int cmd_build_sft(const std::string& manifest_dir, const std::vector<std::string>& manifest_files,
                  std::uint64_t seed, const std::string& out_path, const std::string& chat_format) {
  std::vector<DatasetManifest> manifests;
  if (!manifest_dir.empty()) manifests = load_manifest_dir(manifest_dir);
  for (const auto& f : manifest_files) manifests.push_back(parse_manifest(f));
  if (manifests.empty()) throw ConfigError("build-sft needs --manifests or --manifest");
  auto out = open_out(out_path);
  const size_t n = build_sft(manifests, seed, out, chat_format_from_string(chat_format));
  std::cout << "sft_records=" << n << " out=" << out_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

std::vector<Sample> load_corpus_split(const std::string& corpus_path, const std::string& split) {
  std::vector<Sample> samples = read_sample_file(corpus_path);
  if (split != "all") {
    const Split want = split_from_string(split);
    std::erase_if(samples, [&](const Sample& s) { return s.split != want; });
  }
  for (const auto& s : samples) {
    const auto violations = validate_sample(s);
    if (!violations.empty()) {
      std::string msg = "invalid sample " + s.id + ":";
      for (const auto& v : violations) msg += " " + v + ";";
      throw ConfigError(msg);
    }
  }
  return samples;
}

int cmd_infer(const std::string& corpus_path, const std::string& split,
              const std::string& rendered_path, const std::string& out_path,
              const std::string& rendered_out, const std::string& chat_format,
              const EndpointFlags& endpoint, const std::string& cache_dir) {
  const std::vector<Sample> samples = load_corpus_split(corpus_path, split);
  std::vector<RenderedInstruction> rendered;
  if (!rendered_path.empty()) {
    for_each_jsonl(rendered_path,
                   [&](size_t, const json& j) { rendered.push_back(decode_rendered(j)); });
  } else {
    rendered.reserve(samples.size());
    for (const auto& s : samples) rendered.push_back(render(s));
  }
  if (!rendered_out.empty()) {
    auto out = open_out(rendered_out);
    const ChatFormat fmt = chat_format_from_string(chat_format);
    for (const auto& r : rendered) out << encode_rendered(r, fmt).dump() << "\n";
  }

  std::optional<DiskCache> cache;
  if (!cache_dir.empty()) cache.emplace(cache_dir);
  RunStats stats;
  const auto predictions =
      run_inference(samples, rendered, endpoint.to_config(), cache ? &*cache : nullptr, {}, &stats);
  {
    auto out = open_out(out_path);
    for (const auto& p : predictions) out << encode_prediction(p).dump() << "\n";
  }
  log_event("infer_done", {{"samples", samples.size()},
                           {"http_calls", stats.http_calls},
                           {"cache_hits", stats.cache_hits},
                           {"transport_failures", stats.transport_failures}});
  std::cout << "predictions=" << predictions.size() << " http_calls=" << stats.http_calls
            << " cache_hits=" << stats.cache_hits << " failures=" << stats.transport_failures
            << "\n";
  return stats.transport_failures > 0 ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

int cmd_score(const std::string& predictions_path, const std::string& corpus_path,
              const std::string& out_dir, const std::string& task_filter, double spacing) {
  std::vector<Sample> samples = read_sample_file(corpus_path);
  if (!task_filter.empty())
    std::erase_if(samples, [&](const Sample& s) { return task_family(s.task) != task_filter; });
  if (samples.empty()) throw ConfigError("no samples to score");
  const std::vector<Prediction> predictions = read_prediction_file(predictions_path);
  ScoreOptions options;
  options.default_spacing_mm_per_px = spacing;
  const auto reports = score_all(samples, predictions, options);
  fs::create_directories(out_dir);
  for (const auto& r : reports) {
    const std::string path =
        (fs::path(out_dir) / (r.dataset_id + "." + r.task + ".metrics.json")).string();
    auto out = open_out(path);
    out << encode_metric_report(r).dump(2) << "\n";
    std::cout << r.dataset_id << "/" << r.task << ": n=" << r.n_samples
              << " parse_failed=" << r.n_parse_failed << " -> " << path << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

std::vector<MetricReport> load_metric_reports(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::directory_iterator(in)) {
        if (entry.is_regular_file() && entry.path().string().ends_with(".metrics.json"))
          files.push_back(entry.path().string());
      }
    } else {
      files.push_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<MetricReport> reports;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw SchemaError("cannot open metric file: " + f);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError("malformed metric file: " + f);
    try {
      reports.push_back(decode_metric_report(j));
    } catch (const std::exception& e) {
      throw SchemaError(f + ": " + e.what());
    }
  }
  return reports;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_md,
               const std::string& out_csv) {
  const auto reports = load_metric_reports(inputs);
  const std::string md = render_markdown(reports);
  const std::string csv = render_csv(reports);
  if (!out_md.empty()) open_out(out_md) << md;
  if (!out_csv.empty()) open_out(out_csv) << csv;
  if (out_md.empty() && out_csv.empty()) std::cout << md;
  return kExitOk;
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::string manifest_dir;
  std::string out_dir;
  std::string cache_dir;
  std::uint64_t seed = 0;
  std::string chat_format = "messages";
  double spacing_mm_per_px = 0.1;
  EndpointFlags endpoint;
};

PipelineConfig parse_pipeline_config(const std::string& path) {
  const auto kv = read_kv_file(path);
  const std::set<std::string> known = {
      "manifest_dir",        "out_dir",           "cache_dir",          "seed",
      "chat_format",         "spacing_mm_per_px", "endpoint.base_url",  "endpoint.model_id",
      "endpoint.auth_env",   "endpoint.timeout_s", "endpoint.max_retries",
      "endpoint.parallelism", "endpoint.rps",     "endpoint.backoff_ms", "endpoint.image_mode"};
  for (const auto& [k, _] : kv) {
    if (!known.count(k)) throw ConfigError(path + ": unknown config key: " + k);
  }
  auto req = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end() || it->second.empty())
      throw ConfigError(path + ": missing required key: " + key);
    return it->second;
  };
  const std::string base = fs::path(path).parent_path().string();
  PipelineConfig cfg;
  cfg.manifest_dir = resolve_path(base, req("manifest_dir"));
  cfg.out_dir = resolve_path(base, req("out_dir"));
  cfg.endpoint.base_url = req("endpoint.base_url");
  cfg.endpoint.model_id = req("endpoint.model_id");
  if (kv.count("cache_dir")) cfg.cache_dir = resolve_path(base, kv.at("cache_dir"));
  if (cfg.cache_dir.empty()) cfg.cache_dir = (fs::path(cfg.out_dir) / "cache").string();
  if (kv.count("seed")) cfg.seed = std::stoull(kv.at("seed"));
  if (kv.count("chat_format")) cfg.chat_format = kv.at("chat_format");
  chat_format_from_string(cfg.chat_format);  // validate early
  if (kv.count("spacing_mm_per_px")) cfg.spacing_mm_per_px = std::stod(kv.at("spacing_mm_per_px"));
  if (kv.count("endpoint.auth_env")) cfg.endpoint.auth_env = kv.at("endpoint.auth_env");
  if (kv.count("endpoint.timeout_s")) cfg.endpoint.timeout_s = std::stod(kv.at("endpoint.timeout_s"));
  if (kv.count("endpoint.max_retries")) cfg.endpoint.max_retries = std::stoi(kv.at("endpoint.max_retries"));
  if (kv.count("endpoint.parallelism")) cfg.endpoint.parallelism = std::stoi(kv.at("endpoint.parallelism"));
  if (kv.count("endpoint.rps")) cfg.endpoint.rps = std::stod(kv.at("endpoint.rps"));
  if (kv.count("endpoint.backoff_ms")) cfg.endpoint.backoff_ms = std::stoi(kv.at("endpoint.backoff_ms"));
  if (kv.count("endpoint.image_mode")) cfg.endpoint.image_mode = kv.at("endpoint.image_mode");
  return cfg;
}

bool stage_done(const PipelineConfig& cfg, const std::string& stage) {
  return fs::exists(fs::path(cfg.out_dir) / (".stage_" + stage + ".done"));
}

void mark_stage(const PipelineConfig& cfg, const std::string& stage, json summary) {
  auto out = open_out((fs::path(cfg.out_dir) / (".stage_" + stage + ".done")).string());
  summary["stage"] = stage;
  out << summary.dump() << "\n";
}

int cmd_pipeline(const std::string& config_path) {
  const PipelineConfig cfg = parse_pipeline_config(config_path);
  const auto manifests = load_manifest_dir(cfg.manifest_dir);
  fs::create_directories(cfg.out_dir);
  const std::string corpus_dir = (fs::path(cfg.out_dir) / "corpus").string();
  const std::string rendered_dir = (fs::path(cfg.out_dir) / "rendered").string();
  const std::string predictions_dir = (fs::path(cfg.out_dir) / "predictions").string();
  const std::string metrics_dir = (fs::path(cfg.out_dir) / "metrics").string();
  bool partial = false;

  // Stage 1: ingest.
  if (stage_done(cfg, "ingest")) {
    log_event("stage_skipped", {{"stage", "ingest"}});
  } else {
    try {
      log_event("stage_start", {{"stage", "ingest"}});
      for (const auto& m : manifests) print_split_report(ingest_dataset(m, corpus_dir));
      mark_stage(cfg, "ingest", {{"datasets", manifests.size()}});
    } catch (const std::exception& e) {
      log_event("stage_failed", {{"stage", "ingest"}, {"error", e.what()}});
      return kExitStageIngest;
    }
  }

  // Stage 2: build (sft corpus + rendered test split).
  if (stage_done(cfg, "build")) {
    log_event("stage_skipped", {{"stage", "build"}});
  } else {
    try {
      log_event("stage_start", {{"stage", "build"}});
      auto sft_out = open_out((fs::path(cfg.out_dir) / "sft.jsonl").string());
      const size_t n =
          build_sft(manifests, cfg.seed, sft_out, chat_format_from_string(cfg.chat_format));
      size_t rendered_files = 0;
      for (const auto& m : manifests) {
        const std::string corpus_path =
            (fs::path(corpus_dir) / (m.dataset_id + ".test.jsonl")).string();
        if (!fs::exists(corpus_path)) continue;
        const auto samples = read_sample_file(corpus_path);
        auto out = open_out((fs::path(rendered_dir) / (m.dataset_id + ".test.jsonl")).string());
        for (const auto& s : samples)
          out << encode_rendered(render(s), ChatFormat::Messages).dump() << "\n";
        ++rendered_files;
      }
      mark_stage(cfg, "build", {{"sft_records", n}, {"rendered_files", rendered_files}});
    } catch (const std::exception& e) {
      log_event("stage_failed", {{"stage", "build"}, {"error", e.what()}});
      return kExitStageBuild;
    }
  }

  // Stage 3: infer over every test split.
  if (stage_done(cfg, "infer")) {
    log_event("stage_skipped", {{"stage", "infer"}});
  } else {
    try {
      log_event("stage_start", {{"stage", "infer"}});
      DiskCache cache(cfg.cache_dir);
      RunStats stats;
      for (const auto& m : manifests) {
        const std::string corpus_path =
            (fs::path(corpus_dir) / (m.dataset_id + ".test.jsonl")).string();
        if (!fs::exists(corpus_path)) continue;
        const auto samples = read_sample_file(corpus_path);
        std::vector<RenderedInstruction> rendered;
        const std::string rendered_path =
            (fs::path(rendered_dir) / (m.dataset_id + ".test.jsonl")).string();
        for_each_jsonl(rendered_path,
                       [&](size_t, const json& j) { rendered.push_back(decode_rendered(j)); });
        EndpointConfig ep = cfg.endpoint.to_config();
        ep.image_mode = m.image_mode;
        const auto predictions = run_inference(samples, rendered, ep, &cache, {}, &stats);
        auto out = open_out((fs::path(predictions_dir) / (m.dataset_id + ".jsonl")).string());
        for (const auto& p : predictions) out << encode_prediction(p).dump() << "\n";
      }
      partial = stats.transport_failures > 0;
      mark_stage(cfg, "infer", {{"http_calls", stats.http_calls},
                                {"cache_hits", stats.cache_hits},
                                {"transport_failures", stats.transport_failures}});
    } catch (const std::exception& e) {
      log_event("stage_failed", {{"stage", "infer"}, {"error", e.what()}});
      return kExitStageInfer;
    }
  }

  // Stage 4: score.
  if (stage_done(cfg, "score")) {
    log_event("stage_skipped", {{"stage", "score"}});
  } else {
    try {
      log_event("stage_start", {{"stage", "score"}});
      std::vector<Sample> samples;
      std::vector<Prediction> predictions;
      for (const auto& m : manifests) {
        const std::string corpus_path =
            (fs::path(corpus_dir) / (m.dataset_id + ".test.jsonl")).string();
        if (!fs::exists(corpus_path)) continue;
        for (auto& s : read_sample_file(corpus_path)) samples.push_back(std::move(s));
        for (auto& p : read_prediction_file(
                 (fs::path(predictions_dir) / (m.dataset_id + ".jsonl")).string()))
          predictions.push_back(std::move(p));
      }
      if (samples.empty()) throw ConfigError("pipeline has no test samples to score");
      ScoreOptions options;
      options.default_spacing_mm_per_px = cfg.spacing_mm_per_px;
      const auto reports = score_all(samples, predictions, options);
      fs::create_directories(metrics_dir);
      for (const auto& r : reports) {
        auto out = open_out(
            (fs::path(metrics_dir) / (r.dataset_id + "." + r.task + ".metrics.json")).string());
        out << encode_metric_report(r).dump(2) << "\n";
      }
      mark_stage(cfg, "score", {{"reports", reports.size()}});
    } catch (const std::exception& e) {
      log_event("stage_failed", {{"stage", "score"}, {"error", e.what()}});
      return kExitStageScore;
    }
  }

  // Stage 5: report.
  if (stage_done(cfg, "report")) {
    log_event("stage_skipped", {{"stage", "report"}});
  } else {
    try {
      log_event("stage_start", {{"stage", "report"}});
      const auto reports = load_metric_reports({metrics_dir});
      open_out((fs::path(cfg.out_dir) / "report.md").string()) << render_markdown(reports);
      open_out((fs::path(cfg.out_dir) / "report.csv").string()) << render_csv(reports);
      mark_stage(cfg, "report", {{"reports", reports.size()}});
    } catch (const std::exception& e) {
      log_event("stage_failed", {{"stage", "report"}, {"error", e.what()}});
      return kExitStageReport;
    }
  }

  log_event("pipeline_done", {{"out_dir", cfg.out_dir}, {"partial", partial}});
  return partial ? kExitPartial : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"corpus construction and evaluation toolkit for medical vision-language models"};
  app.require_subcommand(1);
  int rc = kExitOk;

  // Every subcommand accepts --seed (via fallthrough); only randomized
  // stages consume it.
  std::uint64_t global_seed = 0;
  app.add_option("--seed", global_seed, "seed for randomized stages");

  // ingest
  std::string ingest_manifest, ingest_out;
  auto* ingest = app.add_subcommand("ingest", "convert a source dataset to unified JSONL");
  ingest->fallthrough();
  ingest->add_option("--manifest", ingest_manifest, "dataset manifest file")->required();
  ingest->add_option("--out", ingest_out, "output directory")->required();
  ingest->callback([&] { rc = cmd_ingest(ingest_manifest, ingest_out); });

  // build-align
  std::string align_pool, align_out = "align_out", align_cache;
  double align_fraction = 0.0;
  int align_group = 2;
  EndpointFlags align_endpoint;
  auto* align = app.add_subcommand("build-align", "plan (and optionally run) the feature-alignment corpus");
  align->fallthrough();
  align->add_option("--pool", align_pool, "image-caption pool JSONL")->required();
  align->add_option("--synthetic-fraction", align_fraction, "fraction of the pool grouped into synthesis jobs")
      ->required();
  align->add_option("--group-size", align_group, "images per synthesis job");
  align->add_option("--out", align_out, "output directory");
  align->add_option("--cache-dir", align_cache, "response cache directory");
  add_endpoint_flags(align, align_endpoint, false);
  align->callback([&] {
    rc = cmd_build_align(align_pool, global_seed, align_fraction, align_group, align_out,
                         align_endpoint, align_cache);
  });

  // build-sft
  std::string sft_dir, sft_out = "sft.jsonl", sft_chat = "messages";
  std::vector<std::string> sft_files;
  auto* sft = app.add_subcommand("build-sft", "build the shuffled instruction-tuning corpus");
  sft->fallthrough();
  sft->add_option("--manifests", sft_dir, "directory of .manifest files");
  sft->add_option("--manifest", sft_files, "individual manifest file (repeatable)");
  sft->add_option("--out", sft_out, "output JSONL");
  sft->add_option("--chat-format", sft_chat, "messages|plain");
  sft->callback([&] { rc = cmd_build_sft(sft_dir, sft_files, global_seed, sft_out, sft_chat); });

  // infer
  std::string infer_corpus, infer_split = "test", infer_rendered, infer_out = "predictions.jsonl";
  std::string infer_rendered_out, infer_chat = "messages", infer_cache;
  EndpointFlags infer_endpoint;
  auto* infer = app.add_subcommand("infer", "run batch inference against a served model");
  infer->fallthrough();
  infer->add_option("--corpus", infer_corpus, "unified sample JSONL")->required();
  infer->add_option("--split", infer_split, "train|valid|test|all");
  infer->add_option("--rendered", infer_rendered, "pre-rendered instruction JSONL");
  infer->add_option("--out", infer_out, "prediction JSONL output");
  infer->add_option("--rendered-out", infer_rendered_out, "also write rendered instructions here");
  infer->add_option("--chat-format", infer_chat, "messages|plain (for --rendered-out)");
  infer->add_option("--cache-dir", infer_cache, "response cache directory");
  add_endpoint_flags(infer, infer_endpoint, true);
  infer->callback([&] {
    rc = cmd_infer(infer_corpus, infer_split, infer_rendered, infer_out, infer_rendered_out,
                   infer_chat, infer_endpoint, infer_cache);
  });

  // score
  std::string score_preds, score_corpus, score_out = "metrics", score_task;
  double score_spacing = 0.1;
  auto* score = app.add_subcommand("score", "score predictions against ground truth");
  score->fallthrough();
  score->add_option("--predictions", score_preds, "prediction JSONL")->required();
  score->add_option("--corpus", score_corpus, "unified sample JSONL")->required();
  score->add_option("--out", score_out, "metric report output directory");
  score->add_option("--task", score_task, "restrict to one task family");
  score->add_option("--spacing-mm-per-px", score_spacing, "default landmark pixel spacing");
  score->callback([&] { rc = cmd_score(score_preds, score_corpus, score_out, score_task, score_spacing); });

  // report
  std::vector<std::string> report_inputs;
  std::string report_md, report_csv;
  auto* report = app.add_subcommand("report", "render metric reports as Markdown and CSV tables");
  report->fallthrough();
  report->add_option("--metrics", report_inputs, "metric file or directory (repeatable)")->required();
  report->add_option("--out-md", report_md, "Markdown output path");
  report->add_option("--out-csv", report_csv, "CSV output path");
  report->callback([&] { rc = cmd_report(report_inputs, report_md, report_csv); });

  // pipeline
  std::string pipeline_config;
  auto* pipeline = app.add_subcommand("pipeline", "run ingest -> build -> infer -> score -> report");
  pipeline->fallthrough();
  pipeline->add_option("--config", pipeline_config, "run config file")->required();
  pipeline->callback([&] { rc = cmd_pipeline(pipeline_config); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    log_event("config_error", {{"error", e.what()}});
    std::cerr << "config error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const AlignmentError& e) {
    log_event("alignment_error", {{"error", e.what()}});
    std::cerr << "alignment error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const Error& e) {
    log_event("error", {{"error", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  } catch (const std::exception& e) {
    log_event("error", {{"error", e.what()}});
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return rc;
}
