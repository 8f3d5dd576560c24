#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mvk/core.hpp"
#include "mvk/dataengine.hpp"
#include "mvk/templates.hpp"

namespace mvk {

struct EndpointConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8080 (path prefixes allowed)
  std::string model_id;
  std::string auth_env;  // name of the env var holding the bearer token
  double timeout_s = 30.0;
  int max_retries = 3;
  int parallelism = 4;
  double rps = 0.0;  // requests-per-second ceiling; 0 disables pacing
  int backoff_ms = 250;
  std::string image_mode = "uri";  // uri | base64 file inlining
};

// Greedy decoding by default; output budget depends on the task (reports
// are long, grounded answers short).
struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 64;
};

DecodingParams decoding_for(TaskKind task);

// Digest of (model, rendered messages, image refs, decoding); stable across
// restarts.
std::string cache_key(const std::string& model_id, const std::vector<Message>& messages,
                      const std::vector<std::string>& image_refs, const DecodingParams& decoding);

struct CacheEntry {
  std::string raw_text;
  std::int64_t latency_ms = 0;
};

// Append-only on-disk response cache, one content-addressed file per key.
// Writes are serialized; existing entries are never overwritten.
class DiskCache {
 public:
  explicit DiskCache(std::string dir);
  std::optional<CacheEntry> get(const std::string& key) const;
  void put(const std::string& key, const CacheEntry& entry);
  const std::string& dir() const { return dir_; }

 private:
  std::string path_for(const std::string& key) const;
  std::string dir_;
  mutable std::mutex write_mu_;
};

// OpenAI-compatible chat-completions request body (exposed for tests).
// "<image>" placeholders are stripped from the text; each image ref becomes
// an image_url content part on the first user message, by reference or as a
// base64 data URL depending on image_mode.
json build_chat_request(const EndpointConfig& cfg, const std::vector<Message>& messages,
                        const std::vector<std::string>& image_refs,
                        const DecodingParams& decoding);

std::string strip_image_placeholders(std::string_view text);

struct ChatResult {
  std::string text;
  int retries = 0;
  std::int64_t latency_ms = 0;
};

// Single chat completion with retry/backoff on transient statuses (429,
// 5xx, no response); non-transient 4xx fail fast. Throws TransportError.
ChatResult chat_complete(const EndpointConfig& cfg, const std::vector<Message>& messages,
                         const std::vector<std::string>& image_refs,
                         const DecodingParams& decoding, const std::string& context_id = "");

struct RunStats {
  size_t http_calls = 0;
  size_t cache_hits = 0;
  size_t transport_failures = 0;
  size_t retries = 0;
};

// Batch inference: cache first, bounded parallel dispatch, immediate parsing
// under the rendered expected_format. Output order equals input order; per-
// sample transport failures become ParseFailed markers instead of aborting.
std::vector<Prediction> run_inference(const std::vector<Sample>& samples,
                                      const std::vector<RenderedInstruction>& rendered,
                                      const EndpointConfig& cfg, DiskCache* cache,
                                      const TokenConfig& tokens = {}, RunStats* stats = nullptr);

struct SynthesisOutcome {
  std::vector<AlignmentSample> samples;
  size_t failed = 0;
};

// Executes synthesis jobs against the LLM endpoint; failed jobs are skipped
// and summarized.
SynthesisOutcome run_synthesis(const std::vector<SynthesisJob>& jobs, const EndpointConfig& cfg,
                               DiskCache* cache, RunStats* stats = nullptr);

}  // namespace mvk
