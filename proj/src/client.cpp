#include "mvk/client.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "httplib.h"
#include "mvk/digest.hpp"
#include "mvk/parse.hpp"
#include "mvk/runconfig.hpp"

namespace fs = std::filesystem;

namespace mvk {

DecodingParams decoding_for(TaskKind task) {
  DecodingParams d;
  d.max_tokens = task == TaskKind::ReportGen ? 512 : 64;
  return d;
}

std::string cache_key(const std::string& model_id, const std::vector<Message>& messages,
                      const std::vector<std::string>& image_refs,
                      const DecodingParams& decoding) {
  json j;
  j["model"] = model_id;
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"text", m.text}});
  j["messages"] = std::move(msgs);
  j["images"] = image_refs;
  j["decoding"] = {{"temperature", decoding.temperature}, {"max_tokens", decoding.max_tokens}};
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Disk cache
// ---------------------------------------------------------------------------

DiskCache::DiskCache(std::string dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

std::string DiskCache::path_for(const std::string& key) const {
  return (fs::path(dir_) / key.substr(0, 2) / (key.substr(2) + ".json")).string();
}

std::optional<CacheEntry> DiskCache::get(const std::string& key) const {
  std::ifstream in(path_for(key));
  if (!in) return std::nullopt;
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  CacheEntry e;
  e.raw_text = j.value("raw_text", "");
  e.latency_ms = j.value("latency_ms", static_cast<std::int64_t>(0));
  return e;
}

void DiskCache::put(const std::string& key, const CacheEntry& entry) {
  std::lock_guard<std::mutex> lock(write_mu_);
  const fs::path target = path_for(key);
  if (fs::exists(target)) return;  // append-only
  fs::create_directories(target.parent_path());
  json j;
  j["raw_text"] = entry.raw_text;
  j["latency_ms"] = entry.latency_ms;
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump() << "\n";
  }
  fs::rename(tmp, target);
}

// ---------------------------------------------------------------------------
// Request building
// ---------------------------------------------------------------------------

std::string strip_image_placeholders(std::string_view text) {
  static constexpr std::string_view kSlot = "<image>";
  std::string out;
  size_t pos = 0;
  while (pos < text.size()) {
    if (text.compare(pos, kSlot.size(), kSlot) == 0) {
      pos += kSlot.size();
      if (pos < text.size() && text[pos] == ' ') ++pos;
    } else {
      out.push_back(text[pos]);
      ++pos;
    }
  }
  return out;
}

namespace {

std::string guess_mime(const std::string& path) {
  const auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "png") return "image/png";
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "gif") return "image/gif";
  if (ext == "bmp") return "image/bmp";
  return "application/octet-stream";
}

std::string image_url_for(const EndpointConfig& cfg, const std::string& ref) {
  if (cfg.image_mode != "base64") return ref;
  std::ifstream in(ref, std::ios::binary);
  if (!in) throw Error("cannot read image file for base64 inlining: " + ref);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + guess_mime(ref) + ";base64," + base64_encode(bytes);
}

}  // namespace

json build_chat_request(const EndpointConfig& cfg, const std::vector<Message>& messages,
                        const std::vector<std::string>& image_refs,
                        const DecodingParams& decoding) {
  json j;
  j["model"] = cfg.model_id;
  j["temperature"] = decoding.temperature;
  j["max_tokens"] = decoding.max_tokens;
  json msgs = json::array();
  bool images_attached = false;
  for (const auto& m : messages) {
    json content = json::array();
    if (m.role == "user" && !images_attached) {
      for (const auto& ref : image_refs) {
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", image_url_for(cfg, ref)}}}});
      }
      images_attached = true;
    }
    content.push_back({{"type", "text"}, {"text", strip_image_placeholders(m.text)}});
    msgs.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  j["messages"] = std::move(msgs);
  return j;
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

namespace {

struct UrlParts {
  std::string host_port;  // scheme://host:port
  std::string path_prefix;
};

UrlParts split_base_url(const std::string& base_url) {
  const size_t scheme = base_url.find("://");
  if (scheme == std::string::npos)
    throw ConfigError("endpoint base_url needs a scheme: " + base_url);
  const size_t slash = base_url.find('/', scheme + 3);
  if (slash == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, slash), prefix};
}

// Process-wide pacing toward the requests-per-second ceiling.
void rate_limit_wait(double rps) {
  if (rps <= 0.0) return;
  static std::mutex mu;
  static std::chrono::steady_clock::time_point next_free;
  std::chrono::steady_clock::time_point wake;
  {
    std::lock_guard<std::mutex> lock(mu);
    const auto now = std::chrono::steady_clock::now();
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / rps));
    if (next_free < now) next_free = now;
    wake = next_free;
    next_free += interval;
  }
  std::this_thread::sleep_until(wake);
}

int backoff_with_jitter_ms(int base_ms, int attempt) {
  static thread_local std::mt19937 jitter_rng(std::random_device{}());
  const int expo = base_ms * (1 << std::min(attempt, 10));
  std::uniform_int_distribution<int> jitter(0, std::max(1, base_ms / 2));
  return expo + jitter(jitter_rng);
}

std::string extract_content(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw Error("response is not JSON");
  const auto& choices = j.at("choices");
  if (!choices.is_array() || choices.empty()) throw Error("response has no choices");
  const auto& content = choices[0].at("message").at("content");
  if (content.is_string()) return content.get<std::string>();
  if (content.is_array()) {
    std::string out;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") out += part.value("text", "");
    }
    return out;
  }
  throw Error("unsupported content shape");
}

}  // namespace

ChatResult chat_complete(const EndpointConfig& cfg, const std::vector<Message>& messages,
                         const std::vector<std::string>& image_refs,
                         const DecodingParams& decoding, const std::string& context_id) {
  const auto started = std::chrono::steady_clock::now();
  const UrlParts url = split_base_url(cfg.base_url);
  httplib::Client cli(url.host_port);
  const auto timeout_sec = static_cast<time_t>(cfg.timeout_s);
  const auto timeout_usec =
      static_cast<time_t>((cfg.timeout_s - static_cast<double>(timeout_sec)) * 1e6);
  cli.set_connection_timeout(timeout_sec, timeout_usec);
  cli.set_read_timeout(timeout_sec, timeout_usec);
  cli.set_write_timeout(timeout_sec, timeout_usec);

  httplib::Headers headers;
  if (!cfg.auth_env.empty()) {
    const char* token = std::getenv(cfg.auth_env.c_str());
    if (token && *token) headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  const std::string body = build_chat_request(cfg, messages, image_refs, decoding).dump();
  const std::string path = url.path_prefix + "/v1/chat/completions";
  const std::string ctx = context_id.empty() ? "" : " [" + context_id + "]";

  TransportError::Kind last_kind = TransportError::Kind::Timeout;
  int last_status = 0;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(
          std::chrono::milliseconds(backoff_with_jitter_ms(cfg.backoff_ms, attempt - 1)));
    rate_limit_wait(cfg.rps);
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      last_kind = TransportError::Kind::Timeout;
      last_status = 0;
      continue;
    }
    last_status = res->status;
    if (res->status == 200) {
      ChatResult out;
      try {
        out.text = extract_content(res->body);
      } catch (const std::exception& e) {
        throw TransportError(TransportError::Kind::Protocol, res->status, attempt,
                             std::string("malformed response: ") + e.what() + ctx);
      }
      out.retries = attempt;
      out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
      return out;
    }
    if (res->status == 429) {
      last_kind = TransportError::Kind::RateLimited;
      continue;
    }
    if (res->status >= 500) {
      last_kind = TransportError::Kind::ServerError;
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw TransportError(TransportError::Kind::AuthFailed, res->status, attempt,
                           "authentication failed (" + std::to_string(res->status) + ")" + ctx);
    }
    throw TransportError(TransportError::Kind::BadRequest, res->status, attempt,
                         "request rejected (" + std::to_string(res->status) + ")" + ctx);
  }
  throw TransportError(last_kind, last_status, cfg.max_retries,
                       std::string("transient failure persisted after ") +
                           std::to_string(cfg.max_retries) + " retries (" +
                           to_string(last_kind) + ")" + ctx);
}

// ---------------------------------------------------------------------------
// Batch runs
// ---------------------------------------------------------------------------

namespace {

// Bounded-parallel index loop preserving result slots.
void parallel_for(size_t n, int parallelism, const std::function<void(size_t)>& body) {
  const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(n)));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> cursor{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (true) {
        const size_t i = cursor.fetch_add(1);
        if (i >= n) break;
        body(i);
      }
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace

std::vector<Prediction> run_inference(const std::vector<Sample>& samples,
                                      const std::vector<RenderedInstruction>& rendered,
                                      const EndpointConfig& cfg, DiskCache* cache,
                                      const TokenConfig& tokens, RunStats* stats) {
  if (samples.size() != rendered.size())
    throw AlignmentError("run_inference: samples and rendered instructions differ in length");
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].id != rendered[i].sample_id)
      throw AlignmentError("run_inference: id mismatch at index " + std::to_string(i) + ": " +
                           samples[i].id + " vs " + rendered[i].sample_id);
  }
  if (cfg.parallelism < 1) throw ConfigError("parallelism must be at least 1");

  std::vector<Prediction> out(samples.size());
  std::atomic<size_t> http_calls{0}, cache_hits{0}, failures{0}, retries{0};

  parallel_for(samples.size(), cfg.parallelism, [&](size_t i) {
    const Sample& s = samples[i];
    const RenderedInstruction& r = rendered[i];
    const DecodingParams dec = decoding_for(s.task);
    const std::string key = cache_key(cfg.model_id, r.messages, s.image_refs, dec);

    Prediction p;
    p.sample_id = s.id;
    p.model_id = cfg.model_id;

    std::optional<CacheEntry> entry = cache ? cache->get(key) : std::nullopt;
    if (entry) {
      ++cache_hits;
    } else {
      try {
        const ChatResult res = chat_complete(cfg, r.messages, s.image_refs, dec, s.id);
        ++http_calls;
        retries += static_cast<size_t>(res.retries);
        entry = CacheEntry{res.text, res.latency_ms};
        if (cache) cache->put(key, *entry);
      } catch (const TransportError& e) {
        ++http_calls;
        ++failures;
        log_event("transport_failure", {{"sample_id", s.id},
                                        {"kind", to_string(e.kind)},
                                        {"status", e.status},
                                        {"error", e.what()}});
        p.raw_text = "";
        p.parsed = ParseFailed{std::string("transport_error: ") + to_string(e.kind)};
        out[i] = std::move(p);
        return;
      }
    }
    p.raw_text = entry->raw_text;
    p.latency_ms = entry->latency_ms;
    p.parsed = parse_prediction(p.raw_text, r.expected_format,
                                s.options ? &*s.options : nullptr, tokens);
    out[i] = std::move(p);
  });

  if (stats) {
    stats->http_calls += http_calls.load();
    stats->cache_hits += cache_hits.load();
    stats->transport_failures += failures.load();
    stats->retries += retries.load();
  }
  return out;
}

SynthesisOutcome run_synthesis(const std::vector<SynthesisJob>& jobs, const EndpointConfig& cfg,
                               DiskCache* cache, RunStats* stats) {
  SynthesisOutcome outcome;
  std::vector<std::optional<AlignmentSample>> slots(jobs.size());
  std::atomic<size_t> http_calls{0}, cache_hits{0}, failures{0};

  parallel_for(jobs.size(), cfg.parallelism, [&](size_t i) {
    const SynthesisJob& job = jobs[i];
    const std::vector<Message> messages = {{"user", job.prompt}};
    const DecodingParams dec{0.0, 512};
    const std::string key = cache_key(cfg.model_id, messages, job.image_refs, dec);
    std::optional<CacheEntry> entry = cache ? cache->get(key) : std::nullopt;
    if (entry) {
      ++cache_hits;
    } else {
      try {
        const ChatResult res = chat_complete(cfg, messages, job.image_refs, dec, job.job_id);
        ++http_calls;
        entry = CacheEntry{res.text, res.latency_ms};
        if (cache) cache->put(key, *entry);
      } catch (const TransportError& e) {
        ++http_calls;
        ++failures;
        log_event("synthesis_failure",
                  {{"job_id", job.job_id}, {"kind", to_string(e.kind)}, {"error", e.what()}});
        return;
      }
    }
    try {
      slots[i] = assemble_alignment(job, entry->raw_text);
    } catch (const EmptyAnswer& e) {
      ++failures;
      log_event("synthesis_failure", {{"job_id", job.job_id}, {"error", e.what()}});
    }
  });

  for (auto& slot : slots) {
    if (slot) outcome.samples.push_back(std::move(*slot));
  }
  outcome.failed = failures.load();
  if (outcome.failed > 0)
    log_event("synthesis_summary",
              {{"jobs", jobs.size()}, {"failed", outcome.failed}});
  if (stats) {
    stats->http_calls += http_calls.load();
    stats->cache_hits += cache_hits.load();
    stats->transport_failures += failures.load();
  }
  return outcome;
}

}  // namespace mvk
