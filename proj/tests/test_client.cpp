#include <chrono>
#include <thread>

#include "doctest.h"
#include "mvk/client.hpp"
#include "mvk/digest.hpp"
#include "support/mock_server.hpp"
#include "support/testutil.hpp"

using namespace mvk;
using testutil::MockServer;
using testutil::TempDir;

namespace {

EndpointConfig test_config(const MockServer& server) {
  EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.model_id = "test-model";
  cfg.timeout_s = 5.0;
  cfg.max_retries = 3;
  cfg.backoff_ms = 2;
  cfg.parallelism = 3;
  return cfg;
}

std::vector<Sample> tiny_corpus(size_t n) {
  SplitMix64 rng(31);
  std::vector<Sample> samples;
  for (size_t i = 0; i < n; ++i) samples.push_back(testutil::gen_sample(rng, i));
  return samples;
}

std::vector<RenderedInstruction> render_all(const std::vector<Sample>& samples) {
  std::vector<RenderedInstruction> out;
  for (const auto& s : samples) out.push_back(render(s));
  return out;
}

}  // namespace

TEST_CASE("sha256 matches the reference test vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("base64 encodes with padding") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
}

TEST_CASE("strip_image_placeholders removes slots and their separator") {
  CHECK(strip_image_placeholders("<image> given the image, x") == "given the image, x");
  CHECK(strip_image_placeholders("<image> <image> body") == "body");
  CHECK(strip_image_placeholders("no slots") == "no slots");
}

TEST_CASE("chat_complete echoes a canned response") {
  MockServer server([](const httplib::Request&, httplib::Response& res) {
    MockServer::reply_text(res, "canned answer");
  });
  const auto result = chat_complete(test_config(server), {{"user", "hello"}}, {}, {});
  CHECK(result.text == "canned answer");
  CHECK(result.retries == 0);
  CHECK(server.calls.load() == 1);
}

TEST_CASE("chat_complete retries 429 and records the count") {
  std::atomic<int> seen{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    if (seen.fetch_add(1) < 2) {
      res.status = 429;
      return;
    }
    MockServer::reply_text(res, "after backoff");
  });
  const auto result = chat_complete(test_config(server), {{"user", "hi"}}, {}, {});
  CHECK(result.text == "after backoff");
  CHECK(result.retries == 2);
  CHECK(server.calls.load() == 3);
}

TEST_CASE("chat_complete fails fast on auth errors") {
  MockServer server([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
  try {
    chat_complete(test_config(server), {{"user", "hi"}}, {}, {});
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.kind == TransportError::Kind::AuthFailed);
    CHECK(e.status == 401);
  }
  CHECK(server.calls.load() == 1);  // no retry
}

TEST_CASE("chat_complete classifies persistent 429 as rate limited") {
  MockServer server([](const httplib::Request&, httplib::Response& res) { res.status = 429; });
  EndpointConfig cfg = test_config(server);
  cfg.max_retries = 1;
  try {
    chat_complete(cfg, {{"user", "hi"}}, {}, {});
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(e.kind == TransportError::Kind::RateLimited);
    CHECK(e.retries == 1);
  }
  CHECK(server.calls.load() == 2);
}

TEST_CASE("chat_complete fails fast on 4xx") {
  MockServer server([](const httplib::Request&, httplib::Response& res) { res.status = 404; });
  CHECK_THROWS_AS(chat_complete(test_config(server), {{"user", "hi"}}, {}, {}),
                  TransportError);
  CHECK(server.calls.load() == 1);
}

TEST_CASE("auth header is attached from the configured env var") {
  std::string seen_auth;
  MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    MockServer::reply_text(res, "ok");
  });
  ::setenv("MVK_TEST_TOKEN", "sekrit", 1);
  EndpointConfig cfg = test_config(server);
  cfg.auth_env = "MVK_TEST_TOKEN";
  chat_complete(cfg, {{"user", "hi"}}, {}, {});
  CHECK(seen_auth == "Bearer sekrit");
  ::unsetenv("MVK_TEST_TOKEN");
}

TEST_CASE("base64 image mode inlines file bytes as a data URL") {
  TempDir tmp;
  testutil::write_file(tmp.str("img.png"), "PNGBYTES");
  std::string seen_url;
  MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::ordered_json::parse(req.body);
    seen_url = j["messages"][0]["content"][0]["image_url"]["url"].get<std::string>();
    MockServer::reply_text(res, "ok");
  });
  EndpointConfig cfg = test_config(server);
  cfg.image_mode = "base64";
  chat_complete(cfg, {{"user", "look"}}, {tmp.str("img.png")}, {});
  CHECK(seen_url == "data:image/png;base64," + base64_encode("PNGBYTES"));
}

TEST_CASE("run_inference echoes ground truth through the whole path") {
  const auto samples = tiny_corpus(12);
  const auto rendered = render_all(samples);
  // Samples can share a prompt (same question and options), so the echo map
  // keys on the image refs as well.
  std::map<std::string, std::string> answers;
  for (const auto& s : samples) {
    answers[s.image_refs.front() + "\x1f" +
            strip_image_placeholders(render(s).messages[0].text)] = render_label_for(s);
  }
  MockServer server([&](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::ordered_json::parse(req.body);
    std::string ref;
    for (const auto& part : j["messages"][0]["content"]) {
      if (part.value("type", "") == "image_url") {
        ref = part["image_url"]["url"].get<std::string>();
        break;
      }
    }
    MockServer::reply_text(res, answers.at(ref + "\x1f" + MockServer::request_text(req)));
  });
  RunStats stats;
  const auto preds = run_inference(samples, rendered, test_config(server), nullptr, {}, &stats);
  REQUIRE(preds.size() == samples.size());
  for (size_t i = 0; i < preds.size(); ++i) {
    CHECK(preds[i].sample_id == samples[i].id);
    CHECK(preds[i].raw_text == render_label_for(samples[i]));
    CHECK(!parse_failed(*preds[i].parsed));
  }
  CHECK(stats.http_calls == samples.size());
  CHECK(stats.transport_failures == 0);
}

TEST_CASE("run_inference hits the cache on the second pass") {
  TempDir tmp;
  const auto samples = tiny_corpus(8);
  const auto rendered = render_all(samples);
  MockServer server([](const httplib::Request& req, httplib::Response& res) {
    MockServer::reply_text(res, "echo:" + MockServer::request_text(req).substr(0, 16));
  });
  DiskCache cache(tmp.str("cache"));
  RunStats first, second;
  const auto preds1 =
      run_inference(samples, rendered, test_config(server), &cache, {}, &first);
  const int calls_after_first = server.calls.load();
  const auto preds2 =
      run_inference(samples, rendered, test_config(server), &cache, {}, &second);
  CHECK(server.calls.load() == calls_after_first);  // zero new HTTP calls
  CHECK(second.http_calls == 0);
  CHECK(second.cache_hits == samples.size());
  std::string file1, file2;
  for (const auto& p : preds1) file1 += encode_prediction(p).dump() + "\n";
  for (const auto& p : preds2) file2 += encode_prediction(p).dump() + "\n";
  CHECK(file1 == file2);
}

TEST_CASE("run_inference keeps at most `parallelism` requests in flight") {
  const auto samples = tiny_corpus(10);
  const auto rendered = render_all(samples);
  MockServer server([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    MockServer::reply_text(res, "slow");
  });
  EndpointConfig cfg = test_config(server);
  cfg.parallelism = 3;
  run_inference(samples, rendered, cfg, nullptr, {});
  CHECK(server.max_in_flight.load() <= 3);
  CHECK(server.max_in_flight.load() >= 2);  // overlap actually happened
}

TEST_CASE("run_inference preserves input order under jittered completion") {
  const auto samples = tiny_corpus(9);
  const auto rendered = render_all(samples);
  std::atomic<int> k{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds((k.fetch_add(1) * 7) % 23));
    MockServer::reply_text(res, "v");
  });
  const auto preds = run_inference(samples, rendered, test_config(server), nullptr, {});
  REQUIRE(preds.size() == samples.size());
  for (size_t i = 0; i < preds.size(); ++i) CHECK(preds[i].sample_id == samples[i].id);
}

TEST_CASE("run_inference records transport failures without aborting the batch") {
  const auto samples = tiny_corpus(6);
  const auto rendered = render_all(samples);
  std::atomic<int> n{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    if (n.fetch_add(1) % 3 == 0) {
      res.status = 400;
      return;
    }
    MockServer::reply_text(res, "fine");
  });
  EndpointConfig cfg = test_config(server);
  cfg.parallelism = 1;
  RunStats stats;
  const auto preds = run_inference(samples, rendered, cfg, nullptr, {}, &stats);
  REQUIRE(preds.size() == samples.size());
  CHECK(stats.transport_failures == 2);
  size_t failed = 0;
  for (const auto& p : preds) {
    if (p.parsed && parse_failed(*p.parsed)) {
      const auto reason = std::get<ParseFailed>(*p.parsed).reason;
      if (reason.rfind("transport_error:", 0) == 0) ++failed;
    }
  }
  CHECK(failed == 2);
}

TEST_CASE("run_synthesis assembles answers and skips failed jobs") {
  std::vector<PoolEntry> pool;
  for (int i = 0; i < 8; ++i)
    pool.push_back({"img" + std::to_string(i) + ".png", "caption " + std::to_string(i)});
  const auto plan = plan_alignment(pool, 2, 1.0);
  REQUIRE(plan.jobs.size() == 4);

  std::atomic<int> n{0};
  MockServer server([&](const httplib::Request&, httplib::Response& res) {
    if (n.fetch_add(1) == 1) {
      res.status = 400;  // permanently fail one job
      return;
    }
    MockServer::reply_text(res, "both images show thoracic anatomy with differing findings");
  });
  EndpointConfig cfg = test_config(server);
  cfg.parallelism = 1;
  const auto outcome = run_synthesis(plan.jobs, cfg, nullptr);
  CHECK(outcome.samples.size() == 3);
  CHECK(outcome.failed == 1);
  for (const auto& s : outcome.samples) {
    CHECK(s.origin == "synthetic");
    CHECK(s.image_refs.size() == 2);
  }
}

TEST_CASE("run_synthesis uses the cache for repeated jobs") {
  TempDir tmp;
  std::vector<PoolEntry> pool = {{"a.png", "ca"}, {"b.png", "cb"}};
  const auto plan = plan_alignment(pool, 4, 1.0);
  MockServer server([](const httplib::Request&, httplib::Response& res) {
    MockServer::reply_text(res, "similar modality, different laterality");
  });
  DiskCache cache(tmp.str("cache"));
  run_synthesis(plan.jobs, test_config(server), &cache);
  const int calls = server.calls.load();
  const auto outcome = run_synthesis(plan.jobs, test_config(server), &cache);
  CHECK(server.calls.load() == calls);
  CHECK(outcome.samples.size() == plan.jobs.size());
}

TEST_CASE("cache keys separate models, messages, images, and decoding") {
  const std::vector<Message> m1 = {{"user", "a"}};
  const std::vector<Message> m2 = {{"user", "b"}};
  const std::string k = cache_key("m", m1, {"i.png"}, {});
  CHECK(k != cache_key("m2", m1, {"i.png"}, {}));
  CHECK(k != cache_key("m", m2, {"i.png"}, {}));
  CHECK(k != cache_key("m", m1, {"j.png"}, {}));
  DecodingParams d;
  d.max_tokens = 512;
  CHECK(k != cache_key("m", m1, {"i.png"}, d));
  CHECK(k == cache_key("m", m1, {"i.png"}, {}));
}
