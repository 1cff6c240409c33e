#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <json.hpp>
#include <mutex>
#include <random>
#include <thread>

#include "latentx/gateway.hpp"
#include "latentx/metrics.hpp"
#include "latentx/transport.hpp"
#include "latentx/uncertainty.hpp"
#include "test_util.hpp"

// after Eigen: <resolv.h> defines _res
#include <httplib.h>

using namespace latentx;
using nlohmann::json;

namespace {

RetryPolicy fast_retry(int max_retries) {
  return RetryPolicy{.max_retries = max_retries, .initial_delay = std::chrono::milliseconds(1), .backoff_factor = 2.0};
}

ChatRequest request(std::string prompt = "describe") {
  ChatRequest r;
  r.prompt = std::move(prompt);
  r.model_name = "test-model";
  return r;
}

// Fails with `kind` for the first `failures` calls of each sample.
class FlakyChat final : public ChatBackend {
 public:
  FlakyChat(int failures, ErrorKind kind) : failures_(failures), kind_(kind) {}
  std::string complete(const ChatRequest&, std::size_t sample_index) override {
    std::lock_guard lock(mutex_);
    const int seen = attempts_[sample_index]++;
    if (seen < failures_) throw Error(kind_, "scripted failure");
    return "ok " + std::to_string(sample_index);
  }
  int attempts(std::size_t index) {
    std::lock_guard lock(mutex_);
    return attempts_[index];
  }

 private:
  int failures_;
  ErrorKind kind_;
  std::mutex mutex_;
  std::map<std::size_t, int> attempts_;
};

// Later indices answer sooner, so completion order is reversed.
class SlowFirstChat final : public ChatBackend {
 public:
  explicit SlowFirstChat(std::size_t n) : n_(n) {}
  std::string complete(const ChatRequest&, std::size_t sample_index) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(10 * (n_ - sample_index)));
    return "answer " + std::to_string(sample_index);
  }

 private:
  std::size_t n_;
};

class FakeChatServer {
 public:
  FakeChatServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        bodies.push_back(req.body);
        authorization = req.get_header_value("Authorization");
      }
      const int k = calls++;
      res.set_content(json{{"choices", {{{"message", {{"content", "reply " + std::to_string(k)}}}}}}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      json data = json::array();
      for (std::size_t i = 0; i < body["input"].size(); ++i)
        data.push_back({{"index", i}, {"embedding", {1.0, static_cast<double>(i)}}});
      res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeChatServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::atomic<int> calls{0};
  std::mutex mutex_;
  std::vector<std::string> bodies;
  std::string authorization;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_CASE("mock chat cycles its script by sample index") {
  MockChat mock({"A", "B", "C"});
  const auto samples = sample_n(mock, request(), 3);
  REQUIRE(samples.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(samples[i].index == i);
  CHECK(samples[0].text == "A");
  CHECK(samples[1].text == "B");
  CHECK(samples[2].text == "C");
  CHECK(sample_n(mock, request(), 4)[3].text == "A");
  CHECK_ERROR_KIND(sample_n(mock, request(), 1), ErrorKind::Precondition);
  CHECK_ERROR_KIND(MockChat({}).complete(request(), 0), ErrorKind::Precondition);
}

TEST_CASE("request parameters are validated") {
  MockChat mock({"A"});
  ChatRequest r = request();
  r.temperature = 2.5;
  CHECK_ERROR_KIND(sample_n(mock, r, 2), ErrorKind::Precondition);
  r.temperature = 0.0;
  r.top_p = 1.5;
  CHECK_ERROR_KIND(sample_n(mock, r, 2), ErrorKind::Precondition);
  r.top_p = 0.0;
  CHECK(sample_n(mock, r, 2).size() == 2);
}

TEST_CASE("transient failures are retried with backoff") {
  FlakyChat flaky(2, ErrorKind::Transient);
  const auto samples = sample_n(flaky, request(), 2, fast_retry(3));
  CHECK(samples[0].text == "ok 0");
  CHECK(flaky.attempts(0) == 3);
  CHECK(flaky.attempts(1) == 3);

  FlakyChat always(100, ErrorKind::Transient);
  CHECK_ERROR_KIND(sample_n(always, request(), 2, fast_retry(2)), ErrorKind::Gateway);
  CHECK(always.attempts(0) == 3);

  FlakyChat auth(1, ErrorKind::Auth);
  CHECK_ERROR_KIND(sample_n(auth, request(), 2, fast_retry(3)), ErrorKind::Auth);
  CHECK(auth.attempts(0) == 1);
}

TEST_CASE("backoff delays grow geometrically") {
  FlakyChat flaky(3, ErrorKind::Transient);
  const auto start = std::chrono::steady_clock::now();
  sample_n(flaky, request(), 2,
           RetryPolicy{.max_retries = 3, .initial_delay = std::chrono::milliseconds(10), .backoff_factor = 2.0});
  const auto elapsed = std::chrono::steady_clock::now() - start;
  // 10 + 20 + 40 ms per sample, sequentially
  CHECK(elapsed >= std::chrono::milliseconds(140));
}

TEST_CASE("parallel sampling returns responses in index order") {
  SlowFirstChat chat(6);
  const auto samples = sample_n(chat, request(), 6, {}, 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(samples[i].index == i);
    CHECK(samples[i].text == "answer " + std::to_string(i));
  }
}

TEST_CASE("gateway status codes map onto error kinds") {
  CHECK_NOTHROW(check_gateway_status({200, ""}, "x"));
  CHECK_ERROR_KIND(check_gateway_status({401, ""}, "x"), ErrorKind::Auth);
  CHECK_ERROR_KIND(check_gateway_status({403, ""}, "x"), ErrorKind::Auth);
  CHECK_ERROR_KIND(check_gateway_status({429, ""}, "x"), ErrorKind::Transient);
  CHECK_ERROR_KIND(check_gateway_status({503, ""}, "x"), ErrorKind::Transient);
  CHECK_ERROR_KIND(check_gateway_status({400, ""}, "x"), ErrorKind::Gateway);
  CHECK_ERROR_KIND(check_gateway_status({404, ""}, "x"), ErrorKind::Gateway);
}

TEST_CASE("chat request bodies carry images as PNG data URLs") {
  ChatRequest r = request("look");
  r.images = {{0x89, 'P', 'N', 'G'}};
  r.temperature = 0.7;
  r.top_p = 0.9;
  const json body = json::parse(HttpChat::request_body(r));
  CHECK(body["model"] == "test-model");
  CHECK(body["temperature"] == 0.7);
  CHECK(body["top_p"] == 0.9);
  const json& content = body["messages"][0]["content"];
  REQUIRE(content.size() == 2);
  CHECK(content[0]["text"] == "look");
  CHECK(content[1]["image_url"]["url"] == "data:image/png;base64," + base64_encode("\x89PNG"));
}

TEST_CASE("http chat records a cassette and replays it offline") {
  const auto dir = scratch_dir("chat_cassette");
  const std::string path = (dir / "chat.jsonl").string();
  std::vector<ResponseSample> live;
  {
    FakeChatServer server;
    auto recorder = std::make_shared<RecordingTransport>(std::make_shared<HttpTransport>(
        HttpOptions{.base_url = server.url(), .bearer_token = "secret-token", .timeout = std::chrono::seconds(10)}));
    HttpChat chat(recorder);
    live = sample_n(chat, request(), 5);
    CHECK(server.calls == 5);
    CHECK(server.authorization == "Bearer secret-token");
    recorder->save(path);
  }
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("secret-token") == std::string::npos);

  HttpChat replay(std::make_shared<ReplayTransport>(Cassette::load(path)));
  for (int run = 0; run < 2; ++run) {
    const auto again = sample_n(replay, request(), 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(again[i].text == live[i].text);
  }
  CHECK_ERROR_KIND(sample_n(replay, request("something else"), 5), ErrorKind::CassetteMiss);
}

TEST_CASE("cassettes save sorted and merge first-wins") {
  Cassette a;
  a.add("bb", {200, "b"});
  a.add("aa", {200, "a"});
  a.add("aa", {500, "ignored"});
  Cassette b;
  b.add("aa", {200, "other"});
  b.add("cc", {201, "c"});
  a.merge(b);
  CHECK(a.size() == 3);
  CHECK(a.find("aa")->body == "a");
  CHECK(a.find("cc")->status == 201);
  CHECK(a.find("zz") == nullptr);

  const auto dir = scratch_dir("cassette_io");
  a.save((dir / "c.jsonl").string());
  const Cassette loaded = Cassette::load((dir / "c.jsonl").string());
  CHECK(loaded.size() == 3);
  CHECK(loaded.find("bb")->body == "b");
  std::ifstream in(dir / "c.jsonl");
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(json::parse(header)["cassette"] == "latentx");
  CHECK(json::parse(first)["digest"] == "aa");
  CHECK(json::parse(second)["digest"] == "bb");
}

TEST_CASE("request digests depend on method, path, key and body") {
  const std::string base = request_digest("POST", "/p", "k", "{}");
  CHECK(base.size() == 64);
  CHECK(base == sha256_hex("POST\n/p\nk\n{}"));
  CHECK(base != request_digest("GET", "/p", "k", "{}"));
  CHECK(base != request_digest("POST", "/q", "k", "{}"));
  CHECK(base != request_digest("POST", "/p", "j", "{}"));
  CHECK(base != request_digest("POST", "/p", "k", "[]"));
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(base64_decode(base64_encode(std::string("\0\1\2xyz", 6))) == std::string("\0\1\2xyz", 6));
}

TEST_CASE("http embedder reads vectors by index") {
  FakeChatServer server;
  HttpEmbedder embedder(std::make_shared<HttpTransport>(
                            HttpOptions{.base_url = server.url(), .bearer_token = {}, .timeout = std::chrono::seconds(10)}),
                        "embed-small");
  const std::vector<std::string> texts = {"a", "b", "c"};
  const auto out = embedder.embed(texts);
  REQUIRE(out.size() == 3);
  CHECK(out[2].values[1] == 2.0);
  CHECK(out[0].model_name == "embed-small");
  CHECK(embedder.name() == "remote:embed-small");
}

TEST_CASE("offline embedder hashes word tokens into unit vectors") {
  OfflineEmbedder embedder;
  CHECK(OfflineEmbedder::fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(OfflineEmbedder::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

  const std::vector<std::string> texts = {"The object moves right.", "the OBJECT moves right", "red floor", "blue sky"};
  const auto v = embedder.embed(texts);
  REQUIRE(v.size() == 4);
  CHECK(v[0].values.size() == 512);
  CHECK(v[0].values == v[1].values);
  CHECK(v[0].values.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(v[2].values, v[3].values) == 0.0);
  CHECK(cosine_similarity(v[0].values, v[1].values) == 1.0);

  const std::vector<std::string> none;
  CHECK_ERROR_KIND(embedder.embed(none), ErrorKind::Precondition);
  const std::vector<std::string> blank = {""};
  CHECK(embedder.embed(blank)[0].values.norm() == 0.0);
}

TEST_CASE("offline embeddings follow their texts under permutation") {
  OfflineEmbedder embedder;
  std::vector<std::string> texts = {"a cat", "the dog runs", "moves left", "brightness grows", "x"};
  const auto base = embedder.embed(texts);
  std::vector<std::size_t> order = {0, 1, 2, 3, 4};
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::string> shuffled;
    for (auto k : order) shuffled.push_back(texts[k]);
    const auto out = embedder.embed(shuffled);
    for (std::size_t k = 0; k < order.size(); ++k) CHECK(out[k].values == base[order[k]].values);
  }
}
