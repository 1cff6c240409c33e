#include "latentx/gateway.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <json.hpp>
#include <thread>

#include "latentx/error.hpp"
#include "latentx/metrics.hpp"

namespace latentx {

using nlohmann::json;

void ChatRequest::validate() const {
  if (!(temperature >= 0.0 && temperature <= 2.0))
    throw Error(ErrorKind::Precondition, "temperature must lie in [0, 2]");
  if (!(top_p >= 0.0 && top_p <= 1.0)) throw Error(ErrorKind::Precondition, "top_p must lie in [0, 1]");
}

namespace {

std::string complete_with_retry(ChatBackend& backend, const ChatRequest& request, std::size_t index,
                                const RetryPolicy& retry) {
  auto delay = retry.initial_delay;
  for (int attempt = 0;; ++attempt) {
    try {
      return backend.complete(request, index);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Transient) throw;
      if (attempt >= retry.max_retries)
        throw Error(ErrorKind::Gateway, "sample " + std::to_string(index) + " failed after " +
                                            std::to_string(retry.max_retries) + " retries: " + e.what());
    }
    std::this_thread::sleep_for(delay);
    delay = std::chrono::milliseconds(
        static_cast<std::int64_t>(std::llround(static_cast<double>(delay.count()) * retry.backoff_factor)));
  }
}

}  // namespace

std::vector<ResponseSample> sample_n(ChatBackend& backend, const ChatRequest& request, std::size_t n,
                                     const RetryPolicy& retry, std::size_t parallelism) {
  if (n < 2) throw Error(ErrorKind::Precondition, "sample_n needs n >= 2 for pairwise scoring");
  request.validate();

  std::vector<ResponseSample> samples(n);
  std::vector<std::exception_ptr> failures(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto start = std::chrono::steady_clock::now();
      try {
        samples[i].text = complete_with_retry(backend, request, i, retry);
      } catch (...) {
        failures[i] = std::current_exception();
      }
      samples[i].index = i;
      samples[i].latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(parallelism, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);
  return samples;
}

MockChat::MockChat(std::vector<std::string> script) : script_(std::move(script)) {
  if (script_.empty()) throw Error(ErrorKind::Precondition, "mock script is empty");
}

std::string MockChat::complete(const ChatRequest&, std::size_t sample_index) {
  return script_[sample_index % script_.size()];
}

void check_gateway_status(const HttpResponse& response, std::string_view what) {
  const int s = response.status;
  if (s >= 200 && s < 300) return;
  std::string message = std::string(what) + ": HTTP " + std::to_string(s);
  if (!response.body.empty()) message += ": " + response.body.substr(0, 200);
  if (s == 401 || s == 403) throw Error(ErrorKind::Auth, message);
  if (s == 408 || s == 409 || s == 429 || s >= 500) throw Error(ErrorKind::Transient, message);
  throw Error(ErrorKind::Gateway, message);
}

std::string HttpChat::request_body(const ChatRequest& request) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  for (const auto& png : request.images) {
    std::string url = "data:image/png;base64,";
    url += base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", std::move(url)}}}});
  }
  json body = {
      {"model", request.model_name},
      {"temperature", request.temperature},
      {"top_p", request.top_p},
      {"n", 1},
      {"messages", json::array({{{"role", "user"}, {"content", std::move(content)}}})},
  };
  return body.dump();
}

std::string HttpChat::complete(const ChatRequest& request, std::size_t sample_index) {
  HttpResponse response =
      transport_->post("/chat/completions", request_body(request), "sample-" + std::to_string(sample_index));
  check_gateway_status(response, "chat completion");
  try {
    const json j = json::parse(response.body);
    const json& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return "";
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const auto& part : content)
      if (part.value("type", "") == "text") text += part.at("text").get<std::string>();
    return text;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Gateway, std::string("malformed chat completion: ") + e.what());
  }
}

std::uint64_t OfflineEmbedder::fnv1a64(std::string_view token) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::vector<EmbeddingVector> OfflineEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorKind::Precondition, "embed needs at least one text");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(kDimension);
    for (const auto& token : tokenize(text)) v[static_cast<Eigen::Index>(fnv1a64(token) % kDimension)] += 1.0;
    const double norm = v.norm();
    if (norm > 0) v /= norm;
    out.push_back({std::move(v), name()});
  }
  return out;
}

std::vector<EmbeddingVector> HttpEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorKind::Precondition, "embed needs at least one text");
  json body = {{"model", model_}, {"input", texts}};
  HttpResponse response;
  try {
    response = transport_->post("/embeddings", body.dump(), "embed");
    check_gateway_status(response, "embeddings");
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Transient) throw Error(ErrorKind::Gateway, e.what());
    throw;
  }
  std::vector<EmbeddingVector> out(texts.size());
  try {
    const json j = json::parse(response.body);
    const auto& data = j.at("data");
    if (data.size() != texts.size()) throw Error(ErrorKind::Gateway, "embedding count mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t index = data[i].value("index", i);
      if (index >= out.size()) throw Error(ErrorKind::Gateway, "embedding index out of range");
      auto values = data[i].at("embedding").get<std::vector<double>>();
      for (double x : values)
        if (!std::isfinite(x)) throw Error(ErrorKind::Gateway, "non-finite embedding entry");
      out[index] = {Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())),
                    model_};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Gateway, std::string("malformed embedding response: ") + e.what());
  }
  return out;
}

}  // namespace latentx
