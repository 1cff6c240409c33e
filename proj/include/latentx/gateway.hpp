#pragma once

// Multimodal chat and text-embedding clients.

#include <Eigen/Dense>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "latentx/transport.hpp"

namespace latentx {

struct ChatRequest {
  std::string prompt;
  std::vector<std::vector<std::uint8_t>> images;  // PNG bytes
  double temperature = 1.0;
  double top_p = 1.0;
  std::string model_name;

  /// Throws Precondition when temperature is outside [0,2] or top_p outside [0,1].
  void validate() const;
};

struct ResponseSample {
  std::size_t index = 0;
  std::string text;
  std::int64_t latency_ms = 0;
};

struct EmbeddingVector {
  Eigen::VectorXd values;
  std::string model_name;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// One completion. Retryable failures are Error(Transient); AuthError and
  /// GatewayError are final.
  virtual std::string complete(const ChatRequest& request, std::size_t sample_index) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
  virtual std::string name() const = 0;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{500};
  double backoff_factor = 2.0;
};

/// n independent draws, results ordered by sample index regardless of the
/// order in which concurrent draws finish.
std::vector<ResponseSample> sample_n(ChatBackend& backend, const ChatRequest& request, std::size_t n,
                                     const RetryPolicy& retry = {}, std::size_t parallelism = 1);

/// Scripted responses: draw i returns script[i % size].
class MockChat final : public ChatBackend {
 public:
  explicit MockChat(std::vector<std::string> script);
  std::string complete(const ChatRequest& request, std::size_t sample_index) override;

 private:
  std::vector<std::string> script_;
};

/// Chat-completions dialect; images travel as base64 PNG data URLs.
class HttpChat final : public ChatBackend {
 public:
  explicit HttpChat(std::shared_ptr<Transport> transport) : transport_(std::move(transport)) {}
  std::string complete(const ChatRequest& request, std::size_t sample_index) override;

  static std::string request_body(const ChatRequest& request);

 private:
  std::shared_ptr<Transport> transport_;
};

/// L2-normalised hashed term frequencies over lowercased word tokens.
/// Bucket = FNV-1a 64 of the token, modulo the dimension.
class OfflineEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDimension = 512;

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::string name() const override { return "offline-hashed-tf-512"; }

  static std::uint64_t fnv1a64(std::string_view token);
};

class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::shared_ptr<Transport> transport, std::string model)
      : transport_(std::move(transport)), model_(std::move(model)) {}
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  std::string name() const override { return "remote:" + model_; }

 private:
  std::shared_ptr<Transport> transport_;
  std::string model_;
};

/// Maps an HTTP status onto the gateway error kinds (throws for non-2xx).
void check_gateway_status(const HttpResponse& response, std::string_view what);

}  // namespace latentx
