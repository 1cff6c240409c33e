#pragma once

// HTTP+JSON transport shared by the chat gateway and the remote decoder,
// with record/replay cassettes.
//
// Cassette file (JSON Lines, UTF-8):
//   line 1:   {"cassette":"latentx","version":1}
//   line 2..: {"digest":"<sha256 hex>","status":<int>,"body":"<response body>"}
// Records are sorted by digest. The digest is SHA-256 over
// "<METHOD>\n<path>\n<correlation key>\n<request body>"; credentials and
// headers are never part of it.

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace latentx {

struct HttpResponse {
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;

  /// `key` disambiguates byte-identical requests (e.g. the sample index of
  /// n independent draws). It is folded into cassette digests only.
  virtual HttpResponse post(std::string_view path, const std::string& body,
                            std::string_view key = {}) = 0;
  virtual HttpResponse get(std::string_view path, std::string_view key = {}) = 0;
};

struct HttpOptions {
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string bearer_token;
  std::chrono::seconds timeout{120};
};

/// Plain HTTP(S). Transport-level failures raise Error(Transient).
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(HttpOptions options);

  HttpResponse post(std::string_view path, const std::string& body, std::string_view key) override;
  HttpResponse get(std::string_view path, std::string_view key) override;

 private:
  HttpOptions options_;
  std::string origin_;
  std::string prefix_;
};

std::string sha256_hex(std::string_view data);
std::string request_digest(std::string_view method, std::string_view path, std::string_view key,
                           std::string_view body);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

class Cassette {
 public:
  static Cassette load(const std::string& path);
  void save(const std::string& path) const;

  const HttpResponse* find(const std::string& digest) const;
  /// First record for a digest wins.
  void add(const std::string& digest, HttpResponse response);
  void merge(const Cassette& other);
  std::size_t size() const { return records_.size(); }

 private:
  std::map<std::string, HttpResponse> records_;
};

/// Serves responses from a cassette; any unknown request is CassetteMiss.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(Cassette cassette) : cassette_(std::move(cassette)) {}

  HttpResponse post(std::string_view path, const std::string& body, std::string_view key) override;
  HttpResponse get(std::string_view path, std::string_view key) override;

 private:
  HttpResponse lookup(std::string_view method, std::string_view path, std::string_view key,
                      std::string_view body) const;
  Cassette cassette_;
};

/// Forwards to an inner transport and keeps every exchange for save().
class RecordingTransport final : public Transport {
 public:
  explicit RecordingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}

  HttpResponse post(std::string_view path, const std::string& body, std::string_view key) override;
  HttpResponse get(std::string_view path, std::string_view key) override;

  void save(const std::string& path) const;
  Cassette cassette() const;

 private:
  std::shared_ptr<Transport> inner_;
  mutable std::mutex mutex_;
  Cassette cassette_;
};

/// True when the file starts with a cassette header line.
bool is_cassette_file(const std::string& path);

}  // namespace latentx
