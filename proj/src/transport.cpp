#include "latentx/transport.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <httplib.h>
#include <json.hpp>

#include "latentx/error.hpp"

namespace latentx {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Io, "sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string request_digest(std::string_view method, std::string_view path, std::string_view key,
                           std::string_view body) {
  std::string material;
  material.reserve(method.size() + path.size() + key.size() + body.size() + 3);
  material.append(method).append("\n").append(path).append("\n").append(key).append("\n").append(body);
  return sha256_hex(material);
}

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorKind::Io, "base64 length is not a multiple of 4");
  std::string out(3 * text.size() / 4, '\0');
  int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(text.data()),
                          static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorKind::Io, "invalid base64");
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(n) - padding);
  return out;
}

HttpTransport::HttpTransport(HttpOptions options) : options_(std::move(options)) {
  const std::string& url = options_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorKind::Config, "base URL needs a scheme: '" + url + "'");
  auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  if (path_start != std::string::npos) prefix_ = url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

namespace {

std::unique_ptr<httplib::Client> make_client(const std::string& origin, const HttpOptions& options) {
  auto client = std::make_unique<httplib::Client>(origin);
  client->set_connection_timeout(std::chrono::seconds(10));
  client->set_read_timeout(options.timeout);
  client->set_write_timeout(options.timeout);
  if (!options.bearer_token.empty()) client->set_bearer_token_auth(options.bearer_token);
  return client;
}

HttpResponse convert(const httplib::Result& result, std::string_view what) {
  if (!result)
    throw Error(ErrorKind::Transient,
                std::string(what) + ": transport failure (" + httplib::to_string(result.error()) + ")");
  return {result->status, result->body};
}

}  // namespace

HttpResponse HttpTransport::post(std::string_view path, const std::string& body, std::string_view) {
  // httplib::Client is not safe for concurrent use; one per request.
  auto client = make_client(origin_, options_);
  std::string full = prefix_ + std::string(path);
  return convert(client->Post(full, body, "application/json"), "POST " + full);
}

HttpResponse HttpTransport::get(std::string_view path, std::string_view) {
  auto client = make_client(origin_, options_);
  std::string full = prefix_ + std::string(path);
  return convert(client->Get(full), "GET " + full);
}

Cassette Cassette::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open cassette '" + path + "'");
  Cassette cassette;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Io, path + ":" + std::to_string(number) + ": " + e.what());
    }
    if (number == 1) {
      if (j.value("cassette", "") != "latentx" || j.value("version", 0) != 1)
        throw Error(ErrorKind::Io, path + ": not a version-1 cassette");
      continue;
    }
    cassette.add(j.at("digest").get<std::string>(),
                 {j.at("status").get<int>(), j.at("body").get<std::string>()});
  }
  if (number == 0) throw Error(ErrorKind::Io, path + ": empty cassette");
  return cassette;
}

void Cassette::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write cassette '" + path + "'");
  out << json{{"cassette", "latentx"}, {"version", 1}}.dump() << '\n';
  for (const auto& [digest, response] : records_) {
    out << json{{"digest", digest}, {"status", response.status}, {"body", response.body}}.dump()
        << '\n';
  }
}

const HttpResponse* Cassette::find(const std::string& digest) const {
  auto it = records_.find(digest);
  return it == records_.end() ? nullptr : &it->second;
}

void Cassette::add(const std::string& digest, HttpResponse response) {
  records_.emplace(digest, std::move(response));
}

void Cassette::merge(const Cassette& other) {
  for (const auto& [digest, response] : other.records_) records_.emplace(digest, response);
}

HttpResponse ReplayTransport::lookup(std::string_view method, std::string_view path,
                                     std::string_view key, std::string_view body) const {
  const std::string digest = request_digest(method, path, key, body);
  if (const auto* hit = cassette_.find(digest)) return *hit;
  throw Error(ErrorKind::CassetteMiss,
              "no cassette record for " + std::string(method) + " " + std::string(path) + " (digest " +
                  digest.substr(0, 12) + ")");
}

HttpResponse ReplayTransport::post(std::string_view path, const std::string& body, std::string_view key) {
  return lookup("POST", path, key, body);
}

HttpResponse ReplayTransport::get(std::string_view path, std::string_view key) {
  return lookup("GET", path, key, "");
}

HttpResponse RecordingTransport::post(std::string_view path, const std::string& body,
                                      std::string_view key) {
  HttpResponse response = inner_->post(path, body, key);
  std::lock_guard lock(mutex_);
  cassette_.add(request_digest("POST", path, key, body), response);
  return response;
}

HttpResponse RecordingTransport::get(std::string_view path, std::string_view key) {
  HttpResponse response = inner_->get(path, key);
  std::lock_guard lock(mutex_);
  cassette_.add(request_digest("GET", path, key, ""), response);
  return response;
}

void RecordingTransport::save(const std::string& path) const {
  std::lock_guard lock(mutex_);
  cassette_.save(path);
}

Cassette RecordingTransport::cassette() const {
  std::lock_guard lock(mutex_);
  return cassette_;
}

bool is_cassette_file(const std::string& path) {
  std::ifstream in(path);
  std::string first;
  if (!in || !std::getline(in, first)) return false;
  try {
    auto j = json::parse(first);
    return j.is_object() && j.value("cassette", "") == "latentx";
  } catch (const json::exception&) {
    return false;
  }
}

}  // namespace latentx
