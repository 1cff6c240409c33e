#include "latentx/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numbers>

#include "latentx/error.hpp"
#include "latentx/perturb.hpp"

namespace latentx {

using nlohmann::json;

std::vector<Image> Decoder::decode_batch(const std::vector<Eigen::VectorXd>& latents,
                                         std::optional<double> property) {
  std::vector<Image> out;
  out.reserve(latents.size());
  for (const auto& z : latents) out.push_back(decode(z, property));
  return out;
}

Eigen::VectorXd Decoder::perturb(const Eigen::VectorXd&, const Eigen::VectorXd&, double) {
  throw Error(ErrorKind::UnsupportedOperation, name() + " decoder has no perturb operation");
}

std::string_view to_string(Factor factor) {
  switch (factor) {
    case Factor::PosX: return "PosX";
    case Factor::PosY: return "PosY";
    case Factor::Scale: return "Scale";
    case Factor::Rotation: return "Rotation";
    case Factor::Shape: return "Shape";
    case Factor::Brightness: return "Brightness";
  }
  return "";
}

std::optional<Factor> factor_from_string(std::string_view name) {
  for (Factor f : kAllFactors)
    if (to_string(f) == name) return f;
  return std::nullopt;
}

SyntheticFactorMap::SyntheticFactorMap(std::map<std::size_t, Factor> assignment) : assignment_(std::move(assignment)) {
  for (Factor f : kAllFactors) {
    auto n = std::count_if(assignment_.begin(), assignment_.end(), [f](const auto& kv) { return kv.second == f; });
    if (n > 1) throw Error(ErrorKind::Precondition, "factor " + std::string(to_string(f)) + " assigned twice");
  }
}

SyntheticFactorMap SyntheticFactorMap::defaults(std::size_t latent_dim) {
  std::map<std::size_t, Factor> m;
  for (std::size_t d = 0; d < std::min(latent_dim, kAllFactors.size()); ++d) m[d] = kAllFactors[d];
  return SyntheticFactorMap(std::move(m));
}

std::optional<std::size_t> SyntheticFactorMap::dimension_of(Factor factor) const {
  for (const auto& [dim, f] : assignment_)
    if (f == factor) return dim;
  return std::nullopt;
}

std::optional<Factor> SyntheticFactorMap::factor_of(std::size_t dim) const {
  auto it = assignment_.find(dim);
  if (it == assignment_.end()) return std::nullopt;
  return it->second;
}

SyntheticDecoder::SyntheticDecoder(std::size_t latent_dim, SyntheticFactorMap factors)
    : latent_dim_(latent_dim), factors_(std::move(factors)) {
  if (latent_dim_ == 0) throw Error(ErrorKind::Precondition, "latent_dim must be at least 1");
  for (const auto& [dim, f] : factors_.assignment())
    if (dim >= latent_dim_)
      throw Error(ErrorKind::Precondition, "factor " + std::string(to_string(f)) + " assigned to dimension " +
                                               std::to_string(dim) + " outside the latent space");
}

namespace {

struct Sprite {
  double cx, cy;     // centre, pixels
  double radius;     // half the size
  double angle;      // radians
  double shape;      // -1 square, 0 ellipse, +1 triangle
  double brightness; // 64..255
};

double square_radius(double phi, double r) {
  return r / std::max(std::abs(std::cos(phi)), std::abs(std::sin(phi)));
}

double ellipse_radius(double phi, double a, double b) {
  const double c = b * std::cos(phi);
  const double s = a * std::sin(phi);
  return a * b / std::sqrt(c * c + s * s);
}

// Distance from the centroid to the triangle edge along phi.
double triangle_radius(double phi, double a, double b) {
  const double h = std::sqrt(3.0) / 2.0;
  const Eigen::Vector2d v[3] = {{0.0, b}, {-h * a, -0.5 * b}, {h * a, -0.5 * b}};
  const Eigen::Vector2d u(std::cos(phi), std::sin(phi));
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector2d p = v[k];
    const Eigen::Vector2d e = v[(k + 1) % 3] - p;
    const double denom = u.x() * e.y() - u.y() * e.x();
    if (std::abs(denom) < 1e-15) continue;
    const double t = (p.x() * e.y() - p.y() * e.x()) / denom;
    const double s = (p.x() * u.y() - p.y() * u.x()) / denom;
    if (t > 0 && s >= -1e-12 && s <= 1 + 1e-12) best = std::min(best, t);
  }
  return best;
}

double outline_radius(double phi, const Sprite& sprite) {
  const double a = sprite.radius;
  const double b = sprite.radius / 2.0;
  const double ellipse = ellipse_radius(phi, a, b);
  if (sprite.shape < 0) {
    const double w = sprite.shape + 1.0;
    return (1.0 - w) * square_radius(phi, a) + w * ellipse;
  }
  return (1.0 - sprite.shape) * ellipse + sprite.shape * triangle_radius(phi, a, b);
}

bool inside(double x, double y, const Sprite& sprite) {
  const double dx = x - sprite.cx;
  const double dy = y - sprite.cy;
  const double c = std::cos(sprite.angle);
  const double s = std::sin(sprite.angle);
  const double lx = dx * c + dy * s;
  const double ly = -dx * s + dy * c;
  const double rho = std::hypot(lx, ly);
  if (rho == 0.0) return true;
  return rho <= outline_radius(std::atan2(ly, lx), sprite);
}

}  // namespace

Image SyntheticDecoder::decode(const Eigen::VectorXd& z, std::optional<double>) {
  if (static_cast<std::size_t>(z.size()) != latent_dim_)
    throw Error(ErrorKind::DimensionMismatch, "synthetic decoder expects " + std::to_string(latent_dim_) +
                                                  " latents, got " + std::to_string(z.size()));
  auto unit = [&](Factor f) {
    auto dim = factors_.dimension_of(f);
    if (!dim) return 0.0;
    return std::clamp(z[static_cast<Eigen::Index>(*dim)], -3.0, 3.0) / 3.0;
  };
  const double half = kCanvas / 2.0;
  const Sprite sprite{
      .cx = half + 16.0 * unit(Factor::PosX),
      .cy = half + 16.0 * unit(Factor::PosY),
      .radius = (16.0 + 8.0 * unit(Factor::Scale)) / 2.0,
      .angle = (unit(Factor::Rotation) + 1.0) / 2.0 * (std::numbers::pi / 2.0),
      .shape = unit(Factor::Shape),
      .brightness = 64.0 + (unit(Factor::Brightness) + 1.0) / 2.0 * 191.0,
  };

  constexpr int kSub = 4;
  Image image(kCanvas, kCanvas, 1, 0);
  for (int y = 0; y < kCanvas; ++y) {
    for (int x = 0; x < kCanvas; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx)
          hits += inside(x + (sx + 0.5) / kSub, y + (sy + 0.5) / kSub, sprite);
      image.at(x, y) = static_cast<std::uint8_t>(std::lround(sprite.brightness * hits / (kSub * kSub)));
    }
  }
  return image;
}

LinearDecoder::LinearDecoder(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() == 0 || matrix_.cols() == 0) throw Error(ErrorKind::Precondition, "linear decoder needs a non-empty matrix");
}

Image LinearDecoder::decode(const Eigen::VectorXd& z, std::optional<double>) {
  if (z.size() != matrix_.cols())
    throw Error(ErrorKind::DimensionMismatch, "linear decoder expects " + std::to_string(matrix_.cols()) +
                                                  " latents, got " + std::to_string(z.size()));
  const Eigen::VectorXd y = matrix_ * z;
  constexpr int kBar = 8;
  constexpr int kHeight = 64;
  Image image(static_cast<int>(y.size()) * kBar, kHeight, 1, 0);
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const double level = std::clamp((y[k] + 6.0) / 12.0, 0.0, 1.0);
    const int h = static_cast<int>(std::lround(level * kHeight));
    for (int row = kHeight - h; row < kHeight; ++row)
      for (int x = static_cast<int>(k) * kBar + 1; x < static_cast<int>(k + 1) * kBar - 1; ++x) image.at(x, row) = 255;
  }
  return image;
}

Eigen::VectorXd LinearDecoder::perturb(const Eigen::VectorXd& z, const Eigen::VectorXd& direction, double gamma) {
  if (!supports_perturb())
    throw Error(ErrorKind::UnsupportedOperation, "perturb needs a square decoder matrix");
  return apply_direction(z, direction, gamma, [this](const Eigen::VectorXd& x) -> Eigen::VectorXd { return matrix_ * x; });
}

namespace {

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

RemoteDecoder::RemoteDecoder(std::shared_ptr<Transport> transport, std::ptrdiff_t max_in_flight)
    : transport_(std::move(transport)), in_flight_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 64)) {}

HttpResponse RemoteDecoder::post(std::string_view path, const std::string& body) const {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<64>& s;
    ~Release() { s.release(); }
  } release{in_flight_};
  HttpResponse response;
  try {
    response = transport_->post(path, body);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Transient) throw Error(ErrorKind::RemoteDecode, e.what());
    throw;
  }
  if (response.status < 200 || response.status >= 300)
    throw Error(ErrorKind::RemoteDecode, std::string(path) + ": HTTP " + std::to_string(response.status));
  return response;
}

const RemoteInfo& RemoteDecoder::info() const {
  std::call_once(info_once_, [this] {
    HttpResponse response;
    try {
      response = transport_->get("/v1/info", "info");
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Transient) throw Error(ErrorKind::RemoteDecode, e.what());
      throw;
    }
    if (response.status < 200 || response.status >= 300)
      throw Error(ErrorKind::RemoteDecode, "/v1/info: HTTP " + std::to_string(response.status));
    try {
      const json j = json::parse(response.body);
      info_.latent_dim = j.at("latent_dim").get<std::size_t>();
      info_.kind = j.at("kind").get<std::string>();
      info_.supports_perturb = j.at("supports_perturb").get<bool>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::RemoteDecode, std::string("/v1/info: malformed payload: ") + e.what());
    }
  });
  return info_;
}

Image RemoteDecoder::decode(const Eigen::VectorXd& z, std::optional<double> property) {
  return decode_batch({z}, property).front();
}

std::vector<Image> RemoteDecoder::decode_batch(const std::vector<Eigen::VectorXd>& latents,
                                               std::optional<double> property) {
  if (latents.empty()) return {};
  json body;
  body["latents"] = json::array();
  for (const auto& z : latents) body["latents"].push_back(to_json(z));
  if (property) body["conditions"] = std::vector<double>(latents.size(), *property);

  const HttpResponse response = post("/v1/decode", body.dump());
  std::vector<Image> out;
  try {
    const json j = json::parse(response.body);
    const auto& images = j.at("images");
    if (images.size() != latents.size())
      throw Error(ErrorKind::RemoteDecode, "/v1/decode returned " + std::to_string(images.size()) + " images for " +
                                               std::to_string(latents.size()) + " latents");
    for (const auto& encoded : images) {
      const std::string bytes = base64_decode(encoded.get<std::string>());
      out.push_back(decode_png(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size())));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::RemoteDecode, std::string("/v1/decode: malformed payload: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::RemoteDecode || e.kind() == ErrorKind::CassetteMiss) throw;
    throw Error(ErrorKind::RemoteDecode, std::string("/v1/decode: ") + e.what());
  }
  return out;
}

Eigen::VectorXd RemoteDecoder::perturb(const Eigen::VectorXd& z, const Eigen::VectorXd& direction, double gamma) {
  if (!supports_perturb()) throw Error(ErrorKind::UnsupportedOperation, "remote decoder has no perturb endpoint");
  if (z.size() != direction.size()) throw Error(ErrorKind::DimensionMismatch, "latent and direction differ in length");
  const json body = {{"z", to_json(z)}, {"direction", to_json(direction)}, {"gamma", gamma}};
  const HttpResponse response = post("/v1/perturb", body.dump());
  try {
    Eigen::VectorXd out = vector_from_json(json::parse(response.body).at("z_tilde"));
    if (out.size() != z.size()) throw Error(ErrorKind::RemoteDecode, "/v1/perturb returned a vector of the wrong length");
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::RemoteDecode, std::string("/v1/perturb: malformed payload: ") + e.what());
  }
}

}  // namespace latentx
