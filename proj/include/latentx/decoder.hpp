#pragma once

// Decoder backends: latent vector -> image.
//
// Remote protocol (HTTP + JSON):
//   POST /v1/decode  {"latents": [[...], ...], "conditions": [x, ...]?} -> {"images": ["<base64 PNG>", ...]}
//   POST /v1/perturb {"z": [...], "direction": [...], "gamma": x}       -> {"z_tilde": [...]}
//   GET  /v1/info                                                       -> {"latent_dim": n, "kind": "vae"|"diffusion", "supports_perturb": bool}
// "conditions" carries the property value of a conditional row and is
// omitted otherwise.

#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "latentx/image.hpp"
#include "latentx/transport.hpp"

namespace latentx {

class Decoder {
 public:
  virtual ~Decoder() = default;

  virtual std::string name() const = 0;
  virtual std::size_t latent_dim() const = 0;
  virtual bool supports_perturb() const { return false; }

  virtual Image decode(const Eigen::VectorXd& z, std::optional<double> property = std::nullopt) = 0;
  /// Index-aligned with `latents`.
  virtual std::vector<Image> decode_batch(const std::vector<Eigen::VectorXd>& latents,
                                          std::optional<double> property = std::nullopt);
  /// z + gamma * (G(z + direction) - G(z)); UnsupportedOperation by default.
  virtual Eigen::VectorXd perturb(const Eigen::VectorXd& z, const Eigen::VectorXd& direction, double gamma);
};

enum class Factor { PosX, PosY, Scale, Rotation, Shape, Brightness };

inline constexpr std::array<Factor, 6> kAllFactors = {Factor::PosX,     Factor::PosY,  Factor::Scale,
                                                      Factor::Rotation, Factor::Shape, Factor::Brightness};

std::string_view to_string(Factor factor);
std::optional<Factor> factor_from_string(std::string_view name);

/// Latent dimension -> rendered factor. Dimensions without a factor are
/// no-ops; a factor without a dimension stays at its mid value.
class SyntheticFactorMap {
 public:
  SyntheticFactorMap() = default;
  /// Throws Precondition when a factor is assigned twice.
  explicit SyntheticFactorMap(std::map<std::size_t, Factor> assignment);

  /// PosX, PosY, Scale, Rotation, Shape, Brightness on dims 0..5 (as far as latent_dim allows).
  static SyntheticFactorMap defaults(std::size_t latent_dim);

  std::optional<std::size_t> dimension_of(Factor factor) const;
  std::optional<Factor> factor_of(std::size_t dim) const;
  const std::map<std::size_t, Factor>& assignment() const { return assignment_; }

 private:
  std::map<std::size_t, Factor> assignment_;
};

/// Procedural 64x64 grayscale sprites with known factor semantics.
///
/// Each assigned coordinate is clamped to [-3, 3] and mapped affinely:
/// PosX/PosY shift the centre by up to 16 px, Scale sets the size 8..24 px,
/// Rotation 0..90 degrees, Brightness 64..255. Shape morphs the outline
/// radially from a square (-3) through a 2:1 ellipse (0) to a triangle
/// inscribed in that ellipse (+3). Coverage is 4x4 supersampled.
class SyntheticDecoder final : public Decoder {
 public:
  static constexpr int kCanvas = 64;

  SyntheticDecoder(std::size_t latent_dim, SyntheticFactorMap factors);

  std::string name() const override { return "synthetic"; }
  std::size_t latent_dim() const override { return latent_dim_; }
  Image decode(const Eigen::VectorXd& z, std::optional<double> property = std::nullopt) override;

  const SyntheticFactorMap& factors() const { return factors_; }

 private:
  std::size_t latent_dim_;
  SyntheticFactorMap factors_;
};

/// G(z) = A z. Images are bar charts of A z: one 8 px column per output,
/// bar height maps [-6, 6] onto 0..64 px.
class LinearDecoder final : public Decoder {
 public:
  explicit LinearDecoder(Eigen::MatrixXd matrix);

  std::string name() const override { return "linear"; }
  std::size_t latent_dim() const override { return static_cast<std::size_t>(matrix_.cols()); }
  bool supports_perturb() const override { return matrix_.rows() == matrix_.cols(); }
  Image decode(const Eigen::VectorXd& z, std::optional<double> property = std::nullopt) override;
  Eigen::VectorXd perturb(const Eigen::VectorXd& z, const Eigen::VectorXd& direction, double gamma) override;

  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  Eigen::MatrixXd matrix_;
};

struct RemoteInfo {
  std::size_t latent_dim = 0;
  std::string kind;
  bool supports_perturb = false;
};

/// Client for the remote decoder protocol. At most `max_in_flight`
/// requests are outstanding at once.
class RemoteDecoder final : public Decoder {
 public:
  RemoteDecoder(std::shared_ptr<Transport> transport, std::ptrdiff_t max_in_flight = 4);

  std::string name() const override { return "remote"; }
  std::size_t latent_dim() const override { return info().latent_dim; }
  bool supports_perturb() const override { return info().supports_perturb; }
  Image decode(const Eigen::VectorXd& z, std::optional<double> property = std::nullopt) override;
  std::vector<Image> decode_batch(const std::vector<Eigen::VectorXd>& latents,
                                  std::optional<double> property = std::nullopt) override;
  Eigen::VectorXd perturb(const Eigen::VectorXd& z, const Eigen::VectorXd& direction, double gamma) override;

  const RemoteInfo& info() const;

 private:
  HttpResponse post(std::string_view path, const std::string& body) const;

  std::shared_ptr<Transport> transport_;
  mutable std::counting_semaphore<64> in_flight_;
  mutable std::once_flag info_once_;
  mutable RemoteInfo info_;
};

}  // namespace latentx
