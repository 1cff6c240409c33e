#pragma once

// Latent sweeps and direction shifts laid out as the image rows each bias
// prompt talks about.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latentx/error.hpp"
#include "latentx/formula.hpp"

namespace latentx {

enum class ModelVariant { VaeLatent, DiffusionDirection };
enum class DiffusionProfile { Ddpm, Conditional };

struct ModelKind {
  ModelVariant variant = ModelVariant::VaeLatent;
  std::size_t latent_dim = 1;  // M, or the number of directions
  DiffusionProfile profile = DiffusionProfile::Ddpm;
  Eigen::MatrixXd directions;  // DiffusionDirection: one direction per row

  static ModelKind vae(std::size_t latent_dim);
  static ModelKind diffusion(Eigen::MatrixXd directions, DiffusionProfile profile);
  /// Length of the vectors the decoder consumes.
  std::size_t vector_dim() const;
};

/// Strictly increasing, at least two values.
class SweepGrid {
 public:
  explicit SweepGrid(std::vector<double> values);
  const std::vector<double>& values() const { return values_; }
  double max() const { return values_.back(); }
  std::size_t size() const { return values_.size(); }
  bool operator==(const SweepGrid&) const = default;

 private:
  std::vector<double> values_;
};

SweepGrid default_grid(const ModelKind& kind);

struct Confound {
  std::size_t index = 0;
  double offset = 0;
  bool operator==(const Confound&) const = default;
};

struct SequenceRow {
  std::size_t row_id = 0;
  Eigen::VectorXd base_latent;
  std::size_t target_index = 0;
  std::optional<Confound> confound;
  std::optional<double> property_value;
  SweepGrid grid{{0.0, 1.0}};
};

using GroupMap = std::map<std::size_t, std::string>;

struct PropertyConfig {
  std::string name;
  std::string group;  // the group G_k of latents tied to the property
  double off_value = 0.0;
  double on_value = 1.0;
  std::optional<std::size_t> carrier_index;  // latent that encodes the property, if any
};

struct PlanOptions {
  std::optional<GroupMap> groups;
  std::optional<PropertyConfig> property;
  std::optional<Eigen::VectorXd> base_latent;
  std::optional<SweepGrid> grid;
  bool random_confound = false;
};

struct PerturbationPlan {
  BiasClass bias = BiasClass::Disentanglement;
  std::vector<SequenceRow> rows;
  std::size_t target_index = 0;
  std::optional<GroupMap> groups;
  std::optional<PropertyConfig> property;
};

/// Deterministic in (ast, bias, kind, target_index, seed, options).
PerturbationPlan plan(const FormulaAst& ast, BiasClass bias, const ModelKind& kind, std::size_t target_index,
                      std::uint64_t seed = 0, const PlanOptions& options = {});

/// z + gamma * (decode_fn(z + direction) - decode_fn(z)).
template <typename DerivedZ, typename DerivedD, typename DecodeFn>
Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1> apply_direction(
    const Eigen::MatrixBase<DerivedZ>& z, const Eigen::MatrixBase<DerivedD>& direction,
    typename DerivedZ::Scalar gamma, DecodeFn&& decode_fn) {
  using Vector = Eigen::Matrix<typename DerivedZ::Scalar, Eigen::Dynamic, 1>;
  if (z.size() != direction.size())
    throw Error(ErrorKind::DimensionMismatch, "latent and direction differ in length");
  const Vector base = z;
  const Vector shifted = base + direction;
  const Vector delta = Vector(decode_fn(shifted)) - Vector(decode_fn(base));
  if (delta.size() != base.size())
    throw Error(ErrorKind::DimensionMismatch, "decoder output does not live in the latent space");
  return base + gamma * delta;
}

struct DirectionShift {
  Eigen::VectorXd direction;
  double gamma = 0;
};

/// One point of a sequence. For VAE rows `z` is the final latent; for
/// diffusion rows the shifts are applied to `z` in order through the
/// backend's perturb operation.
struct Step {
  Eigen::VectorXd z;
  std::vector<DirectionShift> shifts;
};

struct MaterializedRow {
  std::size_t row_id = 0;
  std::vector<Step> steps;
  std::optional<double> property_value;
};

std::vector<MaterializedRow> materialize(const PerturbationPlan& plan, const ModelKind& kind);

/// Whether a formula speaks about latent `index` under the configured groups
/// and property.
bool formula_mentions(const FormulaAst& ast, BiasClass bias, std::size_t index, std::size_t latent_dim,
                      const PlanOptions& options);

}  // namespace latentx
