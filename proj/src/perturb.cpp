#include "latentx/perturb.hpp"

#include <algorithm>
#include <random>

namespace latentx {

ModelKind ModelKind::vae(std::size_t latent_dim) {
  if (latent_dim == 0) throw Error(ErrorKind::Precondition, "latent_dim must be at least 1");
  ModelKind kind;
  kind.variant = ModelVariant::VaeLatent;
  kind.latent_dim = latent_dim;
  return kind;
}

ModelKind ModelKind::diffusion(Eigen::MatrixXd directions, DiffusionProfile profile) {
  if (directions.rows() == 0 || directions.cols() == 0)
    throw Error(ErrorKind::Precondition, "diffusion model needs at least one non-empty direction");
  ModelKind kind;
  kind.variant = ModelVariant::DiffusionDirection;
  kind.latent_dim = static_cast<std::size_t>(directions.rows());
  kind.profile = profile;
  kind.directions = std::move(directions);
  return kind;
}

std::size_t ModelKind::vector_dim() const {
  return variant == ModelVariant::VaeLatent ? latent_dim : static_cast<std::size_t>(directions.cols());
}

SweepGrid::SweepGrid(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw Error(ErrorKind::InvalidGrid, "sweep grid needs at least two values");
  for (std::size_t i = 1; i < values_.size(); ++i)
    if (!(values_[i] > values_[i - 1])) throw Error(ErrorKind::InvalidGrid, "sweep grid must be strictly increasing");
}

SweepGrid default_grid(const ModelKind& kind) {
  if (kind.variant == ModelVariant::VaeLatent) return SweepGrid({-3.0, -1.5, 0.0, 1.5, 3.0});
  if (kind.profile == DiffusionProfile::Ddpm) return SweepGrid({0.1, 0.2, 0.3, 0.4, 0.5});
  return SweepGrid({1.0, 2.0, 3.0, 4.0, 5.0});
}

namespace {

std::optional<std::string> group_of(const GroupMap& groups, std::size_t index) {
  auto it = groups.find(index);
  if (it == groups.end()) return std::nullopt;
  return it->second;
}

const Symbol& condition_symbol(const FormulaAst& ast) {
  if (ast.relation.lhs.conditions.empty())
    throw Error(ErrorKind::InvalidPlan, "formula has no conditioning symbol");
  return ast.relation.lhs.conditions.front().symbol;
}

std::vector<std::size_t> admissible_confounds(BiasClass bias, std::size_t target, std::size_t dim,
                                              const PlanOptions& options) {
  std::vector<std::size_t> out;
  if (bias == BiasClass::Disentanglement) {
    for (std::size_t j = 0; j < dim; ++j)
      if (j != target) out.push_back(j);
    return out;
  }
  if (!options.groups)
    throw Error(ErrorKind::MissingGroupAssignment, std::string(to_string(bias)) + " needs a group map");
  const GroupMap& groups = *options.groups;
  const auto own = group_of(groups, target);
  if (!own)
    throw Error(ErrorKind::MissingGroupAssignment, "latent " + std::to_string(target) + " is not in any group");
  for (std::size_t j = 0; j < dim; ++j) {
    if (j == target) continue;
    const auto g = group_of(groups, j);
    if (!g) continue;
    if (bias == BiasClass::CombinationInterGroup ? *g != *own : *g == *own) out.push_back(j);
  }
  return out;
}

}  // namespace

PerturbationPlan plan(const FormulaAst& ast, BiasClass bias, const ModelKind& kind, std::size_t target_index,
                      std::uint64_t seed, const PlanOptions& options) {
  if (target_index >= kind.latent_dim)
    throw Error(ErrorKind::Precondition, "target index " + std::to_string(target_index) +
                                             " is outside the latent dimension " + std::to_string(kind.latent_dim));
  if (auto literal = ast.relation.lhs.target.literal_index(); literal && *literal != target_index)
    throw Error(ErrorKind::InvalidPlan, "formula is about latent " + std::to_string(*literal) + ", not " +
                                            std::to_string(target_index));

  const SweepGrid grid = options.grid.value_or(default_grid(kind));
  Eigen::VectorXd base = options.base_latent.value_or(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kind.vector_dim())));
  if (static_cast<std::size_t>(base.size()) != kind.vector_dim())
    throw Error(ErrorKind::DimensionMismatch, "base latent has length " + std::to_string(base.size()) +
                                                  ", expected " + std::to_string(kind.vector_dim()));

  PerturbationPlan out;
  out.bias = bias;
  out.target_index = target_index;
  out.groups = options.groups;
  out.property = options.property;

  auto row = [&](std::size_t id) {
    SequenceRow r{.row_id = id, .base_latent = base, .target_index = target_index, .grid = grid};
    return r;
  };

  if (is_conditional(bias)) {
    if (!options.property) throw Error(ErrorKind::MissingProperty, "conditional bias needs a property configuration");
    const PropertyConfig& property = *options.property;
    const double values[2] = {property.off_value, property.on_value};
    for (std::size_t k = 0; k < 2; ++k) {
      SequenceRow r = row(k);
      r.property_value = values[k];
      if (property.carrier_index) {
        const std::size_t carrier = *property.carrier_index;
        if (carrier == target_index || carrier >= kind.latent_dim)
          throw Error(ErrorKind::InvalidPlan, "property carrier index must be a different, valid latent");
        r.confound = Confound{carrier, values[k]};
      }
      out.rows.push_back(std::move(r));
    }
    return out;
  }

  std::vector<std::size_t> candidates = admissible_confounds(bias, target_index, kind.latent_dim, options);
  const Symbol& cond = condition_symbol(ast);
  if (auto forced = cond.literal_index()) {
    const bool ok = std::find(candidates.begin(), candidates.end(), *forced) != candidates.end();
    candidates = ok ? std::vector<std::size_t>{*forced} : std::vector<std::size_t>{};
  }
  if (candidates.empty())
    throw Error(ErrorKind::NoConfoundAvailable,
                "no admissible confound latent for target " + std::to_string(target_index));

  std::size_t confound = candidates.front();
  if (options.random_confound && candidates.size() > 1) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    confound = candidates[pick(rng)];
  }

  out.rows.push_back(row(0));
  SequenceRow shifted = row(1);
  shifted.confound = Confound{confound, grid.max()};
  out.rows.push_back(std::move(shifted));
  return out;
}

std::vector<MaterializedRow> materialize(const PerturbationPlan& plan, const ModelKind& kind) {
  std::vector<MaterializedRow> out;
  out.reserve(plan.rows.size());
  for (const auto& row : plan.rows) {
    MaterializedRow m{.row_id = row.row_id, .steps = {}, .property_value = row.property_value};
    const auto t = static_cast<Eigen::Index>(row.target_index);
    for (double value : row.grid.values()) {
      Step step{row.base_latent, {}};
      if (kind.variant == ModelVariant::VaeLatent) {
        if (row.confound) step.z[static_cast<Eigen::Index>(row.confound->index)] += row.confound->offset;
        step.z[t] = value;
      } else {
        if (row.confound)
          step.shifts.push_back(
              {kind.directions.row(static_cast<Eigen::Index>(row.confound->index)).transpose(), row.confound->offset});
        step.shifts.push_back({kind.directions.row(t).transpose(), value});
      }
      m.steps.push_back(std::move(step));
    }
    out.push_back(std::move(m));
  }
  return out;
}

bool formula_mentions(const FormulaAst& ast, BiasClass bias, std::size_t index, std::size_t latent_dim,
                      const PlanOptions& options) {
  if (index >= latent_dim) return false;
  if (auto literal = ast.relation.lhs.target.literal_index()) return *literal == index;

  switch (bias) {
    case BiasClass::Disentanglement:
      return true;
    case BiasClass::CombinationInterGroup:
    case BiasClass::CombinationIntraGroup: {
      if (!options.groups) return true;  // let planning report the missing map
      const auto own = group_of(*options.groups, index);
      if (!own) return false;
      for (const auto& [j, g] : *options.groups) {
        if (j == index || j >= latent_dim) continue;
        if (bias == BiasClass::CombinationInterGroup ? g != *own : g == *own) return true;
      }
      return false;
    }
    case BiasClass::ConditionalDependent:
    case BiasClass::ConditionalIndependent: {
      if (!options.property || !options.groups) return true;
      const auto own = group_of(*options.groups, index);
      const bool member = own && *own == options.property->group;
      return bias == BiasClass::ConditionalDependent ? member : !member;
    }
  }
  return false;
}

}  // namespace latentx
