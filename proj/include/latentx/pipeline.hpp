#pragma once

// End-to-end runs: config, per-target explain loop, manifests.
//
// Config file (JSON), every key optional:
//   backend            "synthetic" | "linear" | "http(s)://..." decoder URL
//   latent_dim         M (default 6)
//   model_kind         "vae" | "diffusion"
//   profile            "ddpm" | "conditional" (diffusion only)
//   directions         [[...], ...] one semantic direction per row (diffusion only)
//   linear_matrix      [[...], ...] decoder matrix A for the linear backend (default identity)
//   synthetic_factors  {"PosX": 0, "Scale": 2, ...} (default: factors on dims 0..5 in order)
//   base_latent        [...]
//   grid               [...] sweep values replacing the default grid
//   targets            "all" | i | [i, ...]
//   groups             {"G1": [0, 1], "G2": [2]}
//   property           {"name", "group", "values": [off, on], "carrier_index"}
//   epsilon            gate threshold; calibration_file derives one instead
//   n                  draws per target (default 5)
//   out                output directory (default "runs")
//   run_prefix         prepended to "z<i>" to form run ids
//   seed, random_confound
//   base_url, model, temperature, top_p, max_retries, parallelism, api_key_env
//   embedder           "offline" | "remote";  embed_model
//   target_parallelism targets processed at once (default 1)
//   grid_gap           white pixels between grid cells (default 4)
//   few_shot           JSON few-shot file; switches prompt composition to the LLM path

#include <functional>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latentx/decoder.hpp"
#include "latentx/formula.hpp"
#include "latentx/gateway.hpp"
#include "latentx/perturb.hpp"
#include "latentx/prompt.hpp"
#include "latentx/uncertainty.hpp"

namespace latentx {

using Json = nlohmann::json;

inline constexpr std::string_view kManifestSchema = "latentx.manifest/1";

struct RunConfig {
  std::string backend = "synthetic";
  std::size_t latent_dim = 6;
  ModelVariant model_variant = ModelVariant::VaeLatent;
  DiffusionProfile profile = DiffusionProfile::Ddpm;
  Eigen::MatrixXd directions;
  Eigen::MatrixXd linear_matrix;
  std::optional<SyntheticFactorMap> synthetic_factors;
  std::optional<Eigen::VectorXd> base_latent;
  std::optional<std::vector<double>> grid;
  std::vector<std::size_t> targets;  // empty: all of 0..M-1
  std::optional<GroupMap> groups;
  std::optional<PropertyConfig> property;
  std::optional<double> epsilon;
  std::optional<std::string> calibration_file;
  std::size_t n = 5;
  std::string out = "runs";
  std::string run_prefix;
  std::uint64_t seed = 0;
  bool random_confound = false;
  std::string base_url;
  std::string model;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_retries = 3;
  std::size_t parallelism = 1;
  std::size_t target_parallelism = 1;
  std::string api_key_env = "LATENTX_API_KEY";
  std::string embedder = "offline";
  std::string embed_model;
  int grid_gap = 4;
  std::optional<std::string> few_shot;

  ModelKind model_kind() const;
  PlanOptions plan_options() const;
  std::vector<std::size_t> resolved_targets() const;
};

/// Throws Error(Config) on unknown values, bad shapes or out-of-range indices.
RunConfig parse_run_config(const Json& j);
RunConfig load_run_config(const std::string& path);

std::vector<FormulaLine> load_formulas(const std::string& path);

/// sha256 over the gateway-facing settings; never includes credentials.
std::string gateway_config_digest(const RunConfig& config);

struct Services {
  std::shared_ptr<Decoder> decoder;
  std::shared_ptr<ChatBackend> chat;
  std::shared_ptr<Embedder> embedder;
  RetryPolicy retry;
  /// Timestamp source; defaults to UTC wall-clock ISO 8601.
  std::function<std::string()> clock;
};

/// Decoder named by config.backend; `transport` serves the remote backend.
std::shared_ptr<Decoder> make_decoder(const RunConfig& config, std::shared_ptr<Transport> transport = nullptr);

/// --epsilon / config epsilon, else calibration_file (threshold JSON or
/// records), else the default.
struct EpsilonChoice {
  double epsilon = kDefaultEpsilon;
  std::optional<double> objective;
  std::string source = "default";  // default | config | calibration
};
EpsilonChoice resolve_epsilon(const RunConfig& config);

/// Formulas relevant to latent `target`.
std::vector<const FormulaLine*> relevant_formulas(const std::vector<FormulaLine>& formulas, const RunConfig& config,
                                                  std::size_t target);

struct TargetImages {
  std::vector<std::vector<Image>> rows;
  std::vector<PerturbationPlan> plans;
  std::vector<bool> static_rows;
  Image grid;
};

/// Plans, materializes and decodes every relevant formula for `target`.
TargetImages render_target(const std::vector<const FormulaLine*>& formulas, const RunConfig& config,
                           Decoder& decoder, std::size_t target);

enum class TargetStatus { Ok, Skipped, GatewayFailed, Failed };

struct TargetOutcome {
  std::size_t target = 0;
  std::string run_id;
  TargetStatus status = TargetStatus::Ok;
  std::string message;
  std::string manifest_path;
  std::string final_text;
  double certainty = 0;
};

struct ExplainResult {
  std::vector<TargetOutcome> outcomes;
  /// 0 ok, 1 config or planning error, 2 gateway failure on some target.
  int exit_code = 0;
};

ExplainResult explain(const RunConfig& config, const std::vector<FormulaLine>& formulas, Services& services);

/// Images and grid only; returns the written run directories.
std::vector<std::string> perturb_only(const RunConfig& config, const std::vector<FormulaLine>& formulas,
                                      Decoder& decoder);

/// Prompt bundle and plan summary per formula, as printed by `compile`.
std::string compile_report(const std::vector<FormulaLine>& formulas, const std::optional<std::string>& property);

Json to_json(const PromptBundle& bundle);
Json to_json(const PerturbationPlan& plan);

/// Empty when valid, otherwise one message per problem.
std::vector<std::string> validate_manifest(const Json& manifest);

/// Certainty recomputed from the stored embeddings, or from re-embedding the
/// stored responses when `embedder` is given and carries the stored name.
double rescore_manifest(const Json& manifest, Embedder* embedder = nullptr);

std::string utc_timestamp();

}  // namespace latentx
