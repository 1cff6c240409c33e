#include "latentx/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "latentx/image.hpp"
#include "latentx/transport.hpp"

namespace latentx {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorKind::Config, message); }

Eigen::MatrixXd matrix_from_json(const Json& j, const char* key) {
  if (!j.is_array() || j.empty()) config_error(std::string(key) + " must be a non-empty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) config_error(std::string(key) + " rows must be non-empty arrays");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) config_error(std::string(key) + " rows differ in length");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) config_error(std::string(key) + " entries must be numbers");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

std::vector<double> numbers_from_json(const Json& j, const char* key) {
  if (!j.is_array()) config_error(std::string(key) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) config_error(std::string(key) + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::size_t index_from_json(const Json& j, const char* key) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) config_error(std::string(key) + " must hold non-negative integers");
  return j.get<std::size_t>();
}

template <typename T>
T get_as(const Json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const Json::exception&) {
    config_error(std::string("config key '") + key + "' has the wrong type");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "backend",       "latent_dim",   "model_kind",  "profile",         "directions",  "linear_matrix",
      "synthetic_factors", "base_latent", "grid",     "targets",         "groups",      "property",
      "epsilon",       "calibration_file", "n",       "out",             "run_prefix",  "seed",
      "random_confound", "base_url",   "model",       "temperature",     "top_p",       "max_retries",
      "parallelism",   "target_parallelism", "api_key_env", "embedder",  "embed_model", "grid_gap",
      "few_shot"};
  return keys;
}

bool is_url(std::string_view s) { return s.starts_with("http://") || s.starts_with("https://"); }

bool is_gateway_kind(ErrorKind kind) {
  return kind == ErrorKind::Gateway || kind == ErrorKind::Auth || kind == ErrorKind::Transient ||
         kind == ErrorKind::CassetteMiss;
}

std::string run_id_for(const RunConfig& config, std::size_t target) {
  return config.run_prefix + "z" + std::to_string(target);
}

std::string step_file(std::size_t row, std::size_t step) {
  return "row" + std::to_string(row) + "_step" + std::to_string(step) + ".png";
}

void check_formulas_against_config(const RunConfig& config, const std::vector<FormulaLine>& formulas) {
  bool conditional = false;
  for (const auto& f : formulas) conditional = conditional || is_conditional(classify_bias(f.ast));
  if (conditional && !config.property)
    throw Error(ErrorKind::MissingProperty, "a conditional formula needs the 'property' config key");
  if (!conditional && config.property)
    config_error("'property' is configured but no formula conditions on a property");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
}

fs::path write_images(const RunConfig& config, std::size_t target, const TargetImages& images) {
  const fs::path dir = fs::path(config.out) / run_id_for(config, target);
  fs::create_directories(dir);
  for (std::size_t r = 0; r < images.rows.size(); ++r)
    for (std::size_t s = 0; s < images.rows[r].size(); ++s) write_png((dir / step_file(r, s)).string(), images.rows[r][s]);
  write_png((dir / "grid.png").string(), images.grid);
  return dir;
}

std::string join_prompt(const std::vector<PromptBundle>& bundles) {
  std::string text;
  for (const auto& b : bundles) text += b.adaptive_text + " ";
  return text + std::string(kFixedEnding);
}

std::string_view plan_summary(BiasClass bias) {
  switch (bias) {
    case BiasClass::Disentanglement: return "2 rows; row 1 also offsets one other latent";
    case BiasClass::CombinationInterGroup: return "2 rows; row 1 also offsets a latent of another group";
    case BiasClass::CombinationIntraGroup: return "2 rows; row 1 also offsets another latent of the same group";
    case BiasClass::ConditionalDependent:
    case BiasClass::ConditionalIndependent: return "2 rows; the property is held at its off and on values";
  }
  return "";
}

}  // namespace

ModelKind RunConfig::model_kind() const {
  if (model_variant == ModelVariant::VaeLatent) return ModelKind::vae(latent_dim);
  return ModelKind::diffusion(directions, profile);
}

PlanOptions RunConfig::plan_options() const {
  PlanOptions options;
  options.groups = groups;
  options.property = property;
  options.base_latent = base_latent;
  if (grid) options.grid = SweepGrid(*grid);
  options.random_confound = random_confound;
  return options;
}

std::vector<std::size_t> RunConfig::resolved_targets() const {
  if (!targets.empty()) return targets;
  std::vector<std::size_t> all(latent_dim);
  for (std::size_t i = 0; i < latent_dim; ++i) all[i] = i;
  return all;
}

RunConfig parse_run_config(const Json& j) {
  if (!j.is_object()) config_error("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known_keys().contains(key)) config_error("unknown config key '" + key + "'");

  RunConfig c;
  auto opt = [&](const char* key) -> const Json* { return j.contains(key) ? &j.at(key) : nullptr; };

  if (auto v = opt("backend")) c.backend = get_as<std::string>(*v, "backend");
  if (c.backend != "synthetic" && c.backend != "linear" && !is_url(c.backend))
    config_error("backend must be synthetic, linear or an http(s) URL");

  if (auto v = opt("model_kind")) {
    const auto kind = get_as<std::string>(*v, "model_kind");
    if (kind == "vae")
      c.model_variant = ModelVariant::VaeLatent;
    else if (kind == "diffusion")
      c.model_variant = ModelVariant::DiffusionDirection;
    else
      config_error("model_kind must be vae or diffusion");
  }
  if (auto v = opt("profile")) {
    const auto profile = get_as<std::string>(*v, "profile");
    if (profile == "ddpm")
      c.profile = DiffusionProfile::Ddpm;
    else if (profile == "conditional")
      c.profile = DiffusionProfile::Conditional;
    else
      config_error("profile must be ddpm or conditional");
  }
  if (auto v = opt("latent_dim")) c.latent_dim = index_from_json(*v, "latent_dim");
  if (auto v = opt("directions")) c.directions = matrix_from_json(*v, "directions");
  if (c.model_variant == ModelVariant::DiffusionDirection) {
    if (c.directions.size() == 0) config_error("a diffusion model needs 'directions'");
    const auto count = static_cast<std::size_t>(c.directions.rows());
    if (opt("latent_dim") && c.latent_dim != count) config_error("latent_dim differs from the number of directions");
    c.latent_dim = count;
    if (c.backend == "synthetic") config_error("the synthetic backend cannot apply diffusion directions");
  } else if (c.directions.size() != 0) {
    config_error("'directions' only applies to diffusion models");
  }
  if (c.latent_dim == 0) config_error("latent_dim must be at least 1");
  const std::size_t vector_dim = c.model_kind().vector_dim();

  if (auto v = opt("linear_matrix")) {
    c.linear_matrix = matrix_from_json(*v, "linear_matrix");
    if (static_cast<std::size_t>(c.linear_matrix.cols()) != vector_dim)
      config_error("linear_matrix needs one column per latent coordinate");
  }
  if (auto v = opt("synthetic_factors")) {
    if (!v->is_object()) config_error("synthetic_factors must map factor names to dimensions");
    std::map<std::size_t, Factor> assignment;
    for (const auto& [name, dim] : v->items()) {
      auto factor = factor_from_string(name);
      if (!factor) config_error("unknown synthetic factor '" + name + "'");
      const std::size_t d = index_from_json(dim, "synthetic_factors");
      if (d >= vector_dim) config_error("synthetic factor " + name + " is outside the latent space");
      if (assignment.contains(d)) config_error("two synthetic factors share dimension " + std::to_string(d));
      assignment[d] = *factor;
    }
    c.synthetic_factors = SyntheticFactorMap(std::move(assignment));
  }
  if (auto v = opt("base_latent")) {
    auto values = numbers_from_json(*v, "base_latent");
    if (values.size() != vector_dim) config_error("base_latent has the wrong length");
    c.base_latent = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  if (auto v = opt("grid")) {
    c.grid = numbers_from_json(*v, "grid");
    try {
      SweepGrid check(*c.grid);
    } catch (const Error& e) {
      config_error(std::string("grid: ") + e.what());
    }
  }
  if (auto v = opt("targets")) {
    if (v->is_string()) {
      if (*v != "all") config_error("targets must be \"all\", an index or a list of indices");
    } else if (v->is_array()) {
      for (const auto& t : *v) c.targets.push_back(index_from_json(t, "targets"));
    } else {
      c.targets.push_back(index_from_json(*v, "targets"));
    }
    for (auto t : c.targets)
      if (t >= c.latent_dim) config_error("target " + std::to_string(t) + " is not below latent_dim");
  }
  if (auto v = opt("groups")) {
    if (!v->is_object()) config_error("groups must map group names to index lists");
    GroupMap groups;
    for (const auto& [name, members] : v->items()) {
      if (!members.is_array()) config_error("group '" + name + "' must list latent indices");
      for (const auto& m : members) {
        const std::size_t idx = index_from_json(m, "groups");
        if (idx >= c.latent_dim) config_error("group '" + name + "' names latent " + std::to_string(idx) + " beyond latent_dim");
        if (groups.contains(idx)) config_error("latent " + std::to_string(idx) + " is in two groups");
        groups[idx] = name;
      }
    }
    c.groups = std::move(groups);
  }
  if (auto v = opt("property")) {
    if (!v->is_object()) config_error("property must be an object");
    PropertyConfig p;
    p.name = get_as<std::string>(v->value("name", Json("")), "property.name");
    if (p.name.empty()) config_error("property needs a name");
    p.group = get_as<std::string>(v->value("group", Json("")), "property.group");
    if (v->contains("values")) {
      auto values = numbers_from_json(v->at("values"), "property.values");
      if (values.size() != 2) config_error("property.values must hold [off, on]");
      p.off_value = values[0];
      p.on_value = values[1];
    }
    if (v->contains("carrier_index")) {
      p.carrier_index = index_from_json(v->at("carrier_index"), "property.carrier_index");
      if (*p.carrier_index >= c.latent_dim) config_error("property.carrier_index is not below latent_dim");
    }
    c.property = std::move(p);
  }
  if (auto v = opt("epsilon")) c.epsilon = get_as<double>(*v, "epsilon");
  if (auto v = opt("calibration_file")) c.calibration_file = get_as<std::string>(*v, "calibration_file");
  if (auto v = opt("n")) c.n = index_from_json(*v, "n");
  if (c.n < 2) config_error("n must be at least 2");
  if (auto v = opt("out")) c.out = get_as<std::string>(*v, "out");
  if (auto v = opt("run_prefix")) c.run_prefix = get_as<std::string>(*v, "run_prefix");
  if (auto v = opt("seed")) c.seed = get_as<std::uint64_t>(*v, "seed");
  if (auto v = opt("random_confound")) c.random_confound = get_as<bool>(*v, "random_confound");
  if (auto v = opt("base_url")) c.base_url = get_as<std::string>(*v, "base_url");
  if (auto v = opt("model")) c.model = get_as<std::string>(*v, "model");
  if (auto v = opt("temperature")) c.temperature = get_as<double>(*v, "temperature");
  if (auto v = opt("top_p")) c.top_p = get_as<double>(*v, "top_p");
  if (auto v = opt("max_retries")) c.max_retries = get_as<int>(*v, "max_retries");
  if (auto v = opt("parallelism")) c.parallelism = std::max<std::size_t>(1, index_from_json(*v, "parallelism"));
  if (auto v = opt("target_parallelism"))
    c.target_parallelism = std::max<std::size_t>(1, index_from_json(*v, "target_parallelism"));
  if (auto v = opt("api_key_env")) c.api_key_env = get_as<std::string>(*v, "api_key_env");
  if (auto v = opt("embedder")) c.embedder = get_as<std::string>(*v, "embedder");
  if (c.embedder != "offline" && c.embedder != "remote") config_error("embedder must be offline or remote");
  if (auto v = opt("embed_model")) c.embed_model = get_as<std::string>(*v, "embed_model");
  if (auto v = opt("grid_gap")) c.grid_gap = static_cast<int>(index_from_json(*v, "grid_gap"));
  if (auto v = opt("few_shot")) c.few_shot = get_as<std::string>(*v, "few_shot");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config '" + path + "'");
  try {
    return parse_run_config(Json::parse(in));
  } catch (const Json::parse_error& e) {
    config_error(path + ": " + e.what());
  }
}

std::vector<FormulaLine> load_formulas(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read formulas '" + path + "'");
  return parse_formula_file(in);
}

std::string gateway_config_digest(const RunConfig& config) {
  const Json j = {{"base_url", config.base_url},       {"model", config.model},
                  {"temperature", config.temperature}, {"top_p", config.top_p},
                  {"n", config.n},                     {"max_retries", config.max_retries},
                  {"embedder", config.embedder},       {"embed_model", config.embed_model},
                  {"few_shot", config.few_shot.value_or("")}};
  return sha256_hex(j.dump());
}

std::shared_ptr<Decoder> make_decoder(const RunConfig& config, std::shared_ptr<Transport> transport) {
  const std::size_t dim = config.model_kind().vector_dim();
  if (config.backend == "synthetic")
    return std::make_shared<SyntheticDecoder>(dim, config.synthetic_factors.value_or(SyntheticFactorMap::defaults(dim)));
  if (config.backend == "linear") {
    Eigen::MatrixXd a = config.linear_matrix.size() ? config.linear_matrix
                                                     : Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim),
                                                                                 static_cast<Eigen::Index>(dim));
    return std::make_shared<LinearDecoder>(std::move(a));
  }
  if (!transport) transport = std::make_shared<HttpTransport>(HttpOptions{.base_url = config.backend, .bearer_token = {}});
  return std::make_shared<RemoteDecoder>(std::move(transport));
}

EpsilonChoice resolve_epsilon(const RunConfig& config) {
  if (config.epsilon) return {*config.epsilon, std::nullopt, "config"};
  if (!config.calibration_file) return {};
  std::ifstream in(*config.calibration_file);
  if (!in) throw Error(ErrorKind::Io, "cannot read calibration file '" + *config.calibration_file + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      const Json j = Json::parse(text);
      EpsilonChoice choice{j.at("epsilon").get<double>(), std::nullopt, "calibration"};
      if (j.contains("objective")) choice.objective = j["objective"].get<double>();
      return choice;
    } catch (const Json::exception& e) {
      config_error(*config.calibration_file + ": " + e.what());
    }
  }
  std::istringstream records_in(text);
  const auto records = read_calibration(records_in);
  const Threshold t = calibrate(records);
  return {t.epsilon, t.objective, "calibration"};
}

std::vector<const FormulaLine*> relevant_formulas(const std::vector<FormulaLine>& formulas, const RunConfig& config,
                                                  std::size_t target) {
  const PlanOptions options = config.plan_options();
  std::vector<const FormulaLine*> out;
  for (const auto& f : formulas)
    if (formula_mentions(f.ast, classify_bias(f.ast), target, config.latent_dim, options)) out.push_back(&f);
  return out;
}

TargetImages render_target(const std::vector<const FormulaLine*>& formulas, const RunConfig& config,
                           Decoder& decoder, std::size_t target) {
  const ModelKind kind = config.model_kind();
  if (decoder.latent_dim() != kind.vector_dim())
    throw Error(ErrorKind::DimensionMismatch, decoder.name() + " decoder takes " + std::to_string(decoder.latent_dim()) +
                                                  " coordinates, the model has " + std::to_string(kind.vector_dim()));
  const PlanOptions options = config.plan_options();
  TargetImages out;
  std::size_t next_row = 0;
  for (const FormulaLine* f : formulas) {
    PerturbationPlan p = plan(f->ast, classify_bias(f->ast), kind, target, config.seed, options);
    for (auto& row : p.rows) row.row_id = next_row++;
    for (const auto& row : materialize(p, kind)) {
      std::vector<Eigen::VectorXd> latents;
      for (const auto& step : row.steps) {
        Eigen::VectorXd z = step.z;
        for (const auto& shift : step.shifts) z = decoder.perturb(z, shift.direction, shift.gamma);
        latents.push_back(std::move(z));
      }
      auto images = decoder.decode_batch(latents, row.property_value);
      const bool still = std::all_of(images.begin(), images.end(), [&](const Image& im) { return im == images.front(); });
      out.static_rows.push_back(still);
      out.rows.push_back(std::move(images));
    }
    out.plans.push_back(std::move(p));
  }
  out.grid = compose_grid(out.rows, config.grid_gap);
  return out;
}

namespace {

TargetOutcome run_target(const RunConfig& config, const std::vector<FormulaLine>& formulas, Services& services,
                         const EpsilonChoice& epsilon, std::size_t target) {
  TargetOutcome outcome;
  outcome.target = target;
  outcome.run_id = run_id_for(config, target);
  const auto clock = services.clock ? services.clock : std::function<std::string()>(utc_timestamp);
  const std::string started_at = clock();

  const auto relevant = relevant_formulas(formulas, config, target);
  if (relevant.empty()) {
    outcome.status = TargetStatus::Skipped;
    outcome.message = "no formula concerns latent " + std::to_string(target);
    return outcome;
  }

  const std::optional<std::string> property_name =
      config.property ? std::optional<std::string>(config.property->name) : std::nullopt;
  std::optional<FewShotSet> fewshot;
  if (config.few_shot) {
    std::ifstream in(*config.few_shot);
    if (!in) throw Error(ErrorKind::Io, "cannot read few-shot file '" + *config.few_shot + "'");
    fewshot = read_few_shot(in);
  }

  Json formulas_json = Json::array();
  Json biases = Json::array();
  Json parts = Json::array();
  std::vector<PromptBundle> bundles;
  for (const FormulaLine* f : relevant) {
    const BiasClass bias = classify_bias(f->ast);
    bundles.push_back(fewshot ? refine_prompt_llm(f->ast, *fewshot, *services.chat, property_name, config.model)
                              : compose_prompt(f->ast, bias, property_name));
    formulas_json.push_back({{"line", f->line}, {"source", f->ast.source_text}});
    biases.push_back(to_string(bias));
    parts.push_back(to_json(bundles.back()));
  }
  const std::string prompt_text = join_prompt(bundles);

  const TargetImages images = render_target(relevant, config, *services.decoder, target);
  const fs::path dir = write_images(config, target, images);

  Json plans = Json::array();
  for (const auto& p : images.plans) plans.push_back(to_json(p));
  Json image_paths = Json::array();
  for (std::size_t r = 0; r < images.rows.size(); ++r) {
    Json row = Json::array();
    for (std::size_t s = 0; s < images.rows[r].size(); ++s) row.push_back(step_file(r, s));
    image_paths.push_back(row);
  }
  const bool all_static = std::all_of(images.static_rows.begin(), images.static_rows.end(), [](bool b) { return b; });

  Json m = {
      {"schema", kManifestSchema},
      {"run_id", outcome.run_id},
      {"target_index", target},
      {"status", "ok"},
      {"formulas", formulas_json},
      {"biases", biases},
      {"prompt", {{"text", prompt_text}, {"fixed_ending", kFixedEnding}, {"parts", parts}}},
      {"plans", plans},
      {"images", image_paths},
      {"grid", "grid.png"},
      {"static_rows", images.static_rows},
      {"identical_images", all_static},
      {"n", config.n},
      {"gateway",
       {{"digest", gateway_config_digest(config)},
        {"model", config.model},
        {"temperature", config.temperature},
        {"top_p", config.top_p}}},
      {"epsilon",
       {{"value", epsilon.epsilon},
        {"source", epsilon.source},
        {"objective", epsilon.objective ? Json(*epsilon.objective) : Json(nullptr)}}},
  };

  ChatRequest request{.prompt = prompt_text,
                      .images = {encode_png(images.grid)},
                      .temperature = config.temperature,
                      .top_p = config.top_p,
                      .model_name = config.model};
  request.validate();

  Json latencies = Json::array();
  try {
    RetryPolicy retry = services.retry;
    retry.max_retries = config.max_retries;
    auto samples = sample_n(*services.chat, request, config.n, retry, config.parallelism);
    std::vector<std::string> texts;
    for (const auto& s : samples) {
      texts.push_back(s.text);
      latencies.push_back(s.latency_ms);
    }
    auto embeddings = services.embedder->embed(texts);
    const ScoredResponses scored =
        select(make_scored(std::move(samples), std::move(embeddings), ZeroNormPolicy::Orthogonal), epsilon.epsilon);

    Json responses = Json::array();
    for (const auto& s : scored.samples) responses.push_back({{"index", s.index}, {"text", s.text}});
    Json vectors = Json::array();
    for (const auto& e : scored.embeddings)
      vectors.push_back(std::vector<double>(e.values.data(), e.values.data() + e.values.size()));
    m["responses"] = responses;
    m["embedder"] = services.embedder->name();
    m["embeddings"] = vectors;
    m["per_response"] = scored.per_response;
    m["certainty"] = scored.certainty;
    m["selected_index"] = scored.selected_index;
    m["final"] = scored.final_text;
    outcome.final_text = scored.final_text;
    outcome.certainty = scored.certainty;
  } catch (const Error& e) {
    if (!is_gateway_kind(e.kind())) throw;
    m["status"] = "gateway_error";
    m["error"] = std::string(to_string(e.kind())) + ": " + e.what();
    outcome.status = TargetStatus::GatewayFailed;
    outcome.message = m["error"];
  }
  m["timestamps"] = {{"started_at", started_at}, {"finished_at", clock()}, {"latency_ms", latencies}};

  const fs::path path = dir / "manifest.json";
  write_text(path, m.dump(2) + "\n");
  outcome.manifest_path = path.string();
  return outcome;
}

}  // namespace

ExplainResult explain(const RunConfig& config, const std::vector<FormulaLine>& formulas, Services& services) {
  if (!services.decoder || !services.chat || !services.embedder)
    throw Error(ErrorKind::Precondition, "explain needs a decoder, a chat backend and an embedder");
  check_formulas_against_config(config, formulas);
  const EpsilonChoice epsilon = resolve_epsilon(config);
  const auto targets = config.resolved_targets();

  ExplainResult result;
  result.outcomes.resize(targets.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < targets.size(); k = next++) {
      try {
        result.outcomes[k] = run_target(config, formulas, services, epsilon, targets[k]);
      } catch (const std::exception& e) {
        TargetOutcome failed;
        failed.target = targets[k];
        failed.run_id = run_id_for(config, targets[k]);
        failed.status = TargetStatus::Failed;
        failed.message = e.what();
        result.outcomes[k] = std::move(failed);
      }
    }
  };
  {
    const std::size_t workers = std::min(config.target_parallelism, targets.size());
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }

  for (const auto& o : result.outcomes) {
    if (o.status == TargetStatus::Failed) result.exit_code = 1;
    if (o.status == TargetStatus::GatewayFailed && result.exit_code == 0) result.exit_code = 2;
  }
  return result;
}

std::vector<std::string> perturb_only(const RunConfig& config, const std::vector<FormulaLine>& formulas,
                                      Decoder& decoder) {
  check_formulas_against_config(config, formulas);
  std::vector<std::string> dirs;
  for (std::size_t target : config.resolved_targets()) {
    const auto relevant = relevant_formulas(formulas, config, target);
    if (relevant.empty()) continue;
    dirs.push_back(write_images(config, target, render_target(relevant, config, decoder, target)).string());
  }
  return dirs;
}

std::string compile_report(const std::vector<FormulaLine>& formulas, const std::optional<std::string>& property) {
  std::ostringstream out;
  bool first = true;
  for (const auto& f : formulas) {
    const BiasClass bias = classify_bias(f.ast);
    const PromptBundle bundle = compose_prompt(f.ast, bias, property);
    if (!first) out << "\n";
    first = false;
    out << "[line " << f.line << "] " << f.ast.source_text << "\n";
    out << "bias: " << to_string(bias) << "\n";
    for (const auto& [id, fragment] : bundle.rule_trace)
      out << "rule " << id << ": " << fragment << " -> " << grammar_rules()[static_cast<std::size_t>(id - 1)].phrase << "\n";
    out << "prompt: " << bundle.text() << "\n";
    out << "plan: " << plan_summary(bias) << "\n";
  }
  return out.str();
}

}  // namespace latentx
