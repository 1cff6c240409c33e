#include <ctime>

#include "latentx/pipeline.hpp"

namespace latentx {

namespace {

Json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

bool is_number_array(const Json& j) {
  if (!j.is_array()) return false;
  for (const auto& x : j)
    if (!x.is_number()) return false;
  return true;
}

}  // namespace

Json to_json(const PromptBundle& bundle) {
  Json trace = Json::array();
  for (const auto& [id, phrase] : bundle.rule_trace) trace.push_back({{"rule", id}, {"phrase", phrase}});
  return {
      {"bias", to_string(bundle.bias)},
      {"adaptive_text", bundle.adaptive_text},
      {"fixed_ending", bundle.fixed_ending},
      {"rule_trace", trace},
      {"property_name", bundle.property_name ? Json(*bundle.property_name) : Json(nullptr)},
      {"fallback_used", bundle.fallback_used},
  };
}

Json to_json(const PerturbationPlan& plan) {
  Json rows = Json::array();
  for (const auto& row : plan.rows) {
    Json confound = nullptr;
    if (row.confound) confound = {{"index", row.confound->index}, {"offset", row.confound->offset}};
    rows.push_back({
        {"row_id", row.row_id},
        {"target_index", row.target_index},
        {"base_latent", vector_json(row.base_latent)},
        {"confound", confound},
        {"property_value", row.property_value ? Json(*row.property_value) : Json(nullptr)},
        {"grid", row.grid.values()},
    });
  }
  Json groups = nullptr;
  if (plan.groups) {
    groups = Json::object();
    for (const auto& [index, name] : *plan.groups) groups[name].push_back(index);
  }
  Json property = nullptr;
  if (plan.property) {
    property = {{"name", plan.property->name},
                {"group", plan.property->group},
                {"values", {plan.property->off_value, plan.property->on_value}}};
    if (plan.property->carrier_index) property["carrier_index"] = *plan.property->carrier_index;
  }
  return {{"bias", to_string(plan.bias)},
          {"target_index", plan.target_index},
          {"rows", rows},
          {"groups", groups},
          {"property", property}};
}

std::vector<std::string> validate_manifest(const Json& m) {
  std::vector<std::string> problems;
  if (!m.is_object()) return {"manifest is not an object"};
  auto require = [&](const char* key, auto check, const char* what) {
    if (!m.contains(key))
      problems.push_back(std::string("missing '") + key + "'");
    else if (!check(m.at(key)))
      problems.push_back(std::string("'") + key + "' must be " + what);
  };
  auto str = [](const Json& j) { return j.is_string(); };
  auto arr = [](const Json& j) { return j.is_array(); };
  auto num = [](const Json& j) { return j.is_number(); };
  auto obj = [](const Json& j) { return j.is_object(); };

  require("schema", [](const Json& j) { return j == kManifestSchema; }, "\"latentx.manifest/1\"");
  require("run_id", str, "a string");
  require("target_index", [](const Json& j) { return j.is_number_integer() && j.get<std::int64_t>() >= 0; }, "a non-negative integer");
  require("status", [](const Json& j) { return j == "ok" || j == "gateway_error"; }, "\"ok\" or \"gateway_error\"");
  require("formulas", arr, "an array");
  require("biases", arr, "an array");
  require("prompt", obj, "an object");
  require("plans", arr, "an array");
  require("images", arr, "an array");
  require("grid", str, "a string");
  require("static_rows", arr, "an array");
  require("n", [](const Json& j) { return j.is_number_integer() && j.get<std::int64_t>() >= 0; }, "a non-negative integer");
  require("gateway", obj, "an object");
  require("epsilon", obj, "an object");
  require("timestamps", obj, "an object");
  if (!problems.empty()) return problems;

  if (!m["prompt"].contains("text") || !m["prompt"]["text"].is_string()) problems.push_back("'prompt.text' must be a string");
  if (!m["gateway"].contains("digest") || !m["gateway"]["digest"].is_string())
    problems.push_back("'gateway.digest' must be a string");
  if (!m["epsilon"].contains("value") || !m["epsilon"]["value"].is_number())
    problems.push_back("'epsilon.value' must be a number");
  for (const char* key : {"started_at", "finished_at"})
    if (!m["timestamps"].contains(key)) problems.push_back(std::string("missing 'timestamps.") + key + "'");
  if (m["formulas"].size() != m["biases"].size()) problems.push_back("'formulas' and 'biases' differ in length");

  if (m["status"] == "gateway_error") {
    if (!m.contains("error") || !m["error"].is_string()) problems.push_back("'error' must be a string");
    return problems;
  }

  require("responses", arr, "an array");
  require("embedder", str, "a string");
  require("embeddings", arr, "an array");
  require("per_response", arr, "an array");
  require("certainty", num, "a number");
  require("selected_index", [](const Json& j) { return j.is_number_integer() && j.get<std::int64_t>() >= 0; }, "a non-negative integer");
  require("final", str, "a string");
  if (!problems.empty()) return problems;

  const std::size_t n = m["n"].get<std::size_t>();
  if (m["responses"].size() != n) problems.push_back("'responses' does not hold n entries");
  if (m["embeddings"].size() != n) problems.push_back("'embeddings' does not hold n entries");
  if (m["per_response"].size() != n) problems.push_back("'per_response' does not hold n entries");
  for (const auto& r : m["responses"])
    if (!r.is_object() || !r.contains("index") || !r.contains("text") || !r["text"].is_string())
      problems.push_back("each response needs 'index' and 'text'");
  for (const auto& e : m["embeddings"])
    if (!is_number_array(e)) problems.push_back("each embedding must be an array of numbers");
  if (!is_number_array(m["per_response"])) problems.push_back("'per_response' must hold numbers");
  if (m["selected_index"].get<std::size_t>() >= std::max<std::size_t>(n, 1))
    problems.push_back("'selected_index' is out of range");
  return problems;
}

double rescore_manifest(const Json& m, Embedder* embedder) {
  if (auto problems = validate_manifest(m); !problems.empty())
    throw Error(ErrorKind::Config, "invalid manifest: " + problems.front());
  if (m["status"] != "ok") throw Error(ErrorKind::Precondition, "manifest has no scored responses");

  std::vector<EmbeddingVector> embeddings;
  if (embedder && embedder->name() == m["embedder"].get<std::string>()) {
    std::vector<std::string> texts;
    for (const auto& r : m["responses"]) texts.push_back(r["text"].get<std::string>());
    embeddings = embedder->embed(texts);
  } else {
    for (const auto& e : m["embeddings"]) {
      auto values = e.get<std::vector<double>>();
      embeddings.push_back({Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())),
                            m["embedder"].get<std::string>()});
    }
  }
  return score(embeddings, ZeroNormPolicy::Orthogonal).certainty;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace latentx
