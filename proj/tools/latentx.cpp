// latentx: compile | perturb | explain | calibrate | eval

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "latentx/error.hpp"
#include "latentx/metrics.hpp"
#include "latentx/pipeline.hpp"
#include "latentx/transport.hpp"

using namespace latentx;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_path;
  std::string formulas_path;
  std::string target;
  std::string backend;
  std::optional<double> epsilon;
  std::optional<std::size_t> n;
  std::string mock;
  std::string record;
  std::string out;
};

void add_run_options(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run config (JSON)");
  cmd->add_option("--formulas", c.formulas_path, "formula file, one per line")->required();
  cmd->add_option("--target", c.target, "latent index or 'all'");
  cmd->add_option("--backend", c.backend, "synthetic | linear | decoder URL");
  cmd->add_option("--out", c.out, "output directory");
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Config, path + ": " + e.what());
  }
}

RunConfig build_config(const Common& c) {
  Json j = c.config_path.empty() ? Json::object() : read_json_file(c.config_path);
  if (!c.target.empty()) {
    if (c.target == "all") {
      j["targets"] = "all";
    } else {
      try {
        j["targets"] = std::stoull(c.target);
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, "--target must be an index or 'all'");
      }
    }
  }
  if (!c.backend.empty()) j["backend"] = c.backend;
  if (c.epsilon) j["epsilon"] = *c.epsilon;
  if (c.n) j["n"] = *c.n;
  if (!c.out.empty()) j["out"] = c.out;
  return parse_run_config(j);
}

struct Wiring {
  Services services;
  std::vector<std::shared_ptr<RecordingTransport>> recorders;
};

std::shared_ptr<Transport> maybe_record(Wiring& w, std::shared_ptr<Transport> inner, bool record) {
  if (!record) return inner;
  auto recorder = std::make_shared<RecordingTransport>(std::move(inner));
  w.recorders.push_back(recorder);
  return recorder;
}

Wiring wire(const RunConfig& config, const Common& c, bool need_gateway) {
  Wiring w;
  const bool record = !c.record.empty();
  std::shared_ptr<Transport> replay;
  std::optional<std::vector<std::string>> script;
  if (!c.mock.empty()) {
    if (is_cassette_file(c.mock)) {
      replay = std::make_shared<ReplayTransport>(Cassette::load(c.mock));
    } else {
      const Json j = read_json_file(c.mock);
      if (!j.contains("responses") || !j["responses"].is_array())
        throw Error(ErrorKind::Config, c.mock + ": expected a cassette or {\"responses\": [...]}");
      script = j["responses"].get<std::vector<std::string>>();
    }
  }

  std::shared_ptr<Transport> decoder_transport;
  if (config.backend.starts_with("http"))
    decoder_transport = replay ? replay
                               : maybe_record(w, std::make_shared<HttpTransport>(HttpOptions{.base_url = config.backend, .bearer_token = {}}),
                                              record);
  w.services.decoder = make_decoder(config, decoder_transport);
  if (!need_gateway) return w;

  std::shared_ptr<Transport> gateway;
  if (replay) {
    gateway = replay;
  } else if (!script || config.embedder == "remote") {
    if (config.base_url.empty())
      throw Error(ErrorKind::Config, "no chat endpoint: set base_url in the config or pass --mock");
    const char* key = std::getenv(config.api_key_env.c_str());
    gateway = maybe_record(
        w, std::make_shared<HttpTransport>(HttpOptions{.base_url = config.base_url, .bearer_token = key ? key : ""}),
        record);
  }
  if (script)
    w.services.chat = std::make_shared<MockChat>(*script);
  else
    w.services.chat = std::make_shared<HttpChat>(gateway);
  if (config.embedder == "remote")
    w.services.embedder = std::make_shared<HttpEmbedder>(gateway, config.embed_model);
  else
    w.services.embedder = std::make_shared<OfflineEmbedder>();
  return w;
}

void save_recordings(const Wiring& w, const std::string& path) {
  if (path.empty() || w.recorders.empty()) return;
  Cassette all;
  for (const auto& r : w.recorders) all.merge(r->cassette());
  all.save(path);
  std::cerr << "recorded " << all.size() << " exchanges to " << path << "\n";
}

std::string_view status_name(TargetStatus s) {
  switch (s) {
    case TargetStatus::Ok: return "ok";
    case TargetStatus::Skipped: return "skipped";
    case TargetStatus::GatewayFailed: return "gateway_error";
    case TargetStatus::Failed: return "failed";
  }
  return "";
}

int cmd_compile(const std::string& formulas_path, const std::string& config_path) {
  std::optional<std::string> property = std::string(kPropertySlot);
  if (!config_path.empty()) {
    const RunConfig config = load_run_config(config_path);
    if (config.property) property = config.property->name;
  }
  std::cout << compile_report(load_formulas(formulas_path), property);
  return 0;
}

int cmd_perturb(const Common& c) {
  const RunConfig config = build_config(c);
  Wiring w = wire(config, c, false);
  for (const auto& dir : perturb_only(config, load_formulas(c.formulas_path), *w.services.decoder))
    std::cout << dir << "\n";
  save_recordings(w, c.record);
  return 0;
}

int cmd_explain(const Common& c) {
  const RunConfig config = build_config(c);
  const auto formulas = load_formulas(c.formulas_path);
  Wiring w = wire(config, c, true);
  const ExplainResult result = explain(config, formulas, w.services);
  for (const auto& o : result.outcomes) {
    std::cout << o.run_id << "\t" << status_name(o.status);
    if (o.status == TargetStatus::Ok)
      std::cout << "\t" << std::fixed << std::setprecision(4) << o.certainty << "\t" << o.final_text;
    else
      std::cout << "\t" << o.message;
    std::cout << "\n";
  }
  save_recordings(w, c.record);
  return result.exit_code;
}

int cmd_calibrate(const std::string& input, const std::string& out) {
  std::ifstream in(input);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + input + "'");
  const auto records = read_calibration(in);
  const Threshold t = calibrate(records);
  const Json j = {{"epsilon", t.epsilon}, {"objective", t.objective}, {"records", records.size()}};
  std::cout << "epsilon\t" << std::setprecision(17) << t.epsilon << "\nobjective\t" << t.objective << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "threshold.json") << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& input, const std::string& out) {
  std::ifstream in(input);
  if (!in) throw Error(ErrorKind::Io, "cannot read '" + input + "'");
  const auto pairs = read_eval_pairs(in);
  const MetricReport report = evaluate(pairs);
  std::cout << format_report(pairs, report);
  if (!out.empty()) {
    Json rows = Json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i)
      rows.push_back({{"run_id", pairs[i].run_id},
                      {"bleu4", report.pair_bleu4[i]},
                      {"rouge_l", {{"precision", report.pair_rouge_l[i].precision},
                                   {"recall", report.pair_rouge_l[i].recall},
                                   {"f1", report.pair_rouge_l[i].f1}}}});
    const Json j = {{"bleu4", report.bleu4}, {"rouge_l_f", report.rouge_l_f}, {"pairs", rows}};
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "eval_summary.json") << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latentx: natural-language explanations of latent variables"};
  app.require_subcommand(1);

  std::string compile_formulas, compile_config;
  auto* compile = app.add_subcommand("compile", "print prompts and plan summaries for a formula file");
  compile->add_option("--formulas", compile_formulas, "formula file")->required();
  compile->add_option("--config", compile_config, "run config supplying the property name");

  Common perturb_opts;
  auto* perturb = app.add_subcommand("perturb", "render perturbation sequences and grids");
  add_run_options(perturb, perturb_opts);
  perturb->add_option("--mock", perturb_opts.mock, "decoder cassette to replay");
  perturb->add_option("--record", perturb_opts.record, "write a cassette of remote exchanges");

  Common explain_opts;
  auto* explain_cmd = app.add_subcommand("explain", "run the full explanation loop");
  add_run_options(explain_cmd, explain_opts);
  explain_cmd->add_option("--epsilon", explain_opts.epsilon, "certainty threshold");
  explain_cmd->add_option("--n", explain_opts.n, "responses sampled per target");
  explain_cmd->add_option("--mock", explain_opts.mock, "cassette to replay, or {\"responses\": [...]} script");
  explain_cmd->add_option("--record", explain_opts.record, "write a cassette of remote exchanges");

  std::string calib_input, calib_out;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit the certainty threshold");
  calibrate_cmd->add_option("input", calib_input, "run_id, certainty, label records")->required();
  calibrate_cmd->add_option("--out", calib_out, "directory for threshold.json");

  std::string eval_input, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "BLEU-4 and ROUGE-L against references");
  eval_cmd->add_option("input", eval_input, "run_id, hypothesis, references... (tab separated)")->required();
  eval_cmd->add_option("--out", eval_out, "directory for eval_summary.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compile) return cmd_compile(compile_formulas, compile_config);
    if (*perturb) return cmd_perturb(perturb_opts);
    if (*explain_cmd) return cmd_explain(explain_opts);
    if (*calibrate_cmd) return cmd_calibrate(calib_input, calib_out);
    if (*eval_cmd) return cmd_eval(eval_input, eval_out);
  } catch (const Error& e) {
    std::cerr << "latentx: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "latentx: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
