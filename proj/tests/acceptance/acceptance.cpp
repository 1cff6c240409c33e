// Acceptance report: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "latentx/decoder.hpp"
#include "latentx/formula.hpp"
#include "latentx/metrics.hpp"
#include "latentx/perturb.hpp"
#include "latentx/pipeline.hpp"
#include "latentx/prompt.hpp"
#include "latentx/uncertainty.hpp"
#include "measure.hpp"
#include "oracles.hpp"

using namespace latentx;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string data_path(const std::string& name) { return std::string(LATENTX_TEST_DATA) + "/" + name; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Check {
  bool ok = true;
  std::string detail;
  void expect(bool condition, const std::string& what) {
    if (!condition && ok) detail = what;
    ok = ok && condition;
  }
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<void(Check&)>& body) {
  Check check;
  const auto start = Clock::now();
  try {
    body(check);
  } catch (const std::exception& e) {
    check.expect(false, std::string("exception: ") + e.what());
  }
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  if (budget_s > 0) check.expect(elapsed < budget_s, "over the time budget");
  if (!check.ok) ++failures;
  std::printf("%s  %-34s %8.3fs%s%s\n", check.ok ? "PASS" : "FAIL", name, elapsed,
              check.detail.empty() ? "" : "  ", check.detail.c_str());
}

const std::vector<std::string> kCanonical = {
    "P(z[i] | z[i'] = a) == P(z[i] | z[i'] = b) forall i != i', a != b",
    "P(z[i] | z[j] = a) == P(z[i] | z[j] = b) forall z[i] in G, z[j] in G', G != G', a != b",
    "P(z[i] | z[i'] = a) != P(z[i] | z[i'] = b) forall z[i] in G, z[i'] in G, i != i', a != b",
    "P(z[i] | p[k] = a) != P(z[i] | p[k] = b) forall z[i] in G[k], a != b",
    "P(z[j] | p[k] = a) == P(z[j] | p[k] = b) forall z[j] not in G[k], a != b",
};

Services hermetic(const RunConfig& config, std::vector<std::string> script) {
  Services s;
  s.decoder = make_decoder(config);
  s.chat = std::make_shared<MockChat>(std::move(script));
  s.embedder = std::make_shared<OfflineEmbedder>();
  s.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
  return s;
}

}  // namespace

int main() {
  criterion("prompt conformance", 1.0, [](Check& c) {
    std::ifstream in(data_path("golden/canonical_formulas.txt"));
    const auto formulas = parse_formula_file(in);
    c.expect(compile_report(formulas, std::string(kPropertySlot)) == read_file(data_path("golden/compile_canonical.txt")),
             "compile output differs from the golden file");
    for (const auto& f : formulas)
      c.expect(compose_prompt(f.ast, classify_bias(f.ast), std::string(kPropertySlot)).text().ends_with(kFixedEnding),
               "missing fixed ending");
  });

  criterion("grammar mappings", 0, [](Check& c) {
    const std::vector<std::pair<FragmentKind, std::string>> expected = {
        {FragmentKind::ProbTerm, "pattern of change"}, {FragmentKind::Condition, "other variations"},
        {FragmentKind::Property, "property of interests"}, {FragmentKind::Group, "a group"},
        {FragmentKind::Member, "associated with"},      {FragmentKind::NotMember, "not associated with"},
        {FragmentKind::Equal, "same"},                  {FragmentKind::NotEqual, "change"}};
    std::set<int> ids;
    std::set<std::string> phrases;
    for (std::size_t k = 0; k < expected.size(); ++k) {
      const GrammarRule& rule = map_symbol({expected[k].first, ""});
      c.expect(rule.id == static_cast<int>(k + 1) && rule.phrase == expected[k].second,
               "rule " + std::to_string(k + 1) + " maps wrongly");
      ids.insert(rule.id);
      phrases.insert(std::string(rule.phrase));
    }
    c.expect(ids.size() == 8 && phrases.size() == 8, "mapping is not injective");
    std::set<int> covered;
    for (const auto& text : kCanonical)
      for (const auto& f : fragments(parse_formula(text)))
        if (f.kind != FragmentKind::Scalar && f.kind != FragmentKind::IndexBound) covered.insert(map_symbol(f).id);
    c.expect(covered.size() == 8, "canonical formulas do not cover all rules");
  });

  criterion("perturbation grids", 0, [](Check& c) {
    const Eigen::MatrixXd dirs = Eigen::MatrixXd::Identity(3, 3);
    c.expect(default_grid(ModelKind::vae(4)).values() == std::vector<double>{-3.0, -1.5, 0.0, 1.5, 3.0}, "vae grid");
    c.expect(default_grid(ModelKind::diffusion(dirs, DiffusionProfile::Ddpm)).values() ==
                 std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5},
             "ddpm grid");
    c.expect(default_grid(ModelKind::diffusion(dirs, DiffusionProfile::Conditional)).values() ==
                 std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0},
             "conditional grid");
    const ModelKind kind = ModelKind::vae(6);
    PlanOptions options;
    options.groups = GroupMap{{0, "G1"}, {1, "G1"}, {2, "G1"}, {3, "G2"}, {4, "G2"}, {5, "G2"}};
    options.property = PropertyConfig{.name = "p", .group = "G1", .off_value = 0.0, .on_value = 1.0, .carrier_index = 5};
    for (const auto& text : kCanonical) {
      const FormulaAst ast = parse_formula(text);
      for (std::size_t target : {0u, 1u}) {
        const auto p = plan(ast, classify_bias(ast), kind, target, 3, options);
        for (const auto& row : materialize(p, kind)) {
          for (std::size_t s = 1; s < row.steps.size(); ++s) {
            const Eigen::VectorXd diff = row.steps[s].z - row.steps[s - 1].z;
            int changed = 0;
            for (Eigen::Index k = 0; k < diff.size(); ++k) changed += diff[k] != 0.0;
            c.expect(changed == 1 && diff[static_cast<Eigen::Index>(target)] != 0.0,
                     "a row varies more than the target coordinate");
          }
        }
      }
    }
  });

  criterion("direction formula", 10.0, [](Check& c) {
    std::mt19937_64 rng(2718);
    std::normal_distribution<double> normal;
    int cases = 0;
    for (; cases < 2000; ++cases) {
      const int n = 1 + static_cast<int>(rng() % 12);
      const Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return normal(rng); });
      const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
      const Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
      const double gamma = normal(rng);
      const Eigen::VectorXd got =
          apply_direction(z, d, gamma, [&a](const Eigen::VectorXd& x) -> Eigen::VectorXd { return a * x; });
      c.expect((got - (z + gamma * a * d)).cwiseAbs().maxCoeff() <= 1e-9, "deviation above 1e-9");
    }
    c.expect(cases >= 1000, "too few cases");
  });

  criterion("certainty score", 0, [](Check& c) {
    std::mt19937 rng(31);
    std::normal_distribution<double> normal;
    for (std::size_t n = 2; n <= 10; ++n) {
      for (int trial = 0; trial < 50; ++trial) {
        std::vector<EmbeddingVector> e;
        const std::size_t dim = 1 + rng() % 64;
        for (std::size_t i = 0; i < n; ++i)
          e.push_back({Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(dim), [&] { return normal(rng); }), "t"});
        const Scores s = score(e);
        const auto o = oracle::certainty(e);
        c.expect(std::abs(s.certainty - static_cast<double>(o.certainty)) <= 1e-12, "certainty off the oracle");
        for (std::size_t i = 0; i < n; ++i)
          c.expect(std::abs(s.per_response[i] - static_cast<double>(o.per[i])) <= 1e-12, "per-response off the oracle");
        std::vector<EmbeddingVector> same(n, e[0]);
        c.expect(score(same).certainty == 1.0, "identical set is not exactly 1");
      }
    }
    std::vector<EmbeddingVector> worked = {
        {Eigen::Vector2d(1, 0), "t"}, {Eigen::Vector2d(1, 0), "t"}, {Eigen::Vector2d(0, 1), "t"}};
    std::vector<ResponseSample> samples = {{0, "a", 0}, {1, "a", 0}, {2, "b", 0}};
    const auto picked = select(make_scored(samples, worked));
    c.expect(std::abs(picked.certainty - 1.0 / 3.0) <= 1e-15, "worked case certainty");
    c.expect(picked.selected_index == 0, "worked case selection");
  });

  criterion("calibration", 0, [](Check& c) {
    std::mt19937 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      const double planted = 0.1 + 0.8 * u(rng);
      std::vector<CalibrationRecord> records;
      for (int i = 0, n = 2 + static_cast<int>(rng() % 30); i < n; ++i) {
        const double s = u(rng);
        if (std::abs(s - planted) < 1e-9) continue;
        records.push_back({"r" + std::to_string(i), s, s >= planted ? 1 : 0});
      }
      const Threshold t = calibrate(records);
      c.expect(t.objective == 1.0, "planted threshold not recovered");
      c.expect(calibration_objective(records, t.epsilon) == 1.0, "returned epsilon does not separate");
      double grid_best = 0;
      for (int k = 0; k <= 10000; ++k) grid_best = std::max(grid_best, calibration_objective(records, k / 10000.0));
      c.expect(t.objective >= grid_best, "dense grid beats the optimum");
    }
    const EpsilonChoice fallback = resolve_epsilon(parse_run_config(Json::object()));
    c.expect(fallback.epsilon == 0.2617 && fallback.source == "default", "default epsilon");
  });

  criterion("metrics", 0, [](Check& c) {
    std::mt19937 rng(123);
    const std::vector<std::string> vocab = {"the", "a", "shape", "moves", "left", "right", "grows", "fades"};
    auto sentence = [&](std::size_t len) {
      std::string s;
      for (std::size_t k = 0; k < len; ++k) s += (k ? " " : "") + vocab[rng() % vocab.size()];
      return s;
    };
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<EvalPair> pairs;
      std::vector<oracle::BleuCase> cases;
      for (std::size_t i = 0, n = 1 + rng() % 4; i < n; ++i) {
        EvalPair p{"r", sentence(1 + rng() % 8), {}};
        for (std::size_t r = 0, refs = 1 + rng() % 3; r < refs; ++r) p.references.push_back(sentence(1 + rng() % 8));
        cases.push_back({p.hypothesis, p.references});
        pairs.push_back(std::move(p));
      }
      c.expect(std::abs(bleu4(pairs) - oracle::bleu4(cases)) <= 1e-9, "bleu off the oracle");
      const auto hyp = tokenize(pairs[0].hypothesis);
      const auto ref = tokenize(pairs[0].references[0]);
      const double lcs = static_cast<double>(oracle::lcs(hyp, ref));
      const RougeL r = rouge_l({"r", pairs[0].hypothesis, {pairs[0].references[0]}});
      c.expect(std::abs(r.precision - lcs / static_cast<double>(hyp.size())) <= 1e-9 &&
                   std::abs(r.recall - lcs / static_cast<double>(ref.size())) <= 1e-9,
               "rouge-l off the exhaustive LCS");
    }
    const std::vector<EvalPair> same = {{"r", "the shape moves left and grows", {"the shape moves left and grows"}}};
    c.expect(std::abs(bleu4(same) - 1.0) <= 1e-12, "bleu identity");
    const RougeL id = rouge_l(same[0]);
    c.expect(id.precision == 1.0 && id.recall == 1.0 && id.f1 == 1.0, "rouge identity");
    c.expect(std::abs(bleu4(std::vector<EvalPair>{{"r", "the cat sat on the mat", {"the cat sat on a mat"}}}) -
                      0.537284965911771) <= 1e-9,
             "reference bleu value");
  });

  criterion("end-to-end hermetic run", 30.0, [](Check& c) {
    const fs::path root = fs::temp_directory_path() / "latentx_acceptance";
    fs::remove_all(root);
    std::istringstream in(kCanonical[0]);
    const auto formulas = parse_formula_file(in);
    auto run = [&](const std::string& name, std::vector<std::string> script) {
      const RunConfig config = parse_run_config({{"backend", "synthetic"},
                                                 {"latent_dim", 3},
                                                 {"synthetic_factors", {{"PosX", 0}}},
                                                 {"targets", {0}},
                                                 {"n", 5},
                                                 {"out", (root / name).string()}});
      Services services = hermetic(config, std::move(script));
      return explain(config, formulas, services);
    };
    const auto first = run("a", {"The object moves to the right."});
    const auto second = run("b", {"The object moves to the right."});
    c.expect(first.exit_code == 0 && first.outcomes.size() == 1, "run failed");
    const std::string m1 = read_file(first.outcomes[0].manifest_path);
    Json j1 = Json::parse(m1);
    Json j2 = Json::parse(read_file(second.outcomes[0].manifest_path));
    c.expect(validate_manifest(j1).empty(), "manifest fails validation");
    j1["timestamps"].erase("latency_ms");
    j2["timestamps"].erase("latency_ms");
    c.expect(j1.dump() == j2.dump(), "manifests differ between identical runs");
    c.expect(read_file(root / "a" / "z0" / "grid.png") == read_file(root / "b" / "z0" / "grid.png"), "grids differ");
    c.expect(first.outcomes[0].final_text == "The object moves to the right.", "unanimous answer not selected");

    const auto dissimilar = run("c", {"A red square slowly fades away.", "Brightness increases toward white.",
                                      "Everything rotates clockwise around its centre.",
                                      "Shapes become triangular at extreme values.", "Nothing seems consistent here."});
    c.expect(dissimilar.outcomes[0].certainty < kDefaultEpsilon, "dissimilar set above epsilon");
    c.expect(dissimilar.outcomes[0].final_text == "No clear explanation", "fallback text");
  });

  criterion("synthetic monotonicity", 0, [](Check& c) {
    SyntheticDecoder decoder(8, SyntheticFactorMap::defaults(8));
    const std::vector<double> grid = {-3.0, -1.5, 0.0, 1.5, 3.0};
    struct Probe {
      Factor factor;
      double Moments::*field;
      int direction;
    };
    const std::vector<Probe> probes = {{Factor::PosX, &Moments::cx, 1},          {Factor::PosY, &Moments::cy, 1},
                                       {Factor::Scale, &Moments::mass, 1},       {Factor::Rotation, &Moments::angle_deg, 1},
                                       {Factor::Shape, &Moments::mass, -1},      {Factor::Brightness, &Moments::mean, 1}};
    for (const auto& p : probes) {
      const auto dim = static_cast<Eigen::Index>(*decoder.factors().dimension_of(p.factor));
      std::vector<double> values;
      for (double v : grid) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(8);
        z[dim] = v;
        values.push_back(measure(decoder.decode(z)).*(p.field));
      }
      c.expect(monotone_direction(values) == p.direction, std::string(to_string(p.factor)) + " is not monotone");
    }
    for (Eigen::Index dim : {6, 7}) {
      Eigen::VectorXd z = Eigen::VectorXd::Zero(8);
      z[dim] = grid[0];
      const Image ref = decoder.decode(z);
      for (double v : grid) {
        z[dim] = v;
        c.expect(decoder.decode(z) == ref, "unassigned dimension changes the image");
      }
    }
  });

  return failures == 0 ? 0 : 1;
}
