#include "latentx/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace latentx {

Scores score(std::span<const EmbeddingVector> embeddings, ZeroNormPolicy policy) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw Error(ErrorKind::Precondition, "scoring needs at least two responses");
  const auto dim = embeddings.front().values.size();
  for (const auto& e : embeddings)
    if (e.values.size() != dim) throw Error(ErrorKind::DimensionMismatch, "embeddings differ in length");

  Eigen::MatrixXd sim = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = embeddings[i].values;
      const auto& b = embeddings[j].values;
      double s = 0;
      if (policy == ZeroNormPolicy::Throw || (a.squaredNorm() > 0 && b.squaredNorm() > 0))
        s = cosine_similarity(a, b);
      sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
      sim(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
    }
  }

  Scores out;
  const double others = static_cast<double>(n - 1);
  out.per_response.reserve(n);
  for (Eigen::Index i = 0; i < sim.rows(); ++i) out.per_response.push_back(sim.row(i).sum() / others);
  out.certainty = sim.sum() / (static_cast<double>(n) * others);
  return out;
}

ScoredResponses make_scored(std::vector<ResponseSample> samples, std::vector<EmbeddingVector> embeddings,
                            ZeroNormPolicy policy) {
  if (samples.size() != embeddings.size())
    throw Error(ErrorKind::Precondition, "samples and embeddings differ in count");
  Scores s = score(embeddings, policy);
  ScoredResponses out;
  out.samples = std::move(samples);
  out.embeddings = std::move(embeddings);
  out.per_response = std::move(s.per_response);
  out.certainty = s.certainty;
  return out;
}

ScoredResponses select(ScoredResponses scored, double epsilon) {
  const auto& s = scored.per_response;
  if (s.empty() || s.size() != scored.samples.size())
    throw Error(ErrorKind::Precondition, "select needs scored responses");
  // max_element returns the first maximum, i.e. the lowest index on ties.
  scored.selected_index = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  scored.final_text = scored.certainty >= epsilon ? scored.samples[scored.selected_index].text
                                                  : std::string(kNoClearExplanation);
  return scored;
}

double jaccard(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double calibration_objective(std::span<const CalibrationRecord> records, double epsilon) {
  std::vector<bool> predicted, labels;
  for (const auto& r : records) {
    predicted.push_back(r.certainty >= epsilon);
    labels.push_back(r.label == 1);
  }
  return jaccard(predicted, labels);
}

std::vector<double> candidate_thresholds(std::span<const CalibrationRecord> records, double delta) {
  std::vector<double> values;
  for (const auto& r : records) values.push_back(r.certainty);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  std::vector<double> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.push_back(values[i]);
    if (i + 1 < values.size()) out.push_back(0.5 * (values[i] + values[i + 1]));
  }
  if (!values.empty()) out.push_back(values.back() + delta);
  return out;
}

Threshold calibrate(std::span<const CalibrationRecord> records) {
  if (records.empty()) throw Error(ErrorKind::EmptyCalibrationSet, "calibration set is empty");
  for (const auto& r : records) {
    if (!std::isfinite(r.certainty))
      throw Error(ErrorKind::Precondition, "non-finite certainty for " + r.run_id);
    if (r.label != 0 && r.label != 1) throw Error(ErrorKind::Precondition, "label must be 0 or 1 for " + r.run_id);
  }
  Threshold best{0, -1};
  for (double eps : candidate_thresholds(records)) {
    const double e = calibration_objective(records, eps);
    if (e > best.objective) best = {eps, e};
  }
  return best;
}

std::vector<CalibrationRecord> read_calibration(std::istream& in) {
  std::vector<CalibrationRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const char delimiter = line.find('\t') != std::string::npos ? '\t' : ',';
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, delimiter);) fields.push_back(field);
    if (fields.size() != 3)
      throw Error(ErrorKind::Config, "calibration line " + std::to_string(number) +
                                         ": expected run_id, certainty, label");
    CalibrationRecord record{fields[0], 0, 0};
    try {
      std::size_t used = 0;
      record.certainty = std::stod(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      if (out.empty() && number == 1) continue;  // header
      throw Error(ErrorKind::Config, "calibration line " + std::to_string(number) + ": bad certainty");
    }
    if (fields[2] == "0" || fields[2] == "1") {
      record.label = fields[2] == "1";
    } else {
      throw Error(ErrorKind::Config, "calibration line " + std::to_string(number) + ": label must be 0 or 1");
    }
    out.push_back(std::move(record));
  }
  return out;
}

}  // namespace latentx
