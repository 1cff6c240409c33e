#pragma once

// Certainty of n sampled explanations and the threshold that gates them.

#include <Eigen/Dense>
#include <istream>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentx/error.hpp"
#include "latentx/gateway.hpp"

namespace latentx {

inline constexpr double kDefaultEpsilon = 0.2617;
inline constexpr std::string_view kNoClearExplanation = "No clear explanation";

/// a.b / sqrt(|a|^2 |b|^2). Identical vectors give exactly 1.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar aa = a.squaredNorm();
  const Scalar bb = b.squaredNorm();
  if (aa == Scalar(0) || bb == Scalar(0))
    throw Error(ErrorKind::ZeroNormEmbedding, "cosine similarity of a zero vector");
  const Scalar c = a.dot(b) / std::sqrt(aa * bb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

enum class ZeroNormPolicy {
  Throw,
  Orthogonal,  // a zero vector has similarity 0 with everything
};

struct Scores {
  std::vector<double> per_response;
  double certainty = 0;
};

/// s_i = mean over j != i of sim(r_i, r_j); certainty = mean over ordered
/// pairs i != j of sim(r_i, r_j).
Scores score(std::span<const EmbeddingVector> embeddings, ZeroNormPolicy policy = ZeroNormPolicy::Throw);

struct ScoredResponses {
  std::vector<ResponseSample> samples;
  std::vector<EmbeddingVector> embeddings;
  std::vector<double> per_response;
  double certainty = 0;
  std::size_t selected_index = 0;
  std::string final_text;
};

ScoredResponses make_scored(std::vector<ResponseSample> samples, std::vector<EmbeddingVector> embeddings,
                            ZeroNormPolicy policy = ZeroNormPolicy::Throw);

/// Picks the highest s_i (lowest index on ties); keeps its text when
/// certainty >= epsilon, otherwise emits "No clear explanation".
ScoredResponses select(ScoredResponses scored, double epsilon = kDefaultEpsilon);

struct CalibrationRecord {
  std::string run_id;
  double certainty = 0;
  int label = 0;
};

struct Threshold {
  double epsilon = kDefaultEpsilon;
  double objective = 0;
};

/// |A ∩ B| / |A ∪ B| over index sets; two empty sets score 1.
double jaccard(const std::vector<bool>& a, const std::vector<bool>& b);

/// E(eps) = Jaccard(1[s_i >= eps], y).
double calibration_objective(std::span<const CalibrationRecord> records, double epsilon);

/// Candidate thresholds: every distinct certainty, midpoints of consecutive
/// sorted certainties, and max + delta. Ascending.
std::vector<double> candidate_thresholds(std::span<const CalibrationRecord> records, double delta = 1e-6);

/// argmax of E over the candidates; the smallest epsilon wins ties.
Threshold calibrate(std::span<const CalibrationRecord> records);

/// Delimited (comma or tab) run_id, certainty, label lines; an optional
/// header row whose certainty field is not numeric is skipped.
std::vector<CalibrationRecord> read_calibration(std::istream& in);

}  // namespace latentx
