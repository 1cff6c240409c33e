#pragma once

// BLEU@4 and ROUGE-L over a frozen tokenizer.

#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace latentx {

/// Lowercases ASCII letters and splits on whitespace and ASCII punctuation.
/// Bytes >= 0x80 are kept inside tokens. Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

struct EvalPair {
  std::string run_id;
  std::string hypothesis;
  std::vector<std::string> references;
};

/// Corpus BLEU with uniform 1..4-gram weights and pooled clipped counts.
///
/// A zero precision at order n is replaced by 1 / (2 * candidate n-gram
/// count). Orders for which the corpus has no candidate n-gram at all are
/// left out of the geometric mean. Brevity penalty uses, per pair, the
/// reference length closest to the hypothesis length (shorter on ties).
double bleu4(std::span<const EvalPair> pairs);

struct RougeL {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS-based P/R/F1 (beta = 1). With several references, the reference with
/// the highest F1 is reported.
RougeL rouge_l(const EvalPair& pair);

struct MetricReport {
  double bleu4 = 0;      // corpus, 0..1
  double rouge_l_f = 0;  // mean of per-pair F1, 0..1
  std::vector<double> pair_bleu4;
  std::vector<RougeL> pair_rouge_l;
};

MetricReport evaluate(std::span<const EvalPair> pairs);

/// Tab-separated records: run_id, hypothesis, reference [, reference ...].
/// Blank lines and lines starting with '#' are skipped.
std::vector<EvalPair> read_eval_pairs(std::istream& in);

/// Tab-separated report, scores rendered on the 0-100 scale.
std::string format_report(std::span<const EvalPair> pairs, const MetricReport& report);

}  // namespace latentx
