#include "latentx/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "latentx/error.hpp"

namespace latentx {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (c < 0x80 && (std::isspace(c) || std::ispunct(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                    tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

Tokens hypothesis_tokens(const EvalPair& pair) {
  Tokens tokens = tokenize(pair.hypothesis);
  if (tokens.empty())
    throw Error(ErrorKind::EmptyHypothesis, "empty hypothesis" + (pair.run_id.empty() ? "" : " for " + pair.run_id));
  return tokens;
}

}  // namespace

double bleu4(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::Precondition, "bleu4 needs at least one pair");
  std::array<std::size_t, 4> clipped{};
  std::array<std::size_t, 4> total{};
  double hyp_length = 0;
  double ref_length = 0;

  for (const auto& pair : pairs) {
    if (pair.references.empty()) throw Error(ErrorKind::Precondition, "pair without references");
    const Tokens hyp = hypothesis_tokens(pair);
    std::vector<Tokens> refs;
    for (const auto& r : pair.references) refs.push_back(tokenize(r));

    for (std::size_t n = 1; n <= 4; ++n) {
      NgramCounts max_ref;
      for (const auto& ref : refs)
        for (const auto& [gram, count] : count_ngrams(ref, n)) max_ref[gram] = std::max(max_ref[gram], count);
      for (const auto& [gram, count] : count_ngrams(hyp, n)) {
        total[n - 1] += count;
        auto it = max_ref.find(gram);
        if (it != max_ref.end()) clipped[n - 1] += std::min(count, it->second);
      }
    }

    hyp_length += static_cast<double>(hyp.size());
    std::size_t best = refs.front().size();
    for (const auto& ref : refs) {
      const auto d = [&](std::size_t len) {
        return std::abs(static_cast<long>(len) - static_cast<long>(hyp.size()));
      };
      if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
    }
    ref_length += static_cast<double>(best);
  }

  double log_sum = 0;
  int orders = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (total[n] == 0) continue;
    const double precision = clipped[n] > 0 ? static_cast<double>(clipped[n]) / static_cast<double>(total[n])
                                            : 1.0 / (2.0 * static_cast<double>(total[n]));
    log_sum += std::log(precision);
    ++orders;
  }
  const double brevity = hyp_length > ref_length ? 1.0 : std::exp(1.0 - ref_length / hyp_length);
  return brevity * std::exp(log_sum / orders);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      row[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], row[j - 1]);
    std::swap(prev, row);
  }
  return prev[b.size()];
}

RougeL rouge_l(const EvalPair& pair) {
  if (pair.references.empty()) throw Error(ErrorKind::Precondition, "pair without references");
  const Tokens hyp = hypothesis_tokens(pair);
  RougeL best;
  bool first = true;
  for (const auto& reference : pair.references) {
    const Tokens ref = tokenize(reference);
    RougeL score;
    if (!ref.empty()) {
      const auto lcs = static_cast<double>(lcs_length(hyp, ref));
      score.precision = lcs / static_cast<double>(hyp.size());
      score.recall = lcs / static_cast<double>(ref.size());
      if (lcs > 0) score.f1 = 2 * score.precision * score.recall / (score.precision + score.recall);
    }
    if (first || score.f1 > best.f1) best = score;
    first = false;
  }
  return best;
}

MetricReport evaluate(std::span<const EvalPair> pairs) {
  MetricReport report;
  report.bleu4 = bleu4(pairs);
  double sum = 0;
  for (const auto& pair : pairs) {
    report.pair_bleu4.push_back(bleu4(std::span(&pair, 1)));
    report.pair_rouge_l.push_back(rouge_l(pair));
    sum += report.pair_rouge_l.back().f1;
  }
  report.rouge_l_f = sum / static_cast<double>(pairs.size());
  return report;
}

std::vector<EvalPair> read_eval_pairs(std::istream& in) {
  std::vector<EvalPair> pairs;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string field; std::getline(ss, field, '\t');) fields.push_back(field);
    if (fields.size() < 3)
      throw Error(ErrorKind::Config, "eval line " + std::to_string(number) +
                                         ": expected run_id, hypothesis and at least one reference");
    pairs.push_back({fields[0], fields[1], {fields.begin() + 2, fields.end()}});
  }
  if (pairs.empty()) throw Error(ErrorKind::Precondition, "eval input has no records");
  return pairs;
}

std::string format_report(std::span<const EvalPair> pairs, const MetricReport& report) {
  std::ostringstream out;
  char buffer[64];
  auto pct = [&buffer](double x) {
    std::snprintf(buffer, sizeof buffer, "%.2f", 100.0 * x);
    return std::string(buffer);
  };
  out << "run_id\tbleu4\trouge_l_p\trouge_l_r\trouge_l_f\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& r = report.pair_rouge_l[i];
    out << pairs[i].run_id << '\t' << pct(report.pair_bleu4[i]) << '\t' << pct(r.precision) << '\t'
        << pct(r.recall) << '\t' << pct(r.f1) << '\n';
  }
  out << "corpus\t" << pct(report.bleu4) << "\t\t\t" << pct(report.rouge_l_f) << '\n';
  return out.str();
}

}  // namespace latentx
