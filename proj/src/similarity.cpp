#include "ebmh/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace ebmh {

SimMapping parse_sim_mapping(std::string_view s) {
  if (s == "linear") return SimMapping::Linear;
  if (s == "neglog") return SimMapping::NegLog;
  throw std::invalid_argument("unknown similarity mapping '" + std::string(s) + "'");
}

double token_f1(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<std::string_view, long> counts;
  for (const auto& t : a) ++counts[t];
  long common = 0;
  for (const auto& t : b) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

SimilarityScorer SimilarityScorer::builtin(SimMapping mapping) {
  return SimilarityScorer(true, nullptr, mapping);
}

SimilarityScorer SimilarityScorer::external(ScoreFn fn, SimMapping mapping) {
  if (!fn) throw std::invalid_argument("external similarity scorer needs a function");
  return SimilarityScorer(false, std::move(fn), mapping);
}

double SimilarityScorer::score(const TokenSeq& a, const TokenSeq& b) const {
  if (builtin_) return token_f1(split_whitespace(a.text), split_whitespace(b.text));
  const double s = fn_(a, b);
  if (std::isnan(s)) throw std::runtime_error("similarity scorer returned NaN");
  return std::clamp(s, 0.0, 1.0);
}

double sim_energy(const SimilarityScorer& scorer, const TokenSeq& seed, const TokenSeq& seq) {
  if (seed.empty()) throw std::invalid_argument("similarity seed must be non-empty");
  const double s = seq.empty() ? 0.0 : scorer.score(seed, seq);
  switch (scorer.mapping()) {
    case SimMapping::Linear: return 1.0 - s;
    case SimMapping::NegLog: return -std::log(std::max(s, 1e-12));
  }
  return 1.0 - s;
}

}  // namespace ebmh
