#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>

#include "ebmh/vocab.hpp"

namespace ebmh {

/// How a similarity score in [0, 1] becomes an energy.
enum class SimMapping {
  Linear,  ///< 1 - score
  NegLog,  ///< -log(max(score, 1e-12))
};

SimMapping parse_sim_mapping(std::string_view s);

/// Token-level F1 with exact-match alignment:
/// 2 * |multiset intersection| / (|a| + |b|); 0 when either side is empty.
double token_f1(std::span<const std::string> a, std::span<const std::string> b);

class SimilarityScorer {
 public:
  using ScoreFn = std::function<double(const TokenSeq&, const TokenSeq&)>;

  /// Token F1 over surface tokens.
  static SimilarityScorer builtin(SimMapping mapping = SimMapping::Linear);
  /// Delegates scoring to `fn` (e.g. an adapter-backed BERTScore); results
  /// are clamped into [0, 1].
  static SimilarityScorer external(ScoreFn fn, SimMapping mapping = SimMapping::Linear);

  double score(const TokenSeq& a, const TokenSeq& b) const;
  /// "builtin-token-f1" or "adapter".
  std::string_view tag() const { return builtin_ ? "builtin-token-f1" : "adapter"; }
  SimMapping mapping() const { return mapping_; }

 private:
  SimilarityScorer(bool builtin, ScoreFn fn, SimMapping mapping)
      : builtin_(builtin), fn_(std::move(fn)), mapping_(mapping) {}

  bool builtin_ = true;
  ScoreFn fn_;
  SimMapping mapping_ = SimMapping::Linear;
};

/// Energy of `seq` relative to `seed`. Throws std::invalid_argument for an
/// empty seed; an empty `seq` scores 0.
double sim_energy(const SimilarityScorer& scorer, const TokenSeq& seed, const TokenSeq& seq);

}  // namespace ebmh
