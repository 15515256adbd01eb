#pragma once

/**
 * Add-k smoothed n-gram language model.
 *
 * Serves as the tractable target for intrinsic evaluation (exact likelihoods
 * and exact ancestral samples), as the span generator behind the built-in
 * block proposal, and as the conditional for the token-mask baseline.
 *
 * Outcome space of every conditional: the regular vocabulary, EOS, and UNK
 * when the training corpus contained unknown tokens. For context c
 *
 *     P(w | c) = (count(c, w) + k) / (count(c) + k * |outcomes|)
 *
 * which sums to one over the outcome space. All logs are natural.
 */

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include <json.hpp>

#include "ebmh/rng.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh {

class NgramModel {
 public:
  struct ContextCounts {
    std::int64_t total = 0;
    std::map<TokenId, std::int64_t> next;
  };

  /// Throws std::invalid_argument for order < 1, k <= 0, max_len < 0 or an
  /// empty corpus.
  static NgramModel train(std::span<const TokenSeq> corpus, std::shared_ptr<const Vocab> vocab,
                          int order, double k, int max_len = 64);

  int order() const { return order_; }
  double k() const { return k_; }
  int max_len() const { return max_len_; }
  bool unk_outcome() const { return unk_outcome_; }
  const Vocab& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocab> vocab_ptr() const { return vocab_; }
  const std::map<std::vector<TokenId>, ContextCounts>& counts() const { return counts_; }

  /// Outcome ids in a fixed order: regular tokens, UNK (if modelled), EOS.
  const std::vector<TokenId>& outcomes() const { return outcomes_; }

  /// The last order-1 ids of `history`, left-padded with BOS.
  std::vector<TokenId> context_of(std::span<const TokenId> history) const;

  /// P(next | context), context as returned by context_of. Tokens outside
  /// the outcome space (UNK when not modelled) get the unseen-token mass
  /// k / denominator; that mass is not part of the normalized support.
  double prob(std::span<const TokenId> context, TokenId next) const;
  double log_prob_next(std::span<const TokenId> context, TokenId next) const;

  /// Log-probabilities over outcomes() for the given context.
  std::vector<double> next_log_probs(std::span<const TokenId> context) const;

  nlohmann::json to_json(const std::string& vocab_ref) const;
  static NgramModel from_json(const nlohmann::json& j, std::shared_ptr<const Vocab> vocab);
  /// Writes the model file; the vocabulary is referenced, not embedded.
  void save(const std::filesystem::path& path, const std::string& vocab_ref) const;
  /// Loads the model and the vocabulary named by its vocab_ref (resolved
  /// against the model file's directory).
  static NgramModel load(const std::filesystem::path& path);

 private:
  NgramModel() = default;
  void finalize();

  std::shared_ptr<const Vocab> vocab_;
  int order_ = 1;
  double k_ = 1.0;
  int max_len_ = 64;
  bool unk_outcome_ = false;
  std::map<std::vector<TokenId>, ContextCounts> counts_;
  std::vector<TokenId> outcomes_;
};

/// log P(seq) including the terminating EOS factor.
double log_prob(const NgramModel& model, const TokenSeq& seq);

struct AncestralSample {
  TokenSeq seq;
  /// Set when max_len tokens were drawn without EOS; the sequence is then a
  /// prefix and exp(log_prob(seq)) is not its sampling probability.
  bool truncated = false;
  /// Conditionals evaluated (one per drawn token, EOS included).
  std::int64_t forward_passes = 0;
};

AncestralSample ancestral_sample(const NgramModel& model, Rng& rng);

struct SpanSample {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
};

/// Draw exactly `length` tokens after `left_context` from the conditionals
/// with EOS removed and the rest renormalized.
SpanSample generate_span(const NgramModel& model, std::span<const TokenId> left_context,
                         int length, Rng& rng);

/// Log-probability of `tokens` under the distribution generate_span draws from.
double score_span(const NgramModel& model, std::span<const TokenId> left_context,
                  std::span<const TokenId> tokens);

}  // namespace ebmh
