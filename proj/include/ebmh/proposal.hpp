#pragma once

/**
 * Proposal distributions for the Metropolis-Hastings chain.
 *
 *  - token-mask: pick one position uniformly, resample its token from a
 *    masked conditional. Length-preserving.
 *  - span-block: replace a span of the current sequence with freshly
 *    generated tokens of a possibly different length.
 *  - adapter-block: an external service rewrites the whole sequence and
 *    reports its own forward/reverse/identity log-probabilities.
 *  - identity: always proposes the current state (degenerate, for tests and
 *    smoke runs).
 *
 * A ProposalRecord carries log q(cand | cur) and log q(cur | cand). For the
 * span-block proposal these are probabilities of the specific move (start,
 * old length, new length, tokens) and of its unique reverse move; the
 * acceptance ratio built from them is a valid MH ratio on the move space.
 * A move whose reverse is not selectable reports logq_reverse = -inf and is
 * never accepted.
 */

#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ebmh/rng.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh {

class NgramModel;
namespace adapter {
class AdapterClient;
}

enum class ProposalKind { TokenMask, SpanBlock, AdapterBlock, Identity };

std::string_view to_string(ProposalKind kind);
ProposalKind parse_proposal_kind(std::string_view s);

class ProposalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProposalRecord {
  TokenSeq candidate;
  double logq_forward = 0.0;
  double logq_reverse = 0.0;
  std::optional<double> logq_identity;
  bool is_identity = false;
};

/// Conditional over the token at a masked position given the rest.
class MaskedConditional {
 public:
  virtual ~MaskedConditional() = default;
  /// Candidate tokens for a masked slot.
  virtual const std::vector<TokenId>& support() const = 0;
  /// Normalized log-probabilities over support() for position `pos` of
  /// `seq` with that position masked.
  virtual std::vector<double> log_probs(const TokenSeq& seq, std::size_t pos) const = 0;
};

/// Exact Gibbs conditional of an n-gram model: P(w | rest) is proportional
/// to the product of every factor whose window covers the masked slot,
/// including the EOS factor.
class NgramMaskedConditional final : public MaskedConditional {
 public:
  explicit NgramMaskedConditional(std::shared_ptr<const NgramModel> model);
  const std::vector<TokenId>& support() const override { return support_; }
  std::vector<double> log_probs(const TokenSeq& seq, std::size_t pos) const override;

 private:
  std::shared_ptr<const NgramModel> model_;
  std::vector<TokenId> support_;
};

struct SpanCfg {
  int max_span = 3;  ///< L: longest replaced span
  int max_new = 3;   ///< M: longest inserted span

  nlohmann::json to_json() const { return {{"max_span", max_span}, {"max_new", max_new}}; }
};

/// Throws ProposalError("token-mask requires non-empty state") on empty seq.
/// With `with_identity`, logq_identity holds log q(seq | seq) summed over
/// every position.
ProposalRecord propose_token_mask(const TokenSeq& seq, const MaskedConditional& cond,
                                  const Vocab& vocab, Rng& rng, bool with_identity = false);

/// With `with_identity`, logq_identity holds log q(seq | seq) summed over
/// every move that reproduces seq.
ProposalRecord propose_span_block(const TokenSeq& seq, const NgramModel& model, const SpanCfg& cfg,
                                  Rng& rng, bool with_identity = false);

/// log q(seq | seq) of the token-mask proposal.
double token_mask_identity_log_prob(const TokenSeq& seq, const MaskedConditional& cond);
/// log q(seq | seq) of the span-block proposal.
double span_identity_log_prob(const TokenSeq& seq, const NgramModel& model, const SpanCfg& cfg);

/// The forward move of a span-block proposal, exposed for replay in tests.
struct SpanMove {
  std::size_t start = 0;
  std::size_t old_len = 0;
  std::size_t new_len = 0;
  std::vector<TokenId> tokens;
};

/// log-probability of choosing `move` at `seq` and generating its tokens;
/// -inf when the move is not selectable there.
double span_move_log_prob(const TokenSeq& seq, const SpanMove& move, const NgramModel& model,
                          const SpanCfg& cfg);

/// Rewrite via the adapter; the candidate is retokenized with `vocab`.
/// Throws ProposalError on transport, schema or log-probability failures.
ProposalRecord propose_adapter_block(const TokenSeq& seq, const adapter::AdapterClient& client,
                                     const Vocab& vocab,
                                     const nlohmann::json& params = nlohmann::json::object());

/// Polymorphic handle the engine uses.
class Proposal {
 public:
  virtual ~Proposal() = default;
  virtual ProposalKind kind() const = 0;
  /// `with_identity` asks for logq_identity (identity-variant acceptance).
  virtual ProposalRecord propose(const TokenSeq& seq, Rng& rng, bool with_identity) const = 0;
  ProposalRecord propose(const TokenSeq& seq, Rng& rng) const { return propose(seq, rng, false); }
};

class TokenMaskProposal final : public Proposal {
 public:
  TokenMaskProposal(std::shared_ptr<const MaskedConditional> cond, std::shared_ptr<const Vocab> vocab)
      : cond_(std::move(cond)), vocab_(std::move(vocab)) {}
  ProposalKind kind() const override { return ProposalKind::TokenMask; }
  using Proposal::propose;
  ProposalRecord propose(const TokenSeq& seq, Rng& rng, bool with_identity) const override {
    return propose_token_mask(seq, *cond_, *vocab_, rng, with_identity);
  }

 private:
  std::shared_ptr<const MaskedConditional> cond_;
  std::shared_ptr<const Vocab> vocab_;
};

class SpanBlockProposal final : public Proposal {
 public:
  SpanBlockProposal(std::shared_ptr<const NgramModel> model, SpanCfg cfg);
  ProposalKind kind() const override { return ProposalKind::SpanBlock; }
  using Proposal::propose;
  ProposalRecord propose(const TokenSeq& seq, Rng& rng, bool with_identity) const override {
    return propose_span_block(seq, *model_, cfg_, rng, with_identity);
  }
  const SpanCfg& cfg() const { return cfg_; }

 private:
  std::shared_ptr<const NgramModel> model_;
  SpanCfg cfg_;
};

class AdapterBlockProposal final : public Proposal {
 public:
  AdapterBlockProposal(std::shared_ptr<const adapter::AdapterClient> client,
                       std::shared_ptr<const Vocab> vocab,
                       nlohmann::json params = nlohmann::json::object())
      : client_(std::move(client)), vocab_(std::move(vocab)), params_(std::move(params)) {}
  ProposalKind kind() const override { return ProposalKind::AdapterBlock; }
  using Proposal::propose;
  ProposalRecord propose(const TokenSeq& seq, Rng&, bool) const override {
    return propose_adapter_block(seq, *client_, *vocab_, params_);
  }

 private:
  std::shared_ptr<const adapter::AdapterClient> client_;
  std::shared_ptr<const Vocab> vocab_;
  nlohmann::json params_;
};

/// Always proposes the current state with all log-probabilities 0.
class IdentityProposal final : public Proposal {
 public:
  ProposalKind kind() const override { return ProposalKind::Identity; }
  using Proposal::propose;
  ProposalRecord propose(const TokenSeq& seq, Rng&, bool) const override {
    return {seq, 0.0, 0.0, 0.0, true};
  }
};

}  // namespace ebmh
