#include "ebmh/proposal.hpp"

#include <algorithm>
#include <cmath>

#include "ebmh/adapter.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/numeric.hpp"

namespace ebmh {

namespace {

// Surface tokens of `seq`; one per id by construction of TokenSeq.
std::vector<std::string> surface(const TokenSeq& seq) { return split_whitespace(seq.text); }

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

double log_uniform(std::size_t n) { return -std::log(static_cast<double>(n)); }

}  // namespace

std::string_view to_string(ProposalKind kind) {
  switch (kind) {
    case ProposalKind::TokenMask: return "token-mask";
    case ProposalKind::SpanBlock: return "span-block";
    case ProposalKind::AdapterBlock: return "adapter-block";
    case ProposalKind::Identity: return "identity";
  }
  return "unknown";
}

ProposalKind parse_proposal_kind(std::string_view s) {
  if (s == "token-mask") return ProposalKind::TokenMask;
  if (s == "span-block") return ProposalKind::SpanBlock;
  if (s == "adapter-block") return ProposalKind::AdapterBlock;
  if (s == "identity") return ProposalKind::Identity;
  throw std::invalid_argument("unknown proposal kind '" + std::string(s) + "'");
}

NgramMaskedConditional::NgramMaskedConditional(std::shared_ptr<const NgramModel> model)
    : model_(std::move(model)) {
  const auto& outcomes = model_->outcomes();
  support_.assign(outcomes.begin(), outcomes.end() - 1);  // drop EOS
}

std::vector<double> NgramMaskedConditional::log_probs(const TokenSeq& seq, std::size_t pos) const {
  const std::size_t n = seq.size();
  const auto window = static_cast<std::size_t>(model_->order() - 1);
  const std::size_t last = std::min(pos + window, n);  // index n is the EOS factor
  std::vector<TokenId> ids = seq.ids;
  std::span<const TokenId> view = ids;
  std::vector<double> scores;
  scores.reserve(support_.size());
  for (TokenId w : support_) {
    ids[pos] = w;
    double s = 0.0;
    for (std::size_t j = pos; j <= last; ++j) {
      const TokenId next = j == n ? Vocab::kEos : ids[j];
      s += model_->log_prob_next(model_->context_of(view.first(j)), next);
    }
    scores.push_back(s);
  }
  const double norm = log_sum_exp(scores);
  for (double& s : scores) s -= norm;
  return scores;
}

ProposalRecord propose_token_mask(const TokenSeq& seq, const MaskedConditional& cond,
                                  const Vocab& vocab, Rng& rng, bool with_identity) {
  if (seq.empty()) throw ProposalError("token-mask requires non-empty state");
  const std::size_t n = seq.size();
  const std::size_t pos = rng.below(n);
  const auto lps = cond.log_probs(seq, pos);
  const auto& support = cond.support();
  const std::size_t pick = rng.categorical_log(lps);
  const TokenId old_tok = seq.ids[pos];
  const TokenId new_tok = support[pick];

  double old_lp = -kInf;
  for (std::size_t j = 0; j < support.size(); ++j) {
    if (support[j] == old_tok) old_lp = lps[j];
  }

  ProposalRecord rec;
  rec.candidate.ids = seq.ids;
  rec.candidate.ids[pos] = new_tok;
  auto toks = surface(seq);
  if (new_tok != old_tok) toks[pos] = vocab.token(new_tok);
  rec.candidate.text = join(toks);
  rec.logq_forward = log_uniform(n) + lps[pick];
  rec.logq_reverse = log_uniform(n) + old_lp;
  rec.is_identity = new_tok == old_tok;
  if (with_identity) rec.logq_identity = token_mask_identity_log_prob(seq, cond);
  return rec;
}

double token_mask_identity_log_prob(const TokenSeq& seq, const MaskedConditional& cond) {
  if (seq.empty()) throw ProposalError("token-mask requires non-empty state");
  const auto& support = cond.support();
  std::vector<double> terms;
  terms.reserve(seq.size());
  for (std::size_t pos = 0; pos < seq.size(); ++pos) {
    const auto lps = cond.log_probs(seq, pos);
    double lp = -kInf;
    for (std::size_t j = 0; j < support.size(); ++j) {
      if (support[j] == seq.ids[pos]) lp = lps[j];
    }
    terms.push_back(log_uniform(seq.size()) + lp);
  }
  return log_sum_exp(terms);
}

double span_identity_log_prob(const TokenSeq& seq, const NgramModel& model, const SpanCfg& cfg) {
  const std::size_t n = seq.size();
  const auto longest = static_cast<std::size_t>(std::min(cfg.max_span, cfg.max_new));
  std::vector<double> terms;
  SpanMove move;
  for (std::size_t start = 0; start <= n; ++start) {
    for (std::size_t len = 0; len <= std::min(longest, n - start); ++len) {
      move.start = start;
      move.old_len = len;
      move.new_len = len;
      move.tokens.assign(seq.ids.begin() + static_cast<std::ptrdiff_t>(start),
                         seq.ids.begin() + static_cast<std::ptrdiff_t>(start + len));
      terms.push_back(span_move_log_prob(seq, move, model, cfg));
    }
  }
  return log_sum_exp(terms);
}

double span_move_log_prob(const TokenSeq& seq, const SpanMove& move, const NgramModel& model,
                          const SpanCfg& cfg) {
  const std::size_t n = seq.size();
  const auto max_span = static_cast<std::size_t>(cfg.max_span);
  const auto max_new = static_cast<std::size_t>(cfg.max_new);
  if (move.start > n) return -kInf;
  const std::size_t old_choices = std::min(max_span, n - move.start) + 1;
  if (move.old_len >= old_choices || move.new_len > max_new ||
      move.tokens.size() != move.new_len) {
    return -kInf;
  }
  const double select =
      log_uniform(n + 1) + log_uniform(old_choices) + log_uniform(max_new + 1);
  std::span<const TokenId> ids = seq.ids;
  return select + score_span(model, ids.first(move.start), move.tokens);
}

ProposalRecord propose_span_block(const TokenSeq& seq, const NgramModel& model, const SpanCfg& cfg,
                                  Rng& rng, bool with_identity) {
  if (cfg.max_span < 0 || cfg.max_new < 0) {
    throw ProposalError("span-block: max_span and max_new must be >= 0");
  }
  const std::size_t n = seq.size();
  const auto max_span = static_cast<std::size_t>(cfg.max_span);
  const auto max_new = static_cast<std::size_t>(cfg.max_new);

  const std::size_t start = rng.below(n + 1);
  const std::size_t old_choices = std::min(max_span, n - start) + 1;
  const std::size_t old_len = rng.below(old_choices);
  const std::size_t new_len = rng.below(max_new + 1);
  std::span<const TokenId> ids = seq.ids;
  const auto span =
      generate_span(model, ids.first(start), static_cast<int>(new_len), rng);

  ProposalRecord rec;
  auto& cand = rec.candidate.ids;
  cand.reserve(n - old_len + new_len);
  cand.insert(cand.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(start));
  cand.insert(cand.end(), span.tokens.begin(), span.tokens.end());
  cand.insert(cand.end(), ids.begin() + static_cast<std::ptrdiff_t>(start + old_len), ids.end());

  const auto toks = surface(seq);
  std::vector<std::string> cand_toks(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(start));
  for (TokenId id : span.tokens) cand_toks.push_back(model.vocab().token(id));
  cand_toks.insert(cand_toks.end(), toks.begin() + static_cast<std::ptrdiff_t>(start + old_len),
                   toks.end());
  rec.candidate.text = join(cand_toks);

  rec.logq_forward = log_uniform(n + 1) + log_uniform(old_choices) + log_uniform(max_new + 1) +
                     span.log_prob;

  SpanMove reverse;
  reverse.start = start;
  reverse.old_len = new_len;
  reverse.new_len = old_len;
  reverse.tokens.assign(ids.begin() + static_cast<std::ptrdiff_t>(start),
                        ids.begin() + static_cast<std::ptrdiff_t>(start + old_len));
  rec.logq_reverse = span_move_log_prob(rec.candidate, reverse, model, cfg);

  rec.is_identity = rec.candidate == seq;
  if (with_identity) rec.logq_identity = span_identity_log_prob(seq, model, cfg);
  return rec;
}

SpanBlockProposal::SpanBlockProposal(std::shared_ptr<const NgramModel> model, SpanCfg cfg)
    : model_(std::move(model)), cfg_(cfg) {
  if (cfg_.max_span < 0 || cfg_.max_new < 0) {
    throw std::invalid_argument("span-block: max_span and max_new must be >= 0");
  }
}

ProposalRecord propose_adapter_block(const TokenSeq& seq, const adapter::AdapterClient& client,
                                     const Vocab& vocab, const nlohmann::json& params) {
  adapter::ProposeResponse r;
  try {
    r = client.propose(seq.text, params);
  } catch (const adapter::AdapterError& e) {
    throw ProposalError(std::string("adapter-block: ") + e.what());
  }
  ProposalRecord rec;
  rec.candidate = tokenize(r.text, vocab);
  rec.logq_forward = r.logq_forward;
  rec.logq_reverse = r.logq_reverse;
  rec.logq_identity = r.logq_identity;
  rec.is_identity = rec.candidate == seq;
  return rec;
}

}  // namespace ebmh
