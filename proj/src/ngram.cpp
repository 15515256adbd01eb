#include "ebmh/ngram.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ebmh/io.hpp"

namespace ebmh {

namespace {

std::int64_t count_of(const NgramModel::ContextCounts* cc, TokenId next) {
  if (cc == nullptr) return 0;
  auto it = cc->next.find(next);
  return it == cc->next.end() ? 0 : it->second;
}

const NgramModel::ContextCounts* lookup(const NgramModel& model, std::span<const TokenId> context) {
  const auto& counts = model.counts();
  auto it = counts.find(std::vector<TokenId>(context.begin(), context.end()));
  return it == counts.end() ? nullptr : &it->second;
}

// log P'(w | c) with EOS removed from the support:
// (count(c,w) + k) / (count(c) - count(c,EOS) + k * (|outcomes| - 1)).
double span_log_prob(const NgramModel& model, const NgramModel::ContextCounts* cc, TokenId w) {
  const double k = model.k();
  const double total = cc ? static_cast<double>(cc->total) : 0.0;
  const double eos = static_cast<double>(count_of(cc, Vocab::kEos));
  const double denom = total - eos + k * static_cast<double>(model.outcomes().size() - 1);
  return std::log((static_cast<double>(count_of(cc, w)) + k) / denom);
}

}  // namespace

NgramModel NgramModel::train(std::span<const TokenSeq> corpus, std::shared_ptr<const Vocab> vocab,
                             int order, double k, int max_len) {
  if (order < 1) throw std::invalid_argument("ngram: order must be >= 1");
  if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("ngram: k must be positive");
  if (max_len < 0) throw std::invalid_argument("ngram: max_len must be >= 0");
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  if (!vocab) throw std::invalid_argument("ngram: null vocabulary");

  NgramModel m;
  m.vocab_ = std::move(vocab);
  m.order_ = order;
  m.k_ = k;
  m.max_len_ = max_len;
  for (const auto& seq : corpus) {
    std::vector<TokenId> history;
    history.reserve(seq.size());
    auto add = [&](TokenId next) {
      auto& cc = m.counts_[m.context_of(history)];
      ++cc.total;
      ++cc.next[next];
    };
    for (TokenId id : seq.ids) {
      if (id == Vocab::kUnk) {
        m.unk_outcome_ = true;
      } else if (!m.vocab_->is_regular(id)) {
        throw std::invalid_argument("ngram: corpus contains reserved id " + std::to_string(id));
      }
      add(id);
      history.push_back(id);
    }
    add(Vocab::kEos);
  }
  m.finalize();
  return m;
}

void NgramModel::finalize() {
  outcomes_.clear();
  for (TokenId id = Vocab::kFirstRegular; id < vocab_->end_id(); ++id) outcomes_.push_back(id);
  if (unk_outcome_) outcomes_.push_back(Vocab::kUnk);
  outcomes_.push_back(Vocab::kEos);
}

std::vector<TokenId> NgramModel::context_of(std::span<const TokenId> history) const {
  const auto width = static_cast<std::size_t>(order_ - 1);
  std::vector<TokenId> ctx(width, Vocab::kBos);
  const std::size_t take = std::min(width, history.size());
  for (std::size_t i = 0; i < take; ++i) {
    ctx[width - take + i] = history[history.size() - take + i];
  }
  return ctx;
}

double NgramModel::prob(std::span<const TokenId> context, TokenId next) const {
  const ContextCounts* cc = lookup(*this, context);
  const double total = cc ? static_cast<double>(cc->total) : 0.0;
  const double denom = total + k_ * static_cast<double>(outcomes_.size());
  return (static_cast<double>(count_of(cc, next)) + k_) / denom;
}

double NgramModel::log_prob_next(std::span<const TokenId> context, TokenId next) const {
  return std::log(prob(context, next));
}

std::vector<double> NgramModel::next_log_probs(std::span<const TokenId> context) const {
  const ContextCounts* cc = lookup(*this, context);
  const double total = cc ? static_cast<double>(cc->total) : 0.0;
  const double denom = total + k_ * static_cast<double>(outcomes_.size());
  std::vector<double> out;
  out.reserve(outcomes_.size());
  for (TokenId id : outcomes_) {
    out.push_back(std::log((static_cast<double>(count_of(cc, id)) + k_) / denom));
  }
  return out;
}

nlohmann::json NgramModel::to_json(const std::string& vocab_ref) const {
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& [ctx, cc] : counts_) {
    nlohmann::json ctx_tokens = nlohmann::json::array();
    for (TokenId id : ctx) ctx_tokens.push_back(vocab_->token(id));
    nlohmann::json nexts = nlohmann::json::array();
    for (const auto& [id, n] : cc.next) nexts.push_back({vocab_->token(id), n});
    counts.push_back({std::move(ctx_tokens), std::move(nexts)});
  }
  return {{"order", order_},           {"k", k_},
          {"max_len", max_len_},       {"vocab_ref", vocab_ref},
          {"unk_outcome", unk_outcome_}, {"counts", std::move(counts)}};
}

NgramModel NgramModel::from_json(const nlohmann::json& j, std::shared_ptr<const Vocab> vocab) {
  NgramModel m;
  m.vocab_ = std::move(vocab);
  try {
    m.order_ = j.at("order").get<int>();
    m.k_ = j.at("k").get<double>();
    m.max_len_ = j.at("max_len").get<int>();
    m.unk_outcome_ = j.value("unk_outcome", false);
    if (m.order_ < 1 || !(m.k_ > 0.0) || m.max_len_ < 0) {
      throw std::runtime_error("ngram: invalid order/k/max_len in model file");
    }
    auto to_id = [&](const std::string& tok) -> TokenId {
      if (tok == Vocab::kBosText) return Vocab::kBos;
      if (tok == Vocab::kEosText) return Vocab::kEos;
      if (tok == Vocab::kUnkText) return Vocab::kUnk;
      auto id = m.vocab_->find(tok);
      if (!id) throw std::runtime_error("ngram: token '" + tok + "' missing from vocabulary");
      return *id;
    };
    for (const auto& entry : j.at("counts")) {
      std::vector<TokenId> ctx;
      for (const auto& tok : entry.at(0)) ctx.push_back(to_id(tok.get<std::string>()));
      if (ctx.size() != static_cast<std::size_t>(m.order_ - 1)) {
        throw std::runtime_error("ngram: context length does not match order");
      }
      ContextCounts cc;
      for (const auto& pair : entry.at(1)) {
        const auto n = pair.at(1).get<std::int64_t>();
        cc.next[to_id(pair.at(0).get<std::string>())] += n;
        cc.total += n;
      }
      m.counts_.emplace(std::move(ctx), std::move(cc));
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("ngram: malformed model file: ") + e.what());
  }
  m.finalize();
  return m;
}

void NgramModel::save(const std::filesystem::path& path, const std::string& vocab_ref) const {
  write_file_atomic(path, dump_json(to_json(vocab_ref)));
}

NgramModel NgramModel::load(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (!j.contains("vocab_ref")) throw std::runtime_error(path.string() + ": missing vocab_ref");
  const auto vocab_path = resolve_path(path.parent_path(), j.at("vocab_ref").get<std::string>());
  auto vocab = std::make_shared<const Vocab>(Vocab::load(vocab_path));
  return from_json(j, std::move(vocab));
}

double log_prob(const NgramModel& model, const TokenSeq& seq) {
  double lp = 0.0;
  std::span<const TokenId> ids = seq.ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    lp += model.log_prob_next(model.context_of(ids.first(i)), ids[i]);
  }
  lp += model.log_prob_next(model.context_of(ids), Vocab::kEos);
  return lp;
}

AncestralSample ancestral_sample(const NgramModel& model, Rng& rng) {
  AncestralSample out;
  std::vector<TokenId> ids;
  const auto& outcomes = model.outcomes();
  while (true) {
    if (static_cast<int>(ids.size()) >= model.max_len()) {
      out.truncated = true;
      break;
    }
    const auto lps = model.next_log_probs(model.context_of(ids));
    ++out.forward_passes;
    const TokenId next = outcomes[rng.categorical_log(lps)];
    if (next == Vocab::kEos) break;
    ids.push_back(next);
  }
  out.seq = make_seq(std::move(ids), model.vocab());
  return out;
}

SpanSample generate_span(const NgramModel& model, std::span<const TokenId> left_context,
                         int length, Rng& rng) {
  SpanSample out;
  if (length <= 0) return out;
  const auto& outcomes = model.outcomes();
  // EOS is always the last outcome; the span support is everything before it.
  const std::size_t support = outcomes.size() - 1;
  if (support == 0) throw std::invalid_argument("generate_span: vocabulary has no tokens");
  std::vector<TokenId> history(left_context.begin(), left_context.end());
  std::vector<double> lps(support);
  for (int t = 0; t < length; ++t) {
    const auto* cc = lookup(model, model.context_of(history));
    for (std::size_t j = 0; j < support; ++j) lps[j] = span_log_prob(model, cc, outcomes[j]);
    const std::size_t pick = rng.categorical_log(lps);
    out.log_prob += lps[pick];
    out.tokens.push_back(outcomes[pick]);
    history.push_back(outcomes[pick]);
  }
  return out;
}

double score_span(const NgramModel& model, std::span<const TokenId> left_context,
                  std::span<const TokenId> tokens) {
  std::vector<TokenId> history(left_context.begin(), left_context.end());
  double lp = 0.0;
  for (TokenId id : tokens) {
    lp += span_log_prob(model, lookup(model, model.context_of(history)), id);
    history.push_back(id);
  }
  return lp;
}

}  // namespace ebmh
