#include <doctest.h>

#include <cmath>
#include <map>

#include "ebmh/adapter.hpp"
#include "ebmh/adapter_mock.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/numeric.hpp"
#include "ebmh/proposal.hpp"
#include "support.hpp"

using namespace ebmh;

namespace {

class FixedConditional final : public MaskedConditional {
 public:
  explicit FixedConditional(std::vector<TokenId> support, std::vector<double> probs)
      : support_(std::move(support)) {
    for (double p : probs) lps_.push_back(std::log(p));
  }
  const std::vector<TokenId>& support() const override { return support_; }
  std::vector<double> log_probs(const TokenSeq&, std::size_t) const override { return lps_; }

 private:
  std::vector<TokenId> support_;
  std::vector<double> lps_;
};

struct Toy {
  std::shared_ptr<const Vocab> vocab = test::vocab_of({"a", "b"});
  std::shared_ptr<const NgramModel> model = test::train_lm({"a b b", "b a", "a a a b", "b"}, vocab, 2, 0.5);
};

// Replays the draws propose_span_block makes from a copy of the RNG.
SpanMove replay_move(const TokenSeq& seq, const NgramModel& model, const SpanCfg& cfg, Rng rng) {
  SpanMove mv;
  const std::size_t n = seq.size();
  mv.start = rng.below(n + 1);
  mv.old_len = rng.below(std::min<std::size_t>(static_cast<std::size_t>(cfg.max_span), n - mv.start) + 1);
  mv.new_len = rng.below(static_cast<std::size_t>(cfg.max_new) + 1);
  std::span<const TokenId> ids = seq.ids;
  mv.tokens = generate_span(model, ids.first(mv.start), static_cast<int>(mv.new_len), rng).tokens;
  return mv;
}

std::vector<TokenId> apply(const TokenSeq& seq, const SpanMove& mv) {
  std::vector<TokenId> out(seq.ids.begin(), seq.ids.begin() + static_cast<long>(mv.start));
  out.insert(out.end(), mv.tokens.begin(), mv.tokens.end());
  out.insert(out.end(), seq.ids.begin() + static_cast<long>(mv.start + mv.old_len), seq.ids.end());
  return out;
}

TokenSeq random_seq(const Vocab& v, Rng& rng, std::size_t max_len) {
  std::vector<TokenId> ids(rng.below(max_len + 1));
  for (auto& id : ids) id = Vocab::kFirstRegular + static_cast<TokenId>(rng.below(v.size()));
  return make_seq(ids, v);
}

}  // namespace

TEST_CASE("token-mask: two-token conditional, ratio terms cancel") {
  const auto v = test::vocab_of({"a", "b"});
  const FixedConditional cond({v->id("a"), v->id("b")}, {0.5, 0.5});
  const auto cur = tokenize("a", *v);
  Rng rng(1);
  int changed = 0;
  for (int i = 0; i < 100; ++i) {
    const auto rec = propose_token_mask(cur, cond, *v, rng);
    CHECK(rec.logq_forward == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(rec.logq_reverse == doctest::Approx(std::log(0.5)).epsilon(1e-15));
    CHECK(rec.is_identity == (rec.candidate == cur));
    if (!rec.is_identity) {
      ++changed;
      CHECK(rec.candidate.text == "b");
    }
  }
  CHECK(changed > 0);
  CHECK(changed < 100);
}

TEST_CASE("token-mask rejects the empty state") {
  const auto v = test::vocab_of({"a"});
  const FixedConditional cond({v->id("a")}, {1.0});
  Rng rng(1);
  CHECK_THROWS_WITH_AS(propose_token_mask(TokenSeq{}, cond, *v, rng), "token-mask requires non-empty state",
                       ProposalError);
}

TEST_CASE("token-mask preserves length and keeps surface text aligned") {
  Toy toy;
  const auto cond = std::make_shared<const NgramMaskedConditional>(toy.model);
  Rng rng(2);
  for (int i = 0; i < 2000; ++i) {
    auto cur = random_seq(*toy.vocab, rng, 6);
    if (cur.empty()) continue;
    const auto rec = propose_token_mask(cur, *cond, *toy.vocab, rng);
    CHECK(rec.candidate.size() == cur.size());
    CHECK(split_whitespace(rec.candidate.text).size() == cur.size());
    CHECK(rec.candidate.text == detokenize(rec.candidate.ids, *toy.vocab));
    CHECK(rec.is_identity == (rec.candidate == cur));
    CHECK(rec.logq_forward <= 0.0);
    CHECK(std::isfinite(rec.logq_reverse));
  }
}

TEST_CASE("token-mask keeps unknown surface tokens outside the edited slot") {
  Toy toy;
  const auto cond = std::make_shared<const NgramMaskedConditional>(toy.model);
  const auto cur = tokenize("a Zebra b", *toy.vocab);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto rec = propose_token_mask(cur, *cond, *toy.vocab, rng);
    const auto toks = split_whitespace(rec.candidate.text);
    if (rec.candidate.ids[1] == Vocab::kUnk) CHECK(toks[1] == "Zebra");
  }
}

TEST_CASE("n-gram masked conditional equals the brute-force Gibbs conditional") {
  const auto v = test::vocab_of({"a", "b", "c"});
  const auto m = test::train_lm({"a b c", "c c a b", "b"}, v, 3, 0.4);
  const NgramMaskedConditional cond(m);
  REQUIRE(cond.support().size() == 3);
  for (const auto& ids : test::all_sequences(*v, 4)) {
    if (ids.empty()) continue;
    const auto cur = make_seq(ids, *v);
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
      std::vector<double> joint;
      for (TokenId w : cond.support()) {
        auto alt = ids;
        alt[pos] = w;
        joint.push_back(log_prob(*m, make_seq(alt, *v)));
      }
      const double z = log_sum_exp(joint);
      const auto lps = cond.log_probs(cur, pos);
      for (std::size_t j = 0; j < joint.size(); ++j) CHECK(std::abs(lps[j] - (joint[j] - z)) < 1e-12);
    }
  }
}

TEST_CASE("token-mask identity probability matches direct summation") {
  Toy toy;
  const NgramMaskedConditional cond(toy.model);
  for (const auto& ids : test::all_sequences(*toy.vocab, 3)) {
    if (ids.empty()) continue;
    const auto cur = make_seq(ids, *toy.vocab);
    double direct = 0.0;
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
      const auto lps = cond.log_probs(cur, pos);
      direct += std::exp(lps[static_cast<std::size_t>(ids[pos] - Vocab::kFirstRegular)]) / static_cast<double>(ids.size());
    }
    CHECK(std::abs(std::exp(token_mask_identity_log_prob(cur, cond)) - direct) < 1e-12);
  }
}

TEST_CASE("span-block: hand example on 'a b'") {
  const auto v = test::vocab_of({"a", "b"});
  const auto m = test::train_lm({"a b a b"}, v, 2, 1.0);
  const SpanCfg cfg{3, 3};
  const auto cur = tokenize("a b", *v);
  SpanMove fwd{1, 1, 1, {v->id("a")}};
  const auto cand = make_seq(apply(cur, fwd), *v);
  CHECK(cand.text == "a a");
  SpanMove rev{1, 1, 1, {v->id("b")}};
  // selection: start 1/3, old length 1/2, new length 1/4; context "a": b twice, no EOS
  const double sel = std::log(1.0 / 3.0) + std::log(1.0 / 2.0) + std::log(1.0 / 4.0);
  CHECK(span_move_log_prob(cur, fwd, *m, cfg) == doctest::Approx(sel + std::log(0.25)).epsilon(1e-12));
  CHECK(span_move_log_prob(cand, rev, *m, cfg) == doctest::Approx(sel + std::log(0.75)).epsilon(1e-12));
}

TEST_CASE("span-block: reported log-probabilities replay exactly") {
  Toy toy;
  const SpanCfg cfg{3, 3};
  Rng rng(8);
  for (int i = 0; i < 3000; ++i) {
    const auto cur = random_seq(*toy.vocab, rng, 6);
    const Rng before = rng;
    const auto rec = propose_span_block(cur, *toy.model, cfg, rng);
    const SpanMove mv = replay_move(cur, *toy.model, cfg, before);
    CHECK(rec.candidate.ids == apply(cur, mv));
    CHECK(std::abs(rec.logq_forward - span_move_log_prob(cur, mv, *toy.model, cfg)) <= 1e-12);
    const SpanMove back{mv.start, mv.new_len, mv.old_len,
                        std::vector<TokenId>(cur.ids.begin() + static_cast<long>(mv.start),
                                             cur.ids.begin() + static_cast<long>(mv.start + mv.old_len))};
    CHECK(std::abs(rec.logq_reverse - span_move_log_prob(rec.candidate, back, *toy.model, cfg)) <= 1e-12);
    CHECK(make_seq(apply(rec.candidate, back), *toy.vocab) == cur);
  }
}

TEST_CASE("span-block: support symmetry and length bounds") {
  Toy toy;
  for (const SpanCfg cfg : {SpanCfg{1, 1}, SpanCfg{2, 2}, SpanCfg{3, 3}}) {
    Rng rng(21);
    for (int i = 0; i < 3000; ++i) {
      const auto cur = random_seq(*toy.vocab, rng, 7);
      const auto rec = propose_span_block(cur, *toy.model, cfg, rng);
      CHECK(std::isfinite(rec.logq_forward));
      CHECK(std::isfinite(rec.logq_reverse));
      CHECK(rec.logq_forward <= 0.0);
      CHECK(rec.logq_reverse <= 0.0);
      const auto dn = static_cast<long>(rec.candidate.size()) - static_cast<long>(cur.size());
      CHECK(std::labs(dn) <= std::max(cfg.max_span, cfg.max_new));
      CHECK(rec.is_identity == (rec.candidate == cur));
      if (rec.is_identity && rec.candidate.size() == cur.size()) {
        // a null edit (or same-token rewrite) is its own reverse
        CHECK(rec.logq_forward == rec.logq_reverse);
      }
      CHECK(rec.candidate.text == detokenize(rec.candidate.ids, *toy.vocab));
    }
  }
}

TEST_CASE("span-block with max_span != max_new reports unselectable reverses as -inf") {
  Toy toy;
  const SpanCfg cfg{1, 3};
  Rng rng(5);
  int unselectable = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto cur = random_seq(*toy.vocab, rng, 5);
    const auto rec = propose_span_block(cur, *toy.model, cfg, rng);
    CHECK(std::isfinite(rec.logq_forward));
    if (rec.logq_reverse == -kInf) {
      ++unselectable;
      CHECK(rec.candidate.size() > cur.size() + 0);
    }
  }
  CHECK(unselectable > 0);
}

TEST_CASE("span-block: move probabilities normalize and identity mass matches enumeration") {
  Toy toy;
  const SpanCfg cfg{2, 2};
  for (const auto& ids : test::all_sequences(*toy.vocab, 3)) {
    const auto cur = make_seq(ids, *toy.vocab);
    double total = 0.0, identity = 0.0;
    const std::size_t n = ids.size();
    for (std::size_t i = 0; i <= n; ++i) {
      for (std::size_t l = 0; l <= std::min<std::size_t>(2, n - i); ++l) {
        for (std::size_t mlen = 0; mlen <= 2; ++mlen) {
          for (const auto& toks : test::all_sequences(*toy.vocab, static_cast<int>(mlen))) {
            if (toks.size() != mlen) continue;
            const SpanMove mv{i, l, mlen, toks};
            const double p = std::exp(span_move_log_prob(cur, mv, *toy.model, cfg));
            total += p;
            if (apply(cur, mv) == ids) identity += p;
          }
        }
      }
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(std::abs(std::exp(span_identity_log_prob(cur, *toy.model, cfg)) - identity) < 1e-12);
  }
}

TEST_CASE("span-block rejects negative limits") {
  Toy toy;
  CHECK_THROWS_AS(SpanBlockProposal(toy.model, SpanCfg{-1, 2}), std::invalid_argument);
  Rng rng(1);
  CHECK_THROWS_AS(propose_span_block(TokenSeq{}, *toy.model, SpanCfg{1, -1}, rng), ProposalError);
}

TEST_CASE("with_identity fills logq_identity") {
  Toy toy;
  const SpanBlockProposal span(toy.model, SpanCfg{2, 2});
  const TokenMaskProposal mask(std::make_shared<const NgramMaskedConditional>(toy.model), toy.vocab);
  const auto cur = tokenize("a b a", *toy.vocab);
  Rng rng(3);
  CHECK_FALSE(span.propose(cur, rng).logq_identity.has_value());
  const auto r1 = span.propose(cur, rng, true);
  REQUIRE(r1.logq_identity);
  CHECK(*r1.logq_identity == span_identity_log_prob(cur, *toy.model, span.cfg()));
  const auto r2 = mask.propose(cur, rng, true);
  REQUIRE(r2.logq_identity);
  CHECK(*r2.logq_identity == token_mask_identity_log_prob(cur, NgramMaskedConditional(toy.model)));
}

TEST_CASE("identity proposal returns the state with zero log-probabilities") {
  const IdentityProposal id;
  const auto v = test::vocab_of({"a"});
  const auto cur = tokenize("a a", *v);
  Rng rng(1);
  const auto rec = id.propose(cur, rng, true);
  CHECK(rec.candidate == cur);
  CHECK(rec.is_identity);
  CHECK(rec.logq_forward == 0.0);
  CHECK(rec.logq_reverse == 0.0);
  CHECK(rec.logq_identity == 0.0);
}

TEST_CASE("proposal kinds round-trip through strings") {
  for (auto k : {ProposalKind::TokenMask, ProposalKind::SpanBlock, ProposalKind::AdapterBlock, ProposalKind::Identity}) {
    CHECK(parse_proposal_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_proposal_kind("gibbs"), std::invalid_argument);
}

TEST_CASE("adapter-block passes the server's record through") {
  adapter::MockBehavior b;
  b.candidates = {"thou art fair", "how art thou"};
  adapter::MockAdapterServer server(b);
  adapter::ClientOptions opts;
  opts.endpoint = server.endpoint();
  const adapter::AdapterClient client(opts);
  const auto v = test::vocab_of({"how", "art", "thou"});
  const auto cur = tokenize("how art thou", *v);

  const auto r1 = propose_adapter_block(cur, client, *v);
  CHECK(r1.candidate.text == "thou art fair");
  CHECK(r1.candidate.ids.back() == Vocab::kUnk);
  CHECK(r1.logq_forward == adapter::mock_logq("how art thou", "thou art fair"));
  CHECK(r1.logq_reverse == adapter::mock_logq("thou art fair", "how art thou"));
  CHECK_FALSE(r1.is_identity);

  const auto r2 = propose_adapter_block(cur, client, *v);
  CHECK(r2.is_identity);
  REQUIRE(r2.logq_identity);
  CHECK(*r2.logq_identity == r2.logq_forward);
}

TEST_CASE("adapter-block surfaces invalid log-probabilities and transport failures") {
  adapter::MockBehavior b;
  b.force_logq_forward = 0.1;
  adapter::MockAdapterServer server(b);
  adapter::ClientOptions opts;
  opts.endpoint = server.endpoint();
  const adapter::AdapterClient client(opts);
  const auto v = test::vocab_of({"x"});
  try {
    propose_adapter_block(tokenize("x", *v), client, *v);
    FAIL("expected ProposalError");
  } catch (const ProposalError& e) {
    CHECK(std::string(e.what()).find("invalid log-probability") != std::string::npos);
  }

  adapter::ClientOptions dead;
  dead.endpoint = "http://127.0.0.1:1/v1/adapter";
  dead.timeout = std::chrono::milliseconds(200);
  dead.retries = 0;
  const adapter::AdapterClient nowhere(dead);
  CHECK_THROWS_AS(propose_adapter_block(tokenize("x", *v), nowhere, *v), ProposalError);
}
