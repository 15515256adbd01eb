#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>

#include "ebmh/io.hpp"
#include "ebmh/ngram.hpp"
#include "support.hpp"

using namespace ebmh;
using ebmh::test::train_lm;
using ebmh::test::vocab_of;

namespace {

// Count-table oracle over raw strings, independent of NgramModel.
struct OracleLm {
  int order;
  double k;
  std::vector<std::string> outcomes;  // regular tokens then "</s>"
  std::map<std::vector<std::string>, std::map<std::string, double>> counts;

  OracleLm(const std::vector<std::string>& lines, const std::vector<std::string>& vocab, int n, double kk)
      : order(n), k(kk), outcomes(vocab) {
    outcomes.push_back("</s>");
    for (const auto& line : lines) {
      std::vector<std::string> padded(static_cast<std::size_t>(n - 1), "<s>");
      for (const auto& t : split_whitespace(line)) padded.push_back(t);
      padded.push_back("</s>");
      for (std::size_t i = static_cast<std::size_t>(n - 1); i < padded.size(); ++i) {
        std::vector<std::string> ctx(padded.begin() + static_cast<long>(i) - (n - 1), padded.begin() + static_cast<long>(i));
        counts[ctx][padded[i]] += 1.0;
      }
    }
  }

  std::vector<std::string> ctx_of(const std::vector<std::string>& hist) const {
    std::vector<std::string> padded(static_cast<std::size_t>(order - 1), "<s>");
    padded.insert(padded.end(), hist.begin(), hist.end());
    return {padded.end() - (order - 1), padded.end()};
  }

  double p(const std::vector<std::string>& hist, const std::string& w) const {
    const auto ctx = ctx_of(hist);
    double total = 0.0, c = 0.0;
    auto it = counts.find(ctx);
    if (it != counts.end()) {
      for (const auto& [t, n] : it->second) total += n;
      auto jt = it->second.find(w);
      if (jt != it->second.end()) c = jt->second;
    }
    return (c + k) / (total + k * static_cast<double>(outcomes.size()));
  }

  double seq_prob(const std::vector<std::string>& toks, bool with_eos) const {
    double prob = 1.0;
    std::vector<std::string> hist;
    for (const auto& t : toks) {
      prob *= p(hist, t);
      hist.push_back(t);
    }
    return with_eos ? prob * p(hist, "</s>") : prob;
  }
};

std::vector<std::string> words(const std::vector<TokenId>& ids, const Vocab& v) {
  std::vector<std::string> out;
  for (TokenId id : ids) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_CASE("hand counts: bigram over 'a b a b'") {
  const auto v = vocab_of({"a", "b"});
  const auto m = train_lm({"a b a b"}, v, 2, 1.0);
  const TokenId a = v->id("a"), b = v->id("b");
  CHECK(m->prob(std::vector<TokenId>{a}, b) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m->prob(std::vector<TokenId>{b}, Vocab::kEos) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(m->prob(std::vector<TokenId>{Vocab::kBos}, a) == doctest::Approx(0.5).epsilon(1e-12));
  // 0.5 * 0.6 * 0.4
  CHECK(log_prob(*m, tokenize("a b", *v)) == doctest::Approx(std::log(0.12)).epsilon(1e-12));
}

TEST_CASE("hand counts: unigram over 'a' counts EOS as an event") {
  const auto v = vocab_of({"a"});
  const auto m = train_lm({"a"}, v, 1, 1.0);
  CHECK(m->prob({}, v->id("a")) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m->prob({}, Vocab::kEos) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(log_prob(*m, TokenSeq{}) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("model conditionals match the count-table oracle") {
  const std::vector<std::string> lines{"a b c a", "b b", "c a b", "a", "c c c b a"};
  const std::vector<std::string> toks{"a", "b", "c"};
  const auto v = vocab_of(toks);
  for (int order : {1, 2, 3}) {
    for (double k : {0.1, 1.0, 2.5}) {
      const auto m = train_lm(lines, v, order, k);
      const OracleLm oracle(lines, toks, order, k);
      for (const auto& ids : test::all_sequences(*v, 3)) {
        const auto ctx = m->context_of(ids);
        for (TokenId w : m->outcomes()) {
          CHECK(m->prob(ctx, w) == doctest::Approx(oracle.p(words(ids, *v), v->token(w))).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("every context's conditional sums to one") {
  const auto v = vocab_of({"x", "y", "z"});
  const auto m = train_lm({"x y z", "z y", "x x x y"}, v, 3, 0.3);
  for (const auto& ids : test::all_sequences(*v, 3)) {
    const auto lps = m->next_log_probs(m->context_of(ids));
    double s = 0.0;
    for (double lp : lps) {
      s += std::exp(lp);
      CHECK(std::exp(lp) > 0.0);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("enumerated mass plus truncation mass is one (|V|=2, L=4)") {
  const std::vector<std::string> toks{"a", "b"};
  const auto v = vocab_of(toks);
  const std::vector<std::string> lines{"a b b", "b a", "a a a a b"};
  const int L = 4;
  const auto m = train_lm(lines, v, 2, 0.5, L);
  const OracleLm oracle(lines, toks, 2, 0.5);
  double mass = 0.0, oracle_mass = 0.0;
  // P(length > L) is the mass of every length-(L+1) prefix.
  for (const auto& ids : test::all_sequences(*v, L + 1)) {
    if (static_cast<int>(ids.size()) <= L) {
      mass += std::exp(log_prob(*m, make_seq(ids, *v)));
      oracle_mass += oracle.seq_prob(words(ids, *v), true);
    } else {
      oracle_mass += oracle.seq_prob(words(ids, *v), false);
      double prefix = 0.0;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        prefix += m->log_prob_next(m->context_of(std::span<const TokenId>(ids).first(i)), ids[i]);
      }
      mass += std::exp(prefix);
    }
  }
  CHECK(std::abs(mass - 1.0) < 1e-6);
  CHECK(std::abs(oracle_mass - 1.0) < 1e-6);
}

TEST_CASE("ancestral sampling matches the enumerated distribution (chi-square)") {
  const std::vector<std::string> toks{"a", "b"};
  const auto v = vocab_of(toks);
  const std::vector<std::string> lines{"a b", "b", "a a b", "b a"};
  const int L = 3;
  const auto m = train_lm(lines, v, 2, 1.0, L);
  const OracleLm oracle(lines, toks, 2, 1.0);

  const auto space = test::all_sequences(*v, L);
  std::map<std::vector<TokenId>, std::size_t> index;
  std::vector<double> expected;
  for (const auto& ids : space) {
    index.emplace(ids, expected.size());
    const bool full = static_cast<int>(ids.size()) == L;
    expected.push_back(oracle.seq_prob(words(ids, *v), !full));
  }
  REQUIRE(space.size() == 15);

  const int draws = 100000;
  std::vector<double> observed(space.size(), 0.0);
  Rng rng(20240611);
  int truncated = 0;
  for (int i = 0; i < draws; ++i) {
    const auto s = ancestral_sample(*m, rng);
    observed[index.at(s.seq.ids)] += 1.0;
    if (s.truncated) {
      ++truncated;
      CHECK(static_cast<int>(s.seq.size()) == L);
    }
  }
  CHECK(truncated > 0);
  double chi2 = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double e = expected[i] * draws;
    chi2 += (observed[i] - e) * (observed[i] - e) / e;
  }
  const boost::math::chi_squared dist(static_cast<double>(space.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, chi2));
  INFO("chi2 = " << chi2 << ", p = " << p);
  CHECK(p > 0.001);
}

TEST_CASE("forced termination gives the empty sequence") {
  const auto v = vocab_of({});
  const auto m = train_lm({""}, v, 2, 1.0);
  CHECK(m->prob(std::vector<TokenId>{Vocab::kBos}, Vocab::kEos) == 1.0);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto s = ancestral_sample(*m, rng);
    CHECK(s.seq.empty());
    CHECK_FALSE(s.truncated);
    CHECK(s.forward_passes == 1);
  }
}

TEST_CASE("ancestral sampling is deterministic for a fixed seed") {
  const auto v = vocab_of({"a", "b", "c"});
  const auto m = train_lm({"a b c", "c b a", "a a"}, v, 2, 0.5);
  Rng r1(99), r2(99);
  for (int i = 0; i < 200; ++i) {
    CHECK(ancestral_sample(*m, r1).seq == ancestral_sample(*m, r2).seq);
  }
}

TEST_CASE("generate_span: empty span and renormalized hand example") {
  const auto v = vocab_of({"a", "b"});
  const auto m = train_lm({"a a a", "b"}, v, 2, 1.0);
  Rng rng(1);
  const std::vector<TokenId> left{v->id("a")};
  const auto empty = generate_span(*m, left, 0, rng);
  CHECK(empty.tokens.empty());
  CHECK(empty.log_prob == 0.0);

  // context "a": a->a twice, a->EOS once; without EOS: (2+1)/(3-1+2) = 0.75
  const std::vector<TokenId> a{v->id("a")};
  CHECK(score_span(*m, left, a) == doctest::Approx(std::log(0.75)).epsilon(1e-12));
  const std::vector<TokenId> b{v->id("b")};
  CHECK(score_span(*m, left, b) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("generate_span never emits EOS and agrees with score_span") {
  const auto v = vocab_of({"a", "b", "c"});
  const auto m = train_lm({"a b c a", "c c", "b a"}, v, 3, 0.2);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    std::vector<TokenId> left(rng.below(4));
    for (auto& id : left) id = Vocab::kFirstRegular + static_cast<TokenId>(rng.below(3));
    const int len = static_cast<int>(rng.below(5));
    const auto s = generate_span(*m, left, len, rng);
    CHECK(static_cast<int>(s.tokens.size()) == len);
    for (TokenId id : s.tokens) CHECK(v->is_regular(id));
    CHECK(std::abs(s.log_prob - score_span(*m, left, s.tokens)) <= 1e-12);
  }
}

TEST_CASE("renormalized span distribution sums to one") {
  const auto v = vocab_of({"a", "b", "c"});
  const auto m = train_lm({"a b c a", "c c", "b a"}, v, 2, 0.7);
  for (const auto& left : test::all_sequences(*v, 2)) {
    double s = 0.0;
    for (TokenId w = Vocab::kFirstRegular; w < v->end_id(); ++w) {
      const std::vector<TokenId> t{w};
      s += std::exp(score_span(*m, left, t));
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("large k approaches the uniform i.i.d. limit") {
  const auto v = vocab_of({"a", "b", "c"});
  const auto m = train_lm({"a b", "c"}, v, 2, 1e9);
  const auto s = tokenize("a c b b", *v);
  CHECK(log_prob(*m, s) == doctest::Approx(5.0 * std::log(1.0 / 4.0)).epsilon(1e-6));
}

TEST_CASE("save/load reproduces the model bit for bit") {
  test::TempDir dir;
  const auto v = vocab_of({"a", "b", "c"});
  v->save(dir / "v.json");
  const auto m = train_lm({"a b c a", "c c", "b a", "zzz a"}, v, 3, 0.3, 17);
  m->save(dir / "m.json", "v.json");
  const auto r = NgramModel::load(dir / "m.json");
  CHECK(r.order() == 3);
  CHECK(r.k() == 0.3);
  CHECK(r.max_len() == 17);
  CHECK(r.unk_outcome() == m->unk_outcome());
  CHECK(dump_json(r.to_json("v.json")) == read_file(dir / "m.json"));
  for (const auto& ids : test::all_sequences(*v, 3)) {
    const auto s = make_seq(ids, *v);
    CHECK(log_prob(r, s) == log_prob(*m, s));
  }
}

TEST_CASE("UNK becomes an outcome only when the corpus contains it") {
  const auto v = vocab_of({"a"});
  CHECK_FALSE(train_lm({"a a"}, v, 2, 1.0)->unk_outcome());
  const auto m = train_lm({"a qqq"}, v, 2, 1.0);
  CHECK(m->unk_outcome());
  CHECK(m->outcomes().size() == 3);
  CHECK(m->outcomes().back() == Vocab::kEos);
}

TEST_CASE("train validates its arguments") {
  const auto v = vocab_of({"a"});
  const auto corpus = test::seqs_of({"a"}, *v);
  CHECK_THROWS_AS(NgramModel::train(corpus, v, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(NgramModel::train(corpus, v, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(NgramModel::train(corpus, v, 2, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(NgramModel::train(std::vector<TokenSeq>{}, v, 2, 1.0), std::invalid_argument);
}
