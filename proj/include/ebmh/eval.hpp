#pragma once

// Downstream style-transfer metrics and paired-bootstrap significance.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebmh/classifier.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/similarity.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh {

struct EvalRecord {
  TokenSeq source;
  TokenSeq output;
  TokenSeq target;
  int acc = 0;
  int fl = 0;
  double sim = 0.0;
};

/// Mean of acc * sim * fl. Throws std::invalid_argument on an empty list.
double j_score(std::span<const EvalRecord> records);

struct Metrics {
  double j = 0.0;
  double acc = 0.0;
  double sim = 0.0;
  double fl = 0.0;
  std::size_t n = 0;

  nlohmann::json to_json() const;
};

Metrics summarize(std::span<const EvalRecord> records);

/// Passes a sentence whose per-token NLL, -log P(seq) / (len + 1) with the
/// EOS event counted, is strictly below the threshold.
class FluencyJudge {
 public:
  FluencyJudge(std::shared_ptr<const NgramModel> model, double threshold);
  double per_token_nll(const TokenSeq& seq) const;
  bool passes(const TokenSeq& seq) const { return per_token_nll(seq) < threshold_; }
  double threshold() const { return threshold_; }
  const NgramModel& model() const { return *model_; }

 private:
  std::shared_ptr<const NgramModel> model_;
  double threshold_;
};

/// Smallest threshold that passes at least `quantile` of `corpus`.
double calibrate_fluency_threshold(const NgramModel& model, std::span<const TokenSeq> corpus,
                                   double quantile = 0.9);

struct Judges {
  std::shared_ptr<const StyleClassifier> clf;
  std::string target_label;
  std::shared_ptr<const FluencyJudge> fluency;
  std::shared_ptr<const SimilarityScorer> sim;
};

/// acc = p(target_label | output) > 0.5, fl from the fluency judge,
/// sim = score(output, target). Failures are rethrown as
/// std::runtime_error("judge '<name>': ...").
EvalRecord judge(const TokenSeq& source, const TokenSeq& output, const TokenSeq& target,
                 const Judges& judges);

struct BootstrapResult {
  double p_value = 1.0;
  bool significant = false;
  std::int64_t resamples = 0;
  double metric_a = 0.0;
  double metric_b = 0.0;

  nlohmann::json to_json() const;
};

struct BootstrapOptions {
  std::int64_t resamples = 10000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

using Metric = std::function<double(std::span<const EvalRecord>)>;

/// p_value is the fraction of paired resamples with metric(a) <= metric(b).
/// Resample r draws its indices from Rng(derive_seed(seed, r)).
BootstrapResult paired_bootstrap(std::span<const EvalRecord> a, std::span<const EvalRecord> b,
                                 const BootstrapOptions& opts = {}, const Metric& metric = j_score);

struct TsvRow {
  std::string source;
  std::string output;
  std::string target;
};

/// Three tab-separated columns per line. A first line reading exactly
/// "source\toutput\ttarget" is taken as a header. Blank lines are skipped.
std::vector<TsvRow> read_eval_tsv(const std::filesystem::path& path);

}  // namespace ebmh
