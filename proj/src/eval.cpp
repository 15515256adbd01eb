#include "ebmh/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "ebmh/rng.hpp"

namespace ebmh {

double j_score(std::span<const EvalRecord> records) {
  if (records.empty()) throw std::invalid_argument("j_score: empty record list");
  double sum = 0.0;
  for (const auto& r : records) sum += r.acc * r.sim * r.fl;
  return sum / static_cast<double>(records.size());
}

nlohmann::json Metrics::to_json() const {
  return {{"J", j}, {"ACC", acc}, {"SIM", sim}, {"FL", fl}, {"n", n}};
}

Metrics summarize(std::span<const EvalRecord> records) {
  Metrics m;
  m.j = j_score(records);
  m.n = records.size();
  for (const auto& r : records) {
    m.acc += r.acc;
    m.sim += r.sim;
    m.fl += r.fl;
  }
  const auto n = static_cast<double>(records.size());
  m.acc /= n;
  m.sim /= n;
  m.fl /= n;
  return m;
}

FluencyJudge::FluencyJudge(std::shared_ptr<const NgramModel> model, double threshold)
    : model_(std::move(model)), threshold_(threshold) {
  if (!model_) throw std::invalid_argument("fluency judge: missing model");
  if (std::isnan(threshold_)) throw std::invalid_argument("fluency judge: threshold is NaN");
}

double FluencyJudge::per_token_nll(const TokenSeq& seq) const {
  return -log_prob(*model_, seq) / static_cast<double>(seq.size() + 1);
}

double calibrate_fluency_threshold(const NgramModel& model, std::span<const TokenSeq> corpus,
                                   double quantile) {
  if (corpus.empty()) throw std::invalid_argument("calibrate_fluency_threshold: empty corpus");
  if (!(quantile > 0.0 && quantile <= 1.0)) {
    throw std::invalid_argument("calibrate_fluency_threshold: quantile must be in (0, 1]");
  }
  std::vector<double> nll;
  nll.reserve(corpus.size());
  for (const auto& s : corpus) nll.push_back(-log_prob(model, s) / static_cast<double>(s.size() + 1));
  std::sort(nll.begin(), nll.end());
  const auto need = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(nll.size())));
  const double v = nll[std::max<std::size_t>(need, 1) - 1];
  return std::nextafter(v, std::numeric_limits<double>::infinity());
}

EvalRecord judge(const TokenSeq& source, const TokenSeq& output, const TokenSeq& target,
                 const Judges& judges) {
  EvalRecord r{source, output, target, 0, 0, 0.0};
  try {
    const auto toks = split_whitespace(output.text);
    r.acc = judges.clf->posterior(toks, judges.target_label) > 0.5 ? 1 : 0;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("judge 'acc': ") + e.what());
  }
  try {
    r.fl = judges.fluency->passes(output) ? 1 : 0;
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("judge 'fl': ") + e.what());
  }
  try {
    r.sim = judges.sim->score(output, target);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("judge 'sim': ") + e.what());
  }
  return r;
}

nlohmann::json BootstrapResult::to_json() const {
  return {{"p_value", p_value},
          {"significant", significant},
          {"resamples", resamples},
          {"metric_system", metric_a},
          {"metric_baseline", metric_b}};
}

BootstrapResult paired_bootstrap(std::span<const EvalRecord> a, std::span<const EvalRecord> b,
                                 const BootstrapOptions& opts, const Metric& metric) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_bootstrap: length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument("paired_bootstrap: empty record lists");
  if (opts.resamples < 1000) throw std::invalid_argument("paired_bootstrap: resamples must be >= 1000");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) {
    throw std::invalid_argument("paired_bootstrap: alpha must be in (0, 1)");
  }

  BootstrapResult res;
  res.resamples = opts.resamples;
  res.metric_a = metric(a);
  res.metric_b = metric(b);

  const std::size_t n = a.size();
  std::vector<EvalRecord> ra(n), rb(n);
  std::int64_t not_better = 0;
  for (std::int64_t r = 0; r < opts.resamples; ++r) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = rng.below(n);
      ra[j] = a[idx];
      rb[j] = b[idx];
    }
    if (metric(ra) <= metric(rb)) ++not_better;
  }
  res.p_value = static_cast<double>(not_better) / static_cast<double>(opts.resamples);
  res.significant = res.p_value < opts.alpha;
  return res;
}

std::vector<TsvRow> read_eval_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<TsvRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (rows.empty() && lineno == 1 && line == "source\toutput\ttarget") continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 3 tab-separated columns");
    }
    rows.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1)});
  }
  return rows;
}

}  // namespace ebmh
