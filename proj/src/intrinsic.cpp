#include "ebmh/intrinsic.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ebmh/energy.hpp"

namespace ebmh {

namespace {

void finish(SamplerStats& s) {
  const auto n = static_cast<double>(s.energies.size());
  if (s.energies.empty()) return;
  double sum = 0.0;
  for (double e : s.energies) sum += e;
  s.mean = sum / n;
  double ss = 0.0;
  for (double e : s.energies) ss += (e - s.mean) * (e - s.mean);
  s.stddev = s.energies.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

SamplerStats ancestral_stats(const NgramModel& model, std::string name, std::int64_t n,
                             std::uint64_t seed) {
  SamplerStats s;
  s.name = std::move(name);
  Rng rng(seed);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto draw = ancestral_sample(model, rng);
    s.energies.push_back(-log_prob(model, draw.seq));
    s.forward_passes += draw.forward_passes;
    if (draw.truncated) ++s.truncated;
  }
  finish(s);
  return s;
}

nlohmann::json stats_json(const SamplerStats& s) {
  return {{"name", s.name},
          {"n", s.energies.size()},
          {"mean", s.mean},
          {"stddev", s.stddev},
          {"forward_passes", s.forward_passes},
          {"truncated", s.truncated},
          {"errors", s.errors},
          {"energies", s.energies}};
}

}  // namespace

const SamplerStats& IntrinsicReport::sampler(const std::string& name) const {
  for (const auto& s : samplers) {
    if (s.name == name) return s;
  }
  throw std::out_of_range("no sampler named '" + name + "'");
}

double IntrinsicReport::mean_gap(const std::string& name) const {
  return std::abs(sampler(name).mean - exact.mean);
}

nlohmann::json IntrinsicReport::to_json() const {
  nlohmann::json out;
  out["exact"] = stats_json(exact);
  out["samplers"] = nlohmann::json::array();
  for (const auto& s : samplers) {
    auto j = stats_json(s);
    j["mean_gap"] = std::abs(s.mean - exact.mean);
    out["samplers"].push_back(std::move(j));
  }
  return out;
}

std::string IntrinsicReport::histogram_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "sampler,sample_id,energy\n";
  auto rows = [&](const SamplerStats& s) {
    for (std::size_t i = 0; i < s.energies.size(); ++i) {
      out << s.name << ',' << i << ',' << s.energies[i] << '\n';
    }
  };
  rows(exact);
  for (const auto& s : samplers) rows(s);
  return out.str();
}

IntrinsicReport intrinsic_eval(std::shared_ptr<const NgramModel> target,
                               std::span<const SamplerSpec> samplers, std::int64_t exact_n,
                               std::uint64_t seed) {
  if (!target) throw std::invalid_argument("intrinsic_eval: missing target model");
  if (exact_n < 1) throw std::invalid_argument("intrinsic_eval: exact_n must be >= 1");

  IntrinsicReport report;
  report.exact = ancestral_stats(*target, "exact", exact_n, derive_seed(seed, 0));

  EnergySpec spec;
  spec.terms.push_back(ngram_nll_term("target", 1.0, target));

  for (const auto& sp : samplers) {
    if (sp.name == "exact") throw std::invalid_argument("intrinsic_eval: sampler name 'exact' is reserved");
    if (sp.kind == SamplerSpec::Kind::Ancestral) {
      if (sp.samples < 1) throw std::invalid_argument("sampler '" + sp.name + "': samples must be >= 1");
      report.samplers.push_back(ancestral_stats(*target, sp.name, sp.samples, sp.cfg.seed));
      continue;
    }
    if (!sp.proposal) throw std::invalid_argument("sampler '" + sp.name + "': missing proposal");
    SamplerStats s;
    s.name = sp.name;
    const BatchResult batch = run_batch(sp.cfg, *sp.proposal, spec, target->vocab());
    for (const auto& c : batch.chains) {
      if (c.error) {
        s.errors.push_back("chain " + std::to_string(c.chain_id) + ": " + *c.error);
        continue;
      }
      s.energies.push_back(c.final_state.energy);
    }
    s.forward_passes = batch.energy_evals;
    finish(s);
    report.samplers.push_back(std::move(s));
  }
  return report;
}

}  // namespace ebmh
