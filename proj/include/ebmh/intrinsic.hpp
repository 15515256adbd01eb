#pragma once

// Sampler quality against an exactly samplable n-gram target: every
// sampler's output energies are compared with those of ancestral samples.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ebmh/mh.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/proposal.hpp"

namespace ebmh {

struct SamplerSpec {
  enum class Kind { MH, Ancestral };

  std::string name;
  Kind kind = Kind::MH;
  /// MH: one sample per chain, the chain's final state.
  MHConfig cfg;
  std::shared_ptr<const Proposal> proposal;
  /// Ancestral: number of samples, drawn with Rng(cfg.seed).
  std::int64_t samples = 0;
};

struct SamplerStats {
  std::string name;
  std::vector<double> energies;
  double mean = 0.0;
  double stddev = 0.0;
  /// Target-energy evaluations (MH) or next-token distributions (ancestral).
  std::int64_t forward_passes = 0;
  std::int64_t truncated = 0;
  std::vector<std::string> errors;
};

struct IntrinsicReport {
  SamplerStats exact;
  std::vector<SamplerStats> samplers;

  const SamplerStats& sampler(const std::string& name) const;
  /// |mean(sampler) - mean(exact)|.
  double mean_gap(const std::string& name) const;
  nlohmann::json to_json() const;
  /// "sampler,sample_id,energy" rows, exact samples first.
  std::string histogram_csv() const;
};

/// Energy is the target's negative log-likelihood. Exact samples come from
/// Rng(derive_seed(seed, 0)).
IntrinsicReport intrinsic_eval(std::shared_ptr<const NgramModel> target,
                               std::span<const SamplerSpec> samplers, std::int64_t exact_n,
                               std::uint64_t seed);

}  // namespace ebmh
