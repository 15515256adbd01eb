#pragma once

/**
 * Metropolis-Hastings chains over token sequences.
 *
 * Acceptance (strict):
 *
 *     a = min(1, exp(E(cur) - E(cand)) * q(cur | cand) / q(cand | cur))
 *
 * The identity variant replaces q(cur | cand) in the numerator with
 * q(cur | cur), the probability that the proposal reproduces the current
 * state. It counters proposals that mostly return their input, at the cost
 * of exactness; strict mode is the one with a stationary-distribution
 * guarantee.
 *
 * Chains in a batch are independent: each owns an Rng seeded with
 * derive_seed(seed, chain_id) and touches no shared mutable state, so a
 * parallel batch is bit-identical to a sequential one.
 */

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ebmh/energy.hpp"
#include "ebmh/proposal.hpp"
#include "ebmh/rng.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh {

enum class AcceptMode { Strict, IdentityVariant };

std::string_view to_string(AcceptMode mode);
/// Throws std::invalid_argument for anything but "strict" / "identity-variant".
AcceptMode parse_accept_mode(std::string_view s);

/// Log-space exponent clamp.
inline constexpr double kLogClamp = 700.0;

/// Acceptance probability in [0, 1].
///
/// A candidate energy of +inf or a reverse log-probability of -inf (an
/// inadmissible candidate, an unselectable reverse move) gives 0. NaN
/// anywhere, a non-finite current energy or forward log-probability, or a
/// missing logq_identity in identity-variant mode throws
/// std::domain_error("non-finite acceptance ratio").
double accept_prob(double e_cur, double e_cand, const ProposalRecord& rec, AcceptMode mode);

struct ChainState {
  TokenSeq seq;
  double energy = 0.0;
  std::int64_t step = 0;
  std::int64_t accepts = 0;
  Rng rng;
};

struct TraceEntry {
  int chain_id = 0;
  std::int64_t step = 0;
  std::string candidate_text;
  double energy_current = 0.0;
  /// Empty when the candidate was never scored (proposal or energy failure);
  /// +inf for candidates outside the admissible space.
  std::optional<double> energy_candidate;
  double logq_forward = 0.0;
  double logq_reverse = 0.0;
  std::optional<double> logq_identity;
  double accept_prob = 0.0;
  bool accepted = false;
};

/// One JSON object with exactly the TraceEntry field names. Non-finite and
/// absent numbers serialize as null.
nlohmann::json to_json(const TraceEntry& e);

/// Receives trace entries, possibly from several chains concurrently.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void append(const TraceEntry& entry) = 0;
};

/// Thread-safe in-memory sink. Output is ordered by (chain_id, step)
/// regardless of arrival order.
class MemoryTraceSink final : public TraceSink {
 public:
  void append(const TraceEntry& entry) override;
  std::vector<TraceEntry> entries() const;
  /// Newline-delimited JSON, one entry per line.
  std::string to_jsonl() const;

 private:
  mutable std::mutex mu_;
  std::vector<TraceEntry> entries_;
};

enum class ErrorPolicy { Reject, Abort };

ErrorPolicy parse_error_policy(std::string_view s);

struct StepOptions {
  AcceptMode mode = AcceptMode::Strict;
  /// Proposal or energy failures either count as a rejected step or abort.
  ErrorPolicy on_error = ErrorPolicy::Reject;
  /// Candidates failing this test are rejected without evaluating energy.
  std::function<bool(const TokenSeq&)> admissible;
};

struct StepOutcome {
  bool accepted = false;
  bool energy_evaluated = false;
  std::optional<std::string> error;
};

/// One MH transition. Always advances state.step; on acceptance replaces
/// state.seq/energy and increments state.accepts. The uniform draw comes
/// from state.rng after the proposal's own draws. With ErrorPolicy::Abort a
/// failure is rethrown after the trace entry is written.
StepOutcome step(ChainState& state, const Proposal& proposal, const EnergySpec& spec,
                 const StepOptions& opts, TraceSink* sink = nullptr, int chain_id = 0);

struct MHConfig {
  std::int64_t steps = 1;
  int batch_size = 10;
  AcceptMode mode = AcceptMode::Strict;
  std::uint64_t seed = 0;
  std::string init_text;
  /// Steps discarded before samples are recorded.
  std::int64_t burn_in = 0;
  /// Record every thin-th state after burn-in.
  std::int64_t thin = 1;
  bool collect_samples = false;
  ErrorPolicy on_error = ErrorPolicy::Reject;
  bool allow_empty = false;
  /// Worker threads; 0 = hardware concurrency.
  int threads = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct ChainResult {
  int chain_id = 0;
  ChainState final_state;
  double initial_energy = 0.0;
  std::int64_t energy_evals = 0;
  std::vector<TokenSeq> samples;
  std::optional<std::string> error;
};

struct BatchResult {
  std::vector<ChainResult> chains;
  /// Index of the lowest-energy surviving chain (ties: lowest chain id).
  std::optional<std::size_t> best;
  std::int64_t energy_evals = 0;

  const ChainState& best_state() const;
  /// {"best_text", "best_energy", "per_chain": [...]}.
  nlohmann::json summary() const;
};

/// Lowest final energy among surviving chains, ties to the lowest chain id.
std::optional<std::size_t> select_best(const std::vector<ChainResult>& chains);

/// Run cfg.batch_size independent chains from tokenize(cfg.init_text).
/// `admissible` further restricts the state space (e.g. a length cap).
BatchResult run_batch(const MHConfig& cfg, const Proposal& proposal, const EnergySpec& spec,
                      const Vocab& vocab, TraceSink* sink = nullptr,
                      std::function<bool(const TokenSeq&)> admissible = nullptr);

struct StationaryOptions {
  int max_len = 3;
  std::size_t max_vocab = 3;
  std::int64_t steps_per_chain = 5000;
  int chains = 10;
  std::int64_t burn_in = 500;
  std::uint64_t seed = 0;
  std::string init_text;
};

struct StationaryResult {
  double tv = 0.0;
  std::vector<TokenSeq> space;
  std::vector<double> exact;
  std::vector<double> empirical;
};

/// All sequences over the regular vocabulary of length <= max_len, shortest
/// first, then lexicographic by id.
std::vector<TokenSeq> enumerate_space(const Vocab& vocab, int max_len);

/// Total-variation distance between the chains' empirical state
/// distribution and exp(-E) normalized over the enumerated space. Runs in
/// strict mode; candidates outside the space are rejected. Throws
/// std::invalid_argument when the vocabulary or max_len exceeds the caps.
StationaryResult stationary_check(const EnergySpec& spec, const Proposal& proposal,
                                  const Vocab& vocab, const StationaryOptions& opts);

}  // namespace ebmh
