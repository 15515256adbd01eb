#include "ebmh/mh.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ebmh/numeric.hpp"

namespace ebmh {

namespace {

[[noreturn]] void non_finite() { throw std::domain_error("non-finite acceptance ratio"); }

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

nlohmann::json number_or_null(const std::optional<double>& x) {
  return x ? number_or_null(*x) : nlohmann::json(nullptr);
}

}  // namespace

std::string_view to_string(AcceptMode mode) {
  return mode == AcceptMode::Strict ? "strict" : "identity-variant";
}

AcceptMode parse_accept_mode(std::string_view s) {
  if (s == "strict") return AcceptMode::Strict;
  if (s == "identity-variant") return AcceptMode::IdentityVariant;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

ErrorPolicy parse_error_policy(std::string_view s) {
  if (s == "reject") return ErrorPolicy::Reject;
  if (s == "abort") return ErrorPolicy::Abort;
  throw std::invalid_argument("unknown error policy '" + std::string(s) + "'");
}

double accept_prob(double e_cur, double e_cand, const ProposalRecord& rec, AcceptMode mode) {
  double numer_logq = rec.logq_reverse;
  if (mode == AcceptMode::IdentityVariant) {
    if (!rec.logq_identity) non_finite();
    numer_logq = *rec.logq_identity;
  }
  if (std::isnan(e_cand) || std::isnan(numer_logq)) non_finite();
  if (!std::isfinite(e_cur) || !std::isfinite(rec.logq_forward)) non_finite();
  if (e_cand == -kInf || numer_logq == kInf) non_finite();
  if (e_cand == kInf || numer_logq == -kInf) return 0.0;
  const double log_ratio = (e_cur - e_cand) + (numer_logq - rec.logq_forward);
  if (std::isnan(log_ratio)) non_finite();
  if (log_ratio >= 0.0) return 1.0;
  return std::exp(std::max(log_ratio, -kLogClamp));
}

nlohmann::json to_json(const TraceEntry& e) {
  nlohmann::json j;
  j["chain_id"] = e.chain_id;
  j["step"] = e.step;
  j["candidate_text"] = e.candidate_text;
  j["energy_current"] = number_or_null(e.energy_current);
  j["energy_candidate"] = number_or_null(e.energy_candidate);
  j["logq_forward"] = number_or_null(e.logq_forward);
  j["logq_reverse"] = number_or_null(e.logq_reverse);
  j["logq_identity"] = number_or_null(e.logq_identity);
  j["accept_prob"] = e.accept_prob;
  j["accepted"] = e.accepted;
  return j;
}

void MemoryTraceSink::append(const TraceEntry& entry) {
  std::lock_guard lock(mu_);
  entries_.push_back(entry);
}

std::vector<TraceEntry> MemoryTraceSink::entries() const {
  std::vector<TraceEntry> out;
  {
    std::lock_guard lock(mu_);
    out = entries_;
  }
  std::stable_sort(out.begin(), out.end(), [](const TraceEntry& a, const TraceEntry& b) {
    return a.chain_id != b.chain_id ? a.chain_id < b.chain_id : a.step < b.step;
  });
  return out;
}

std::string MemoryTraceSink::to_jsonl() const {
  std::string out;
  for (const auto& e : entries()) {
    out += to_json(e).dump();
    out.push_back('\n');
  }
  return out;
}

StepOutcome step(ChainState& state, const Proposal& proposal, const EnergySpec& spec,
                 const StepOptions& opts, TraceSink* sink, int chain_id) {
  StepOutcome out;
  TraceEntry entry;
  entry.chain_id = chain_id;
  entry.step = state.step + 1;
  entry.energy_current = state.energy;

  auto fail = [&](const std::exception& ex) {
    out.error = ex.what();
    ++state.step;
    if (sink) sink->append(entry);
    if (opts.on_error == ErrorPolicy::Abort) throw;
    return out;
  };

  ProposalRecord rec;
  try {
    rec = proposal.propose(state.seq, state.rng, opts.mode == AcceptMode::IdentityVariant);
  } catch (const std::exception& ex) {
    return fail(ex);
  }
  entry.candidate_text = rec.candidate.text;
  entry.logq_forward = rec.logq_forward;
  entry.logq_reverse = rec.logq_reverse;
  entry.logq_identity = rec.logq_identity;

  double e_cand = kInf;
  double p = 0.0;
  try {
    if (!opts.admissible || opts.admissible(rec.candidate)) {
      out.energy_evaluated = true;
      e_cand = total_energy(spec, rec.candidate);
    }
    entry.energy_candidate = e_cand;
    p = accept_prob(state.energy, e_cand, rec, opts.mode);
  } catch (const std::exception& ex) {
    return fail(ex);
  }

  const double u = state.rng.uniform();
  out.accepted = u < p;
  entry.accept_prob = p;
  entry.accepted = out.accepted;
  ++state.step;
  if (out.accepted) {
    state.seq = std::move(rec.candidate);
    state.energy = e_cand;
    ++state.accepts;
  }
  if (sink) sink->append(entry);
  return out;
}

void MHConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps: must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size: must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("burn_in: must be >= 0");
  if (thin < 1) throw std::invalid_argument("thin: must be >= 1");
  if (threads < 0) throw std::invalid_argument("threads: must be >= 0");
}

const ChainState& BatchResult::best_state() const {
  if (!best) throw std::runtime_error("no chain survived");
  return chains.at(*best).final_state;
}

nlohmann::json BatchResult::summary() const {
  nlohmann::json per_chain = nlohmann::json::array();
  for (const auto& c : chains) {
    per_chain.push_back({{"chain_id", c.chain_id},
                         {"final_text", c.final_state.seq.text},
                         {"final_energy", number_or_null(c.final_state.energy)},
                         {"initial_energy", number_or_null(c.initial_energy)},
                         {"steps", c.final_state.step},
                         {"accepts", c.final_state.accepts},
                         {"energy_evals", c.energy_evals},
                         {"error", c.error ? nlohmann::json(*c.error) : nlohmann::json(nullptr)}});
  }
  nlohmann::json j;
  j["best_text"] = best ? nlohmann::json(best_state().seq.text) : nlohmann::json(nullptr);
  j["best_energy"] = best ? number_or_null(best_state().energy) : nlohmann::json(nullptr);
  j["per_chain"] = std::move(per_chain);
  return j;
}

std::optional<std::size_t> select_best(const std::vector<ChainResult>& chains) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < chains.size(); ++i) {
    const auto& c = chains[i];
    if (c.error) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = chains[*best];
    const double e = c.final_state.energy;
    const double be = b.final_state.energy;
    if (e < be || (e == be && c.chain_id < b.chain_id)) best = i;
  }
  return best;
}

BatchResult run_batch(const MHConfig& cfg, const Proposal& proposal, const EnergySpec& spec,
                      const Vocab& vocab, TraceSink* sink,
                      std::function<bool(const TokenSeq&)> admissible) {
  cfg.validate();
  validate(spec);
  const TokenSeq init = tokenize(cfg.init_text, vocab);
  if (init.empty() && !cfg.allow_empty) {
    throw std::invalid_argument("init_text: empty initial sequence requires allow_empty");
  }

  StepOptions opts;
  opts.mode = cfg.mode;
  opts.on_error = cfg.on_error;
  const bool allow_empty = cfg.allow_empty;
  opts.admissible = [allow_empty, admissible = std::move(admissible)](const TokenSeq& s) {
    if (s.empty() && !allow_empty) return false;
    return !admissible || admissible(s);
  };

  BatchResult result;
  result.chains.resize(static_cast<std::size_t>(cfg.batch_size));

  auto run_chain = [&](int chain_id) {
    ChainResult& r = result.chains[static_cast<std::size_t>(chain_id)];
    r.chain_id = chain_id;
    ChainState& state = r.final_state;
    state.seq = init;
    state.rng = Rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(chain_id)));
    try {
      state.energy = total_energy(spec, init);
      r.initial_energy = state.energy;
      for (std::int64_t s = 0; s < cfg.steps; ++s) {
        const StepOutcome o = step(state, proposal, spec, opts, sink, chain_id);
        if (o.energy_evaluated) ++r.energy_evals;
        if (cfg.collect_samples && state.step > cfg.burn_in &&
            (state.step - cfg.burn_in) % cfg.thin == 0) {
          r.samples.push_back(state.seq);
        }
      }
    } catch (const std::exception& ex) {
      r.error = ex.what();
    }
  };

  unsigned workers = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cfg.batch_size));
  if (workers <= 1) {
    for (int c = 0; c < cfg.batch_size; ++c) run_chain(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < cfg.batch_size; c = next++) run_chain(c);
      });
    }
  }

  for (const auto& c : result.chains) result.energy_evals += c.energy_evals;
  result.best = select_best(result.chains);
  return result;
}

std::vector<TokenSeq> enumerate_space(const Vocab& vocab, int max_len) {
  std::vector<TokenSeq> out;
  const std::size_t v = vocab.size();
  for (int len = 0; len <= max_len; ++len) {
    if (len > 0 && v == 0) break;
    std::vector<std::size_t> digits(static_cast<std::size_t>(len), 0);
    while (true) {
      std::vector<TokenId> ids;
      for (std::size_t d : digits) ids.push_back(Vocab::kFirstRegular + static_cast<TokenId>(d));
      out.push_back(make_seq(std::move(ids), vocab));
      int pos = len - 1;
      while (pos >= 0 && ++digits[static_cast<std::size_t>(pos)] == v) {
        digits[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
    }
  }
  return out;
}

StationaryResult stationary_check(const EnergySpec& spec, const Proposal& proposal,
                                  const Vocab& vocab, const StationaryOptions& opts) {
  constexpr int kMaxLenCap = 3;
  if (vocab.size() > opts.max_vocab || opts.max_len > kMaxLenCap || opts.max_len < 0) {
    std::ostringstream msg;
    msg << "stationary_check: space too large (|V|=" << vocab.size() << ", max_len=" << opts.max_len
        << "); cap is |V| <= " << opts.max_vocab << ", max_len <= " << kMaxLenCap;
    throw std::invalid_argument(msg.str());
  }

  StationaryResult res;
  res.space = enumerate_space(vocab, opts.max_len);
  std::map<std::vector<TokenId>, std::size_t> index;
  std::vector<double> neg_e;
  for (std::size_t i = 0; i < res.space.size(); ++i) {
    index.emplace(res.space[i].ids, i);
    neg_e.push_back(-total_energy(spec, res.space[i]));
  }
  const double log_z = log_sum_exp(neg_e);
  for (double x : neg_e) res.exact.push_back(std::exp(x - log_z));

  MHConfig cfg;
  cfg.steps = opts.steps_per_chain;
  cfg.batch_size = opts.chains;
  cfg.mode = AcceptMode::Strict;
  cfg.seed = opts.seed;
  cfg.init_text = opts.init_text;
  cfg.burn_in = opts.burn_in;
  cfg.collect_samples = true;
  cfg.allow_empty = true;
  const int max_len = opts.max_len;
  auto in_space = [&vocab, max_len](const TokenSeq& s) {
    if (static_cast<int>(s.size()) > max_len) return false;
    return std::all_of(s.ids.begin(), s.ids.end(), [&](TokenId id) { return vocab.is_regular(id); });
  };
  const TokenSeq init = tokenize(opts.init_text, vocab);
  if (!in_space(init)) throw std::invalid_argument("stationary_check: init_text outside the space");

  const BatchResult batch = run_batch(cfg, proposal, spec, vocab, nullptr, in_space);
  std::vector<double> counts(res.space.size(), 0.0);
  double total = 0.0;
  for (const auto& c : batch.chains) {
    if (c.error) throw std::runtime_error("stationary_check: chain failed: " + *c.error);
    for (const auto& s : c.samples) {
      counts[index.at(s.ids)] += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw std::invalid_argument("stationary_check: no samples after burn-in");
  double tv = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    res.empirical.push_back(counts[i] / total);
    tv += std::abs(res.empirical[i] - res.exact[i]);
  }
  res.tv = 0.5 * tv;
  return res;
}

}  // namespace ebmh
