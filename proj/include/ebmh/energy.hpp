#pragma once

/**
 * Product-of-experts energies.
 *
 *     E(X) = sum_i weight_i * E_i(X)
 *
 * Each E_i is an opaque evaluator. Terms with zero weight are skipped, so a
 * failing or non-finite evaluator with weight 0 contributes exactly 0.
 */

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ebmh/vocab.hpp"

namespace ebmh {

class NgramModel;
class StyleClassifier;
class SimilarityScorer;

/// Failure of one energy term; carries the term's name.
class EnergyError : public std::runtime_error {
 public:
  EnergyError(std::string term, const std::string& what)
      : std::runtime_error("energy term '" + term + "': " + what), term_(std::move(term)) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

using Evaluator = std::function<double(const TokenSeq&)>;

struct EnergyTerm {
  std::string name;
  double weight = 1.0;
  Evaluator evaluate;
};

struct EnergySpec {
  std::vector<EnergyTerm> terms;
  /// Anchor for similarity terms (the seed sentence of a revision energy).
  std::optional<TokenSeq> seed_text;
};

/// Throws std::invalid_argument when the spec has no terms, a term has no
/// evaluator, or a weight is not finite.
void validate(const EnergySpec& spec);

/// Weighted sum of the term energies. Throws EnergyError naming the term
/// when an evaluator throws or returns a non-finite value.
double total_energy(const EnergySpec& spec, const TokenSeq& seq);

/// Per-term weighted contributions, in term order.
std::vector<double> term_energies(const EnergySpec& spec, const TokenSeq& seq);

EnergyTerm constant_term(std::string name, double weight, double value);

/// -log P(X) under the model.
EnergyTerm ngram_nll_term(std::string name, double weight,
                          std::shared_ptr<const NgramModel> model);

/// -log p(target_label | X).
EnergyTerm disc_term(std::string name, double weight, std::shared_ptr<const StyleClassifier> clf,
                     std::string target_label);

/// Inverse similarity to `seed`.
EnergyTerm sim_term(std::string name, double weight, std::shared_ptr<const SimilarityScorer> scorer,
                    TokenSeq seed);

/// Lookup by normalized text; sequences not listed get `fallback`.
EnergyTerm table_term(std::string name, double weight, std::map<std::string, double> table,
                      double fallback);

/// Revision energy: alpha * E_disc(X') + beta * E_sim(seed, X').
EnergySpec revision_energy(std::shared_ptr<const StyleClassifier> clf, std::string target_label,
                           std::shared_ptr<const SimilarityScorer> scorer, TokenSeq seed,
                           double alpha = 20.0, double beta = 120.0);

}  // namespace ebmh
