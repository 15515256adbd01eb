#include "ebmh/energy.hpp"

#include <cmath>

#include "ebmh/classifier.hpp"
#include "ebmh/ngram.hpp"
#include "ebmh/similarity.hpp"

namespace ebmh {

void validate(const EnergySpec& spec) {
  if (spec.terms.empty()) throw std::invalid_argument("energy spec has no terms");
  for (const auto& t : spec.terms) {
    if (!t.evaluate) throw std::invalid_argument("energy term '" + t.name + "' has no evaluator");
    if (!std::isfinite(t.weight)) {
      throw std::invalid_argument("energy term '" + t.name + "' has a non-finite weight");
    }
  }
}

std::vector<double> term_energies(const EnergySpec& spec, const TokenSeq& seq) {
  std::vector<double> out;
  out.reserve(spec.terms.size());
  for (const auto& t : spec.terms) {
    if (t.weight == 0.0) {
      out.push_back(0.0);
      continue;
    }
    double e = 0.0;
    try {
      e = t.evaluate(seq);
    } catch (const EnergyError&) {
      throw;
    } catch (const std::exception& ex) {
      throw EnergyError(t.name, ex.what());
    }
    if (!std::isfinite(e)) throw EnergyError(t.name, "non-finite energy");
    out.push_back(t.weight * e);
  }
  return out;
}

double total_energy(const EnergySpec& spec, const TokenSeq& seq) {
  double total = 0.0;
  for (double e : term_energies(spec, seq)) total += e;
  return total;
}

EnergyTerm constant_term(std::string name, double weight, double value) {
  return {std::move(name), weight, [value](const TokenSeq&) { return value; }};
}

EnergyTerm ngram_nll_term(std::string name, double weight,
                          std::shared_ptr<const NgramModel> model) {
  return {std::move(name), weight,
          [model = std::move(model)](const TokenSeq& seq) { return -log_prob(*model, seq); }};
}

EnergyTerm disc_term(std::string name, double weight, std::shared_ptr<const StyleClassifier> clf,
                     std::string target_label) {
  clf->index_of(target_label);  // fail at construction on an unknown label
  return {std::move(name), weight,
          [clf = std::move(clf), label = std::move(target_label)](const TokenSeq& seq) {
            return disc_energy(*clf, split_whitespace(seq.text), label);
          }};
}

EnergyTerm sim_term(std::string name, double weight, std::shared_ptr<const SimilarityScorer> scorer,
                    TokenSeq seed) {
  if (seed.empty()) throw std::invalid_argument("similarity term requires a non-empty seed");
  return {std::move(name), weight,
          [scorer = std::move(scorer), seed = std::move(seed)](const TokenSeq& seq) {
            return sim_energy(*scorer, seed, seq);
          }};
}

EnergyTerm table_term(std::string name, double weight, std::map<std::string, double> table,
                      double fallback) {
  return {std::move(name), weight,
          [table = std::move(table), fallback](const TokenSeq& seq) {
            auto it = table.find(seq.text);
            return it == table.end() ? fallback : it->second;
          }};
}

EnergySpec revision_energy(std::shared_ptr<const StyleClassifier> clf, std::string target_label,
                           std::shared_ptr<const SimilarityScorer> scorer, TokenSeq seed,
                           double alpha, double beta) {
  EnergySpec spec;
  spec.terms.push_back(disc_term("disc", alpha, std::move(clf), std::move(target_label)));
  spec.terms.push_back(sim_term("sim", beta, std::move(scorer), seed));
  spec.seed_text = std::move(seed);
  return spec;
}

}  // namespace ebmh
