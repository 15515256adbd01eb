#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace ebmh {

/// Two-class naive Bayes style classifier over unigram and bigram features.
///
/// Each feature table holds smoothed log-probabilities for the features seen
/// in training plus one shared bucket for unseen features; the table and the
/// bucket together sum to one.
class StyleClassifier {
 public:
  struct FeatureTable {
    std::unordered_map<std::string, double> log_probs;
    double unseen_log_prob = 0.0;

    double lookup(const std::string& feature) const {
      auto it = log_probs.find(feature);
      return it == log_probs.end() ? unseen_log_prob : it->second;
    }
  };

  struct ClassModel {
    std::string label;
    double log_prior = 0.0;
    FeatureTable unigrams;
    FeatureTable bigrams;
  };

  StyleClassifier(std::array<ClassModel, 2> classes, bool use_bigrams);

  const std::array<ClassModel, 2>& classes() const { return classes_; }
  bool use_bigrams() const { return use_bigrams_; }
  /// Index of `label`; throws std::invalid_argument when unknown.
  std::size_t index_of(std::string_view label) const;

  /// log p(tokens, class).
  double log_joint(std::size_t cls, std::span<const std::string> tokens) const;
  /// log p(label | tokens); always < 0 for finite evidence.
  double log_posterior(std::span<const std::string> tokens, std::string_view label) const;
  double posterior(std::span<const std::string> tokens, std::string_view label) const;

  nlohmann::json to_json() const;
  static StyleClassifier from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static StyleClassifier load(const std::filesystem::path& path);

 private:
  std::array<ClassModel, 2> classes_;
  bool use_bigrams_ = true;
};

enum class ClassPrior { Uniform, Empirical };

/// Train with add-`smoothing` estimates. `corpus_by_class` must hold exactly
/// two non-empty classes; otherwise std::invalid_argument ("missing class").
StyleClassifier train_classifier(const std::map<std::string, std::vector<std::string>>& corpus_by_class,
                                 double smoothing = 1.0, bool use_bigrams = true,
                                 ClassPrior prior = ClassPrior::Uniform);

/// -log p(target_label | tokens).
double disc_energy(const StyleClassifier& clf, std::span<const std::string> tokens,
                   std::string_view target_label);

/// Bigram feature strings over the BOS/EOS-padded token list.
std::vector<std::string> bigram_features(std::span<const std::string> tokens);

}  // namespace ebmh
