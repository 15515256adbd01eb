#include "ebmh/classifier.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "ebmh/io.hpp"
#include "ebmh/vocab.hpp"

namespace ebmh {

namespace {

// log(1 + exp(x)), stable for both signs.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

StyleClassifier::FeatureTable estimate(const std::map<std::string, long long>& counts,
                                       const std::set<std::string>& feature_space, double alpha) {
  long long n = 0;
  for (const auto& [f, c] : counts) n += c;
  // One extra slot for the unseen bucket.
  const double denom = static_cast<double>(n) + alpha * static_cast<double>(feature_space.size() + 1);
  StyleClassifier::FeatureTable table;
  for (const auto& f : feature_space) {
    auto it = counts.find(f);
    const double c = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    table.log_probs.emplace(f, std::log((c + alpha) / denom));
  }
  table.unseen_log_prob = std::log(alpha / denom);
  return table;
}

nlohmann::json table_json(const StyleClassifier::FeatureTable& t) {
  const std::map<std::string, double> sorted(t.log_probs.begin(), t.log_probs.end());
  return {{"log_probs", sorted}, {"unseen", t.unseen_log_prob}};
}

StyleClassifier::FeatureTable table_from_json(const nlohmann::json& j) {
  StyleClassifier::FeatureTable t;
  for (const auto& [f, lp] : j.at("log_probs").items()) t.log_probs.emplace(f, lp.get<double>());
  t.unseen_log_prob = j.at("unseen").get<double>();
  return t;
}

}  // namespace

std::vector<std::string> bigram_features(std::span<const std::string> tokens) {
  std::vector<std::string> out;
  std::string prev = "<s>";
  for (const auto& t : tokens) {
    out.push_back(prev + " " + t);
    prev = t;
  }
  out.push_back(prev + " </s>");
  return out;
}

StyleClassifier::StyleClassifier(std::array<ClassModel, 2> classes, bool use_bigrams)
    : classes_(std::move(classes)), use_bigrams_(use_bigrams) {
  if (classes_[0].label == classes_[1].label) {
    throw std::invalid_argument("classifier: class labels must differ");
  }
}

std::size_t StyleClassifier::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].label == label) return i;
  }
  throw std::invalid_argument("classifier: unknown label '" + std::string(label) + "'");
}

double StyleClassifier::log_joint(std::size_t cls, std::span<const std::string> tokens) const {
  const ClassModel& m = classes_.at(cls);
  double lp = m.log_prior;
  for (const auto& t : tokens) lp += m.unigrams.lookup(t);
  if (use_bigrams_) {
    for (const auto& f : bigram_features(tokens)) lp += m.bigrams.lookup(f);
  }
  return lp;
}

double StyleClassifier::log_posterior(std::span<const std::string> tokens,
                                      std::string_view label) const {
  const std::size_t target = index_of(label);
  const double mine = log_joint(target, tokens);
  const double other = log_joint(1 - target, tokens);
  return -softplus(other - mine);
}

double StyleClassifier::posterior(std::span<const std::string> tokens, std::string_view label) const {
  return std::exp(log_posterior(tokens, label));
}

nlohmann::json StyleClassifier::to_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : classes_) {
    classes.push_back({{"label", c.label},
                       {"log_prior", c.log_prior},
                       {"unigrams", table_json(c.unigrams)},
                       {"bigrams", table_json(c.bigrams)}});
  }
  return {{"use_bigrams", use_bigrams_}, {"classes", std::move(classes)}};
}

StyleClassifier StyleClassifier::from_json(const nlohmann::json& j) {
  try {
    const auto& cs = j.at("classes");
    if (cs.size() != 2) throw std::runtime_error("classifier file must hold exactly two classes");
    std::array<ClassModel, 2> classes;
    for (std::size_t i = 0; i < 2; ++i) {
      classes[i].label = cs[i].at("label").get<std::string>();
      classes[i].log_prior = cs[i].at("log_prior").get<double>();
      classes[i].unigrams = table_from_json(cs[i].at("unigrams"));
      classes[i].bigrams = table_from_json(cs[i].at("bigrams"));
    }
    return StyleClassifier(std::move(classes), j.value("use_bigrams", true));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("classifier: malformed file: ") + e.what());
  }
}

void StyleClassifier::save(const std::filesystem::path& path) const {
  write_file_atomic(path, dump_json(to_json()));
}

StyleClassifier StyleClassifier::load(const std::filesystem::path& path) {
  return from_json(read_json(path));
}

StyleClassifier train_classifier(const std::map<std::string, std::vector<std::string>>& corpus_by_class,
                                 double smoothing, bool use_bigrams, ClassPrior prior) {
  if (corpus_by_class.size() != 2) throw std::invalid_argument("missing class: need exactly two classes");
  if (!(smoothing > 0.0)) throw std::invalid_argument("classifier: smoothing must be positive");
  for (const auto& [label, lines] : corpus_by_class) {
    if (lines.empty()) throw std::invalid_argument("missing class: '" + label + "' has no examples");
  }

  struct Counts {
    std::map<std::string, long long> uni, bi;
  };
  std::array<Counts, 2> counts;
  std::set<std::string> uni_space, bi_space;
  std::array<std::string, 2> labels;
  std::array<double, 2> n_docs{};
  std::size_t i = 0;
  for (const auto& [label, lines] : corpus_by_class) {
    labels[i] = label;
    n_docs[i] = static_cast<double>(lines.size());
    for (const auto& line : lines) {
      const auto toks = split_whitespace(line);
      for (const auto& t : toks) {
        ++counts[i].uni[t];
        uni_space.insert(t);
      }
      for (auto& f : bigram_features(toks)) {
        ++counts[i].bi[f];
        bi_space.insert(std::move(f));
      }
    }
    ++i;
  }

  std::array<StyleClassifier::ClassModel, 2> classes;
  for (std::size_t c = 0; c < 2; ++c) {
    classes[c].label = labels[c];
    classes[c].log_prior = prior == ClassPrior::Uniform
                               ? std::log(0.5)
                               : std::log(n_docs[c] / (n_docs[0] + n_docs[1]));
    classes[c].unigrams = estimate(counts[c].uni, uni_space, smoothing);
    classes[c].bigrams = estimate(counts[c].bi, bi_space, smoothing);
  }
  return StyleClassifier(std::move(classes), use_bigrams);
}

double disc_energy(const StyleClassifier& clf, std::span<const std::string> tokens,
                   std::string_view target_label) {
  return -clf.log_posterior(tokens, target_label);
}

}  // namespace ebmh
