#include "ebmh/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ebmh/numeric.hpp"

namespace ebmh {

std::size_t Rng::categorical_log(std::span<const double> log_weights) {
  const double norm = log_sum_exp(log_weights);
  if (!std::isfinite(norm)) {
    throw std::invalid_argument("categorical_log: no finite weight");
  }
  std::vector<double> probs(log_weights.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(log_weights[i] - norm);
  }
  return categorical(probs);
}

std::size_t Rng::categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("categorical: weights must have positive finite sum");
  }
  const double u = uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return i;
  }
  // Rounding can leave u just above the running sum.
  return last_positive;
}

}  // namespace ebmh
