#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace ebmh {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(sum(exp(x))) without overflow; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> xs) {
  double hi = -kInf;
  for (double x : xs) hi = std::max(hi, x);
  if (hi == -kInf) return -kInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

}  // namespace ebmh
