#pragma once

// Black-box conformance checks for an adapter endpoint.

#include <string>
#include <vector>

#include <json.hpp>

#include "ebmh/adapter.hpp"

namespace ebmh::adapter {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ConformanceReport {
  std::string endpoint;
  std::vector<CheckResult> checks;

  bool passed() const;
  const CheckResult& check(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Tolerance for comparing propose log-probabilities with the score op.
inline constexpr double kConsistencyTol = 1e-4;

/// Checks, in order: propose-basic, identity-field, identity-consistency,
/// forward-reverse-consistency, energy, score, long-input, unknown-op.
/// A 1000-token input passes long-input when it is handled or rejected with
/// status 413 or 400.
ConformanceReport conformance_suite(const ClientOptions& options);

}  // namespace ebmh::adapter
