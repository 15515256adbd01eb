#include "ebmh/conformance.hpp"

#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace ebmh::adapter {

namespace {

constexpr const char* kProbe = "how art thou this fine morning";

std::string describe(double got, double want) {
  std::ostringstream s;
  s.precision(10);
  s << "got " << got << ", score op gives " << want;
  return s.str();
}

}  // namespace

bool ConformanceReport::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return !checks.empty();
}

const CheckResult& ConformanceReport::check(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no check named '" + name + "'");
}

nlohmann::json ConformanceReport::to_json() const {
  nlohmann::json out = {{"endpoint", endpoint}, {"passed", passed()}};
  out["checks"] = nlohmann::json::array();
  for (const auto& c : checks) {
    out["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  }
  return out;
}

ConformanceReport conformance_suite(const ClientOptions& options) {
  ConformanceReport report;
  report.endpoint = options.endpoint;
  const AdapterClient client(options);

  auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    CheckResult r{name, false, ""};
    try {
      r.detail = body();
      r.passed = r.detail.empty();
      if (r.passed) r.detail = "ok";
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    report.checks.push_back(std::move(r));
  };

  std::optional<ProposeResponse> prop;
  run("propose-basic", [&]() -> std::string {
    prop = client.propose(kProbe);
    return "";
  });

  run("identity-field", [&]() -> std::string {
    if (!prop) return "no propose response";
    return prop->logq_identity ? "" : "response lacks logq_identity";
  });

  run("identity-consistency", [&]() -> std::string {
    if (!prop || !prop->logq_identity) return "no logq_identity to compare";
    const double want = client.score(kProbe, kProbe);
    return std::abs(*prop->logq_identity - want) <= kConsistencyTol ? ""
                                                                     : describe(*prop->logq_identity, want);
  });

  run("forward-reverse-consistency", [&]() -> std::string {
    if (!prop) return "no propose response";
    const double fwd = client.score(kProbe, prop->text);
    const double rev = client.score(prop->text, kProbe);
    if (std::abs(prop->logq_forward - fwd) > kConsistencyTol) return "forward: " + describe(prop->logq_forward, fwd);
    if (std::abs(prop->logq_reverse - rev) > kConsistencyTol) return "reverse: " + describe(prop->logq_reverse, rev);
    return "";
  });

  run("energy", [&]() -> std::string {
    client.energy(kProbe, "disc");
    return "";
  });

  run("score", [&]() -> std::string {
    client.score(kProbe, "how are you");
    return "";
  });

  run("long-input", [&]() -> std::string {
    std::string text;
    for (int i = 0; i < 1000; ++i) text += i == 0 ? "tok" : " tok";
    try {
      client.propose(text);
    } catch (const AdapterError& e) {
      if (e.kind() == ErrorKind::HttpStatus && (e.status() == 413 || e.status() == 400)) return "";
      throw;
    }
    return "";
  });

  run("unknown-op", [&]() -> std::string {
    try {
      client.call({{"op", "no-such-op"}});
    } catch (const AdapterError& e) {
      if (e.kind() == ErrorKind::HttpStatus && e.status() == 400) return "";
      return std::string("expected status 400, got ") + e.what();
    }
    return "unknown op accepted with status 200";
  });

  return report;
}

}  // namespace ebmh::adapter
