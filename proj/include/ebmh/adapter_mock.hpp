#pragma once

/**
 * Scripted in-process adapter server for tests, conformance runs and demos.
 *
 * The default behaviour is protocol-conformant: proposals cycle through the
 * configured candidates (echoing the input when none are configured) and all
 * log-probabilities come from mock_logq, so forward, reverse and identity
 * values agree with the score op. Knobs inject specific faults.
 */

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

namespace ebmh::adapter {

/// log q(tgt | src) of the mock proposal: -0.25 * (1 + symmetric token
/// multiset difference). Always <= -0.25.
double mock_logq(std::string_view src, std::string_view tgt);

struct MockBehavior {
  /// Proposal texts, used round-robin. Empty: echo the input.
  std::vector<std::string> candidates;
  bool drop_logq_identity = false;
  /// Overrides logq_forward in proposals (e.g. 0.1 to break the contract).
  std::optional<double> force_logq_forward;
  /// The first `delayed_requests` requests sleep `delay_ms` before answering.
  int delay_ms = 0;
  int delayed_requests = 0;
  /// The first `fail_first` requests answer 500.
  int fail_first = 0;
  bool corrupt_id = false;
  /// Emit a literal NaN for logq_forward.
  bool emit_nan = false;
  /// Inputs longer than this many tokens are rejected with 413.
  std::size_t max_tokens = 4096;
  /// Energy for (text, term). Default: 0.1 per token.
  std::function<double(std::string_view, std::string_view)> energy;
  /// Replaces all of the above when set; returns the response body.
  std::function<nlohmann::json(const nlohmann::json&)> handler;
};

class MockAdapterServer {
 public:
  /// Binds to 127.0.0.1 on an ephemeral port (or `port` when nonzero) and
  /// starts serving on a background thread.
  explicit MockAdapterServer(MockBehavior behavior = {}, int port = 0);
  ~MockAdapterServer();
  MockAdapterServer(const MockAdapterServer&) = delete;
  MockAdapterServer& operator=(const MockAdapterServer&) = delete;

  int port() const { return port_; }
  std::string endpoint() const;
  std::size_t requests() const { return requests_.load(); }
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  MockBehavior behavior_;
  int port_ = 0;
  std::atomic<std::size_t> requests_{0};
  std::thread thread_;
};

}  // namespace ebmh::adapter
