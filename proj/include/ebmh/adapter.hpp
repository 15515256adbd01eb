#pragma once

/**
 * Client side of the adapter protocol.
 *
 * One JSON object per HTTP POST to <endpoint> (default path /v1/adapter),
 * dispatched on "op":
 *
 *   propose  {"op","id","text","params"} -> {"id","text","logq_forward","logq_reverse","logq_identity"}
 *   energy   {"op","id","text","term"[,"ref"]} -> {"id","energy"}
 *   score    {"op","id","src","tgt"}     -> {"id","logq"}
 *
 * Every response must echo the request id. Log-probabilities must be finite
 * and <= 0. A server rejects a request with a non-200 status and a body of
 * the form {"id": ..., "error": "<message>"}.
 *
 * The client only transports and validates; it never interprets text.
 */

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ebmh::adapter {

inline constexpr std::string_view kDefaultEndpoint = "http://127.0.0.1:8750/v1/adapter";
inline constexpr std::string_view kEndpointEnvVar = "EBMH_ADAPTER_URL";

enum class ErrorKind {
  Timeout,     ///< no response within the timeout, after retries
  HttpStatus,  ///< server answered with a non-200 status
  Schema,      ///< response body violates the protocol schema
  NonFinite,   ///< a numeric field is NaN or infinite
  Transport,   ///< connection refused, reset, or a bad endpoint
};

std::string_view to_string(ErrorKind kind);

class AdapterError : public std::runtime_error {
 public:
  AdapterError(ErrorKind kind, const std::string& what, int status = 0)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), status_(status) {}
  ErrorKind kind() const { return kind_; }
  /// HTTP status for HttpStatus errors, else 0.
  int status() const { return status_; }

 private:
  ErrorKind kind_;
  int status_;
};

struct ClientOptions {
  std::string endpoint = std::string(kDefaultEndpoint);
  std::chrono::milliseconds timeout{10000};
  /// Extra attempts after a timeout or transport failure.
  int retries = 1;
  /// Concurrent in-flight request limit.
  int max_inflight = 4;
};

/// Endpoint from EBMH_ADAPTER_URL when set, else `fallback`.
std::string endpoint_from_env(std::string_view fallback = kDefaultEndpoint);

struct ProposeResponse {
  std::string text;
  double logq_forward = 0.0;
  double logq_reverse = 0.0;
  /// Absent when the server omits it; identity-variant acceptance needs it.
  std::optional<double> logq_identity;
};

/// Check a response body against the schema for the request's op.
/// Throws AdapterError(Schema | NonFinite).
void validate_response(const nlohmann::json& request, const nlohmann::json& response);

class AdapterClient {
 public:
  explicit AdapterClient(ClientOptions options);
  ~AdapterClient();
  AdapterClient(const AdapterClient&) = delete;
  AdapterClient& operator=(const AdapterClient&) = delete;

  const ClientOptions& options() const { return options_; }

  /// POST one request, assign it a fresh id, validate the response.
  nlohmann::json call(nlohmann::json request) const;

  ProposeResponse propose(std::string_view text,
                          const nlohmann::json& params = nlohmann::json::object()) const;
  double energy(std::string_view text, std::string_view term,
                std::optional<std::string_view> ref = std::nullopt) const;
  double score(std::string_view src, std::string_view tgt) const;

 private:
  std::string post_once(const std::string& body) const;

  ClientOptions options_;
  std::string scheme_host_port_;
  std::string path_;
  mutable std::atomic<std::uint64_t> next_id_{1};
  mutable std::unique_ptr<std::counting_semaphore<1024>> inflight_;
};

}  // namespace ebmh::adapter
