#include "ebmh/adapter.hpp"

#include <cmath>
#include <cstdlib>

#include <httplib.h>

namespace ebmh::adapter {

namespace {

using nlohmann::json;

struct SemaphoreGuard {
  explicit SemaphoreGuard(std::counting_semaphore<1024>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  std::counting_semaphore<1024>& sem;
};

double require_number(const json& response, const char* field) {
  if (!response.contains(field)) {
    throw AdapterError(ErrorKind::Schema, std::string("missing field '") + field + "'");
  }
  const json& v = response.at(field);
  if (!v.is_number()) {
    throw AdapterError(ErrorKind::Schema, std::string("field '") + field + "' is not a number");
  }
  const double x = v.get<double>();
  if (!std::isfinite(x)) {
    throw AdapterError(ErrorKind::NonFinite, std::string("field '") + field + "' is not finite");
  }
  return x;
}

double require_log_prob(const json& response, const char* field) {
  const double x = require_number(response, field);
  if (x > 0.0) {
    throw AdapterError(ErrorKind::Schema,
                       std::string("invalid log-probability: '") + field + "' > 0");
  }
  return x;
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::out_of_range&) {
    throw AdapterError(ErrorKind::NonFinite, "numeric literal out of range");
  } catch (const json::parse_error&) {
    if (body.find("NaN") != std::string::npos || body.find("Infinity") != std::string::npos) {
      throw AdapterError(ErrorKind::NonFinite, "non-finite numeric literal");
    }
    throw AdapterError(ErrorKind::Schema, "response is not valid JSON");
  }
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::HttpStatus: return "http-status";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::Transport: return "transport";
  }
  return "unknown";
}

std::string endpoint_from_env(std::string_view fallback) {
  const char* env = std::getenv(std::string(kEndpointEnvVar).c_str());
  if (env != nullptr && *env != '\0') return env;
  return std::string(fallback);
}

void validate_response(const json& request, const json& response) {
  if (!response.is_object()) throw AdapterError(ErrorKind::Schema, "response is not an object");
  if (!response.contains("id") || response.at("id") != request.at("id")) {
    throw AdapterError(ErrorKind::Schema, "response does not echo the request id");
  }
  if (response.contains("error")) {
    throw AdapterError(ErrorKind::Schema, "server reported error with status 200: " +
                                              response.at("error").dump());
  }
  const std::string op = request.at("op").get<std::string>();
  if (op == "propose") {
    if (!response.contains("text") || !response.at("text").is_string()) {
      throw AdapterError(ErrorKind::Schema, "missing string field 'text'");
    }
    require_log_prob(response, "logq_forward");
    require_log_prob(response, "logq_reverse");
    if (response.contains("logq_identity")) require_log_prob(response, "logq_identity");
  } else if (op == "energy") {
    require_number(response, "energy");
  } else if (op == "score") {
    require_log_prob(response, "logq");
  }
}

AdapterClient::AdapterClient(ClientOptions options) : options_(std::move(options)) {
  const std::string_view ep = options_.endpoint;
  constexpr std::string_view scheme = "http://";
  if (ep.substr(0, scheme.size()) != scheme) {
    throw AdapterError(ErrorKind::Transport, "endpoint must start with http://: " + options_.endpoint);
  }
  const auto slash = ep.find('/', scheme.size());
  scheme_host_port_ = std::string(ep.substr(0, slash));
  path_ = slash == std::string_view::npos ? "/v1/adapter" : std::string(ep.substr(slash));
  if (options_.max_inflight < 1 || options_.max_inflight > 1024) {
    throw std::invalid_argument("adapter: max_inflight must be in [1, 1024]");
  }
  if (options_.retries < 0) throw std::invalid_argument("adapter: retries must be >= 0");
  inflight_ = std::make_unique<std::counting_semaphore<1024>>(options_.max_inflight);
}

AdapterClient::~AdapterClient() = default;

std::string AdapterClient::post_once(const std::string& body) const {
  httplib::Client cli(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  auto res = cli.Post(path_, body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw AdapterError(ErrorKind::Timeout, "no response from " + options_.endpoint);
    }
    throw AdapterError(ErrorKind::Transport, httplib::to_string(err) + " (" + options_.endpoint + ")");
  }
  if (res->status != 200) {
    std::string message = res->body;
    try {
      const auto j = json::parse(res->body);
      if (j.contains("error")) message = j.at("error").is_string() ? j.at("error").get<std::string>()
                                                                   : j.at("error").dump();
    } catch (const json::exception&) {
    }
    throw AdapterError(ErrorKind::HttpStatus,
                       "status " + std::to_string(res->status) + ": " + message, res->status);
  }
  return res->body;
}

json AdapterClient::call(json request) const {
  request["id"] = next_id_.fetch_add(1);
  const std::string body = request.dump();
  SemaphoreGuard guard(*inflight_);
  for (int attempt = 0;; ++attempt) {
    try {
      json response = parse_body(post_once(body));
      validate_response(request, response);
      return response;
    } catch (const AdapterError& e) {
      const bool retryable = e.kind() == ErrorKind::Timeout || e.kind() == ErrorKind::Transport;
      if (!retryable || attempt >= options_.retries) throw;
    }
  }
}

ProposeResponse AdapterClient::propose(std::string_view text, const json& params) const {
  const json r = call({{"op", "propose"}, {"text", text}, {"params", params}});
  ProposeResponse out;
  out.text = r.at("text").get<std::string>();
  out.logq_forward = r.at("logq_forward").get<double>();
  out.logq_reverse = r.at("logq_reverse").get<double>();
  if (r.contains("logq_identity")) out.logq_identity = r.at("logq_identity").get<double>();
  return out;
}

double AdapterClient::energy(std::string_view text, std::string_view term,
                             std::optional<std::string_view> ref) const {
  json req = {{"op", "energy"}, {"text", text}, {"term", term}};
  if (ref) req["ref"] = *ref;
  return call(std::move(req)).at("energy").get<double>();
}

double AdapterClient::score(std::string_view src, std::string_view tgt) const {
  return call({{"op", "score"}, {"src", src}, {"tgt", tgt}}).at("logq").get<double>();
}

}  // namespace ebmh::adapter
