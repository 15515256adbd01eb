#include "ebmh/adapter_mock.hpp"

#include <chrono>
#include <map>
#include <stdexcept>

#include <httplib.h>

#include "ebmh/vocab.hpp"

namespace ebmh::adapter {

using nlohmann::json;

double mock_logq(std::string_view src, std::string_view tgt) {
  std::map<std::string, long> diff;
  for (auto& t : split_whitespace(src)) ++diff[t];
  for (auto& t : split_whitespace(tgt)) --diff[t];
  long total = 0;
  for (const auto& [t, d] : diff) total += d < 0 ? -d : d;
  return -0.25 * (1.0 + static_cast<double>(total));
}

struct MockAdapterServer::Impl {
  httplib::Server server;
};

namespace {

json error_body(const json& req, const std::string& message) {
  json out = {{"error", message}};
  if (req.is_object() && req.contains("id")) out["id"] = req.at("id");
  return out;
}

}  // namespace

MockAdapterServer::MockAdapterServer(MockBehavior behavior, int port)
    : impl_(std::make_unique<Impl>()), behavior_(std::move(behavior)) {
  impl_->server.Post("/v1/adapter", [this](const httplib::Request& req, httplib::Response& res) {
    const std::size_t n = requests_.fetch_add(1);
    const auto& b = behavior_;
    if (static_cast<int>(n) < b.delayed_requests && b.delay_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(b.delay_ms));
    }
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      res.status = 400;
      res.set_content(error_body(json(), "request is not valid JSON").dump(), "application/json");
      return;
    }
    if (static_cast<int>(n) < b.fail_first) {
      res.status = 500;
      res.set_content(error_body(body, "scripted failure").dump(), "application/json");
      return;
    }
    if (b.handler) {
      res.set_content(b.handler(body).dump(), "application/json");
      return;
    }
    const std::string op = body.value("op", "");
    json out = {{"id", b.corrupt_id ? json(-1) : body.value("id", json())}};
    auto too_long = [&](const std::string& text) {
      return split_whitespace(text).size() > b.max_tokens;
    };
    if (op == "propose") {
      const std::string text = body.value("text", "");
      if (too_long(text)) {
        res.status = 413;
        res.set_content(error_body(body, "input too long").dump(), "application/json");
        return;
      }
      const std::string cand = b.candidates.empty() ? text : b.candidates[n % b.candidates.size()];
      out["text"] = cand;
      out["logq_forward"] = b.force_logq_forward.value_or(mock_logq(text, cand));
      out["logq_reverse"] = mock_logq(cand, text);
      if (!b.drop_logq_identity) out["logq_identity"] = mock_logq(text, text);
      if (b.emit_nan) {
        std::string s = out.dump();
        const auto pos = s.find("\"logq_forward\":");
        const auto end = s.find_first_of(",}", pos);
        s.replace(pos, end - pos, "\"logq_forward\":NaN");
        res.set_content(s, "application/json");
        return;
      }
    } else if (op == "energy") {
      const std::string text = body.value("text", "");
      if (too_long(text)) {
        res.status = 413;
        res.set_content(error_body(body, "input too long").dump(), "application/json");
        return;
      }
      const std::string term = body.value("term", "");
      out["energy"] = b.energy ? b.energy(text, term)
                               : 0.1 * static_cast<double>(split_whitespace(text).size());
    } else if (op == "score") {
      out["logq"] = mock_logq(body.value("src", ""), body.value("tgt", ""));
    } else {
      res.status = 400;
      res.set_content(error_body(body, "unknown op '" + op + "'").dump(), "application/json");
      return;
    }
    res.set_content(out.dump(), "application/json");
  });
  impl_->server.Get("/v1/info", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"max_inflight", 8}, {"model", "mock"}}.dump(), "application/json");
  });

  if (port == 0) {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    port_ = impl_->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("mock adapter: cannot bind 127.0.0.1");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockAdapterServer::~MockAdapterServer() { stop(); }

std::string MockAdapterServer::endpoint() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1/adapter";
}

void MockAdapterServer::wait() {
  if (thread_.joinable()) thread_.join();
}

void MockAdapterServer::stop() {
  impl_->server.stop();
  if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
}

}  // namespace ebmh::adapter
