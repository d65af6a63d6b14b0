#pragma once

#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "proteus/error.hpp"
#include "proteus/router.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose `_res` macro collides with
// Eigen parameter names.
#include <httplib.h>

namespace proteus {

// Latency histogram with lock-free recording. Buckets are geometric from 1us
// (ratio 1.05), so reported quantiles are bucket upper edges, within 5%.
class LatencyStats {
 public:
  static constexpr std::size_t kBuckets = 480;
  static constexpr double kFirstEdgeMs = 1e-3;
  static constexpr double kRatio = 1.05;

  void record(double ms) noexcept {
    std::size_t b = 0;
    if (ms > kFirstEdgeMs) b = static_cast<std::size_t>(std::ceil(std::log(ms / kFirstEdgeMs) / std::log(kRatio)));
    if (b >= kBuckets) b = kBuckets - 1;
    counts_[b].fetch_add(1, std::memory_order_relaxed);
    total_.fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t count() const noexcept { return total_.load(std::memory_order_relaxed); }

  static double edge(std::size_t b) noexcept { return kFirstEdgeMs * std::pow(kRatio, static_cast<double>(b)); }

  // nullopt until something was recorded.
  std::optional<double> quantile(double q) const {
    std::array<std::uint64_t, kBuckets> snap{};
    std::uint64_t n = 0;
    for (std::size_t b = 0; b < kBuckets; ++b) n += snap[b] = counts_[b].load(std::memory_order_relaxed);
    if (n == 0) return std::nullopt;
    const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(n)));
    std::uint64_t seen = 0;
    for (std::size_t b = 0; b < kBuckets; ++b) {
      seen += snap[b];
      if (seen >= std::max<std::uint64_t>(rank, 1)) return edge(b);
    }
    return edge(kBuckets - 1);
  }

  nlohmann::json to_json() const {
    auto q = [&](double p) {
      const auto v = quantile(p);
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    return {{"count", count()}, {"p50_ms", q(0.50)}, {"p95_ms", q(0.95)}, {"p99_ms", q(0.99)}};
  }

 private:
  std::array<std::atomic<std::uint64_t>, kBuckets> counts_{};
  std::atomic<std::uint64_t> total_{0};
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

inline HttpReply error_reply(int status, std::string msg) { return {status, {{"error", std::move(msg)}}}; }

// Request handling, independent of the transport so it can be exercised
// without sockets. The engine is immutable once installed.
class RouteService {
 public:
  RouteService() = default;
  explicit RouteService(std::shared_ptr<const Engine> engine) : engine_(std::move(engine)) {}

  bool loaded() const noexcept { return engine_ != nullptr; }
  const LatencyStats& stats() const noexcept { return stats_; }

  HttpReply route(const std::string& body, const std::optional<std::string>& tau_header = std::nullopt) {
    if (!engine_) return error_reply(503, "engine not loaded");
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
      return error_reply(400, "body is not valid JSON");
    }
    if (!req.is_object()) return error_reply(400, "body must be a JSON object");

    double tau = 0.0;
    if (req.contains("tau")) {
      if (!req["tau"].is_number()) return error_reply(400, "tau must be a number");
      tau = req["tau"].get<double>();
    } else if (tau_header) {
      const auto& h = *tau_header;
      const auto res = std::from_chars(h.data(), h.data() + h.size(), tau);
      if (res.ec != std::errc{} || res.ptr != h.data() + h.size() || !std::isfinite(tau))
        return error_reply(400, "X-Accuracy-Target must be a number");
    } else {
      return error_reply(400, "missing field: tau");
    }

    const auto start = std::chrono::steady_clock::now();
    RouteDecision d;
    try {
      if (req.contains("text")) {
        if (!req["text"].is_string()) return error_reply(400, "text must be a string");
        d = engine_->route_text(req["text"].get<std::string>(), tau);
      } else if (req.contains("embedding")) {
        const auto& e = req["embedding"];
        if (!e.is_array()) return error_reply(400, "embedding must be an array of numbers");
        Eigen::VectorXd z(static_cast<Eigen::Index>(e.size()));
        for (std::size_t i = 0; i < e.size(); ++i) {
          if (!e[i].is_number()) return error_reply(400, "embedding must be an array of numbers");
          z[static_cast<Eigen::Index>(i)] = e[i].get<double>();
        }
        if (static_cast<std::size_t>(z.size()) != engine_->featurizer().dim())
          return error_reply(400, "embedding length " + std::to_string(z.size()) + " != " +
                                      std::to_string(engine_->featurizer().dim()));
        d = engine_->route_embedding(z, tau);
      } else {
        return error_reply(400, "missing field: text or embedding");
      }
    } catch (const Error& e) {
      return error_reply(e.is_validation() || dynamic_cast<const LookupError*>(&e) ? 400 : 500, e.what());
    }
    stats_.record(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
    return {200, d.to_json()};
  }

  HttpReply healthz() const {
    if (!engine_) return error_reply(503, "engine not loaded");
    return {200, {{"status", "ok"}, {"k_models", engine_->pool().size()}}};
  }

  HttpReply stats_reply() const { return {200, stats_.to_json()}; }

 private:
  std::shared_ptr<const Engine> engine_;
  LatencyStats stats_;
};

// "host:port" from PROTEUS_ADDR, falling back to the given default.
inline std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("bind address must be host:port, got '" + addr + "'");
  int port = 0;
  const auto* b = addr.data() + colon + 1;
  const auto* e = addr.data() + addr.size();
  const auto res = std::from_chars(b, e, port);
  if (res.ec != std::errc{} || res.ptr != e || port < 0 || port > 65535)
    throw ConfigError("bad port in bind address '" + addr + "'");
  return {addr.substr(0, colon), port};
}

inline std::pair<std::string, int> bind_address_from_env(const std::string& fallback = "127.0.0.1:8080") {
  const char* env = std::getenv("PROTEUS_ADDR");
  return parse_bind_address(env && *env ? env : fallback);
}

inline void install_routes(httplib::Server& srv, RouteService& svc) {
  srv.set_tcp_nodelay(true);  // small JSON replies otherwise stall on delayed ACKs
  auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  srv.Post("/route", [&svc, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> header;
    if (req.has_header("X-Accuracy-Target")) header = req.get_header_value("X-Accuracy-Target");
    send(res, svc.route(req.body, header));
  });
  srv.Get("/healthz", [&svc, send](const httplib::Request&, httplib::Response& res) { send(res, svc.healthz()); });
  srv.Get("/stats", [&svc, send](const httplib::Request&, httplib::Response& res) { send(res, svc.stats_reply()); });
}

}  // namespace proteus
