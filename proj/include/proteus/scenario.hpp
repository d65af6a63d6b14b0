#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "proteus/data_model.hpp"
#include "proteus/error.hpp"
#include "proteus/router.hpp"

namespace proteus {

enum class TraceKind { step, drift, cyclic, realistic };

inline TraceKind parse_trace_kind(const std::string& s) {
  if (s == "step") return TraceKind::step;
  if (s == "drift") return TraceKind::drift;
  if (s == "cyclic") return TraceKind::cyclic;
  if (s == "realistic") return TraceKind::realistic;
  throw ConfigError("unknown scenario kind: " + s);
}

inline const char* to_string(TraceKind k) {
  switch (k) {
    case TraceKind::step: return "step";
    case TraceKind::drift: return "drift";
    case TraceKind::cyclic: return "cyclic";
    case TraceKind::realistic: return "realistic";
  }
  return "?";
}

struct TraceParams {
  double step_from = 0.82;
  double step_to = 0.92;
  double drift_from = 0.80;
  double drift_to = 0.95;
  double cyclic_mean = 0.875;
  double cyclic_amplitude = 0.05;
  double cyclic_period = 0.0;  // positions; 0 means length / 4
  double offpeak = 0.83;
  double peak = 0.91;
  double peak_start = 0.35;  // fraction of the trace
  double peak_end = 0.75;
  double ramp_width = 15.0;  // logistic ramp scale, positions
  double jitter = 0.0;       // uniform +-jitter noise, drawn from the seed
};

struct TauTrace {
  TraceKind kind = TraceKind::step;
  std::vector<double> values;
  std::uint64_t seed = 0;
};

inline TauTrace make_trace(TraceKind kind, const TraceParams& p, std::size_t length, std::uint64_t seed) {
  if (length == 0) throw ConfigError("trace length must be positive");
  TauTrace tr{kind, std::vector<double>(length), seed};
  const double len = static_cast<double>(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double t = static_cast<double>(i);
    double v = 0.0;
    switch (kind) {
      case TraceKind::step:
        v = i < length / 2 ? p.step_from : p.step_to;
        break;
      case TraceKind::drift:
        v = length == 1 ? p.drift_from : p.drift_from + (p.drift_to - p.drift_from) * t / (len - 1.0);
        break;
      case TraceKind::cyclic: {
        const double period = p.cyclic_period > 0.0 ? p.cyclic_period : len / 4.0;
        v = p.cyclic_mean + p.cyclic_amplitude * std::sin(2.0 * std::numbers::pi * t / period);
        break;
      }
      case TraceKind::realistic: {
        auto ramp = [&](double centre) { return 1.0 / (1.0 + std::exp(-(t - centre) / p.ramp_width)); };
        v = p.offpeak + (p.peak - p.offpeak) * (ramp(p.peak_start * len) - ramp(p.peak_end * len));
        break;
      }
    }
    tr.values[i] = v;
  }
  if (p.jitter > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-p.jitter, p.jitter);
    for (auto& v : tr.values) v += u(rng);
  }
  for (auto& v : tr.values) v = std::clamp(v, 0.0, 1.0);
  return tr;
}

struct ScenarioStep {
  double tau = 0.0;
  double mu = 0.0;
  std::size_t model_index = 0;
  double expected_accuracy = 0.0;
  double cost = 0.0;
  std::string query_id;
};

struct ScenarioResult {
  std::uint64_t seed = 0;
  std::vector<ScenarioStep> steps;
  std::size_t window = 50;
  std::vector<double> window_accuracy;
  std::vector<double> window_tau;
  double floor_satisfaction = 0.0;  // fraction of windows with accuracy >= mean tau
  double mean_overshoot = 0.0;      // mean (accuracy - tau) over satisfied windows
  double mean_accuracy = 0.0;
  double mean_cost = 0.0;

  nlohmann::json summary_json() const {
    return {{"seed", seed},
            {"length", steps.size()},
            {"window", window},
            {"floor_satisfaction", floor_satisfaction},
            {"mean_overshoot", mean_overshoot},
            {"mean_accuracy", mean_accuracy},
            {"cost_per_1k", mean_cost * 1000.0},
            {"window_accuracy", window_accuracy},
            {"window_tau", window_tau}};
  }

  std::string positions_jsonl() const {
    std::string out;
    for (std::size_t t = 0; t < steps.size(); ++t) {
      const auto& s = steps[t];
      out += nlohmann::json{{"seed", seed},
                            {"position", t},
                            {"query_id", s.query_id},
                            {"tau", s.tau},
                            {"mu", s.mu},
                            {"model_index", s.model_index},
                            {"expected_accuracy", s.expected_accuracy},
                            {"cost", s.cost}}
                 .dump();
      out += '\n';
    }
    return out;
  }
};

// Query rows drawn for one seed: a seeded permutation prefix when the split is
// large enough, sampling with replacement otherwise.
inline std::vector<std::size_t> scenario_sample(const SplitView& split, std::size_t length, std::uint64_t seed) {
  if (split.empty()) throw ValidationError("scenario: empty split");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> rows;
  if (split.size() >= length) {
    std::vector<std::size_t> perm(split.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(length));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, split.size() - 1);
    for (std::size_t i = 0; i < length; ++i) rows.push_back(pick(rng));
  }
  return rows;
}

inline void summarize_windows(ScenarioResult& r) {
  const std::size_t n = r.steps.size();
  r.window_accuracy.clear();
  r.window_tau.clear();
  int satisfied = 0;
  double overshoot = 0.0;
  for (std::size_t start = 0; start < n; start += r.window) {
    const std::size_t end = std::min(n, start + r.window);
    double acc = 0.0, tau = 0.0;
    for (std::size_t t = start; t < end; ++t) {
      acc += r.steps[t].expected_accuracy;
      tau += r.steps[t].tau;
    }
    acc /= static_cast<double>(end - start);
    tau /= static_cast<double>(end - start);
    r.window_accuracy.push_back(acc);
    r.window_tau.push_back(tau);
    if (acc >= tau) {
      ++satisfied;
      overshoot += acc - tau;
    }
  }
  r.floor_satisfaction = r.window_accuracy.empty() ? 0.0 : satisfied / static_cast<double>(r.window_accuracy.size());
  r.mean_overshoot = satisfied > 0 ? overshoot / satisfied : 0.0;
  r.mean_accuracy = 0.0;
  r.mean_cost = 0.0;
  for (const auto& s : r.steps) {
    r.mean_accuracy += s.expected_accuracy;
    r.mean_cost += s.cost;
  }
  if (n > 0) {
    r.mean_accuracy /= static_cast<double>(n);
    r.mean_cost /= static_cast<double>(n);
  }
}

// Replays a tau trace through a frozen engine: position t is routed with
// tau = trace[t] and nothing else from the trace.
inline std::vector<ScenarioResult> run_scenario(const Engine& engine, const SplitView& split, const TauTrace& trace,
                                                const std::vector<std::uint64_t>& seeds, std::size_t window = 50) {
  if (window == 0) throw ConfigError("scenario window must be positive");
  std::vector<ScenarioResult> results;
  for (std::uint64_t seed : seeds) {
    ScenarioResult r;
    r.seed = seed;
    r.window = window;
    const auto rows = scenario_sample(split, trace.values.size(), seed);
    r.steps.reserve(rows.size());
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const QueryRecord& rec = split[rows[t]];
      const auto d = engine.route_record(rec, trace.values[t]);
      r.steps.push_back({trace.values[t], d.mu, d.model_index, rec.labels[d.model_index], d.cost_of_choice, rec.query_id});
    }
    summarize_windows(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace proteus
