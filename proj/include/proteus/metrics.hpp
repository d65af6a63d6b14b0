#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "proteus/data_model.hpp"
#include "proteus/error.hpp"
#include "proteus/router.hpp"

namespace proteus {

struct BaselineResult {
  std::string name;
  double accuracy = 0.0;
  double mean_cost = 0.0;  // dollars per query

  nlohmann::json to_json() const {
    return {{"name", name}, {"accuracy", accuracy}, {"cost_per_1k", mean_cost * 1000.0}};
  }
};

// Per-query argmax of labels; ties go to the cheaper model, then lower index.
inline BaselineResult oracle_route(const SplitView& split) {
  if (split.empty()) throw ValidationError("oracle_route: empty split");
  const auto costs = split.pool().costs();
  BaselineResult r{"oracle"};
  for (std::size_t q = 0; q < split.size(); ++q) {
    const std::size_t m = select_model(split[q].labels, costs);
    r.accuracy += split[q].labels[m];
    r.mean_cost += costs[m];
  }
  r.accuracy /= static_cast<double>(split.size());
  r.mean_cost /= static_cast<double>(split.size());
  return r;
}

inline std::size_t best_fixed_model(const SplitView& split) {
  const auto means = column_means(split);
  return select_model(means, split.pool().costs());
}

inline BaselineResult fixed_model_baseline(const SplitView& split, std::size_t model, std::string name) {
  BaselineResult r{std::move(name)};
  for (std::size_t q = 0; q < split.size(); ++q) r.accuracy += split[q].labels[model];
  r.accuracy /= static_cast<double>(split.size());
  r.mean_cost = split.pool()[model].cost;
  return r;
}

inline BaselineResult random_baseline(const SplitView& split, std::uint64_t seed) {
  if (split.empty()) throw ValidationError("random baseline: empty split");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, split.pool().size() - 1);
  BaselineResult r{"random"};
  for (std::size_t q = 0; q < split.size(); ++q) {
    const std::size_t m = pick(rng);
    r.accuracy += split[q].labels[m];
    r.mean_cost += split.pool()[m].cost;
  }
  r.accuracy /= static_cast<double>(split.size());
  r.mean_cost /= static_cast<double>(split.size());
  return r;
}

// random, cheapest, best_fixed, oracle (in that order).
inline std::vector<BaselineResult> static_baselines(const SplitView& split, std::uint64_t seed) {
  if (split.empty()) throw ValidationError("static_baselines: empty split");
  return {random_baseline(split, seed), fixed_model_baseline(split, split.pool().cheapest(), "cheapest"),
          fixed_model_baseline(split, best_fixed_model(split), "best_fixed"), oracle_route(split)};
}

// Accuracy gain over random routing per millisecond, in percentage points.
inline double compute_re(double accuracy, double random_accuracy, double router_latency_ms) {
  if (!(router_latency_ms > 0.0)) throw DomainError("compute_re: latency must be positive");
  return 100.0 * (accuracy - random_accuracy) / router_latency_ms;
}

inline double compute_rpi(double accuracy, double oracle_accuracy, double cost, double cost_max, double t_router,
                          double t_llm) {
  auto unit = [](double x) { return std::clamp(x, 0.0, 1.0); };
  const double quality = oracle_accuracy > 0.0 ? unit(accuracy / oracle_accuracy) : 0.0;
  const double thrift = cost_max > 0.0 ? unit(1.0 - cost / cost_max) : 0.0;
  const double speed = t_router == 0.0 ? 1.0 : (t_llm > 0.0 ? unit(1.0 - t_router / t_llm) : 0.0);
  return quality * thrift * speed * 100.0;
}

// Pearson correlation; nullopt when either series is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// lo:hi:step, inclusive of hi (within rounding), values rounded to 1e-10.
inline std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw ValidationError("grid needs lo <= hi and positive step");
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> g;
  for (long i = 0; i <= n; ++i) g.push_back(std::round((lo + static_cast<double>(i) * step) * 1e10) / 1e10);
  return g;
}

inline std::vector<double> parse_grid(const std::string& spec) {
  const auto a = spec.find(':');
  const auto b = spec.find(':', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) throw ValidationError("grid must be lo:hi:step");
  try {
    return make_grid(std::stod(spec.substr(0, a)), std::stod(spec.substr(a + 1, b - a - 1)), std::stod(spec.substr(b + 1)));
  } catch (const std::invalid_argument&) {
    throw ValidationError("grid must be lo:hi:step");
  }
}

struct Tier {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

// Three equal-width tiers over [lo, hi].
inline std::vector<Tier> default_tiers(double lo, double hi) {
  const double w = (hi - lo) / 3.0;
  return {{"Economy", lo, lo + w}, {"Standard", lo + w, lo + 2 * w}, {"Premium", lo + 2 * w, hi}};
}

struct TauRow {
  double tau = 0.0;
  double accuracy = 0.0;
  double cost_per_1k = 0.0;
  double mean_mu = 0.0;
};

struct TierRow {
  std::string name;
  double tau_lo = 0.0, tau_hi = 0.0;
  double accuracy = 0.0;
  double margin = 0.0;
  double cost_per_1k = 0.0;
};

struct EvalOptions {
  std::optional<double> router_latency_ms;  // RE is reported only when given
  double llm_latency_ms = 2000.0;
  std::vector<Tier> tiers;  // defaults to three equal tiers over the grid
  std::uint64_t seed = 0;   // random baseline
  double compliance_eps = 1e-12;
};

struct EvalReport {
  std::vector<TauRow> rows;
  double floor_compliance = 0.0;
  double band_compliance_2pct = 0.0;
  double band_compliance_5pct = 0.0;
  double tau_mu_pearson = 0.0;       // over every routed (tau, mu) pair
  double tau_mean_mu_pearson = 0.0;  // over grid levels, (tau, mean mu)
  bool pearson_degenerate = false;
  double accuracy = 0.0;     // mean over grid levels
  double cost_per_1k = 0.0;  // mean over grid levels
  std::optional<double> re;
  double rpi = 0.0;
  std::vector<TierRow> tiers;
  std::vector<BaselineResult> baselines;
  std::size_t n_queries = 0;

  const BaselineResult& baseline(const std::string& name) const {
    for (const auto& b : baselines)
      if (b.name == name) return b;
    throw LookupError("no baseline named " + name);
  }

  nlohmann::json to_json() const {
    nlohmann::json rj = nlohmann::json::array();
    for (const auto& r : rows)
      rj.push_back({{"tau", r.tau}, {"accuracy", r.accuracy}, {"cost_per_1k", r.cost_per_1k}, {"mean_mu", r.mean_mu}});
    nlohmann::json tj = nlohmann::json::array();
    for (const auto& t : tiers)
      tj.push_back({{"name", t.name},
                    {"tau_range", {t.tau_lo, t.tau_hi}},
                    {"accuracy", t.accuracy},
                    {"margin", t.margin},
                    {"cost_per_1k", t.cost_per_1k}});
    nlohmann::json bj = nlohmann::json::array();
    for (const auto& b : baselines) bj.push_back(b.to_json());
    return {{"n_queries", n_queries},
            {"rows", rj},
            {"floor_compliance", floor_compliance},
            {"band_compliance_2pct", band_compliance_2pct},
            {"band_compliance_5pct", band_compliance_5pct},
            {"tau_mu_pearson", tau_mu_pearson},
            {"tau_mean_mu_pearson", tau_mean_mu_pearson},
            {"pearson_degenerate", pearson_degenerate},
            {"accuracy", accuracy},
            {"cost_per_1k", cost_per_1k},
            {"re", re ? nlohmann::json(*re) : nlohmann::json(nullptr)},
            {"rpi", rpi},
            {"tiers", tj},
            {"baselines", bj}};
  }

  std::string rows_csv() const {
    std::string out = "tau,accuracy,cost_per_1k,mean_mu\n";
    for (const auto& r : rows)
      out += nlohmann::json(r.tau).dump() + "," + nlohmann::json(r.accuracy).dump() + "," +
             nlohmann::json(r.cost_per_1k).dump() + "," + nlohmann::json(r.mean_mu).dump() + "\n";
    return out;
  }
};

// Aggregates per-level rows (and the raw tau/mu pairs) into a report.
inline EvalReport summarize(std::vector<TauRow> rows, std::span<const double> pair_tau, std::span<const double> pair_mu,
                            const SplitView& split, const EvalOptions& opt) {
  EvalReport rep;
  rep.rows = std::move(rows);
  rep.n_queries = split.size();
  const double levels = static_cast<double>(rep.rows.size());
  for (const auto& r : rep.rows) {
    if (r.accuracy + opt.compliance_eps >= r.tau) rep.floor_compliance += 1.0;
    if (std::abs(r.accuracy - r.tau) <= 0.02 + opt.compliance_eps) rep.band_compliance_2pct += 1.0;
    if (std::abs(r.accuracy - r.tau) <= 0.05 + opt.compliance_eps) rep.band_compliance_5pct += 1.0;
    rep.accuracy += r.accuracy;
    rep.cost_per_1k += r.cost_per_1k;
  }
  if (levels > 0) {
    rep.floor_compliance /= levels;
    rep.band_compliance_2pct /= levels;
    rep.band_compliance_5pct /= levels;
    rep.accuracy /= levels;
    rep.cost_per_1k /= levels;
  }
  const auto corr = pearson(pair_tau, pair_mu);
  rep.pearson_degenerate = !corr.has_value();
  rep.tau_mu_pearson = corr.value_or(0.0);
  std::vector<double> lt, lm;
  for (const auto& r : rep.rows) {
    lt.push_back(r.tau);
    lm.push_back(r.mean_mu);
  }
  rep.tau_mean_mu_pearson = pearson(lt, lm).value_or(0.0);

  rep.baselines = static_baselines(split, opt.seed);
  const auto& random = rep.baseline("random");
  const auto& oracle = rep.baseline("oracle");
  const auto& best = rep.baseline("best_fixed");
  if (opt.router_latency_ms) rep.re = compute_re(rep.accuracy, random.accuracy, *opt.router_latency_ms);
  rep.rpi = compute_rpi(rep.accuracy, oracle.accuracy, rep.cost_per_1k / 1000.0, best.mean_cost,
                        opt.router_latency_ms.value_or(0.0), opt.llm_latency_ms);

  const auto tiers = !opt.tiers.empty() || rep.rows.empty()
                         ? opt.tiers
                         : default_tiers(rep.rows.front().tau, rep.rows.back().tau);
  for (std::size_t t = 0; t < tiers.size(); ++t) {
    TierRow tr{tiers[t].name, tiers[t].lo, tiers[t].hi};
    int count = 0;
    const bool last = t + 1 == tiers.size();
    for (const auto& r : rep.rows) {
      const bool in = r.tau >= tiers[t].lo - 1e-12 && (last ? r.tau <= tiers[t].hi + 1e-12 : r.tau < tiers[t].hi - 1e-12);
      if (!in) continue;
      tr.accuracy += r.accuracy;
      tr.cost_per_1k += r.cost_per_1k;
      ++count;
    }
    if (count > 0) {
      tr.accuracy /= count;
      tr.cost_per_1k /= count;
    }
    tr.margin = tr.accuracy - tr.tau_lo;
    rep.tiers.push_back(tr);
  }
  return rep;
}

// Routes every split query at every grid tau (inference lambda) and
// aggregates the results.
inline EvalReport evaluate_policy(const Engine& engine, const SplitView& split, std::span<const double> grid,
                                  const EvalOptions& opt = {}) {
  if (split.empty()) throw ValidationError("evaluate_policy: empty split");
  for (double t : grid)
    if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("evaluate_policy: grid values must lie in [0,1]");
  const Eigen::MatrixXd z = engine.featurizer().embed_all(split);
  std::vector<TauRow> rows;
  std::vector<double> pair_tau, pair_mu;
  pair_tau.reserve(grid.size() * split.size());
  pair_mu.reserve(grid.size() * split.size());
  for (double tau : grid) {
    TauRow row{tau};
    for (std::size_t q = 0; q < split.size(); ++q) {
      const auto d = engine.route_embedding(z.col(static_cast<Eigen::Index>(q)), tau);
      row.accuracy += split[q].labels[d.model_index];
      row.cost_per_1k += d.cost_of_choice * 1000.0;
      row.mean_mu += d.mu;
      pair_tau.push_back(tau);
      pair_mu.push_back(d.mu);
    }
    const double n = static_cast<double>(split.size());
    row.accuracy /= n;
    row.cost_per_1k /= n;
    row.mean_mu /= n;
    rows.push_back(row);
  }
  return summarize(std::move(rows), pair_tau, pair_mu, split, opt);
}

// Mean wall-clock routing latency per query (featurize + forward + select).
inline double measure_route_latency_ms(const Engine& engine, const SplitView& split, double tau, std::size_t max_queries = 1000) {
  const std::size_t n = std::min(max_queries, split.size());
  if (n == 0) throw ValidationError("measure_route_latency_ms: empty split");
  const auto start = std::chrono::steady_clock::now();
  std::size_t sink = 0;
  for (std::size_t q = 0; q < n; ++q) sink += engine.route_record(split[q], tau).model_index;
  const auto end = std::chrono::steady_clock::now();
  (void)sink;
  return std::chrono::duration<double, std::milli>(end - start).count() / static_cast<double>(n);
}

}  // namespace proteus
