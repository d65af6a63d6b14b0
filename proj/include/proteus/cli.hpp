#pragma once

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "proteus/checkpoint.hpp"
#include "proteus/data_model.hpp"
#include "proteus/error.hpp"
#include "proteus/featurizer.hpp"
#include "proteus/metrics.hpp"
#include "proteus/scenario.hpp"
#include "proteus/service.hpp"
#include "proteus/trainer.hpp"

namespace proteus {

// Exit codes: 0 ok, 1 usage or validation problem, 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kPoolFile = "pool.json";
inline constexpr const char* kRecordsFile = "records.jsonl";

inline json read_json_file(const std::string& path) {
  try {
    return json::parse(detail::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

template <class T>
struct is_optional : std::false_type {};
template <class T>
struct is_optional<std::optional<T>> : std::true_type {};

// Per-subcommand JSON config: keys mirror the long flag names (dashes or
// underscores). Flags given on the command line win.
class FlagConfig {
 public:
  FlagConfig(const CLI::App* app, json cfg) : app_(app), cfg_(std::move(cfg)) {
    if (!cfg_.is_object()) throw ConfigError("--config must hold a JSON object");
  }

  template <class T>
  void apply(const std::string& flag, T& var) {
    std::string key = flag;
    for (auto& ch : key)
      if (ch == '-') ch = '_';
    used_.insert(key);
    if (app_->count("--" + flag) > 0) return;
    const json* v = nullptr;
    if (cfg_.contains(key)) v = &cfg_[key];
    else if (cfg_.contains(flag)) v = &cfg_[flag], used_.insert(flag);
    if (!v) return;
    try {
      if constexpr (is_optional<T>::value) {
        if (v->is_null()) var.reset();
        else var = v->get<typename T::value_type>();
      } else {
        var = v->get<T>();
      }
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [key, _] : cfg_.items())
      if (!used_.count(key)) throw ConfigError("unknown config key: " + key);
  }

 private:
  const CLI::App* app_;
  json cfg_;
  std::set<std::string> used_;
};

inline RoutingDataset load_dataset_dir(const std::string& dir) {
  return load_dataset((fs::path(dir) / kPoolFile).string(), (fs::path(dir) / kRecordsFile).string());
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split: " + s);
}

inline void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") out << text;
  else detail::write_file(path, text);
}

inline void print_table(const EvalReport& rep, std::ostream& os) {
  os << std::fixed << std::setprecision(4);
  os << "tau     accuracy  cost/1k   mean_mu\n";
  for (const auto& r : rep.rows)
    os << std::setw(6) << r.tau << "  " << std::setw(8) << r.accuracy << "  " << std::setw(8) << r.cost_per_1k << "  "
       << std::setw(7) << r.mean_mu << "\n";
  os << "tier        tau range        accuracy  margin    cost/1k\n";
  for (const auto& t : rep.tiers)
    os << std::left << std::setw(10) << t.name << std::right << "  [" << t.tau_lo << ", " << t.tau_hi << "]  "
       << std::setw(8) << t.accuracy << "  " << std::setw(8) << t.margin << "  " << std::setw(8) << t.cost_per_1k
       << "\n";
  os << "floor compliance " << rep.floor_compliance << ", band 2% " << rep.band_compliance_2pct << ", band 5% "
     << rep.band_compliance_5pct << ", tau-mu pearson " << rep.tau_mu_pearson << " (level means "
     << rep.tau_mean_mu_pearson << "), rpi " << rep.rpi << "\n";
  for (const auto& b : rep.baselines)
    os << "baseline " << std::left << std::setw(10) << b.name << std::right << " accuracy " << b.accuracy
       << " cost/1k " << b.mean_cost * 1000.0 << "\n";
  os.unsetf(std::ios::floatfield);
}

}  // namespace cli

// Entry point shared by the `proteus` binary and the tests.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli;
  CLI::App app{"proteus: accuracy-target-conditioned LLM router"};
  app.require_subcommand(1);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset (pool.json + records.jsonl)");
  std::string gen_out, gen_config;
  std::size_t g_models = 8, g_queries = 20000;
  std::uint64_t g_seed = 0;
  double g_cap_lo = 0.3, g_cap_hi = 0.95, g_cost_lo = 1e-4, g_cost_hi = 1e-2, g_steep = 8.0, g_dlo = 0.0, g_dhi = 1.0;
  bool g_bern = false;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--config", gen_config, "JSON file with defaults for these flags");
  gen->add_option("--seed", g_seed);
  gen->add_option("--models", g_models);
  gen->add_option("--queries", g_queries);
  gen->add_option("--cap-lo", g_cap_lo);
  gen->add_option("--cap-hi", g_cap_hi);
  gen->add_option("--cost-lo", g_cost_lo, "cost per query of the cheapest model, dollars");
  gen->add_option("--cost-hi", g_cost_hi);
  gen->add_option("--steepness", g_steep);
  gen->add_option("--difficulty-lo", g_dlo);
  gen->add_option("--difficulty-hi", g_dhi);
  gen->add_flag("--bernoulli", g_bern, "store sampled 0/1 outcomes instead of probabilities");

  // train
  auto* train = app.add_subcommand("train", "train a policy and write a checkpoint");
  std::string t_data, t_out, t_config, t_trace, t_embeddings;
  std::uint64_t t_seed = 0, t_split_seed = 0;
  int t_steps = 0;
  std::size_t t_dim = 256;
  std::uint64_t t_feat_seed = 0;
  train->add_option("--data", t_data, "dataset directory")->required();
  train->add_option("--out", t_out, "checkpoint directory")->required();
  train->add_option("--config", t_config, "TrainConfig JSON");
  train->add_option("--seed", t_seed, "overrides the config seed");
  train->add_option("--steps", t_steps, "overrides total_steps");
  train->add_option("--split-seed", t_split_seed, "seed of the train/val/test assignment");
  train->add_option("--trace", t_trace, "write the per-step trace as JSON lines");
  train->add_option("--embeddings", t_embeddings, "precomputed .pemb matrix instead of hashed text features");
  train->add_option("--dim", t_dim, "hashed feature width");
  train->add_option("--feature-seed", t_feat_seed);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint over a tau grid");
  std::string e_ckpt, e_data, e_config, e_grid = "0.80:0.95:0.01", e_split = "test", e_out, e_csv;
  std::uint64_t e_seed = 0;
  std::optional<std::uint64_t> e_split_seed;
  double e_llm_ms = 2000.0;
  std::optional<double> e_router_ms;
  bool e_measure = false;
  ev->add_option("--ckpt", e_ckpt)->required();
  ev->add_option("--data", e_data)->required();
  ev->add_option("--config", e_config, "JSON file with defaults for these flags");
  ev->add_option("--seed", e_seed, "seed of the random baseline");
  ev->add_option("--grid", e_grid, "lo:hi:step");
  ev->add_option("--split", e_split, "train|val|test");
  ev->add_option("--split-seed", e_split_seed, "defaults to the seed recorded at training");
  ev->add_option("--out", e_out, "report JSON path (stdout when omitted)");
  ev->add_option("--csv", e_csv, "per-tau rows as CSV");
  ev->add_option("--router-latency-ms", e_router_ms);
  ev->add_flag("--measure-latency", e_measure, "time the router on this machine for RE/RPI");
  ev->add_option("--llm-latency-ms", e_llm_ms);

  // simulate
  auto* sim = app.add_subcommand("simulate", "replay a dynamic tau trace through a checkpoint");
  std::string s_ckpt, s_data, s_config, s_scenario = "step", s_out, s_summary, s_split = "test";
  std::uint64_t s_seed = 0;
  std::optional<std::uint64_t> s_split_seed;
  std::size_t s_length = 1000, s_seeds = 5, s_window = 50;
  sim->add_option("--ckpt", s_ckpt)->required();
  sim->add_option("--data", s_data)->required();
  sim->add_option("--config", s_config, "JSON file with defaults for these flags");
  sim->add_option("--seed", s_seed, "first query-sampling seed");
  sim->add_option("--scenario", s_scenario, "step|drift|cyclic|realistic");
  sim->add_option("--length", s_length);
  sim->add_option("--seeds", s_seeds, "number of consecutive seeds");
  sim->add_option("--window", s_window);
  sim->add_option("--split", s_split);
  sim->add_option("--split-seed", s_split_seed);
  sim->add_option("--out", s_out, "per-position JSON lines (stdout when omitted)");
  sim->add_option("--summary", s_summary, "summary JSON path (stderr when omitted)");

  // route
  auto* rt = app.add_subcommand("route", "route one query");
  std::string r_ckpt, r_config, r_text;
  double r_tau = 0.0;
  std::uint64_t r_seed = 0;
  rt->add_option("--ckpt", r_ckpt)->required();
  rt->add_option("--tau", r_tau)->required();
  rt->add_option("--text", r_text)->required();
  rt->add_option("--config", r_config);
  rt->add_option("--seed", r_seed, "accepted for uniformity; routing is deterministic");

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP routing service");
  std::string v_ckpt, v_config, v_addr;
  std::uint64_t v_seed = 0;
  sv->add_option("--ckpt", v_ckpt)->required();
  sv->add_option("--addr", v_addr, "host:port (default: $PROTEUS_ADDR, then 127.0.0.1:8080)");
  sv->add_option("--config", v_config);
  sv->add_option("--seed", v_seed, "accepted for uniformity; routing is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  auto flag_config = [](const CLI::App* sub, const std::string& path) {
    return FlagConfig(sub, path.empty() ? json::object() : read_json_file(path));
  };

  try {
    if (*gen) {
      auto fc = flag_config(gen, gen_config);
      fc.apply("seed", g_seed);
      fc.apply("models", g_models);
      fc.apply("queries", g_queries);
      fc.apply("cap-lo", g_cap_lo);
      fc.apply("cap-hi", g_cap_hi);
      fc.apply("cost-lo", g_cost_lo);
      fc.apply("cost-hi", g_cost_hi);
      fc.apply("steepness", g_steep);
      fc.apply("difficulty-lo", g_dlo);
      fc.apply("difficulty-hi", g_dhi);
      fc.apply("bernoulli", g_bern);
      fc.reject_unknown();
      if (g_models < 2) throw ValidationError("--models must be >= 2");
      if (!(g_cost_lo > 0.0 && g_cost_hi >= g_cost_lo)) throw ValidationError("need 0 < cost-lo <= cost-hi");
      auto spec = SyntheticSpec::spread(g_models, g_cap_lo, g_cap_hi, g_cost_lo, g_cost_hi, g_queries, g_seed);
      spec.steepness = g_steep;
      spec.difficulty_lo = g_dlo;
      spec.difficulty_hi = g_dhi;
      spec.bernoulli = g_bern;
      const auto ds = generate_synthetic(spec);
      fs::create_directories(gen_out);
      write_pool(ds.pool, (fs::path(gen_out) / kPoolFile).string());
      write_records(ds.records, (fs::path(gen_out) / kRecordsFile).string());
      out << json{{"out", gen_out},
                  {"models", ds.k()},
                  {"queries", ds.records.size()},
                  {"oracle_accuracy", oracle_accuracy(view_all(ds))}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (*train) {
      TrainConfig cfg = t_config.empty() ? TrainConfig{} : TrainConfig::from_json(read_json_file(t_config));
      if (train->count("--seed")) cfg.seed = t_seed;
      if (train->count("--steps")) cfg.total_steps = t_steps;
      cfg.validate();
      const auto ds = split_dataset(load_dataset_dir(t_data), {}, t_split_seed);
      Featurizer feat = t_embeddings.empty() ? Featurizer::hashed(t_dim, t_feat_seed)
                                             : Featurizer::precomputed(load_embeddings(t_embeddings), t_embeddings);
      Trainer trainer(cfg, ds, feat);
      trainer.train();
      save_checkpoint(t_out, trainer, feat, ds.pool, json{{"split_seed", t_split_seed}});
      if (!t_trace.empty()) {
        std::string lines;
        for (const auto& r : trainer.trace()) lines += r.to_json().dump() + "\n";
        detail::write_file(t_trace, lines);
      }
      out << json{{"checkpoint", t_out},
                  {"steps", trainer.step()},
                  {"sessions", trainer.sessions_run()},
                  {"lambda", trainer.dual().lambda},
                  {"gamma", trainer.net().gamma()},
                  {"config_hash", hex64(cfg.hash())}}
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (*ev) {
      auto fc = flag_config(ev, e_config);
      fc.apply("seed", e_seed);
      fc.apply("grid", e_grid);
      fc.apply("split", e_split);
      fc.apply("split-seed", e_split_seed);
      fc.apply("csv", e_csv);
      fc.apply("router-latency-ms", e_router_ms);
      fc.apply("measure-latency", e_measure);
      fc.apply("llm-latency-ms", e_llm_ms);
      fc.reject_unknown();
      const auto grid = parse_grid(e_grid);
      auto loaded = load_checkpoint(e_ckpt);
      const auto seed = e_split_seed.value_or(loaded.manifest.at("extra").value("split_seed", std::uint64_t{0}));
      const auto ds = split_dataset(load_dataset_dir(e_data), {}, seed);
      if (ds.k() != loaded.engine.pool().size()) throw ValidationError("dataset K does not match checkpoint");
      const auto split = view(ds, parse_split(e_split));
      EvalOptions opt;
      opt.seed = e_seed;
      opt.llm_latency_ms = e_llm_ms;
      opt.router_latency_ms = e_router_ms;
      if (e_measure) opt.router_latency_ms = measure_route_latency_ms(loaded.engine, split, grid.front());
      const auto rep = evaluate_policy(loaded.engine, split, grid, opt);
      write_text(e_out, rep.to_json().dump(2) + "\n", out);
      if (!e_csv.empty()) detail::write_file(e_csv, rep.rows_csv());
      print_table(rep, err);
      return kExitOk;
    }

    if (*sim) {
      auto fc = flag_config(sim, s_config);
      fc.apply("seed", s_seed);
      fc.apply("scenario", s_scenario);
      fc.apply("length", s_length);
      fc.apply("seeds", s_seeds);
      fc.apply("window", s_window);
      fc.apply("split", s_split);
      fc.apply("split-seed", s_split_seed);
      fc.apply("summary", s_summary);
      fc.reject_unknown();
      if (s_seeds == 0) throw ValidationError("--seeds must be >= 1");
      auto loaded = load_checkpoint(s_ckpt);
      const auto seed = s_split_seed.value_or(loaded.manifest.at("extra").value("split_seed", std::uint64_t{0}));
      const auto ds = split_dataset(load_dataset_dir(s_data), {}, seed);
      const auto split = view(ds, parse_split(s_split));
      const auto trace = make_trace(parse_trace_kind(s_scenario), {}, s_length, s_seed);
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < s_seeds; ++i) seeds.push_back(s_seed + i);
      const auto results = run_scenario(loaded.engine, split, trace, seeds, s_window);
      std::string lines;
      json summary = {{"scenario", s_scenario}, {"runs", json::array()}};
      for (const auto& r : results) {
        lines += r.positions_jsonl();
        summary["runs"].push_back(r.summary_json());
      }
      write_text(s_out, lines, out);
      if (s_summary.empty()) err << summary.dump() << "\n";
      else detail::write_file(s_summary, summary.dump(2) + "\n");
      return kExitOk;
    }

    if (*rt) {
      flag_config(rt, r_config).reject_unknown();
      const auto loaded = load_checkpoint(r_ckpt);
      out << loaded.engine.route_text(r_text, r_tau).to_json().dump() << "\n";
      return kExitOk;
    }

    if (*sv) {
      auto fc = flag_config(sv, v_config);
      fc.apply("addr", v_addr);
      fc.reject_unknown();
      const auto [host, port] = v_addr.empty() ? bind_address_from_env() : parse_bind_address(v_addr);
      auto engine = std::make_shared<const Engine>(load_checkpoint(v_ckpt).engine);
      RouteService svc(engine);
      httplib::Server srv;
      install_routes(srv, svc);
      err << "listening on " << host << ":" << port << "\n";
      if (!srv.listen(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error (" << e.kind() << "): " << e.what() << "\n";
    return e.is_validation() ? kExitValidation : kExitRuntime;
  } catch (const json::exception& e) {
    err << "error (json): " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace proteus
