#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "proteus/error.hpp"
#include "proteus/hash.hpp"

namespace proteus {

using json = nlohmann::json;

struct ModelInfo {
  std::string name;
  double cost = 0.0;  // dollars per query
};

// Ordered pool of candidate models. Index i is the model id everywhere.
class ModelPool {
 public:
  ModelPool() = default;
  explicit ModelPool(std::vector<ModelInfo> models) : models_(std::move(models)) { validate(); }

  std::size_t size() const noexcept { return models_.size(); }
  const ModelInfo& operator[](std::size_t i) const { return models_.at(i); }
  const std::vector<ModelInfo>& models() const noexcept { return models_; }

  std::vector<double> costs() const {
    std::vector<double> c;
    c.reserve(models_.size());
    for (const auto& m : models_) c.push_back(m.cost);
    return c;
  }

  std::size_t cheapest() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < models_.size(); ++i)
      if (models_[i].cost < models_[best].cost) best = i;
    return best;
  }

  // A single-model pool is accepted here so degenerate baselines can be
  // computed; routing engines require K >= 2 (see `require_routable`).
  void validate() const {
    if (models_.empty()) throw ValidationError("model pool is empty");
    std::unordered_set<std::string> seen;
    for (const auto& m : models_) {
      if (m.name.empty()) throw ValidationError("model name must be non-empty");
      if (!seen.insert(m.name).second) throw ValidationError("duplicate model name: " + m.name);
      if (!(m.cost > 0.0) || !std::isfinite(m.cost))
        throw ValidationError("model '" + m.name + "' has non-positive cost");
    }
  }

  void require_routable() const {
    if (models_.size() < 2) throw ValidationError("routing requires at least 2 models");
  }

  json to_json() const {
    json arr = json::array();
    for (const auto& m : models_) arr.push_back({{"name", m.name}, {"cost", m.cost}});
    return json{{"models", arr}};
  }

  static ModelPool from_json(const json& j) {
    if (!j.is_object() || !j.contains("models") || !j["models"].is_array())
      throw SchemaError("model pool must be an object with a 'models' array");
    std::vector<ModelInfo> models;
    for (const auto& m : j["models"]) {
      if (!m.is_object() || !m.contains("name") || !m.contains("cost") || !m["name"].is_string() ||
          !m["cost"].is_number())
        throw SchemaError("each model needs a string 'name' and numeric 'cost'");
      models.push_back({m["name"].get<std::string>(), m["cost"].get<double>()});
    }
    return ModelPool(std::move(models));
  }

 private:
  std::vector<ModelInfo> models_;
};

struct QueryRecord {
  std::string query_id;
  std::optional<std::string> text;
  std::vector<double> labels;  // expected correctness per model, in [0,1]
  std::optional<std::size_t> embedding_index;
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct RoutingDataset {
  ModelPool pool;
  std::vector<QueryRecord> records;
  std::vector<Split> split_tags;  // parallel to records

  std::size_t k() const noexcept { return pool.size(); }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split_tags.size(); ++i)
      if (split_tags[i] == s) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> out(records.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
};

// A view of a subset of a dataset's records, used by evaluation and training.
struct SplitView {
  const RoutingDataset* dataset = nullptr;
  std::vector<std::size_t> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  const QueryRecord& operator[](std::size_t i) const { return dataset->records[rows[i]]; }
  const ModelPool& pool() const { return dataset->pool; }
};

inline SplitView view(const RoutingDataset& ds, Split s) { return {&ds, ds.indices(s)}; }
inline SplitView view_all(const RoutingDataset& ds) { return {&ds, ds.all_indices()}; }

// Mean over records of max_i labels.
inline double oracle_accuracy(const SplitView& v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < v.size(); ++r) {
    const auto& l = v[r].labels;
    sum += *std::max_element(l.begin(), l.end());
  }
  return sum / static_cast<double>(v.size());
}

inline std::vector<double> column_means(const SplitView& v) {
  std::vector<double> m(v.pool().size(), 0.0);
  if (v.empty()) return m;
  for (std::size_t r = 0; r < v.size(); ++r)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] += v[r].labels[i];
  for (auto& x : m) x /= static_cast<double>(v.size());
  return m;
}

// ---------------------------------------------------------------------------
// File ingestion

inline void validate_record(const QueryRecord& rec, std::size_t k) {
  if (rec.labels.size() != k)
    throw SchemaError("record '" + rec.query_id + "' has " + std::to_string(rec.labels.size()) +
                      " labels but the pool has " + std::to_string(k) + " models");
  for (double l : rec.labels)
    if (!(l >= 0.0 && l <= 1.0))
      throw SchemaError("record '" + rec.query_id + "' has a label outside [0,1]");
  if (!rec.text && !rec.embedding_index)
    throw SchemaError("record '" + rec.query_id + "' needs text or embedding_index");
}

inline QueryRecord record_from_json(const json& j, std::size_t k) {
  if (!j.is_object()) throw SchemaError("record must be a JSON object");
  QueryRecord rec;
  if (!j.contains("query_id") || !j["query_id"].is_string())
    throw SchemaError("record is missing string 'query_id'");
  rec.query_id = j["query_id"].get<std::string>();
  if (!j.contains("labels") || !j["labels"].is_array())
    throw SchemaError("record '" + rec.query_id + "' is missing 'labels' array");
  for (const auto& l : j["labels"]) {
    if (!l.is_number()) throw SchemaError("record '" + rec.query_id + "' has a non-numeric label");
    rec.labels.push_back(l.get<double>());
  }
  if (j.contains("text") && !j["text"].is_null()) {
    if (!j["text"].is_string()) throw SchemaError("record '" + rec.query_id + "' has non-string text");
    rec.text = j["text"].get<std::string>();
  }
  if (j.contains("embedding_index") && !j["embedding_index"].is_null()) {
    if (!j["embedding_index"].is_number_unsigned())
      throw SchemaError("record '" + rec.query_id + "' has invalid embedding_index");
    rec.embedding_index = j["embedding_index"].get<std::size_t>();
  }
  validate_record(rec, k);
  return rec;
}

inline json record_to_json(const QueryRecord& rec) {
  json j{{"query_id", rec.query_id}};
  if (rec.text) j["text"] = *rec.text;
  j["labels"] = rec.labels;
  if (rec.embedding_index) j["embedding_index"] = *rec.embedding_index;
  return j;
}

inline ModelPool parse_pool(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model pool: ") + e.what());
  }
  return ModelPool::from_json(j);
}

inline std::vector<QueryRecord> parse_records(std::istream& in, std::size_t k) {
  std::vector<QueryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("records line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      out.push_back(record_from_json(j, k));
    } catch (const SchemaError& e) {
      throw SchemaError("records line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

inline RoutingDataset load_dataset(const std::string& pool_path, const std::string& records_path) {
  RoutingDataset ds;
  {
    auto in = open_input(pool_path);
    ds.pool = parse_pool(in);
  }
  auto in = open_input(records_path);
  ds.records = parse_records(in, ds.pool.size());
  ds.split_tags.assign(ds.records.size(), Split::train);
  return ds;
}

inline void write_pool(const ModelPool& pool, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << pool.to_json().dump(2) << '\n';
}

inline void write_records(const std::vector<QueryRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Deterministic splits
//
// Each record gets key keyed_hash(query_id, seed) (see hash.hpp). Records are
// ordered by (key, original index); the first round(n*train) go to train, the
// next round(n*val) to val, the remainder to test.

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

inline RoutingDataset split_dataset(RoutingDataset ds, SplitRatios ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.val < 0 || ratios.test < 0)
    throw ValidationError("split ratios must be non-negative and sum to 1");

  const std::size_t n = ds.records.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) keyed[i] = {keyed_hash(ds.records[i].query_id, seed), i};
  std::sort(keyed.begin(), keyed.end());

  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(n * ratios.train)));
  const auto n_val =
      std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(n * ratios.val)));

  ds.split_tags.assign(n, Split::test);
  for (std::size_t r = 0; r < n; ++r) {
    Split s = r < n_train ? Split::train : (r < n_train + n_val ? Split::val : Split::test);
    ds.split_tags[keyed[r].second] = s;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic generator
//
// p_i(x) = logistic(k * (a_i - d(x))), d ~ Uniform[difficulty_lo, difficulty_hi].
// Query text encodes the difficulty through coarse and fine bin tokens plus
// random filler words, so a hashed featurizer can recover it approximately.

struct SyntheticSpec {
  std::vector<double> capabilities;
  std::vector<double> costs;
  std::vector<std::string> names;  // optional; defaults to model-<i>
  double difficulty_lo = 0.0;
  double difficulty_hi = 1.0;
  double steepness = 8.0;
  std::size_t n_queries = 20000;
  std::uint64_t seed = 0;
  bool bernoulli = false;       // threshold probabilities into 0/1 outcomes
  int fine_bins = 24;           // difficulty tokens per unit interval
  int coarse_bins = 8;
  int filler_words = 3;
  int filler_vocab = 400;

  // Capabilities linearly spaced in [cap_lo, cap_hi]; costs geometrically
  // spaced in [cost_lo, cost_hi], cheapest model least capable.
  static SyntheticSpec spread(std::size_t k, double cap_lo, double cap_hi, double cost_lo,
                              double cost_hi, std::size_t n, std::uint64_t seed) {
    SyntheticSpec s;
    for (std::size_t i = 0; i < k; ++i) {
      const double t = k == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(k - 1);
      s.capabilities.push_back(cap_lo + t * (cap_hi - cap_lo));
      s.costs.push_back(cost_lo * std::pow(cost_hi / cost_lo, t));
    }
    s.n_queries = n;
    s.seed = seed;
    return s;
  }

  void validate() const {
    if (capabilities.size() != costs.size() || capabilities.empty())
      throw ValidationError("synthetic spec: capabilities and costs must have equal non-zero length");
    if (!names.empty() && names.size() != capabilities.size())
      throw ValidationError("synthetic spec: names length must equal model count");
    for (double a : capabilities)
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("synthetic spec: capability outside [0,1]");
    for (double c : costs)
      if (!(c > 0.0)) throw ValidationError("synthetic spec: costs must be positive");
    if (!(steepness > 0.0)) throw ValidationError("synthetic spec: steepness must be positive");
    if (!(difficulty_lo <= difficulty_hi)) throw ValidationError("synthetic spec: bad difficulty range");
    if (fine_bins < 1 || coarse_bins < 1 || filler_words < 0 || filler_vocab < 1)
      throw ValidationError("synthetic spec: bad text parameters");
  }
};

inline double synthetic_probability(double capability, double difficulty, double steepness) {
  return 1.0 / (1.0 + std::exp(-steepness * (capability - difficulty)));
}

struct SyntheticDataset {
  RoutingDataset dataset;
  std::vector<double> difficulty;                  // per record
  std::vector<std::vector<double>> probabilities;  // per record, before thresholding
};

inline SyntheticDataset generate_synthetic_detailed(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<ModelInfo> models;
  for (std::size_t i = 0; i < spec.capabilities.size(); ++i)
    models.push_back({spec.names.empty() ? "model-" + std::to_string(i) : spec.names[i], spec.costs[i]});

  SyntheticDataset out;
  out.dataset.pool = ModelPool(std::move(models));
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto bin_of = [](double d, int bins) {
    return std::clamp(static_cast<int>(std::floor(d * bins)), 0, bins - 1);
  };

  out.dataset.records.reserve(spec.n_queries);
  for (std::size_t q = 0; q < spec.n_queries; ++q) {
    const double d = spec.difficulty_lo + (spec.difficulty_hi - spec.difficulty_lo) * unit(rng);
    QueryRecord rec;
    rec.query_id = "q" + std::to_string(q);

    std::ostringstream text;
    text << "lvl" << bin_of(d, spec.fine_bins) << " band" << bin_of(d, spec.coarse_bins);
    for (int w = 0; w < spec.filler_words; ++w)
      text << " w" << static_cast<int>(unit(rng) * spec.filler_vocab);
    rec.text = text.str();

    std::vector<double> probs;
    for (double a : spec.capabilities) probs.push_back(synthetic_probability(a, d, spec.steepness));
    rec.labels = probs;
    if (spec.bernoulli)
      for (auto& l : rec.labels) l = unit(rng) < l ? 1.0 : 0.0;

    out.difficulty.push_back(d);
    out.probabilities.push_back(std::move(probs));
    out.dataset.records.push_back(std::move(rec));
  }
  out.dataset.split_tags.assign(out.dataset.records.size(), Split::train);
  return out;
}

inline RoutingDataset generate_synthetic(const SyntheticSpec& spec) {
  return generate_synthetic_detailed(spec).dataset;
}

}  // namespace proteus
