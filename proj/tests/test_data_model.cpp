#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "proteus/data_model.hpp"
#include "proteus/hash.hpp"
#include "test_util.hpp"

using namespace proteus;
using proteus::testing::scratch_dir;

TEST(Hash, Fnv1aKnownVectors) {
  // published FNV-1a 64 test vectors
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hash, KeyedHashDependsOnSeed) {
  EXPECT_EQ(keyed_hash("q1", 0), keyed_hash("q1", 0));
  EXPECT_NE(keyed_hash("q1", 0), keyed_hash("q1", 1));
  EXPECT_EQ(keyed_hash("q1", 5), mix64(fnv1a64("q1") ^ mix64(5)));
}

TEST(ModelPool, RejectsBadPools) {
  EXPECT_THROW(ModelPool(std::vector<ModelInfo>{}), ValidationError);
  EXPECT_THROW(ModelPool(std::vector<ModelInfo>{{"a", 0.1}, {"a", 0.2}}), ValidationError);
  EXPECT_THROW(ModelPool(std::vector<ModelInfo>{{"a", 0.1}, {"b", 0.0}}), ValidationError);
  EXPECT_THROW(ModelPool(std::vector<ModelInfo>{{"a", 0.1}, {"b", -1.0}}), ValidationError);
  EXPECT_THROW(ModelPool(std::vector<ModelInfo>{{"a", 1.0}}).require_routable(), ValidationError);
  EXPECT_NO_THROW(ModelPool(std::vector<ModelInfo>{{"a", 1.0}, {"b", 2.0}}).require_routable());
}

TEST(ModelPool, JsonRoundTripAndCheapest) {
  ModelPool p({{"x", 0.003}, {"y", 0.0001}, {"z", 0.02}});
  EXPECT_EQ(p.cheapest(), 1u);
  const auto q = ModelPool::from_json(p.to_json());
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q[2].name, "z");
  EXPECT_DOUBLE_EQ(q[0].cost, 0.003);
  EXPECT_THROW(ModelPool::from_json(json{{"models", 3}}), SchemaError);
  EXPECT_THROW(ModelPool::from_json(json{{"models", {{{"name", "a"}}}}}), SchemaError);
}

class LoadDataset : public ::testing::Test {
 protected:
  void write(const std::string& pool, const std::string& records) {
    dir_ = scratch_dir("load_dataset");
    std::ofstream(dir_ / "pool.json") << pool;
    std::ofstream(dir_ / "records.jsonl") << records;
  }
  RoutingDataset load() { return load_dataset((dir_ / "pool.json").string(), (dir_ / "records.jsonl").string()); }
  std::filesystem::path dir_;
};

TEST_F(LoadDataset, MinimalValidInput) {
  write(R"({"models":[{"name":"a","cost":0.01},{"name":"b","cost":0.001}]})",
        "{\"query_id\":\"q1\",\"text\":\"hi\",\"labels\":[1,0]}\n"
        "{\"query_id\":\"q2\",\"embedding_index\":4,\"labels\":[0.5,0.25]}\n"
        "\n"
        "{\"query_id\":\"q3\",\"text\":\"x\",\"labels\":[0,1],\"embedding_index\":0}\n");
  const auto ds = load();
  EXPECT_EQ(ds.k(), 2u);
  ASSERT_EQ(ds.records.size(), 3u);
  EXPECT_EQ(ds.records[1].query_id, "q2");
  EXPECT_FALSE(ds.records[1].text.has_value());
  EXPECT_EQ(*ds.records[1].embedding_index, 4u);
  EXPECT_DOUBLE_EQ(ds.records[1].labels[1], 0.25);
}

TEST_F(LoadDataset, LabelCountMismatchNamesQuery) {
  write(R"({"models":[{"name":"a","cost":0.01},{"name":"b","cost":0.001}]})",
        "{\"query_id\":\"ok\",\"text\":\"t\",\"labels\":[1,0]}\n"
        "{\"query_id\":\"bad-one\",\"text\":\"t\",\"labels\":[1,0,1]}\n");
  try {
    load();
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-one"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST_F(LoadDataset, MalformedLineReportsLineNumber) {
  write(R"({"models":[{"name":"a","cost":0.01},{"name":"b","cost":0.001}]})",
        "{\"query_id\":\"q1\",\"text\":\"t\",\"labels\":[1,0]}\n{oops\n");
  try {
    load();
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST_F(LoadDataset, NonPositiveCostIsValidationError) {
  write(R"({"models":[{"name":"a","cost":0.0},{"name":"b","cost":0.001}]})", "");
  EXPECT_THROW(load(), ValidationError);
}

TEST_F(LoadDataset, RecordInvariants) {
  write(R"({"models":[{"name":"a","cost":0.01},{"name":"b","cost":0.001}]})",
        "{\"query_id\":\"q1\",\"labels\":[1,0]}\n");
  EXPECT_THROW(load(), SchemaError);  // neither text nor embedding_index
  write(R"({"models":[{"name":"a","cost":0.01},{"name":"b","cost":0.001}]})",
        "{\"query_id\":\"q1\",\"text\":\"t\",\"labels\":[1.5,0]}\n");
  EXPECT_THROW(load(), SchemaError);
}

TEST_F(LoadDataset, MissingFileIsIoError) {
  dir_ = scratch_dir("load_missing");
  EXPECT_THROW(load(), IoError);
}

TEST(Records, WriteThenLoadRoundTrip) {
  const auto dir = scratch_dir("records_rt");
  auto ds = generate_synthetic(SyntheticSpec::spread(3, 0.2, 0.9, 0.001, 0.01, 50, 1));
  write_pool(ds.pool, (dir / "pool.json").string());
  write_records(ds.records, (dir / "records.jsonl").string());
  const auto back = load_dataset((dir / "pool.json").string(), (dir / "records.jsonl").string());
  ASSERT_EQ(back.records.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(back.records[i].query_id, ds.records[i].query_id);
    EXPECT_EQ(back.records[i].text, ds.records[i].text);
    EXPECT_EQ(back.records[i].labels, ds.records[i].labels);
  }
}

namespace {
RoutingDataset numbered(std::size_t n) {
  RoutingDataset ds;
  ds.pool = proteus::testing::two_model_pool();
  for (std::size_t i = 0; i < n; ++i) ds.records.push_back({"q" + std::to_string(i), "t", {1.0, 0.0}, std::nullopt});
  ds.split_tags.assign(n, Split::train);
  return ds;
}
std::array<std::size_t, 3> counts(const RoutingDataset& ds) {
  std::array<std::size_t, 3> c{};
  for (auto s : ds.split_tags) ++c[static_cast<int>(s)];
  return c;
}
}  // namespace

TEST(Split, TenRecordsCounts) {
  const auto c = counts(split_dataset(numbered(10), {}, 0));
  EXPECT_EQ(c[0], 7u);
  EXPECT_EQ(c[1] + c[2], 3u);
  EXPECT_TRUE((c[1] == 2 && c[2] == 1) || (c[1] == 1 && c[2] == 2));
}

TEST(Split, DeterministicPerSeed) {
  const auto a = split_dataset(numbered(500), {}, 9);
  const auto b = split_dataset(numbered(500), {}, 9);
  EXPECT_EQ(a.split_tags, b.split_tags);
}

TEST(Split, SeedsDiffer) {
  const auto a = split_dataset(numbered(200), {}, 0);
  const auto b = split_dataset(numbered(200), {}, 1);
  EXPECT_NE(a.split_tags, b.split_tags);
}

TEST(Split, ProportionsWithinOneRecord) {
  for (std::size_t n : {1u, 7u, 33u, 1000u, 1234u}) {
    const auto c = counts(split_dataset(numbered(n), {0.6, 0.3, 0.1}, 4));
    EXPECT_LE(std::abs(static_cast<double>(c[0]) - 0.6 * n), 1.0) << n;
    EXPECT_LE(std::abs(static_cast<double>(c[1]) - 0.3 * n), 1.0) << n;
    EXPECT_LE(std::abs(static_cast<double>(c[2]) - 0.1 * n), 1.0) << n;
    EXPECT_EQ(c[0] + c[1] + c[2], n);
  }
}

TEST(Split, IndependentOfRecordOrder) {
  auto ds = numbered(300);
  const auto a = split_dataset(ds, {}, 2);
  std::reverse(ds.records.begin(), ds.records.end());
  const auto b = split_dataset(ds, {}, 2);
  std::map<std::string, Split> ma, mb;
  for (std::size_t i = 0; i < 300; ++i) {
    ma[a.records[i].query_id] = a.split_tags[i];
    mb[b.records[i].query_id] = b.split_tags[i];
  }
  EXPECT_EQ(ma, mb);
}

TEST(Split, BadRatios) {
  EXPECT_THROW(split_dataset(numbered(10), {0.7, 0.2, 0.2}, 0), ValidationError);
  EXPECT_THROW(split_dataset(numbered(10), {1.2, -0.1, -0.1}, 0), ValidationError);
}

TEST(Synthetic, LogisticExamples) {
  for (double k : {0.5, 8.0, 40.0}) EXPECT_DOUBLE_EQ(synthetic_probability(0.5, 0.5, k), 0.5);
  EXPECT_NEAR(synthetic_probability(1.0, 0.0, 10.0), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_NEAR(synthetic_probability(1.0, 0.0, 10.0), 0.99995, 1e-5);
}

TEST(Synthetic, OracleBeatsEverySingleModelWithOutcomes) {
  SyntheticSpec spec;
  spec.capabilities = {0.3, 0.6, 0.9};
  spec.costs = {0.001, 0.003, 0.01};
  spec.n_queries = 20000;
  spec.seed = 11;
  spec.bernoulli = true;
  const auto ds = generate_synthetic(spec);
  const auto all = view_all(ds);
  // brute force, independent of oracle_accuracy()
  double oracle = 0.0;
  std::vector<double> col(3, 0.0);
  for (const auto& r : ds.records) {
    oracle += *std::max_element(r.labels.begin(), r.labels.end());
    for (int i = 0; i < 3; ++i) col[i] += r.labels[i];
  }
  oracle /= 20000.0;
  EXPECT_NEAR(oracle_accuracy(all), oracle, 1e-12);
  for (int i = 0; i < 3; ++i) EXPECT_GT(oracle, col[i] / 20000.0);
}

TEST(Synthetic, SoftLabelsMonotoneInCapability) {
  const auto det = generate_synthetic_detailed(SyntheticSpec::spread(6, 0.1, 0.9, 1e-3, 1e-1, 3000, 5));
  for (const auto& p : det.probabilities)
    for (std::size_t i = 1; i < p.size(); ++i) EXPECT_GE(p[i], p[i - 1]);
}

TEST(Synthetic, OracleDominatesColumnMeans) {
  for (bool bern : {false, true}) {
    auto spec = SyntheticSpec::spread(5, 0.2, 0.9, 1e-3, 1e-2, 4000, 2);
    spec.bernoulli = bern;
    const auto ds = generate_synthetic(spec);
    const auto means = column_means(view_all(ds));
    const double oracle = oracle_accuracy(view_all(ds));
    EXPECT_GE(oracle, *std::max_element(means.begin(), means.end()));
    EXPECT_LE(oracle, 1.0);
  }
}

TEST(Synthetic, DeterministicAndSeedSensitive) {
  const auto spec = SyntheticSpec::spread(4, 0.3, 0.9, 1e-3, 1e-2, 300, 8);
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  auto spec2 = spec;
  spec2.seed = 9;
  const auto c = generate_synthetic(spec2);
  for (std::size_t i = 0; i < 300; ++i) {
    EXPECT_EQ(a.records[i].labels, b.records[i].labels);
    EXPECT_EQ(a.records[i].text, b.records[i].text);
  }
  int diff = 0;
  for (std::size_t i = 0; i < 300; ++i) diff += a.records[i].labels != c.records[i].labels;
  EXPECT_GT(diff, 250);
}

TEST(Synthetic, TextCarriesDifficultyBins) {
  const auto det = generate_synthetic_detailed(SyntheticSpec::spread(3, 0.2, 0.9, 1e-3, 1e-2, 200, 4));
  for (std::size_t i = 0; i < 200; ++i) {
    const int fine = std::min(23, static_cast<int>(std::floor(det.difficulty[i] * 24)));
    EXPECT_EQ(det.dataset.records[i].text->rfind("lvl" + std::to_string(fine) + " ", 0), 0u);
  }
}

TEST(Synthetic, SpecValidation) {
  auto s = SyntheticSpec::spread(3, 0.2, 0.9, 1e-3, 1e-2, 10, 0);
  s.costs.pop_back();
  EXPECT_THROW(generate_synthetic(s), ValidationError);
  s = SyntheticSpec::spread(3, 0.2, 0.9, 1e-3, 1e-2, 10, 0);
  s.steepness = 0.0;
  EXPECT_THROW(generate_synthetic(s), ValidationError);
  s = SyntheticSpec::spread(3, 0.2, 1.2, 1e-3, 1e-2, 10, 0);
  EXPECT_THROW(generate_synthetic(s), ValidationError);
}
