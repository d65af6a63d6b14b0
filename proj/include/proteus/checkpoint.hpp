#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "proteus/data_model.hpp"
#include "proteus/dual.hpp"
#include "proteus/error.hpp"
#include "proteus/featurizer.hpp"
#include "proteus/policy_net.hpp"
#include "proteus/router.hpp"
#include "proteus/trainer.hpp"

namespace proteus {

// A checkpoint directory holds manifest.json and weights.bin. The weight blob
// is the flat parameter vector as little-endian f32, groups in manifest order.

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.bin";

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

inline std::string encode_weights(const Eigen::VectorXd& params) {
  std::string buf;
  buf.reserve(4 * static_cast<std::size_t>(params.size()));
  for (Eigen::Index i = 0; i < params.size(); ++i) detail::put_f32(buf, static_cast<float>(params[i]));
  return buf;
}

// `extra` is stored verbatim under "extra" (callers keep data provenance there).
inline nlohmann::json make_manifest(const PolicyNet& net, const Featurizer& featurizer, const ModelPool& pool,
                                    const CostNormalizer& normalizer, const TrainConfig& config,
                                    const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json groups = nlohmann::json::array();
  for (int g = 0; g < static_cast<int>(Group::count); ++g) {
    const auto& e = net.layout().entries[g];
    groups.push_back({{"name", kGroupNames[g]}, {"rows", e.rows}, {"cols", e.cols}, {"offset", e.offset}});
  }
  return {{"format", "proteus-checkpoint"},
          {"version", 1},
          {"shape",
           {{"embed_dim", net.shape().embed_dim},
            {"hidden", net.shape().hidden},
            {"k", net.shape().k},
            {"tau_lo", net.shape().tau_lo},
            {"tau_hi", net.shape().tau_hi}}},
          {"groups", groups},
          {"dtype", "f32le"},
          {"weights_file", kWeightsFile},
          {"num_params", net.layout().total},
          {"config", config.to_json()},
          {"config_hash", hex64(config.hash())},
          {"seed", config.seed},
          {"featurizer", featurizer.to_json()},
          {"pool", pool.to_json()},
          {"tau_min", config.tau_range.min},
          {"tau_max", config.tau_range.max},
          {"normalizer",
           {{"lo", normalizer.lo},
            {"hi", normalizer.hi},
            {"decay", normalizer.decay},
            {"low_pct", normalizer.low_pct},
            {"high_pct", normalizer.high_pct}}},
          {"extra", extra}};
}

inline void save_checkpoint(const std::string& dir, const PolicyNet& net, const Featurizer& featurizer,
                            const ModelPool& pool, const CostNormalizer& normalizer, const TrainConfig& config,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  const auto manifest = make_manifest(net, featurizer, pool, normalizer, config, extra);
  detail::write_file((std::filesystem::path(dir) / kManifestFile).string(), manifest.dump(2) + "\n");
  detail::write_file((std::filesystem::path(dir) / kWeightsFile).string(), encode_weights(net.params()));
}

inline void save_checkpoint(const std::string& dir, const Trainer& trainer, const Featurizer& featurizer,
                            const ModelPool& pool, const nlohmann::json& extra = nlohmann::json::object()) {
  save_checkpoint(dir, trainer.net(), featurizer, pool, trainer.normalizer(), trainer.config(), extra);
}

struct LoadedCheckpoint {
  Engine engine;
  TrainConfig config;
  nlohmann::json manifest;
};

inline PolicyNet net_from_blob(const NetShape& shape, std::string_view blob) {
  PolicyNet net(shape);
  const auto n = net.layout().total;
  if (blob.size() != 4 * n)
    throw LengthError("weights blob is " + std::to_string(blob.size()) + " bytes, expected " + std::to_string(4 * n));
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  for (std::size_t i = 0; i < n; ++i) net.params()[static_cast<Eigen::Index>(i)] = detail::get_f32(p + 4 * i);
  return net;
}

inline LoadedCheckpoint load_checkpoint(const std::string& dir) {
  const auto root = std::filesystem::path(dir);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(detail::read_file((root / kManifestFile).string()));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint manifest: ") + e.what());
  }
  try {
    if (m.at("format") != "proteus-checkpoint" || m.at("version") != 1)
      throw FormatError("not a version-1 proteus checkpoint");
    TrainConfig config = TrainConfig::from_json(m.at("config"));
    if (hex64(config.hash()) != m.at("config_hash").get<std::string>())
      throw ValidationError("checkpoint config hash does not match its config");

    const auto& sj = m.at("shape");
    const NetShape shape{sj.at("embed_dim").get<std::size_t>(), sj.at("hidden").get<std::size_t>(),
                         sj.at("k").get<std::size_t>(), sj.at("tau_lo").get<double>(), sj.at("tau_hi").get<double>()};
    const ParamLayout layout(shape);
    const auto& groups = m.at("groups");
    if (groups.size() != static_cast<std::size_t>(Group::count)) throw FormatError("checkpoint group list mismatch");
    for (int g = 0; g < static_cast<int>(Group::count); ++g) {
      const auto& e = layout.entries[g];
      if (groups[g].at("name") != kGroupNames[g] || groups[g].at("rows") != e.rows || groups[g].at("cols") != e.cols ||
          groups[g].at("offset") != e.offset)
        throw FormatError(std::string("checkpoint group mismatch at ") + kGroupNames[g]);
    }
    PolicyNet net = net_from_blob(shape, detail::read_file((root / m.at("weights_file").get<std::string>()).string()));

    ModelPool pool = ModelPool::from_json(m.at("pool"));
    if (pool.size() != shape.k) throw ValidationError("checkpoint pool size does not match K");
    Featurizer featurizer = Featurizer::from_json(m.at("featurizer"));
    const auto& nj = m.at("normalizer");
    CostNormalizer norm;
    norm.lo = nj.at("lo").get<double>();
    norm.hi = nj.at("hi").get<double>();
    norm.decay = nj.at("decay").get<double>();
    norm.low_pct = nj.at("low_pct").get<double>();
    norm.high_pct = nj.at("high_pct").get<double>();
    Engine engine(std::move(net), std::move(featurizer), std::move(pool), norm, m.at("tau_min").get<double>(),
                  m.at("tau_max").get<double>());
    return {std::move(engine), std::move(config), std::move(m)};
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace proteus
