#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "proteus/data_model.hpp"
#include "proteus/error.hpp"
#include "proteus/hash.hpp"

namespace proteus {

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Signed feature hashing of word unigrams and bigrams into dim-1 buckets. The
// last slot is a bias fixed at 1 before L2 normalization, so the empty string
// maps to the unit vector on the bias slot.
inline Eigen::VectorXd hash_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim < 8) throw ValidationError("hash_embed: dim must be >= 8");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  const std::uint64_t buckets = dim - 1;
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = keyed_hash(feature, seed);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[static_cast<Eigen::Index>((h & 0x7fffffffffffffffULL) % buckets)] += sign;
  };

  const auto tokens = tokenize(text);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add(tokens[i]);
    if (i + 1 < tokens.size()) add(tokens[i] + '\x1f' + tokens[i + 1]);
  }
  v[static_cast<Eigen::Index>(dim - 1)] = 1.0;
  return v / v.norm();
}

// ---------------------------------------------------------------------------
// PEMB embedding files: "PEMB", u32 version=1, u32 n, u32 dim, n*dim f32
// row-major, all little-endian.

struct EmbeddingMatrix {
  std::uint32_t n = 0;
  std::uint32_t dim = 0;
  std::vector<float> data;

  Eigen::VectorXd row(std::size_t i) const {
    if (i >= n) throw LookupError("embedding index " + std::to_string(i) + " out of range (n=" +
                                  std::to_string(n) + ")");
    Eigen::VectorXd out(dim);
    for (std::uint32_t j = 0; j < dim; ++j) out[j] = data[i * dim + j];
    return out;
  }
};

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t x) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((x >> (8 * b)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::string& buf, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(buf, bits);
}

inline float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

inline std::string encode_embeddings(const EmbeddingMatrix& m) {
  if (m.data.size() != static_cast<std::size_t>(m.n) * m.dim)
    throw ShapeError("embedding matrix data does not match n*dim");
  std::string buf = "PEMB";
  detail::put_u32(buf, 1);
  detail::put_u32(buf, m.n);
  detail::put_u32(buf, m.dim);
  buf.reserve(buf.size() + 4 * m.data.size());
  for (float f : m.data) detail::put_f32(buf, f);
  return buf;
}

inline EmbeddingMatrix decode_embeddings(std::string_view bytes) {
  if (bytes.size() < 16) throw LengthError("embedding file shorter than its 16-byte header");
  if (bytes.substr(0, 4) != "PEMB") throw FormatError("embedding file has bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (detail::get_u32(p + 4) != 1) throw FormatError("unsupported embedding file version");
  EmbeddingMatrix m;
  m.n = detail::get_u32(p + 8);
  m.dim = detail::get_u32(p + 12);
  const std::size_t count = static_cast<std::size_t>(m.n) * m.dim;
  if (bytes.size() != 16 + 4 * count)
    throw LengthError("embedding payload is " + std::to_string(bytes.size() - 16) + " bytes, expected " +
                      std::to_string(4 * count));
  m.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) m.data[i] = detail::get_f32(p + 16 + 4 * i);
  return m;
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  return decode_embeddings(detail::read_file(path));
}

inline void write_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  detail::write_file(path, encode_embeddings(m));
}

// ---------------------------------------------------------------------------

enum class FeaturizerMode { hashed, precomputed };

// Maps a query record to its policy input vector. Immutable after construction.
class Featurizer {
 public:
  static Featurizer hashed(std::size_t dim = 256, std::uint64_t seed = 0) {
    if (dim < 8) throw ValidationError("featurizer dim must be >= 8");
    Featurizer f;
    f.mode_ = FeaturizerMode::hashed;
    f.dim_ = dim;
    f.seed_ = seed;
    return f;
  }

  static Featurizer precomputed(EmbeddingMatrix matrix, std::string path = {}) {
    Featurizer f;
    f.mode_ = FeaturizerMode::precomputed;
    f.dim_ = matrix.dim;
    f.path_ = std::move(path);
    f.matrix_ = std::make_shared<const EmbeddingMatrix>(std::move(matrix));
    return f;
  }

  FeaturizerMode mode() const noexcept { return mode_; }
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

  Eigen::VectorXd embed_text(std::string_view text) const {
    if (mode_ != FeaturizerMode::hashed)
      throw LookupError("precomputed featurizer cannot embed raw text");
    return hash_embed(text, dim_, seed_);
  }

  Eigen::VectorXd embed_index(std::size_t index) const {
    if (mode_ != FeaturizerMode::precomputed || !matrix_)
      throw LookupError("hashed featurizer has no embedding matrix");
    return matrix_->row(index);
  }

  Eigen::VectorXd embed(const QueryRecord& rec) const {
    if (mode_ == FeaturizerMode::precomputed) {
      if (!rec.embedding_index) throw LookupError("record '" + rec.query_id + "' has no embedding_index");
      return embed_index(*rec.embedding_index);
    }
    if (!rec.text) throw LookupError("record '" + rec.query_id + "' has no text for hashed features");
    return embed_text(*rec.text);
  }

  // Embeds every row of a split as the columns of a dim x n matrix.
  Eigen::MatrixXd embed_all(const SplitView& v) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = embed(v[i]);
    return out;
  }

  nlohmann::json to_json() const {
    if (mode_ == FeaturizerMode::hashed) return {{"mode", "hashed"}, {"dim", dim_}, {"seed", seed_}};
    return {{"mode", "precomputed"}, {"dim", dim_}, {"path", path_}};
  }

  static Featurizer from_json(const nlohmann::json& j) {
    const auto mode = j.value("mode", std::string("hashed"));
    if (mode == "hashed") return hashed(j.value("dim", std::size_t{256}), j.value("seed", std::uint64_t{0}));
    if (mode == "precomputed") {
      const auto path = j.at("path").get<std::string>();
      return precomputed(load_embeddings(path), path);
    }
    throw ConfigError("unknown featurizer mode: " + mode);
  }

 private:
  FeaturizerMode mode_ = FeaturizerMode::hashed;
  std::size_t dim_ = 256;
  std::uint64_t seed_ = 0;
  std::string path_;
  std::shared_ptr<const EmbeddingMatrix> matrix_;
};

}  // namespace proteus
