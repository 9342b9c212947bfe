#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtrx/error.hpp"

namespace mtrx {

/// Lowercases and splits on every non-alphanumeric byte; empty pieces are dropped.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current.push_back(static_cast<char>(std::tolower(u)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

/// Fixed-dimension real vector. Values are always finite.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty())
      fail(ErrorCode::InvariantViolation, "embedding must have at least one dimension");
    for (double v : values_)
      if (!std::isfinite(v)) fail(ErrorCode::InvariantViolation, "embedding value not finite");
  }

  std::size_t dims() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

  double norm() const noexcept {
    double sum = 0.0;
    for (double v : values_) sum += v * v;
    return std::sqrt(sum);
  }

  EmbeddingVector scaled(double factor) const {
    std::vector<double> out(values_);
    for (double& v : out) v *= factor;
    return EmbeddingVector(std::move(out));
  }

  /// Bitwise equality (distinguishes -0.0 from 0.0).
  friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) noexcept {
    if (a.values_.size() != b.values_.size()) return false;
    return std::equal(a.values_.begin(), a.values_.end(), b.values_.begin(),
                      [](double x, double y) {
                        return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
                      });
  }

 private:
  std::vector<double> values_;
};

/// (encoder_id, version) identifies embedding compatibility; dims is what every output has.
struct EncoderDescriptor {
  std::string encoder_id;
  std::size_t dims = 0;
  std::string version;

  friend bool operator==(const EncoderDescriptor&, const EncoderDescriptor&) = default;
};

/// What gets embedded: a text description and optionally an image.
struct ScenarioContent {
  std::string description;
  std::optional<std::string> image_ref;
};

/// Encoder backend interface. Implementations must be callable from concurrent episodes.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual const EncoderDescriptor& descriptor() const noexcept = 0;
  virtual EmbeddingVector encode(const ScenarioContent& content) const = 0;
};

/// Feature-hashing text encoder: token counts hashed into `dims` buckets, then L2-normalized.
class ReferenceEncoder final : public Encoder {
 public:
  static constexpr std::size_t kDefaultDims = 256;
  static constexpr std::uint64_t kDefaultSeed = 0x4d5452585f763031ull;

  explicit ReferenceEncoder(std::size_t dims = kDefaultDims, std::uint64_t seed = kDefaultSeed)
      : seed_(seed) {
    if (dims == 0) fail(ErrorCode::ConfigInvalid, "encoder.dims must be positive");
    descriptor_ = {"reference-feature-hash", dims, "1:" + std::to_string(seed)};
  }

  const EncoderDescriptor& descriptor() const noexcept override { return descriptor_; }

  /// 64-bit FNV-1a over the seed bytes followed by the token bytes.
  std::uint64_t hash_token(std::string_view token) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](unsigned char byte) {
      h ^= byte;
      h *= 0x100000001b3ull;
    };
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed_ >> (8 * i)));
    for (char c : token) mix(static_cast<unsigned char>(c));
    return h;
  }

  std::size_t bucket_of(std::string_view token) const noexcept {
    return static_cast<std::size_t>(hash_token(token) % descriptor_.dims);
  }

  EmbeddingVector encode(const ScenarioContent& content) const override {
    const auto tokens = tokenize(content.description);
    if (tokens.empty()) {
      fail(ErrorCode::EmptyContent,
           content.image_ref ? "reference encoder needs a text description; images are not read"
                             : "content has no description and no image");
    }
    std::vector<double> counts(descriptor_.dims, 0.0);
    for (const auto& t : tokens) counts[bucket_of(t)] += 1.0;
    double sum = 0.0;
    for (double c : counts) sum += c * c;
    const double inv = 1.0 / std::sqrt(sum);
    for (double& c : counts) c *= inv;
    return EmbeddingVector(std::move(counts));
  }

 private:
  std::uint64_t seed_;
  EncoderDescriptor descriptor_;
};

/// Cosine of the angle between a and b, clamped to [-1, 1].
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dims() != b.dims())
    fail(ErrorCode::DimensionMismatch,
         "dims " + std::to_string(a.dims()) + " vs " + std::to_string(b.dims()));
  const auto av = a.values();
  const auto bv = b.values();
  double dot = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (aa == 0.0 || bb == 0.0) fail(ErrorCode::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace mtrx
