#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pip/dataset.hpp"
#include "pip/nn.hpp"

// Pluggable feature encoders. The repository ships deterministic stand-ins
// (a fixed random linear map over a downsampled image; a hash-seeded text
// embedding) so every run works offline; externally trained weights load
// through the same archive interface.

namespace pip {

// Image encoder: average-pool the input down to 8x8, flatten, and apply one
// fixed linear map. Linear end to end, deterministic, and differentiable, so
// generator gradients can flow through it where a loss needs them to.
template <typename S>
struct LinearImageEncoder {
  std::string name;
  Tensor<S> weight;  // [feature_dim, 3*8*8], frozen (never registered)

  std::int64_t feature_dim() const { return weight.dim(0); }

  // images [B,3,R,R] with R a power of two >= 8 -> features [B, feature_dim]
  Tensor<S> operator()(const Tensor<S>& images) const {
    if (images.ndim() != 4 || images.dim(1) != 3)
      throw std::invalid_argument("encoder expects images shaped [B,3,R,R]");
    const std::int64_t r = images.dim(2);
    if (r != images.dim(3) || !is_power_of_two(r) || r < 8)
      throw std::invalid_argument("encoder expects a square power-of-two resolution >= 8, got " +
                                  std::to_string(r));
    Tensor<S> x = images;
    for (std::int64_t s = r; s > 8; s /= 2) x = avgpool2x(x);
    x = reshape(x, {images.dim(0), 3 * 8 * 8});
    return matmul_nt(x, weight);
  }
};

// Fixed-seed encoder: the map is fully determined by (seed, feature_dim).
template <typename S>
LinearImageEncoder<S> stub_feature_encoder(std::uint64_t seed, std::int64_t feature_dim = 512) {
  RandomStream rng(derive_seed(seed, "stub-encoder"));
  LinearImageEncoder<S> enc;
  enc.name = "stub:" + std::to_string(seed);
  enc.weight =
      Tensor<S>::randn({feature_dim, 3 * 8 * 8}, rng, 1.0 / std::sqrt(3.0 * 8.0 * 8.0));
  return enc;
}

// Archive format for externally supplied encoder weights.
void save_image_encoder_weights(const std::filesystem::path& path, const std::string& name,
                                std::int64_t feature_dim, const std::vector<float>& weight);

template <typename S>
LinearImageEncoder<S> load_image_encoder(const std::filesystem::path& path);

// Deterministic text embedding: the prompt hash seeds a normal draw, so any
// prompt maps to a fixed direction of the shared dimension.
struct TextHashEncoder {
  std::int64_t dim = 512;

  std::vector<float> encode(const std::string& prompt) const {
    RandomStream rng(derive_seed(fnv1a64(prompt), "text-encoder"));
    std::vector<float> out(static_cast<std::size_t>(dim));
    for (auto& v : out) v = static_cast<float>(rng.normal());
    return out;
  }
};

// Image/text encoder pair sharing one embedding dimension.
template <typename S>
struct DirectionEncoderPair {
  LinearImageEncoder<S> image;
  TextHashEncoder text;

  std::int64_t dim() const { return image.feature_dim(); }
};

template <typename S>
DirectionEncoderPair<S> stub_direction_pair(std::uint64_t seed, std::int64_t dim = 512) {
  return DirectionEncoderPair<S>{stub_feature_encoder<S>(derive_seed(seed, "direction-image"), dim),
                                 TextHashEncoder{dim}};
}

// Mean encoder feature of one class, computed once and frozen.
struct ClassEmbedding {
  int class_id = 0;
  std::string source_encoder;
  int num_images_averaged = 0;
  std::vector<float> c_m;
};

// Mean over all class images, batched through the encoder but accumulated
// per image in double so the batch split cannot move the result.
template <typename Encoder>
ClassEmbedding compute_class_embedding(const Encoder& encoder, const UnbalancedDataset& dataset,
                                       int class_id, std::int64_t batch_size = 32) {
  const DatasetClass* cls = nullptr;
  for (const auto& c : dataset.classes)
    if (c.class_id == class_id) cls = &c;
  if (cls == nullptr)
    throw std::invalid_argument("dataset has no class with id " + std::to_string(class_id));
  const std::int64_t n = cls->count();
  if (n < 1) throw std::invalid_argument("cannot embed an empty class: " + cls->name);

  NoGradGuard ng;
  const std::int64_t r = dataset.resolution;
  const std::int64_t pixels = 3 * r * r;
  std::vector<double> acc;
  std::int64_t dim = 0;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t b = std::min(batch_size, n - start);
    FlatArray<float> data(b * pixels);
    for (std::int64_t i = 0; i < b; ++i)
      std::copy(cls->images[static_cast<std::size_t>(start + i)].begin(),
                cls->images[static_cast<std::size_t>(start + i)].end(),
                data.data() + i * pixels);
    Tensor<float> feats = encoder(Tensor<float>::from_array({b, 3, r, r}, std::move(data)));
    if (dim == 0) {
      dim = feats.dim(1);
      acc.assign(static_cast<std::size_t>(dim), 0.0);
    }
    for (std::int64_t i = 0; i < b; ++i)
      for (std::int64_t d = 0; d < dim; ++d)
        acc[static_cast<std::size_t>(d)] += static_cast<double>(feats.at(i * dim + d));
  }

  ClassEmbedding out;
  out.class_id = class_id;
  out.source_encoder = encoder.name;
  out.num_images_averaged = static_cast<int>(n);
  out.c_m.resize(static_cast<std::size_t>(dim));
  for (std::int64_t d = 0; d < dim; ++d)
    out.c_m[static_cast<std::size_t>(d)] =
        static_cast<float>(acc[static_cast<std::size_t>(d)] / static_cast<double>(n));
  return out;
}

// On-disk cache of class embeddings, keyed by encoder name and dataset
// fingerprint; loading refuses a cache computed for different inputs.
void cache_embeddings(const std::filesystem::path& path, std::vector<ClassEmbedding> embeddings,
                      std::uint64_t dataset_fingerprint);
std::vector<ClassEmbedding> load_cached_embeddings(const std::filesystem::path& path,
                                                   std::uint64_t expected_fingerprint,
                                                   const std::string& expected_encoder = "");

}  // namespace pip
