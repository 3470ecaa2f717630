#include "pip/encoders.hpp"

#include <algorithm>
#include <cinttypes>

#include "pip/errors.hpp"
#include "pip/serialize.hpp"

namespace pip {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

}  // namespace

void save_image_encoder_weights(const std::filesystem::path& path, const std::string& name,
                                std::int64_t feature_dim, const std::vector<float>& weight) {
  if (weight.size() != static_cast<std::size_t>(feature_dim) * (3 * 8 * 8))
    throw std::invalid_argument("encoder weight must be feature_dim x 192");
  NamedArrays a;
  a.set_meta("format", "image-encoder");
  a.set_meta("name", name);
  a.set_meta("feature_dim", std::to_string(feature_dim));
  a.add_array("weight", weight);
  save_named_arrays(path, a);
}

template <typename S>
LinearImageEncoder<S> load_image_encoder(const std::filesystem::path& path) {
  NamedArrays a = load_named_arrays(path);
  if (a.meta_required("format") != "image-encoder")
    throw ConfigError("not an image-encoder weights file: " + path.string());
  const std::int64_t dim = std::stoll(a.meta_required("feature_dim"));
  const std::vector<float>& w = a.array_required("weight");
  if (w.size() != static_cast<std::size_t>(dim) * (3 * 8 * 8))
    throw ConfigError("encoder weights file has a malformed weight array: " + path.string());
  LinearImageEncoder<S> enc;
  enc.name = a.meta_required("name");
  FlatArray<S> values(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i)
    values[static_cast<Eigen::Index>(i)] = static_cast<S>(w[i]);
  enc.weight = Tensor<S>::from_array({dim, 3 * 8 * 8}, std::move(values));
  return enc;
}

template LinearImageEncoder<float> load_image_encoder<float>(const std::filesystem::path&);
template LinearImageEncoder<double> load_image_encoder<double>(const std::filesystem::path&);

void cache_embeddings(const std::filesystem::path& path, std::vector<ClassEmbedding> embeddings,
                      std::uint64_t dataset_fingerprint) {
  if (embeddings.empty()) throw std::invalid_argument("refusing to cache zero embeddings");
  std::sort(embeddings.begin(), embeddings.end(),
            [](const ClassEmbedding& a, const ClassEmbedding& b) { return a.class_id < b.class_id; });
  for (std::size_t i = 1; i < embeddings.size(); ++i)
    if (embeddings[i].class_id == embeddings[i - 1].class_id)
      throw std::invalid_argument("duplicate class id in embeddings: " +
                                  std::to_string(embeddings[i].class_id));
  const std::string encoder = embeddings[0].source_encoder;
  for (const auto& e : embeddings)
    if (e.source_encoder != encoder)
      throw std::invalid_argument("embeddings mix encoders: " + encoder + " vs " +
                                  e.source_encoder);

  NamedArrays a;
  a.set_meta("format", "class-embeddings");
  a.set_meta("encoder", encoder);
  a.set_meta("dataset_fingerprint", hex64(dataset_fingerprint));
  a.set_meta("count", std::to_string(embeddings.size()));
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const std::string p = "entry." + std::to_string(i);
    a.set_meta(p + ".class_id", std::to_string(embeddings[i].class_id));
    a.set_meta(p + ".num_images", std::to_string(embeddings[i].num_images_averaged));
    a.add_array(p + ".c_m", embeddings[i].c_m);
  }
  save_named_arrays(path, a);
}

std::vector<ClassEmbedding> load_cached_embeddings(const std::filesystem::path& path,
                                                   std::uint64_t expected_fingerprint,
                                                   const std::string& expected_encoder) {
  NamedArrays a = load_named_arrays(path);
  if (a.meta_required("format") != "class-embeddings")
    throw ConfigError("not a class-embedding cache: " + path.string());
  const std::string fp = a.meta_required("dataset_fingerprint");
  if (fp != hex64(expected_fingerprint))
    throw ConfigError("embedding cache " + path.string() +
                      " was computed for a different dataset (cache fingerprint " + fp +
                      ", dataset fingerprint " + hex64(expected_fingerprint) + ")");
  const std::string encoder = a.meta_required("encoder");
  if (!expected_encoder.empty() && encoder != expected_encoder)
    throw ConfigError("embedding cache " + path.string() + " was computed with encoder '" +
                      encoder + "', expected '" + expected_encoder + "'");

  const std::size_t count = std::stoul(a.meta_required("count"));
  std::vector<ClassEmbedding> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string p = "entry." + std::to_string(i);
    out[i].class_id = std::stoi(a.meta_required(p + ".class_id"));
    out[i].num_images_averaged = std::stoi(a.meta_required(p + ".num_images"));
    out[i].source_encoder = encoder;
    out[i].c_m = a.array_required(p + ".c_m");
  }
  return out;
}

}  // namespace pip
