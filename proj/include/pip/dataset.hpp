#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pip/errors.hpp"
#include "pip/ops.hpp"
#include "pip/rng.hpp"

// Two-class unbalanced corpus: one large "peer" class (id 0) and one
// few-shot "target" class (id 1), decoded once at load into [-1,1] CHW
// floats, plus the class-sampling policies and the differentiable
// augmentation stack.

namespace pip {

inline constexpr int kPeerClass = 0;
inline constexpr int kTargetClass = 1;

struct DatasetClass {
  int class_id = 0;
  std::string name;
  std::vector<std::string> image_files;     // basenames, sorted
  std::vector<std::vector<float>> images;   // decoded CHW floats, 3*R*R each
  std::size_t count() const { return images.size(); }
};

struct UnbalancedDataset {
  int resolution = 0;
  std::vector<DatasetClass> classes;        // [peer, target]
  std::vector<std::string> text_labels;     // prompts: [t_peer, t_target]
  std::vector<std::string> warnings;

  const DatasetClass& peer() const { return classes[kPeerClass]; }
  const DatasetClass& target() const { return classes[kTargetClass]; }
  std::size_t total_images() const { return peer().count() + target().count(); }

  // FNV-1a over the sorted per-class file lists; identifies the corpus for
  // embedding caches.
  std::uint64_t fingerprint() const;
};

// Loads `root/peer` and `root/target` (PNG/JPEG), center-crops to square,
// resizes to `resolution` (bilinear), maps to [-1,1]. Optional
// `root/labels.txt` provides the two prompts (line 1 peer, line 2 target).
// `peer_cap` > 0 keeps only the first N peer images of the sorted listing.
UnbalancedDataset load_dataset(const std::filesystem::path& root, int resolution,
                               std::size_t peer_cap = 0);

struct SamplingPolicy {
  enum class Mode { kUniformOverImages, kTargetOversample };
  Mode mode = Mode::kUniformOverImages;
  double target_fraction = 0.5;  // oversample mode only
  std::uint64_t seed = 0;
};

struct Batch {
  Tensor<float> images;             // [B,3,R,R]
  std::vector<int> class_ids;       // length B
  std::vector<std::size_t> within_class_indices;  // bookkeeping for tests
};

// Stateful draw stream over a dataset; serializable so training can resume
// mid-stream bit-exactly.
class Sampler {
 public:
  Sampler(const UnbalancedDataset& dataset, const SamplingPolicy& policy);

  Batch sample_batch(std::size_t batch_size);
  // Class labels only (used for generator batches, same marginal as images).
  std::vector<int> sample_class_ids(std::size_t batch_size);

  std::string serialize_state() const { return stream_.serialize(); }
  void restore_state(const std::string& s) { stream_.deserialize(s); }

 private:
  int draw_class();
  const UnbalancedDataset& dataset_;
  SamplingPolicy policy_;
  RandomStream stream_;
};

struct AugmentationState {
  double p = 0.0;
  bool flip = true;
  bool translate = true;
  bool color = true;
  bool cutout = true;
};

struct AugmentationPlan {
  // Composed flip+translate source index per pixel, one map per sample.
  PixelMaps pixel_maps;         // null when no sample needs remapping
  std::vector<double> gain;     // per-sample contrast multiplier (1 = off)
  std::vector<double> shift;    // per-sample brightness offset (0 = off)
  std::shared_ptr<std::vector<float>> cutout_mask;  // per-sample spatial mask, null when off
  bool any = false;
};

// Draws one plan for a batch; consumes rng deterministically.
AugmentationPlan draw_augmentation(const AugmentationState& state, std::size_t batch,
                                   int resolution, RandomStream& rng);

// Applies a drawn plan as differentiable tensor ops. With a no-op plan the
// input tensor is returned unchanged (bitwise identity).
template <typename S>
Tensor<S> apply_augmentation(const Tensor<S>& images, const AugmentationPlan& plan) {
  if (!plan.any) return images;
  const std::int64_t B = images.dim(0), C = images.dim(1);
  const std::int64_t spatial = images.dim(2) * images.dim(3);
  Tensor<S> x = images;
  if (plan.pixel_maps) x = pixel_gather(x, plan.pixel_maps);

  bool color_active = false;
  for (std::size_t b = 0; b < plan.gain.size(); ++b)
    if (plan.gain[b] != 1.0 || plan.shift[b] != 0.0) color_active = true;
  if (color_active) {
    FlatArray<S> g(B * C), s(B * C);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t c = 0; c < C; ++c) {
        g[b * C + c] = static_cast<S>(plan.gain[static_cast<std::size_t>(b)]);
        s[b * C + c] = static_cast<S>(plan.shift[static_cast<std::size_t>(b)]);
      }
    Tensor<S> x2d = reshape(x, {B * C, spatial});
    x2d = mul_rows(x2d, Tensor<S>::from_array({B * C}, std::move(g)));
    x2d = add(x2d, rep_col(Tensor<S>::from_array({B * C}, std::move(s)), spatial));
    x = reshape(x2d, images.shape());
  }

  if (plan.cutout_mask) {
    FlatArray<S> m(B * C * spatial);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t c = 0; c < C; ++c)
        for (std::int64_t p = 0; p < spatial; ++p)
          m[(b * C + c) * spatial + p] =
              static_cast<S>((*plan.cutout_mask)[static_cast<std::size_t>(b * spatial + p)]);
    x = mul(x, Tensor<S>::from_array(images.shape(), std::move(m)));
  }
  return x;
}

// Convenience wrapper: draw + apply in one call.
template <typename S>
Tensor<S> augment(const Tensor<S>& images, const AugmentationState& state, RandomStream& rng) {
  const AugmentationPlan plan = draw_augmentation(
      state, static_cast<std::size_t>(images.dim(0)), static_cast<int>(images.dim(3)), rng);
  return apply_augmentation(images, plan);
}

}  // namespace pip
