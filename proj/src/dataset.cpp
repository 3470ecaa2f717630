#include "pip/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "pip/image.hpp"
#include "pip/nn.hpp"

namespace pip {
namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

DatasetClass load_class(const std::filesystem::path& dir, int class_id, const std::string& name,
                        int resolution, std::size_t cap) {
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("dataset is missing the '" + name + "' subdirectory: " + dir.string());

  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      files.push_back(entry.path().filename().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError(name + " class has no images: " + dir.string());
  if (cap > 0 && files.size() > cap) files.resize(cap);

  DatasetClass cls;
  cls.class_id = class_id;
  cls.name = name;
  cls.image_files = files;
  cls.images.reserve(files.size());
  for (const auto& f : files) {
    ImageU8 img = decode_image(dir / f);
    img = center_crop_square(img);
    img = resize_bilinear(img, resolution, resolution);
    std::vector<float> chw(static_cast<std::size_t>(3) * resolution * resolution);
    image_to_float(img, chw.data());
    cls.images.push_back(std::move(chw));
  }
  return cls;
}

}  // namespace

std::uint64_t UnbalancedDataset::fingerprint() const {
  std::string blob;
  for (const auto& cls : classes) {
    blob += cls.name;
    blob += '\n';
    for (const auto& f : cls.image_files) {
      blob += f;
      blob += '\n';
    }
  }
  return fnv1a64(blob.data(), blob.size());
}

UnbalancedDataset load_dataset(const std::filesystem::path& root, int resolution,
                               std::size_t peer_cap) {
  if (!is_power_of_two(resolution) || resolution < 8)
    throw ConfigError("resolution must be a power of two >= 8, got " +
                      std::to_string(resolution));
  if (!std::filesystem::is_directory(root))
    throw ConfigError("dataset root is not a directory: " + root.string());

  UnbalancedDataset ds;
  ds.resolution = resolution;
  ds.classes.push_back(load_class(root / "peer", kPeerClass, "peer", resolution, peer_cap));
  ds.classes.push_back(load_class(root / "target", kTargetClass, "target", resolution, 0));

  ds.text_labels = {"peer", "target"};
  const std::filesystem::path labels = root / "labels.txt";
  if (std::filesystem::exists(labels)) {
    std::ifstream is(labels);
    std::string line;
    for (int i = 0; i < 2 && std::getline(is, line); ++i)
      if (!line.empty()) ds.text_labels[static_cast<std::size_t>(i)] = line;
  }

  if (ds.target().count() > ds.peer().count())
    ds.warnings.push_back("target class (" + std::to_string(ds.target().count()) +
                          " images) is larger than peer class (" +
                          std::to_string(ds.peer().count()) + ")");
  return ds;
}

Sampler::Sampler(const UnbalancedDataset& dataset, const SamplingPolicy& policy)
    : dataset_(dataset), policy_(policy), stream_(derive_seed(policy.seed, "sampler")) {}

int Sampler::draw_class() {
  // Uniform over images: a slot is target with probability n_t / n_total.
  const std::size_t n_peer = dataset_.peer().count();
  const std::size_t n_total = dataset_.total_images();
  return stream_.uniform_index(n_total) >= n_peer ? kTargetClass : kPeerClass;
}

Batch Sampler::sample_batch(std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const int R = dataset_.resolution;
  const std::size_t plane = static_cast<std::size_t>(3) * R * R;

  Batch batch;
  batch.class_ids = sample_class_ids(batch_size);
  batch.within_class_indices.resize(batch_size);
  FlatArray<float> buf(static_cast<std::int64_t>(batch_size * plane));
  for (std::size_t b = 0; b < batch_size; ++b) {
    const DatasetClass& cls = dataset_.classes[static_cast<std::size_t>(batch.class_ids[b])];
    const std::size_t idx = stream_.uniform_index(cls.count());
    batch.within_class_indices[b] = idx;
    std::copy(cls.images[idx].begin(), cls.images[idx].end(), buf.data() + b * plane);
  }
  batch.images = Tensor<float>::from_array({static_cast<std::int64_t>(batch_size), 3, R, R},
                                           std::move(buf));
  return batch;
}

std::vector<int> Sampler::sample_class_ids(std::size_t batch_size) {
  std::vector<int> ids(batch_size, kPeerClass);
  if (policy_.mode == SamplingPolicy::Mode::kUniformOverImages) {
    for (auto& id : ids) id = draw_class();
  } else {
    // Exactly round(fraction * B) leading target slots.
    const auto n_target = static_cast<std::size_t>(
        std::llround(policy_.target_fraction * static_cast<double>(batch_size)));
    for (std::size_t b = 0; b < std::min(n_target, batch_size); ++b) ids[b] = kTargetClass;
  }
  return ids;
}

AugmentationPlan draw_augmentation(const AugmentationState& state, std::size_t batch,
                                   int resolution, RandomStream& rng) {
  AugmentationPlan plan;
  plan.gain.assign(batch, 1.0);
  plan.shift.assign(batch, 0.0);
  if (state.p <= 0.0 || batch == 0) return plan;

  const int R = resolution;
  const std::size_t spatial = static_cast<std::size_t>(R) * R;
  const int max_shift = std::max(1, R / 8);

  auto maps = std::make_shared<std::vector<std::int32_t>>();
  bool any_remap = false;
  std::vector<float> cut;
  bool any_cut = false;

  for (std::size_t b = 0; b < batch; ++b) {
    bool flip = state.flip && rng.bernoulli(state.p);
    int dx = 0, dy = 0;
    if (state.translate && rng.bernoulli(state.p)) {
      dx = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(2 * max_shift + 1))) -
           max_shift;
      dy = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(2 * max_shift + 1))) -
           max_shift;
    }
    if (state.color && rng.bernoulli(state.p)) {
      plan.gain[b] = rng.uniform(0.8, 1.25);
      plan.shift[b] = rng.uniform(-0.2, 0.2);
    }
    int cut_x = -1, cut_y = -1;
    if (state.cutout && rng.bernoulli(state.p)) {
      cut_x = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(R)));
      cut_y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(R)));
      any_cut = true;
    }

    // One composed source-index map per sample: out(y,x) = in(sy, sx).
    maps->resize((b + 1) * spatial);
    std::int32_t* m = maps->data() + b * spatial;
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x) {
        // flip first, then shift by (dx,dy) with edge padding: walk the
        // output pixel back through translate, then through the mirror.
        const int tx = std::clamp(x - dx, 0, R - 1);
        const int sx = flip ? (R - 1 - tx) : tx;
        const int sy = std::clamp(y - dy, 0, R - 1);
        m[y * R + x] = static_cast<std::int32_t>(sy * R + sx);
      }
    if (flip || dx || dy) any_remap = true;

    cut.resize((b + 1) * spatial, 1.0f);
    if (cut_x >= 0) {
      const int half = R / 4;  // cutout square has side R/2
      float* cm = cut.data() + b * spatial;
      for (int y = std::max(0, cut_y - half); y < std::min(R, cut_y + half); ++y)
        for (int x = std::max(0, cut_x - half); x < std::min(R, cut_x + half); ++x)
          cm[y * R + x] = 0.0f;
    }
  }

  bool color_active = false;
  for (std::size_t b = 0; b < batch; ++b)
    if (plan.gain[b] != 1.0 || plan.shift[b] != 0.0) color_active = true;

  if (any_remap) plan.pixel_maps = maps;
  if (any_cut) plan.cutout_mask = std::make_shared<std::vector<float>>(std::move(cut));
  plan.any = any_remap || any_cut || color_active;
  return plan;
}

}  // namespace pip
