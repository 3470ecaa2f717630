#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pip/ops.hpp"
#include "pip/rng.hpp"

// Small building blocks shared by the generator, discriminator, and stub
// encoders: named parameter registration, dense layers, and the channel plan.

namespace pip {

// Flat name -> leaf-tensor table. Modules register parameters at
// construction; the optimizer, EMA, and checkpoints all walk this list, so
// registration order is part of the persistence contract.
template <typename S>
struct ParamRegistry {
  std::vector<std::pair<std::string, Tensor<S>>> items;

  Tensor<S> add(const std::string& name, Tensor<S> t) {
    for (const auto& kv : items)
      if (kv.first == name) throw std::logic_error("duplicate parameter name: " + name);
    t.set_requires_grad(true);
    items.emplace_back(name, t);
    return t;
  }

  std::vector<Tensor<S>> tensors() const {
    std::vector<Tensor<S>> out;
    out.reserve(items.size());
    for (const auto& kv : items) out.push_back(kv.second);
    return out;
  }

  const Tensor<S>* find(const std::string& name) const {
    for (const auto& kv : items)
      if (kv.first == name) return &kv.second;
    return nullptr;
  }

  std::size_t size() const { return items.size(); }
};

// Dense layer, weight [out,in] drawn N(0, 1/in) so activations start near
// unit scale; bias starts at a caller-chosen constant.
template <typename S>
struct Linear {
  Tensor<S> weight;  // [out, in]
  Tensor<S> bias;    // [out] or undefined

  Linear() = default;
  Linear(ParamRegistry<S>& reg, const std::string& name, std::int64_t in, std::int64_t out,
         RandomStream& rng, bool with_bias = true, double bias_init = 0.0) {
    weight = reg.add(name + ".weight",
                     Tensor<S>::randn({out, in}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
    if (with_bias) bias = reg.add(name + ".bias", Tensor<S>::full({out}, static_cast<S>(bias_init)));
  }

  Tensor<S> forward(const Tensor<S>& x) const { return linear(x, weight, bias); }
  std::int64_t out_features() const { return weight.dim(0); }
  std::int64_t in_features() const { return weight.dim(1); }
};

// leaky_relu(0.2) scaled by sqrt(2) to preserve variance, the convention of
// style-based generators.
template <typename S>
Tensor<S> lrelu_gain(const Tensor<S>& x) {
  return scale(leaky_relu(x, 0.2), std::sqrt(2.0));
}

// Stack of Linear layers with lrelu_gain between them (none after the last).
template <typename S>
struct MLP {
  std::vector<Linear<S>> layers;

  MLP() = default;
  MLP(ParamRegistry<S>& reg, const std::string& name, std::int64_t in, std::int64_t hidden,
      std::int64_t out, int depth, RandomStream& rng) {
    if (depth < 1) throw std::invalid_argument("MLP depth must be >= 1");
    for (int i = 0; i < depth; ++i) {
      const std::int64_t li = i == 0 ? in : hidden;
      const std::int64_t lo = i == depth - 1 ? out : hidden;
      layers.emplace_back(reg, name + "." + std::to_string(i), li, lo, rng);
    }
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    Tensor<S> h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(h);
      if (i + 1 < layers.size()) h = lrelu_gain(h);
    }
    return h;
  }

  int depth() const { return static_cast<int>(layers.size()); }
};

// Feature width at each synthesis/discriminator resolution, desk-scale.
// `width_mult` shrinks the plan uniformly for fast tests (floor 4).
inline std::int64_t channels_at(int resolution, double width_mult = 1.0) {
  static const std::map<int, std::int64_t> plan = {
      {4, 128}, {8, 128}, {16, 64}, {32, 64}, {64, 32}, {128, 16}, {256, 8}};
  auto it = plan.find(resolution);
  if (it == plan.end())
    throw std::invalid_argument("no channel plan for resolution " + std::to_string(resolution));
  const auto scaled = static_cast<std::int64_t>(std::lround(it->second * width_mult));
  return std::max<std::int64_t>(4, scaled);
}

inline bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

// Synthesis resolutions for a model of the given output resolution: 4..R.
inline std::vector<int> model_resolutions(int resolution) {
  if (!is_power_of_two(resolution) || resolution < 4 || resolution > 256)
    throw std::invalid_argument("model resolution must be a power of two in [4, 256]");
  std::vector<int> out;
  for (int r = 4; r <= resolution; r *= 2) out.push_back(r);
  return out;
}

// Per-channel bias over feature maps: x[B,C,H,W] + b[C].
template <typename S>
Tensor<S> bias_channels(const Tensor<S>& x, const Tensor<S>& b) {
  const std::int64_t batch = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Tensor<S> x2d = reshape(x, {batch * ch, spatial});
  Tensor<S> brep = reshape(rep_row(b, batch), {batch * ch});  // row-major: [b*C + c]
  return reshape(add(x2d, rep_col(brep, spatial)), x.shape());
}

// Per-(sample,channel) scaling: x[B,C,H,W] * m[B,C].
template <typename S>
Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& m) {
  const std::int64_t batch = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Tensor<S> x2d = reshape(x, {batch * ch, spatial});
  return reshape(mul_rows(x2d, reshape(m, {batch * ch})), x.shape());
}

}  // namespace pip
