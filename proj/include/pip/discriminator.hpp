#pragma once

#include <string>
#include <vector>

#include "pip/errors.hpp"
#include "pip/nn.hpp"

// Conditional discriminator: a plain conv trunk mirroring the generator's
// channel plan, a scalar head, and a projection term against the class
// embedding,  D(x, c) = d(x) + <phi(x), e(c)>.

namespace pip {

template <typename S>
struct Conv2dLayer {
  Tensor<S> weight;  // [out, in, k, k]
  Tensor<S> bias;    // [out]
  std::int64_t kernel = 3;

  Conv2dLayer() = default;
  Conv2dLayer(ParamRegistry<S>& reg, const std::string& name, std::int64_t in_ch,
              std::int64_t out_ch, std::int64_t k, RandomStream& rng)
      : kernel(k) {
    const double fan_in = static_cast<double>(in_ch * k * k);
    weight = reg.add(name + ".weight",
                     Tensor<S>::randn({out_ch, in_ch, k, k}, rng, 1.0 / std::sqrt(fan_in)));
    bias = reg.add(name + ".bias", Tensor<S>::zeros({out_ch}));
  }

  Tensor<S> forward(const Tensor<S>& x) const {
    return bias_channels(conv2d(x, weight, kernel / 2), bias);
  }
};

struct DiscriminatorConfig {
  int resolution = 32;
  std::int64_t feature_dim = 512;  // class-embedding width entering e(.)
  double width_mult = 1.0;
  bool onehot_condition = false;  // project a two-way one-hot instead of c_m
};

template <typename S>
struct Discriminator {
  DiscriminatorConfig cfg;
  ParamRegistry<S> params;
  Conv2dLayer<S> from_rgb;  // 3 -> ch(R), 1x1

  struct Block {
    int resolution = 0;
    Conv2dLayer<S> conv1, conv2;  // ch(res)->ch(res), ch(res)->ch(res/2)
  };
  std::vector<Block> blocks;  // resolutions R, R/2, ..., 8
  Linear<S> dense;            // ch(4)*16 -> ch(4)
  Linear<S> head;             // ch(4) -> 1
  Linear<S> embed;            // feature_dim (or 2) -> ch(4), bias-free

  Discriminator() = default;

  Discriminator(const DiscriminatorConfig& config, RandomStream& rng) : cfg(config) {
    const std::vector<int> res = model_resolutions(cfg.resolution);
    from_rgb = Conv2dLayer<S>(params, "fromrgb", 3, channels_at(cfg.resolution, cfg.width_mult),
                              1, rng);
    for (auto it = res.rbegin(); it != res.rend() && *it >= 8; ++it) {
      const int r = *it;
      Block b;
      b.resolution = r;
      const std::int64_t ch = channels_at(r, cfg.width_mult);
      const std::int64_t ch_down = channels_at(r / 2, cfg.width_mult);
      b.conv1 = Conv2dLayer<S>(params, "b" + std::to_string(r) + ".conv1", ch, ch, 3, rng);
      b.conv2 = Conv2dLayer<S>(params, "b" + std::to_string(r) + ".conv2", ch, ch_down, 3, rng);
      blocks.push_back(std::move(b));
    }
    const std::int64_t ch4 = channels_at(4, cfg.width_mult);
    dense = Linear<S>(params, "dense", ch4 * 4 * 4, ch4, rng);
    head = Linear<S>(params, "head", ch4, 1, rng);
    embed = Linear<S>(params, "embed", cfg.onehot_condition ? 2 : cfg.feature_dim, ch4, rng,
                      /*with_bias=*/false);
  }

  std::int64_t trunk_dim() const { return channels_at(4, cfg.width_mult); }
  std::int64_t condition_dim() const { return embed.in_features(); }

  // phi(x): trunk features at 4x4, flattened through the dense layer.
  Tensor<S> features(const Tensor<S>& x) const {
    if (x.dim(2) != cfg.resolution || x.dim(3) != cfg.resolution || x.dim(1) != 3)
      throw std::invalid_argument("discriminator expects [B,3," +
                                  std::to_string(cfg.resolution) + "," +
                                  std::to_string(cfg.resolution) + "] input");
    Tensor<S> h = lrelu_gain(from_rgb.forward(x));
    for (const auto& b : blocks) {
      h = lrelu_gain(b.conv1.forward(h));
      h = lrelu_gain(b.conv2.forward(h));
      h = avgpool2x(h);
    }
    h = reshape(h, {x.dim(0), trunk_dim() * 4 * 4});
    return lrelu_gain(dense.forward(h));
  }

  // D(x, c) as a [B] vector of logits. cond rows are class embeddings (or
  // one-hot rows in onehot mode).
  Tensor<S> logits(const Tensor<S>& x, const Tensor<S>& cond) const {
    if (cond.dim(1) != condition_dim())
      throw std::invalid_argument("condition width " + std::to_string(cond.dim(1)) +
                                  " does not match discriminator expectation " +
                                  std::to_string(condition_dim()));
    Tensor<S> phi = features(x);
    Tensor<S> uncond = reshape(head.forward(phi), {x.dim(0)});
    Tensor<S> proj = rowwise_dot(phi, embed.forward(cond));
    return add(uncond, proj);
  }
};

}  // namespace pip
