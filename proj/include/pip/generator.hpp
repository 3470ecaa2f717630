#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pip/errors.hpp"
#include "pip/nn.hpp"

// Style-based generator with a second, class-conditional modulation path.
// Each synthesis conv is modulated per input channel by the product of a
// style scale s (from the per-sample latent w) and a class scale c (from the
// shared class code c_hat), then demodulated per output channel:
//
//   w'_ijk = s_i * c_i * w_ijk,   w''_ijk = w'_ijk / sqrt(sum_{i,k} w'^2 + eps)
//
// A key schedule gates the class path per resolution: where a resolution is
// not in the schedule, the class scale is replaced by all-ones, leaving the
// layer a function of the style alone. There is no per-layer style override
// and no path-length machinery anywhere in this module.

namespace pip {

// Resolutions whose convs receive class modulation.
struct KeySchedule {
  std::set<int> active;

  bool contains(int resolution) const { return active.count(resolution) > 0; }
  bool empty() const { return active.empty(); }
};

// Textual form: "none" for the empty schedule, else '+'-joined resolutions,
// e.g. "4+8+16". Accepted resolutions are powers of two in [4, 256]; anything
// else (including duplicates) is a configuration error naming the offender.
inline KeySchedule parse_key_string(const std::string& text) {
  KeySchedule key;
  if (text == "none") return key;
  if (text.empty()) throw ConfigError("key schedule string is empty; use \"none\" for no gating");
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find('+', pos);
    const std::string token =
        text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (token.empty())
      throw ConfigError("key schedule '" + text + "' contains an empty entry");
    int value = 0;
    for (char ch : token) {
      if (ch < '0' || ch > '9')
        throw ConfigError("key schedule entry '" + token + "' is not a number");
      value = value * 10 + (ch - '0');
      if (value > 256) break;
    }
    if (value < 4 || value > 256 || !is_power_of_two(value))
      throw ConfigError("key schedule entry '" + token +
                        "' is not a power-of-two resolution in [4, 256]");
    if (!key.active.insert(value).second)
      throw ConfigError("key schedule '" + text + "' lists resolution " + token + " twice");
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return key;
}

inline std::string format_key_schedule(const KeySchedule& key) {
  if (key.empty()) return "none";
  std::string out;
  for (int r : key.active) {  // std::set iterates ascending
    if (!out.empty()) out += '+';
    out += std::to_string(r);
  }
  return out;
}

// The schedule must reference only resolutions the model actually has.
inline void validate_key_schedule(const KeySchedule& key, int resolution) {
  const std::vector<int> all = model_resolutions(resolution);
  for (int r : key.active)
    if (std::find(all.begin(), all.end(), r) == all.end())
      throw ConfigError("key resolution " + std::to_string(r) +
                        " is not a synthesis resolution of a " + std::to_string(resolution) +
                        "px model");
}

// Gate: pass the class scale where the resolution is keyed in, otherwise the
// neutral all-ones scale.
template <typename S>
Tensor<S> apply_key(const KeySchedule& key, int resolution, const Tensor<S>& class_scale) {
  if (key.contains(resolution)) return class_scale;
  return Tensor<S>::ones(class_scale.shape());
}

// Materialized effective weights for one (s, c) pair; the reference form of
// the modulation above. weight is [out, in, k, k] row-major.
template <typename S>
FlatArray<S> modulate_demodulate(const FlatArray<S>& weight, std::int64_t out_ch,
                                 std::int64_t in_ch, std::int64_t kernel, const FlatArray<S>& s,
                                 const FlatArray<S>& c, S eps = static_cast<S>(1e-8),
                                 bool demodulate = true) {
  const std::int64_t ksq = kernel * kernel;
  if (weight.size() != out_ch * in_ch * ksq)
    throw std::invalid_argument("modulate_demodulate: weight size mismatch");
  if (s.size() != in_ch || c.size() != in_ch)
    throw std::invalid_argument("modulate_demodulate: scale length must equal in_ch");
  FlatArray<S> out(weight.size());
  for (std::int64_t j = 0; j < out_ch; ++j) {
    auto block = out.segment(j * in_ch * ksq, in_ch * ksq);
    for (std::int64_t i = 0; i < in_ch; ++i)
      block.segment(i * ksq, ksq) =
          weight.segment((j * in_ch + i) * ksq, ksq) * (s[i] * c[i]);
    if (demodulate) block /= std::sqrt(block.square().sum() + eps);
  }
  return out;
}

// Conv layer with per-sample weight modulation. The forward path never
// materializes per-sample weights: modulating the input channels and
// rescaling the output channels computes the same function,
//   conv(x, w'') == d ⊙ conv(x ⊙ m, w),  m_i = s_i c_i,
//   d_j = 1/sqrt(sum_i m_i^2 * sum_k w_jik^2 + eps),
// which keeps one GEMM per batch.
template <typename S>
struct ModulatedConv2d {
  Tensor<S> weight;       // [out, in, k, k]
  Tensor<S> bias;         // [out]
  Linear<S> affine_s;     // w_dim -> in, bias starts at 1
  Linear<S> affine_c;     // c_dim -> in, bias starts at 1; absent if !class_mod
  Tensor<S> noise_strength;  // [1]; absent if !with_noise
  int resolution = 0;
  std::int64_t kernel = 3;
  bool demodulate = true;
  bool class_mod = true;
  bool with_noise = true;
  S eps = static_cast<S>(1e-8);

  ModulatedConv2d() = default;
  ModulatedConv2d(ParamRegistry<S>& reg, const std::string& name, std::int64_t in_ch,
                  std::int64_t out_ch, std::int64_t k, int res, std::int64_t w_dim,
                  std::int64_t c_dim, bool demod, bool cmod, bool noise, RandomStream& rng)
      : resolution(res), kernel(k), demodulate(demod), class_mod(cmod), with_noise(noise) {
    const double fan_in = static_cast<double>(in_ch * k * k);
    weight = reg.add(name + ".weight",
                     Tensor<S>::randn({out_ch, in_ch, k, k}, rng, 1.0 / std::sqrt(fan_in)));
    bias = reg.add(name + ".bias", Tensor<S>::zeros({out_ch}));
    affine_s = Linear<S>(reg, name + ".affine_s", w_dim, in_ch, rng, true, 1.0);
    if (class_mod) affine_c = Linear<S>(reg, name + ".affine_c", c_dim, in_ch, rng, true, 1.0);
    if (with_noise) noise_strength = reg.add(name + ".noise", Tensor<S>::zeros({1}));
  }

  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t out_channels() const { return weight.dim(0); }

  // Core conv given the combined per-sample modulation m [B,in] (= s, or
  // s ⊙ c where the class path is keyed in).
  Tensor<S> forward_scales(const Tensor<S>& x, const Tensor<S>& m) const {
    Tensor<S> y = conv2d(scale_channels(x, m), weight, kernel / 2);
    if (demodulate) {
      const std::int64_t out_ch = weight.dim(0), in_ch = weight.dim(1);
      Tensor<S> wsq =
          reshape(row_sum(reshape(square(weight), {out_ch * in_ch, kernel * kernel})),
                  {out_ch, in_ch});
      Tensor<S> d = rsqrt(add_scalar(matmul_nt(square(m), wsq), eps));  // [B,out]
      y = scale_channels(y, d);
    }
    return y;
  }

  // x [B,in,H,W]; w [B,w_dim]; c_hat [B,c_dim]. The key decides whether the
  // class path contributes at this layer; s*1 == s exactly, so a gated-off
  // layer is bitwise independent of c_hat.
  Tensor<S> forward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& c_hat,
                    const KeySchedule& key) const {
    Tensor<S> m = affine_s.forward(w);
    if (class_mod && key.contains(resolution)) m = mul(m, affine_c.forward(c_hat));
    return forward_scales(x, m);
  }

  // noise (constant [B,1?]-broadcast map) + bias; activation is the block's
  // choice so toRGB can stay linear.
  Tensor<S> add_noise_bias(const Tensor<S>& y, const Tensor<S>& noise) const {
    Tensor<S> out = y;
    if (with_noise && noise.defined())
      out = add(out, mul(broadcast_scalar(noise_strength, noise.shape()), noise));
    return bias_channels(out, bias);
  }
};

// One resolution of synthesis: optional 2x upsample, two modulated convs
// with noise and activation, and a style-only toRGB tap feeding the skip
// accumulator.
template <typename S>
struct SynthesisBlock {
  int resolution = 0;
  ModulatedConv2d<S> conv1, conv2, to_rgb;

  SynthesisBlock() = default;
  SynthesisBlock(ParamRegistry<S>& reg, const std::string& name, std::int64_t in_ch,
                 std::int64_t out_ch, int res, std::int64_t w_dim, std::int64_t c_dim,
                 RandomStream& rng)
      : resolution(res),
        conv1(reg, name + ".conv1", in_ch, out_ch, 3, res, w_dim, c_dim, true, true, true, rng),
        conv2(reg, name + ".conv2", out_ch, out_ch, 3, res, w_dim, c_dim, true, true, true, rng),
        to_rgb(reg, name + ".torgb", out_ch, 3, 1, res, w_dim, c_dim, false, false, false, rng) {}
};

struct GeneratorConfig {
  int resolution = 32;
  std::int64_t latent_dim = 64;
  std::int64_t w_dim = 64;
  std::int64_t c_dim = 64;
  std::int64_t feature_dim = 512;  // class-embedding width entering f_c
  int fw_layers = 4;
  int fc_layers = 2;
  double width_mult = 1.0;
  KeySchedule key;
};

template <typename S>
struct Generator {
  GeneratorConfig cfg;
  ParamRegistry<S> params;
  MLP<S> f_w, f_c;
  Tensor<S> const_input;  // [ch(4) * 16]
  std::vector<SynthesisBlock<S>> blocks;

  Generator() = default;

  Generator(const GeneratorConfig& config, RandomStream& rng) : cfg(config) {
    if (!(cfg.fc_layers < cfg.fw_layers))
      throw ConfigError("class mapping depth (fc_layers=" + std::to_string(cfg.fc_layers) +
                        ") must be smaller than latent mapping depth (fw_layers=" +
                        std::to_string(cfg.fw_layers) + ")");
    validate_key_schedule(cfg.key, cfg.resolution);
    f_w = MLP<S>(params, "map_w", cfg.latent_dim, cfg.w_dim, cfg.w_dim, cfg.fw_layers, rng);
    f_c = MLP<S>(params, "map_c", cfg.feature_dim, cfg.c_dim, cfg.c_dim, cfg.fc_layers, rng);
    const std::int64_t ch4 = channels_at(4, cfg.width_mult);
    const_input = params.add("const", Tensor<S>::randn({ch4 * 4 * 4}, rng));
    std::int64_t prev = ch4;
    for (int res : model_resolutions(cfg.resolution)) {
      const std::int64_t ch = channels_at(res, cfg.width_mult);
      blocks.emplace_back(params, "b" + std::to_string(res), prev, ch, res, cfg.w_dim, cfg.c_dim,
                          rng);
      prev = ch;
    }
  }

  // w = f_w(normalize(z)): the latent loses its scale before mapping.
  Tensor<S> map_latent(const Tensor<S>& z) const {
    return f_w.forward(rms_normalize_rows(z));
  }

  Tensor<S> map_class(const Tensor<S>& c_m) const {
    if (c_m.dim(1) != cfg.feature_dim)
      throw std::invalid_argument("class embedding has dimension " + std::to_string(c_m.dim(1)) +
                                  ", model expects " + std::to_string(cfg.feature_dim));
    return f_c.forward(c_m);
  }

  // Constant-input synthesis; every conv consumes the same per-sample w and
  // the same c_hat, gated per resolution. Noise is a pure function of
  // (noise_seed, batch size, layer order).
  Tensor<S> synthesize(const Tensor<S>& w, const Tensor<S>& c_hat,
                       std::uint64_t noise_seed) const {
    const std::int64_t batch = w.dim(0);
    RandomStream noise_rng(derive_seed(noise_seed, "synthesis-noise"));
    const std::int64_t ch4 = channels_at(4, cfg.width_mult);
    Tensor<S> x = reshape(rep_row(const_input, batch), {batch, ch4, 4, 4});
    Tensor<S> rgb;
    for (const auto& block : blocks) {
      if (block.resolution > 4) x = upsample2x(x);
      x = lrelu_gain(block.conv1.add_noise_bias(
          block.conv1.forward(x, w, c_hat, cfg.key),
          draw_noise(noise_rng, batch, block.conv1.out_channels(), block.resolution)));
      x = lrelu_gain(block.conv2.add_noise_bias(
          block.conv2.forward(x, w, c_hat, cfg.key),
          draw_noise(noise_rng, batch, block.conv2.out_channels(), block.resolution)));
      Tensor<S> tap = block.to_rgb.add_noise_bias(
          block.to_rgb.forward(x, w, c_hat, cfg.key), Tensor<S>());
      rgb = rgb.defined() ? add(upsample2x(rgb), tap) : tap;
    }
    return rgb;
  }

  // map -> map -> synthesize. c_m is one embedding row per sample [B,feature]
  // or a single [1,feature] row shared by the whole batch.
  Tensor<S> generate(const Tensor<S>& z, const Tensor<S>& c_m, std::uint64_t noise_seed) const {
    Tensor<S> c_rows = c_m;
    if (c_m.dim(0) == 1 && z.dim(0) > 1) c_rows = rep_one_row(c_m, z.dim(0));
    return synthesize(map_latent(z), map_class(c_rows), noise_seed);
  }

  // Linear interpolation in W and (post-mapping) C; endpoints are the exact
  // generate() outputs because t=0 and t=1 reuse the mapped tensors as-is.
  std::vector<Tensor<S>> interpolate(const Tensor<S>& z_a, const Tensor<S>& c_m_a,
                                     const Tensor<S>& z_b, const Tensor<S>& c_m_b, int steps,
                                     std::uint64_t noise_seed) const {
    if (steps < 2) throw std::invalid_argument("interpolation needs at least 2 steps");
    Tensor<S> w_a = map_latent(z_a), w_b = map_latent(z_b);
    Tensor<S> c_a = map_class(c_m_a), c_b = map_class(c_m_b);
    std::vector<Tensor<S>> frames;
    frames.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
      const double t = static_cast<double>(i) / (steps - 1);
      Tensor<S> w, c;
      if (i == 0) {
        w = w_a;
        c = c_a;
      } else if (i == steps - 1) {
        w = w_b;
        c = c_b;
      } else {
        w = add(scale(w_a, 1.0 - t), scale(w_b, t));
        c = add(scale(c_a, 1.0 - t), scale(c_b, t));
      }
      frames.push_back(synthesize(w, c, noise_seed));
    }
    return frames;
  }

 private:
  // One noise value per (sample, pixel), shared across channels.
  static Tensor<S> draw_noise(RandomStream& rng, std::int64_t batch, std::int64_t channels,
                              int res) {
    const std::int64_t spatial = static_cast<std::int64_t>(res) * res;
    FlatArray<S> v(batch * channels * spatial);
    for (std::int64_t b = 0; b < batch; ++b) {
      const std::int64_t base = b * channels * spatial;
      for (std::int64_t p = 0; p < spatial; ++p) v[base + p] = static_cast<S>(rng.normal());
      for (std::int64_t ch = 1; ch < channels; ++ch)
        v.segment(base + ch * spatial, spatial) = v.segment(base, spatial);
    }
    return Tensor<S>::from_array({batch, channels, static_cast<std::int64_t>(res),
                                  static_cast<std::int64_t>(res)},
                                 std::move(v));
  }

  // Repeat a single [1,D] row into [rows,D].
  static Tensor<S> rep_one_row(const Tensor<S>& row, std::int64_t rows) {
    return rep_row(reshape(row, {row.dim(1)}), rows);
  }
};

}  // namespace pip
