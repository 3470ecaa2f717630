#pragma once

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "pip/dataset.hpp"
#include "pip/discriminator.hpp"
#include "pip/encoders.hpp"
#include "pip/generator.hpp"
#include "pip/image.hpp"
#include "pip/losses.hpp"
#include "pip/optim.hpp"

// Alternating D/G optimization with lazy R1, the lazily scheduled paired-class
// direction loss, a sign-controller for the augmentation strength, and an EMA
// copy of the generator. There is no path-length or style-mixing machinery:
// neither the config nor the state carries any such field.
//
// Determinism contract: every random draw flows from named streams derived
// from the seed (sampler, latents, augmentation) or from per-step derived
// one-shot seeds (synthesis noise, direction-loss noise). The direction branch
// never touches a persistent stream, so toggling it cannot shift any other
// draw in the run.

namespace pip {

struct AdaConfig {
  double target = 0.6;      // controller aims for this mean sign of D(real)
  double adjust = 0.002;    // p moves by this much per step
  int ring = 16;            // batches averaged into the sign statistic
  bool enabled = true;
};

struct TrainConfig {
  std::int64_t total_steps = 500;
  std::size_t batch_size = 8;
  AdamConfig adam_g;  // lr 2.5e-3, betas (0.0, 0.99)
  AdamConfig adam_d;
  double r1_gamma = 1.0;
  std::int64_t r1_interval = 16;
  DirectionLossConfig direction;
  AdaConfig ada;
  double ema_beta = 0.999;
  SamplingPolicy::Mode sampling = SamplingPolicy::Mode::kTargetOversample;
  double target_fraction = 0.5;
  std::uint64_t seed = 0;
  std::int64_t snapshot_interval = 0;    // 0 disables
  std::int64_t checkpoint_interval = 0;  // 0 disables
  GeneratorConfig generator;
  bool onehot_condition = false;

  void validate() const {
    if (total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (r1_interval < 1) throw ConfigError("r1_interval must be >= 1");
    if (direction.lazy_interval < 1) throw ConfigError("direction interval must be >= 1");
    if (r1_gamma < 0) throw ConfigError("r1_gamma must be >= 0");
    if (direction.weight < 0) throw ConfigError("direction weight must be >= 0");
    if (!(ema_beta >= 0) || ema_beta >= 1) throw ConfigError("ema_beta must lie in [0, 1)");
    if (!(ada.target > 0) || !(ada.target < 1))
      throw ConfigError("ada target must lie in (0, 1)");
    if (ada.adjust < 0) throw ConfigError("ada adjust step must be >= 0");
    if (ada.ring < 1) throw ConfigError("ada ring size must be >= 1");
    if (target_fraction < 0 || target_fraction > 1)
      throw ConfigError("target_fraction must lie in [0, 1]");
    if (snapshot_interval < 0 || checkpoint_interval < 0)
      throw ConfigError("intervals must be >= 0");
  }
};

// p <- clamp(p + adjust * sign(r_t - target), 0, 1); sign(0) = 0.
inline double update_ada_p(double p, double r_t, double target, double adjust) {
  const double delta = r_t - target;
  const double sign = delta > 0 ? 1.0 : (delta < 0 ? -1.0 : 0.0);
  return std::min(1.0, std::max(0.0, p + adjust * sign));
}

struct StepStats {
  std::int64_t step = 0;  // index of the step just executed
  double loss_d = 0;
  double loss_g = 0;
  std::optional<double> r1;
  std::optional<double> dir;
  double ada_p = 0;
  double r_t = 0;  // sign statistic after this step
};

inline std::string losses_csv_header() { return "step,loss_d,loss_g,r1,dir,p"; }

inline std::string losses_csv_row(const StepStats& s) {
  char buf[256];
  auto num = [](double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.9g", v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%" PRId64 ",%s,%s,%s,%s,%s", s.step, num(s.loss_d).c_str(),
                num(s.loss_g).c_str(), s.r1 ? num(*s.r1).c_str() : "",
                s.dir ? num(*s.dir).c_str() : "", num(s.ada_p).c_str());
  return std::string(buf);
}

namespace detail {

template <typename S>
Tensor<S> cast_images(const Tensor<float>& x) {
  if constexpr (std::is_same_v<S, float>) {
    return x;
  } else {
    FlatArray<S> out(x.array().size());
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = static_cast<S>(x.array()[i]);
    return Tensor<S>::from_array(x.shape(), std::move(out));
  }
}

inline std::string fmt_full(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.17g", v);
  return std::string(b);
}

}  // namespace detail

template <typename S>
class Trainer {
 public:
  Trainer(const TrainConfig& config, const UnbalancedDataset& data,
          const LinearImageEncoder<S>& image_encoder, const TextHashEncoder& text_encoder,
          const std::vector<ClassEmbedding>* precomputed_embeddings = nullptr)
      : cfg_(validated(config)),
        data_(&data),
        init_rng_g_(derive_seed(config.seed, "init-g")),
        init_rng_d_(derive_seed(config.seed, "init-d")),
        gen_(config.generator, init_rng_g_),
        disc_(make_disc_config(config), init_rng_d_),
        encoders_{image_encoder, text_encoder},
        sampler_(data, SamplingPolicy{config.sampling, config.target_fraction,
                                      derive_seed(config.seed, "sampler")}),
        latent_rng_(derive_seed(config.seed, "latent")),
        aug_rng_(derive_seed(config.seed, "augment")),
        opt_g_(gen_.params.tensors(), config.adam_g),
        opt_d_(disc_.params.tensors(), config.adam_d),
        ema_(clone_values(gen_.params.tensors())),
        ada_ring_(static_cast<std::size_t>(config.ada.ring), 0.0) {
    if (data.resolution != cfg_.generator.resolution)
      throw ConfigError("dataset resolution " + std::to_string(data.resolution) +
                        " does not match model resolution " +
                        std::to_string(cfg_.generator.resolution));
    if (image_encoder.feature_dim() != cfg_.generator.feature_dim)
      throw ConfigError("encoder feature dim " + std::to_string(image_encoder.feature_dim()) +
                        " does not match the model's feature_dim " +
                        std::to_string(cfg_.generator.feature_dim));
    if (text_encoder.dim != image_encoder.feature_dim())
      throw ConfigError("text encoder dim does not match image encoder dim");
    // The dataset's prompts (labels.txt or the defaults) are the source of
    // truth for the direction loss text anchors.
    cfg_.direction.t_peer = data.text_labels[0];
    cfg_.direction.t_target = data.text_labels[1];
    install_embeddings(precomputed_embeddings);
  }

  const TrainConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  double ada_p() const { return aug_.p; }
  std::int64_t zero_norm_warnings() const { return zero_norm_warnings_; }
  const Generator<S>& generator() const { return gen_; }
  const Discriminator<S>& discriminator() const { return disc_; }
  const std::vector<Tensor<S>>& ema_params() const { return ema_; }

  // [1, F] rows for the two classes.
  Tensor<S> class_embedding(int class_id) const {
    return class_id == kPeerClass ? cm_peer_ : cm_target_;
  }

  // Called with (step index, generator gradients) right before the G update.
  std::function<void(std::int64_t, const std::vector<Tensor<S>>&)> debug_g_grads;

  StepStats train_step() {
    const std::int64_t s = step_;
    const bool r1_now = s % cfg_.r1_interval == 0;
    const bool dir_now = cfg_.direction.enabled && should_apply_direction(s, cfg_.direction);
    StepStats stats;
    stats.step = s;

    // ---- discriminator update -------------------------------------------
    Batch reals = sampler_.sample_batch(cfg_.batch_size);
    Tensor<S> x_real = detail::cast_images<S>(reals.images);
    Tensor<S> z_d = Tensor<S>::randn({batch_i64(), cfg_.generator.latent_dim}, latent_rng_);
    std::vector<int> fake_ids = sampler_.sample_class_ids(cfg_.batch_size);
    Tensor<S> x_fake;
    {
      NoGradGuard ng;
      x_fake = gen_.generate(z_d, embedding_rows(fake_ids), derive_seed(cfg_.seed, "noise-d",
                                                                        static_cast<std::uint64_t>(s)));
    }
    const int res = cfg_.generator.resolution;
    AugmentationPlan plan_real = draw_augmentation(aug_, cfg_.batch_size, res, aug_rng_);
    AugmentationPlan plan_fake = draw_augmentation(aug_, cfg_.batch_size, res, aug_rng_);
    Tensor<S> xr_aug = apply_augmentation(x_real, plan_real);
    Tensor<S> xf_aug = apply_augmentation(x_fake, plan_fake);
    Tensor<S> cond_real = condition_rows(reals.class_ids);
    Tensor<S> cond_fake = condition_rows(fake_ids);

    Tensor<S> logits_real = disc_.logits(xr_aug, cond_real);
    Tensor<S> loss_d =
        discriminator_adversarial_loss(logits_real, disc_.logits(xf_aug, cond_fake));
    Tensor<S> total_d = loss_d;
    if (r1_now) {
      Tensor<S> r1 = r1_penalty(disc_, xr_aug, cond_real, cfg_.r1_gamma);
      stats.r1 = static_cast<double>(r1.item());
      total_d = add(total_d, scale(r1, static_cast<S>(cfg_.r1_interval)));
    }
    stats.loss_d = static_cast<double>(loss_d.item());
    opt_d_.step(grad(total_d, disc_.params.tensors()));

    // ---- augmentation controller ----------------------------------------
    double sign_sum = 0;
    for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
      const S v = logits_real.at(static_cast<std::int64_t>(b));
      sign_sum += v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    }
    ada_ring_[static_cast<std::size_t>(ada_filled_ % cfg_.ada.ring)] =
        sign_sum / static_cast<double>(cfg_.batch_size);
    ++ada_filled_;
    const std::int64_t filled = std::min<std::int64_t>(ada_filled_, cfg_.ada.ring);
    double r_t = 0;
    for (std::int64_t i = 0; i < filled; ++i) r_t += ada_ring_[static_cast<std::size_t>(i)];
    r_t /= static_cast<double>(filled);
    stats.r_t = r_t;
    if (cfg_.ada.enabled)
      aug_.p = update_ada_p(aug_.p, r_t, cfg_.ada.target, cfg_.ada.adjust);

    // ---- generator update ------------------------------------------------
    Tensor<S> z_g = Tensor<S>::randn({batch_i64(), cfg_.generator.latent_dim}, latent_rng_);
    std::vector<int> gen_ids = sampler_.sample_class_ids(cfg_.batch_size);
    Tensor<S> fake_g = gen_.generate(z_g, embedding_rows(gen_ids),
                                     derive_seed(cfg_.seed, "noise-g",
                                                 static_cast<std::uint64_t>(s)));
    AugmentationPlan plan_g = draw_augmentation(aug_, cfg_.batch_size, res, aug_rng_);
    Tensor<S> loss_g =
        generator_adversarial_loss(disc_.logits(apply_augmentation(fake_g, plan_g),
                                                condition_rows(gen_ids)));
    stats.loss_g = static_cast<double>(loss_g.item());
    Tensor<S> total_g = loss_g;
    if (dir_now) {
      // Re-uses this step's z; the noise seed is derived one-shot, so the
      // branch consumes nothing from the persistent streams.
      Tensor<S> dir = direction_loss(gen_, z_g, cm_peer_, cm_target_, encoders_,
                                     cfg_.direction,
                                     derive_seed(cfg_.seed, "dir-noise",
                                                 static_cast<std::uint64_t>(s)),
                                     &zero_norm_warnings_);
      stats.dir = static_cast<double>(dir.item());
      total_g = add(total_g, scale(dir, static_cast<S>(cfg_.direction.weight)));
    }
    std::vector<Tensor<S>> g_grads = grad(total_g, gen_.params.tensors());
    if (debug_g_grads) debug_g_grads(s, g_grads);
    opt_g_.step(g_grads);
    update_ema(ema_, gen_.params.tensors(), cfg_.ema_beta);

    stats.ada_p = aug_.p;
    check_finite(stats);
    last_stats_ = stats;
    ++step_;
    return stats;
  }

  // Renders a fixed probe sheet from the EMA weights: 16 samples on a 4x4
  // grid, top two rows peer-conditioned, bottom two target-conditioned.
  // Live weights are swapped out for the render and restored before return.
  void write_snapshot(const std::filesystem::path& path) {
    NoGradGuard ng;
    RandomStream probe(derive_seed(cfg_.seed, "snapshot"));
    Tensor<S> z = Tensor<S>::randn({16, cfg_.generator.latent_dim}, probe);
    std::vector<int> ids(16, kPeerClass);
    for (int i = 8; i < 16; ++i) ids[static_cast<std::size_t>(i)] = kTargetClass;

    std::vector<FlatArray<S>> saved;
    auto live = gen_.params.tensors();
    saved.reserve(live.size());
    for (auto& t : live) saved.push_back(t.array());
    for (std::size_t i = 0; i < live.size(); ++i) live[i].mutable_array() = ema_[i].array();
    Tensor<S> sheet = gen_.generate(z, embedding_rows(ids),
                                    derive_seed(cfg_.seed, "snapshot-noise"));
    for (std::size_t i = 0; i < live.size(); ++i) live[i].mutable_array() = saved[i];

    const int r = cfg_.generator.resolution;
    std::vector<float> canvas(static_cast<std::size_t>(3 * (4 * r) * (4 * r)), 0.0f);
    for (int tile = 0; tile < 16; ++tile) {
      const int ty = tile / 4, tx = tile % 4;
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < r; ++y)
          for (int x = 0; x < r; ++x)
            canvas[static_cast<std::size_t>((c * 4 * r + ty * r + y) * 4 * r + tx * r + x)] =
                static_cast<float>(
                    sheet.at(((tile * 3 + c) * static_cast<std::int64_t>(r) + y) * r + x));
    }
    write_png(path, float_to_image(canvas.data(), 4 * r, 4 * r));
  }

  void save_checkpoint(const std::filesystem::path& path) const {
    NamedArrays ar;
    ar.set_meta("format", "train-checkpoint");
    ar.set_meta("step", std::to_string(step_));
    ar.set_meta("ada.p", detail::fmt_full(aug_.p));
    ar.set_meta("ada.filled", std::to_string(ada_filled_));
    std::string ring;
    for (double v : ada_ring_) {
      if (!ring.empty()) ring += ' ';
      ring += detail::fmt_full(v);
    }
    ar.set_meta("ada.ring", ring);
    ar.set_meta("warnings.zero_norm", std::to_string(zero_norm_warnings_));
    ar.set_meta("rng.latent", latent_rng_.serialize());
    ar.set_meta("rng.augment", aug_rng_.serialize());
    ar.set_meta("rng.sampler", sampler_.serialize_state());
    ar.set_meta("encoder", encoders_.image.name);
    for (const auto& [k, v] : config_echo(cfg_)) ar.set_meta("cfg." + k, v);

    save_params(ar, "g.", gen_.params);
    save_params(ar, "d.", disc_.params);
    for (std::size_t i = 0; i < ema_.size(); ++i)
      ar.add_array("ema." + gen_.params.items[i].first, to_f32_vec(ema_[i].array()));
    opt_g_.save_state(ar, "opt_g");
    opt_d_.save_state(ar, "opt_d");
    ar.add_array("cm.peer", to_f32_vec(cm_peer_.array()));
    ar.add_array("cm.target", to_f32_vec(cm_target_.array()));
    save_named_arrays(path, ar);
  }

  void load_checkpoint(const std::filesystem::path& path) {
    NamedArrays ar = load_named_arrays(path);
    if (ar.meta_required("format") != "train-checkpoint")
      throw ArchiveError(path.string() + " is not a training checkpoint");
    const auto stored = config_echo_map(ar);
    for (const auto& [k, v] : config_echo(cfg_)) {
      if (k == "train.total_steps" || k.rfind("io.", 0) == 0) continue;
      auto it = stored.find(k);
      if (it == stored.end() || it->second != v)
        throw ConfigError("checkpoint config mismatch on '" + k + "': checkpoint has '" +
                          (it == stored.end() ? std::string("<missing>") : it->second) +
                          "', run has '" + v + "'");
    }
    step_ = std::stoll(ar.meta_required("step"));
    aug_.p = std::stod(ar.meta_required("ada.p"));
    ada_filled_ = std::stoll(ar.meta_required("ada.filled"));
    {
      std::istringstream ring(ar.meta_required("ada.ring"));
      for (auto& v : ada_ring_)
        if (!(ring >> v)) throw ArchiveError("checkpoint ada ring is shorter than configured");
    }
    zero_norm_warnings_ = std::stoll(ar.meta_required("warnings.zero_norm"));
    latent_rng_.deserialize(ar.meta_required("rng.latent"));
    aug_rng_.deserialize(ar.meta_required("rng.augment"));
    sampler_.restore_state(ar.meta_required("rng.sampler"));

    load_params(ar, "g.", gen_.params);
    load_params(ar, "d.", disc_.params);
    for (std::size_t i = 0; i < ema_.size(); ++i)
      from_f32_vec(ar.array_required("ema." + gen_.params.items[i].first),
                   ema_[i].mutable_array(), "ema." + gen_.params.items[i].first);
    opt_g_.load_state(ar, "opt_g");
    opt_d_.load_state(ar, "opt_d");
    from_f32_vec(ar.array_required("cm.peer"), cm_peer_.mutable_array(), "cm.peer");
    from_f32_vec(ar.array_required("cm.target"), cm_target_.mutable_array(), "cm.target");
  }

  static std::vector<std::pair<std::string, std::string>> config_echo(const TrainConfig& c) {
    using detail::fmt_full;
    std::vector<std::pair<std::string, std::string>> e;
    e.emplace_back("train.total_steps", std::to_string(c.total_steps));
    e.emplace_back("train.batch_size", std::to_string(c.batch_size));
    e.emplace_back("adam_g.lr", fmt_full(c.adam_g.lr));
    e.emplace_back("adam_g.beta1", fmt_full(c.adam_g.beta1));
    e.emplace_back("adam_g.beta2", fmt_full(c.adam_g.beta2));
    e.emplace_back("adam_g.eps", fmt_full(c.adam_g.eps));
    e.emplace_back("adam_d.lr", fmt_full(c.adam_d.lr));
    e.emplace_back("adam_d.beta1", fmt_full(c.adam_d.beta1));
    e.emplace_back("adam_d.beta2", fmt_full(c.adam_d.beta2));
    e.emplace_back("adam_d.eps", fmt_full(c.adam_d.eps));
    e.emplace_back("r1.gamma", fmt_full(c.r1_gamma));
    e.emplace_back("r1.interval", std::to_string(c.r1_interval));
    e.emplace_back("dir.enabled", c.direction.enabled ? "1" : "0");
    e.emplace_back("dir.weight", fmt_full(c.direction.weight));
    e.emplace_back("dir.interval", std::to_string(c.direction.lazy_interval));
    e.emplace_back("dir.t_peer", c.direction.t_peer);
    e.emplace_back("dir.t_target", c.direction.t_target);
    e.emplace_back("ada.enabled", c.ada.enabled ? "1" : "0");
    e.emplace_back("ada.target", fmt_full(c.ada.target));
    e.emplace_back("ada.adjust", fmt_full(c.ada.adjust));
    e.emplace_back("ada.ring_size", std::to_string(c.ada.ring));
    e.emplace_back("ema.beta", fmt_full(c.ema_beta));
    e.emplace_back("sample.mode", c.sampling == SamplingPolicy::Mode::kTargetOversample
                                      ? "oversample"
                                      : "uniform");
    e.emplace_back("sample.target_fraction", fmt_full(c.target_fraction));
    e.emplace_back("seed", std::to_string(c.seed));
    e.emplace_back("gen.resolution", std::to_string(c.generator.resolution));
    e.emplace_back("gen.latent_dim", std::to_string(c.generator.latent_dim));
    e.emplace_back("gen.w_dim", std::to_string(c.generator.w_dim));
    e.emplace_back("gen.c_dim", std::to_string(c.generator.c_dim));
    e.emplace_back("gen.feature_dim", std::to_string(c.generator.feature_dim));
    e.emplace_back("gen.fw_layers", std::to_string(c.generator.fw_layers));
    e.emplace_back("gen.fc_layers", std::to_string(c.generator.fc_layers));
    e.emplace_back("gen.width_mult", fmt_full(c.generator.width_mult));
    e.emplace_back("gen.key", format_key_schedule(c.generator.key));
    e.emplace_back("disc.onehot", c.onehot_condition ? "1" : "0");
    e.emplace_back("io.snapshot_interval", std::to_string(c.snapshot_interval));
    e.emplace_back("io.checkpoint_interval", std::to_string(c.checkpoint_interval));
    return e;
  }

 private:
  // Validates before any member that sizes itself off the config is built.
  static const TrainConfig& validated(const TrainConfig& c) {
    c.validate();
    return c;
  }

  static DiscriminatorConfig make_disc_config(const TrainConfig& c) {
    DiscriminatorConfig d;
    d.resolution = c.generator.resolution;
    d.feature_dim = c.generator.feature_dim;
    d.width_mult = c.generator.width_mult;
    d.onehot_condition = c.onehot_condition;
    return d;
  }

  std::int64_t batch_i64() const { return static_cast<std::int64_t>(cfg_.batch_size); }

  void install_embeddings(const std::vector<ClassEmbedding>* precomputed) {
    ClassEmbedding peer, target;
    if (precomputed != nullptr) {
      for (const auto& e : *precomputed) {
        if (e.class_id == kPeerClass)
          peer = e;
        else if (e.class_id == kTargetClass)
          target = e;
      }
      if (peer.c_m.empty() || target.c_m.empty())
        throw ConfigError("precomputed embeddings must cover both classes");
    } else {
      LinearImageEncoder<float> as_float;
      as_float.name = encoders_.image.name;
      as_float.weight = Tensor<float>::from_array(encoders_.image.weight.shape(),
                                                  to_f32_array(encoders_.image.weight.array()));
      peer = compute_class_embedding(as_float, *data_, kPeerClass);
      target = compute_class_embedding(as_float, *data_, kTargetClass);
    }
    if (static_cast<std::int64_t>(peer.c_m.size()) != cfg_.generator.feature_dim)
      throw ConfigError("class embedding width " + std::to_string(peer.c_m.size()) +
                        " does not match feature_dim " +
                        std::to_string(cfg_.generator.feature_dim));
    cm_peer_ = embedding_tensor(peer.c_m);
    cm_target_ = embedding_tensor(target.c_m);
  }

  static Tensor<S> embedding_tensor(const std::vector<float>& v) {
    FlatArray<S> a(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      a[static_cast<Eigen::Index>(i)] = static_cast<S>(v[i]);
    return Tensor<S>::from_array({1, static_cast<std::int64_t>(v.size())}, std::move(a));
  }

  // [B, F] class-embedding rows selected per sample.
  Tensor<S> embedding_rows(const std::vector<int>& ids) const {
    const std::int64_t F = cfg_.generator.feature_dim;
    FlatArray<S> rows(static_cast<Eigen::Index>(ids.size()) * F);
    for (std::size_t b = 0; b < ids.size(); ++b) {
      const Tensor<S>& src = ids[b] == kPeerClass ? cm_peer_ : cm_target_;
      rows.segment(static_cast<Eigen::Index>(b) * F, F) = src.array();
    }
    return Tensor<S>::from_array({static_cast<std::int64_t>(ids.size()), F}, std::move(rows));
  }

  // Discriminator condition rows: class embeddings, or one-hot when configured.
  Tensor<S> condition_rows(const std::vector<int>& ids) const {
    if (!cfg_.onehot_condition) return embedding_rows(ids);
    FlatArray<S> rows(static_cast<Eigen::Index>(ids.size()) * 2);
    rows.setZero();
    for (std::size_t b = 0; b < ids.size(); ++b)
      rows[static_cast<Eigen::Index>(b) * 2 + (ids[b] == kPeerClass ? 0 : 1)] = S(1);
    return Tensor<S>::from_array({static_cast<std::int64_t>(ids.size()), 2}, std::move(rows));
  }

  void check_finite(const StepStats& s) const {
    const bool ok = std::isfinite(s.loss_d) && std::isfinite(s.loss_g) &&
                    (!s.r1 || std::isfinite(*s.r1)) && (!s.dir || std::isfinite(*s.dir));
    if (ok) return;
    auto show = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) : std::string("-");
    };
    throw std::runtime_error(
        "training diverged at step " + std::to_string(s.step) + ": loss_d=" +
        std::to_string(s.loss_d) + " loss_g=" + std::to_string(s.loss_g) + " r1=" +
        show(s.r1) + " dir=" + show(s.dir) + " p=" + std::to_string(aug_.p) +
        " (previous step: loss_d=" + std::to_string(last_stats_.loss_d) +
        " loss_g=" + std::to_string(last_stats_.loss_g) + ")");
  }

  static std::vector<float> to_f32_vec(const FlatArray<S>& a) {
    std::vector<float> out(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i)
      out[static_cast<std::size_t>(i)] = static_cast<float>(a[i]);
    return out;
  }
  static FlatArray<float> to_f32_array(const FlatArray<S>& a) {
    FlatArray<float> out(a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) out[i] = static_cast<float>(a[i]);
    return out;
  }
  static void from_f32_vec(const std::vector<float>& in, FlatArray<S>& out,
                           const std::string& name) {
    if (static_cast<Eigen::Index>(in.size()) != out.size())
      throw ArchiveError("checkpoint array '" + name + "' has size " +
                         std::to_string(in.size()) + ", expected " +
                         std::to_string(out.size()));
    for (Eigen::Index i = 0; i < out.size(); ++i)
      out[i] = static_cast<S>(in[static_cast<std::size_t>(i)]);
  }
  static void save_params(NamedArrays& ar, const std::string& prefix,
                          const ParamRegistry<S>& reg) {
    for (const auto& [name, tensor] : reg.items)
      ar.add_array(prefix + name, to_f32_vec(tensor.array()));
  }
  static void load_params(const NamedArrays& ar, const std::string& prefix,
                          ParamRegistry<S>& reg) {
    for (auto& [name, tensor] : reg.items)
      from_f32_vec(ar.array_required(prefix + name), tensor.mutable_array(), prefix + name);
  }
  static std::map<std::string, std::string> config_echo_map(const NamedArrays& ar) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : ar.manifest)
      if (k.rfind("cfg.", 0) == 0) out[k.substr(4)] = v;
    return out;
  }

  TrainConfig cfg_;
  const UnbalancedDataset* data_;
  RandomStream init_rng_g_, init_rng_d_;
  Generator<S> gen_;
  Discriminator<S> disc_;
  DirectionEncoderPair<S> encoders_;
  Tensor<S> cm_peer_, cm_target_;  // [1, F]
  Sampler sampler_;
  RandomStream latent_rng_, aug_rng_;
  Adam<S> opt_g_, opt_d_;
  std::vector<Tensor<S>> ema_;
  AugmentationState aug_;
  std::vector<double> ada_ring_;
  std::int64_t ada_filled_ = 0;
  std::int64_t step_ = 0;
  std::int64_t zero_norm_warnings_ = 0;
  StepStats last_stats_;
};

// Generator-only view of a checkpoint: EMA weights plus the frozen class
// rows, enough to sample and interpolate without the dataset or encoders.
template <typename S>
struct GeneratorSnapshot {
  GeneratorConfig config;
  Generator<S> generator;
  Tensor<S> cm_peer, cm_target;  // [1, F]
  std::int64_t step = 0;
};

template <typename S>
GeneratorSnapshot<S> load_generator_snapshot(const std::filesystem::path& path) {
  NamedArrays ar = load_named_arrays(path);
  if (ar.meta_required("format") != "train-checkpoint")
    throw ArchiveError(path.string() + " is not a training checkpoint");
  GeneratorSnapshot<S> snap;
  snap.config.resolution = std::stoi(ar.meta_required("cfg.gen.resolution"));
  snap.config.latent_dim = std::stoll(ar.meta_required("cfg.gen.latent_dim"));
  snap.config.w_dim = std::stoll(ar.meta_required("cfg.gen.w_dim"));
  snap.config.c_dim = std::stoll(ar.meta_required("cfg.gen.c_dim"));
  snap.config.feature_dim = std::stoll(ar.meta_required("cfg.gen.feature_dim"));
  snap.config.fw_layers = std::stoi(ar.meta_required("cfg.gen.fw_layers"));
  snap.config.fc_layers = std::stoi(ar.meta_required("cfg.gen.fc_layers"));
  snap.config.width_mult = std::stod(ar.meta_required("cfg.gen.width_mult"));
  snap.config.key = parse_key_string(ar.meta_required("cfg.gen.key"));
  snap.step = std::stoll(ar.meta_required("step"));

  RandomStream scratch(0);
  snap.generator = Generator<S>(snap.config, scratch);
  for (auto& [name, tensor] : snap.generator.params.items) {
    const std::vector<float>& v = ar.array_required("ema." + name);
    if (static_cast<Eigen::Index>(v.size()) != tensor.array().size())
      throw ArchiveError("checkpoint array 'ema." + name + "' has unexpected size");
    for (Eigen::Index i = 0; i < tensor.array().size(); ++i)
      tensor.mutable_array()[i] = static_cast<S>(v[static_cast<std::size_t>(i)]);
  }
  auto load_row = [&](const std::string& name) {
    const std::vector<float>& v = ar.array_required(name);
    FlatArray<S> a(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      a[static_cast<Eigen::Index>(i)] = static_cast<S>(v[i]);
    return Tensor<S>::from_array({1, static_cast<std::int64_t>(v.size())}, std::move(a));
  };
  snap.cm_peer = load_row("cm.peer");
  snap.cm_target = load_row("cm.target");
  return snap;
}

}  // namespace pip
