#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "pip/encoders.hpp"
#include "pip/errors.hpp"
#include "pip/ops.hpp"

// Loss terms: non-saturating adversarial pair, R1 gradient penalty, and the
// cross-class direction regularizer. All are pure functions of parameter
// snapshots; gradient accumulation belongs to the trainer.

namespace pip {

// Non-saturating logistic pair, each mean-reduced over the batch:
//   loss_D = softplus(fake) + softplus(-real),  loss_G = softplus(-fake).
template <typename S>
Tensor<S> discriminator_adversarial_loss(const Tensor<S>& logits_real,
                                         const Tensor<S>& logits_fake) {
  return add(mean_all(softplus(logits_fake)), mean_all(softplus(neg(logits_real))));
}

template <typename S>
Tensor<S> generator_adversarial_loss(const Tensor<S>& logits_fake) {
  return mean_all(softplus(neg(logits_fake)));
}

template <typename S>
std::pair<Tensor<S>, Tensor<S>> adversarial_losses(const Tensor<S>& logits_real,
                                                   const Tensor<S>& logits_fake) {
  return {discriminator_adversarial_loss(logits_real, logits_fake),
          generator_adversarial_loss(logits_fake)};
}

// R1: (gamma/2) * mean over the batch of ||d D(x,c) / d x||^2, taken at the
// exact input the discriminator saw. The returned scalar still carries the
// double-backward graph, so optimizing it reaches the discriminator weights.
template <typename S, typename DNet>
Tensor<S> r1_penalty(const DNet& d, const Tensor<S>& real_images, const Tensor<S>& cond,
                     double gamma) {
  Tensor<S> x = real_images.detach();
  x.set_requires_grad(true);
  Tensor<S> total = sum_all(d.logits(x, cond));
  std::vector<Tensor<S>> g = grad(total, {x}, /*create_graph=*/true);
  if (!g[0].all_finite())
    throw std::runtime_error("R1 penalty: non-finite discriminator input gradient");
  Tensor<S> sq = sum_all(square(g[0]));
  return scale(sq, gamma / (2.0 * static_cast<double>(real_images.dim(0))));
}

struct DirectionLossConfig {
  bool enabled = true;
  double weight = 1.0;     // loss multiplier applied by the trainer
  int lazy_interval = 16;  // apply once every this many steps
  std::string t_peer = "peer";
  std::string t_target = "target";
};

inline bool should_apply_direction(std::int64_t iteration, const DirectionLossConfig& cfg) {
  if (cfg.lazy_interval < 1) throw ConfigError("direction interval must be >= 1");
  if (iteration < 0) throw std::invalid_argument("iteration must be >= 0");
  return iteration % cfg.lazy_interval == 0;
}

// Mean over rows of 1 - cos(d_sample_row, d_domain). Exact-zero-norm rows
// have no defined cosine; they contribute loss 1 (cos treated as 0) and bump
// *zero_norm_warnings. The masking keeps every gradient finite.
template <typename S>
Tensor<S> direction_loss_core(const Tensor<S>& d_sample, const Tensor<S>& d_domain,
                              std::int64_t* zero_norm_warnings = nullptr) {
  const std::int64_t rows = d_sample.dim(0), dim = d_sample.dim(1);
  if (d_domain.size() != dim)
    throw std::invalid_argument("direction dimensions disagree: " + std::to_string(dim) +
                                " vs " + std::to_string(d_domain.size()));
  double dd_sq = 0;
  for (Eigen::Index i = 0; i < d_domain.size(); ++i)
    dd_sq += static_cast<double>(d_domain.at(i)) * static_cast<double>(d_domain.at(i));
  const double dd_norm = std::sqrt(dd_sq);

  Tensor<S> sq = row_sum(square(d_sample));  // [rows]
  FlatArray<S> mask_v(rows), bump_v(rows);
  std::int64_t masked = 0;
  for (std::int64_t b = 0; b < rows; ++b) {
    const bool ok = sq.at(b) > S(0) && dd_norm > 0.0;
    mask_v[b] = ok ? S(1) : S(0);
    bump_v[b] = ok ? S(0) : S(1);  // keeps sqrt away from 0 on dead rows
    if (!ok) ++masked;
  }
  if (zero_norm_warnings != nullptr) *zero_norm_warnings += masked;

  Tensor<S> mask = Tensor<S>::from_array({rows}, std::move(mask_v));
  Tensor<S> bump = Tensor<S>::from_array({rows}, std::move(bump_v));
  Tensor<S> norms = sqrt(add(sq, bump));
  Tensor<S> denom = scale(norms, dd_norm > 0.0 ? dd_norm : 1.0);
  Tensor<S> num = row_sum(mul(d_sample, rep_row(d_domain, rows)));
  Tensor<S> cos = mul(mask, div(num, denom));
  return mean_all(sub(Tensor<S>::ones({rows}), cos));
}

// Full regularizer: render the same latents under both classes, embed both
// renders, and pull the per-sample shift toward the text-prompt shift.
template <typename S, typename Gen>
Tensor<S> direction_loss(const Gen& generator, const Tensor<S>& z,
                         const Tensor<S>& c_m_peer, const Tensor<S>& c_m_target,
                         const DirectionEncoderPair<S>& enc, const DirectionLossConfig& cfg,
                         std::uint64_t noise_seed, std::int64_t* zero_norm_warnings = nullptr) {
  Tensor<S> img_peer = generator.generate(z, c_m_peer, noise_seed);
  Tensor<S> img_target = generator.generate(z, c_m_target, noise_seed);
  Tensor<S> d_sample = sub(enc.image(img_peer), enc.image(img_target));

  const std::vector<float> tp = enc.text.encode(cfg.t_peer);
  const std::vector<float> tt = enc.text.encode(cfg.t_target);
  FlatArray<S> dd(static_cast<Eigen::Index>(tp.size()));
  for (std::size_t i = 0; i < tp.size(); ++i)
    dd[static_cast<Eigen::Index>(i)] = static_cast<S>(tp[i]) - static_cast<S>(tt[i]);
  Tensor<S> d_domain = Tensor<S>::from_array({static_cast<std::int64_t>(tp.size())},
                                             std::move(dd));
  return direction_loss_core(d_sample, d_domain, zero_norm_warnings);
}

}  // namespace pip
