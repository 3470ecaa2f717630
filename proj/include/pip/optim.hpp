#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pip/serialize.hpp"
#include "pip/tensor.hpp"

namespace pip {

struct AdamConfig {
  double lr = 2.5e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Adam with bias correction. Parameters are updated in place through the
// shared tensor storage, so the tensors handed in here are the same ones the
// model reads on its next forward pass.
template <typename S>
class Adam {
 public:
  Adam(std::vector<Tensor<S>> params, const AdamConfig& config)
      : params_(std::move(params)), config_(config) {
    if (!(config_.lr > 0)) throw std::invalid_argument("Adam: lr must be positive");
    if (config_.beta1 < 0 || config_.beta1 >= 1 || config_.beta2 < 0 || config_.beta2 >= 1)
      throw std::invalid_argument("Adam: betas must lie in [0, 1)");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor<S>& p : params_) {
      m_.emplace_back(FlatArray<S>::Zero(p.array().size()));
      v_.emplace_back(FlatArray<S>::Zero(p.array().size()));
    }
  }

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }
  std::size_t num_params() const { return params_.size(); }

  void step(const std::vector<Tensor<S>>& grads) {
    if (grads.size() != params_.size())
      throw std::invalid_argument("Adam::step: expected " + std::to_string(params_.size()) +
                                  " gradients, got " + std::to_string(grads.size()));
    ++step_;
    const S b1 = static_cast<S>(config_.beta1);
    const S b2 = static_cast<S>(config_.beta2);
    const S corr1 = static_cast<S>(1.0 - std::pow(config_.beta1, static_cast<double>(step_)));
    const S corr2 = static_cast<S>(1.0 - std::pow(config_.beta2, static_cast<double>(step_)));
    const S lr = static_cast<S>(config_.lr);
    const S eps = static_cast<S>(config_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const FlatArray<S>& g = grads[i].array();
      if (g.size() != m_[i].size())
        throw std::invalid_argument("Adam::step: gradient " + std::to_string(i) +
                                    " has wrong size");
      m_[i] = b1 * m_[i] + (S(1) - b1) * g;
      v_[i] = b2 * v_[i] + (S(1) - b2) * g.square();
      params_[i].mutable_array() -=
          lr * (m_[i] / corr1) / ((v_[i] / corr2).sqrt() + eps);
    }
  }

  // Moments and the step counter; the parameter values themselves are owned
  // by the model and are archived separately.
  void save_state(NamedArrays& archive, const std::string& prefix) const {
    archive.set_meta(prefix + ".step", std::to_string(step_));
    archive.set_meta(prefix + ".count", std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      archive.add_array(prefix + ".m." + std::to_string(i), to_f32(m_[i]));
      archive.add_array(prefix + ".v." + std::to_string(i), to_f32(v_[i]));
    }
  }

  void load_state(const NamedArrays& archive, const std::string& prefix) {
    const std::string& count = archive.meta_required(prefix + ".count");
    if (count != std::to_string(params_.size()))
      throw ArchiveError("optimizer state '" + prefix + "' holds " + count +
                         " moment pairs but the model has " +
                         std::to_string(params_.size()) + " parameters");
    step_ = std::stoll(archive.meta_required(prefix + ".step"));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      from_f32(archive.array_required(prefix + ".m." + std::to_string(i)), m_[i],
               prefix + ".m." + std::to_string(i));
      from_f32(archive.array_required(prefix + ".v." + std::to_string(i)), v_[i],
               prefix + ".v." + std::to_string(i));
    }
  }

 private:
  static std::vector<float> to_f32(const FlatArray<S>& a) {
    std::vector<float> out(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.size(); ++i) out[static_cast<std::size_t>(i)] =
        static_cast<float>(a[i]);
    return out;
  }
  static void from_f32(const std::vector<float>& in, FlatArray<S>& out,
                       const std::string& name) {
    if (static_cast<Eigen::Index>(in.size()) != out.size())
      throw ArchiveError("optimizer array '" + name + "' has size " +
                         std::to_string(in.size()) + ", expected " +
                         std::to_string(out.size()));
    for (Eigen::Index i = 0; i < out.size(); ++i)
      out[i] = static_cast<S>(in[static_cast<std::size_t>(i)]);
  }

  std::vector<Tensor<S>> params_;
  AdamConfig config_;
  std::vector<FlatArray<S>> m_, v_;
  std::int64_t step_ = 0;
};

// ema <- beta * ema + (1 - beta) * value, elementwise across matching lists.
template <typename S>
void update_ema(std::vector<Tensor<S>>& ema, const std::vector<Tensor<S>>& values,
                double beta) {
  if (beta < 0 || beta > 1) throw std::invalid_argument("update_ema: beta must be in [0, 1]");
  if (ema.size() != values.size())
    throw std::invalid_argument("update_ema: list sizes differ");
  const S b = static_cast<S>(beta);
  for (std::size_t i = 0; i < ema.size(); ++i) {
    if (ema[i].array().size() != values[i].array().size())
      throw std::invalid_argument("update_ema: tensor " + std::to_string(i) +
                                  " sizes differ");
    ema[i].mutable_array() = b * ema[i].array() + (S(1) - b) * values[i].array();
  }
}

// Deep copies of the current parameter values, detached from any graph, for
// seeding an exponential moving average of the weights.
template <typename S>
std::vector<Tensor<S>> clone_values(const std::vector<Tensor<S>>& params) {
  std::vector<Tensor<S>> out;
  out.reserve(params.size());
  for (const Tensor<S>& p : params) {
    FlatArray<S> copy = p.array();
    out.push_back(Tensor<S>::from_array(p.shape(), std::move(copy)));
  }
  return out;
}

}  // namespace pip
