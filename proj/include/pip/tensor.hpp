#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pip/rng.hpp"

namespace pip {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename S>
using FlatArray = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using MatMap = Eigen::Map<MatrixRM<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const MatrixRM<S>>;

// Thread-local switch: while disabled, ops compute values but record no
// backward edges. Backward passes run disabled unless a graph over gradients
// is requested (second-order derivatives, e.g. the R1 penalty).
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct EnableGradGuard {
  EnableGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = true; }
  ~EnableGradGuard() { GradMode::enabled() = prev_; }
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename S>
class Tensor;

template <typename S>
struct GradFn {
  virtual ~GradFn() = default;
  // Parents of the node; holding them keeps the upstream graph alive.
  std::vector<Tensor<S>> inputs;
  // Returns one gradient per input, aligned with `inputs`. Entries whose
  // `needed` flag is false may be returned as null tensors and must not be
  // computed. Implementations build gradients out of tensor ops so that
  // higher-order differentiation works when grad mode is enabled.
  virtual std::vector<Tensor<S>> backward(const Tensor<S>& grad_out,
                                          const std::vector<char>& needed) = 0;
  virtual const char* name() const = 0;
};

template <typename S>
struct TensorNode {
  Shape shape;
  std::shared_ptr<FlatArray<S>> values;  // shared so reshape is zero-copy
  bool requires_grad = false;
  std::unique_ptr<GradFn<S>> fn;  // null for leaves and constants
};

// Dense n-d array handle with optional gradient history. Copies are shallow
// (shared node); value mutation is reserved for leaves between graphs.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  static Tensor from_array(Shape shape, FlatArray<S> values) {
    if (shape_size(shape) != values.size())
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                  " does not match buffer of size " + std::to_string(values.size()));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<S>>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::make_shared<FlatArray<S>>(std::move(values));
    return t;
  }

  static Tensor zeros(Shape shape) {
    const auto n = shape_size(shape);
    return from_array(std::move(shape), FlatArray<S>::Zero(n));
  }

  static Tensor full(Shape shape, S value) {
    const auto n = shape_size(shape);
    return from_array(std::move(shape), FlatArray<S>::Constant(n, value));
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

  static Tensor scalar(S value) { return full({1}, value); }

  static Tensor randn(Shape shape, RandomStream& rng, double stddev = 1.0) {
    FlatArray<S> v(shape_size(shape));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.normal() * stddev);
    return from_array(std::move(shape), std::move(v));
  }

  // Shares the value buffer of `other` under a new shape.
  static Tensor view_of(const Tensor& other, Shape shape) {
    if (shape_size(shape) != other.size())
      throw std::invalid_argument("Tensor view: size mismatch " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<S>>();
    t.node_->shape = std::move(shape);
    t.node_->values = other.node_->values;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->values->size(); }
  std::int64_t dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  const FlatArray<S>& array() const { return *node_->values; }
  // Mutable access; meant for leaves (parameters) between graph builds.
  FlatArray<S>& mutable_array() { return *node_->values; }
  const S* data() const { return node_->values->data(); }
  S* mutable_data() { return node_->values->data(); }

  S item() const {
    if (size() != 1) throw std::logic_error("Tensor::item on non-scalar " + shape_str(shape()));
    return (*node_->values)[0];
  }
  S at(std::int64_t i) const { return (*node_->values)[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool all_finite() const {
    return node_->values->isFinite().all();
  }

  // A grad-history-free handle on the same values.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<S>>();
    t.node_->shape = node_->shape;
    t.node_->values = node_->values;
    return t;
  }

  TensorNode<S>* node() const { return node_.get(); }
  void set_grad_fn(std::unique_ptr<GradFn<S>> fn) {
    node_->fn = std::move(fn);
    node_->requires_grad = true;
  }
  GradFn<S>* grad_fn() const { return node_->fn.get(); }

  ConstMatMap<S> mat(std::int64_t rows, std::int64_t cols) const {
    return ConstMatMap<S>(data(), rows, cols);
  }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

template <typename S>
struct LambdaGradFn final : GradFn<S> {
  using BackFn =
      std::function<std::vector<Tensor<S>>(const Tensor<S>&, const std::vector<char>&)>;
  LambdaGradFn(const char* name, BackFn fn) : fn_(std::move(fn)), name_(name) {}
  std::vector<Tensor<S>> backward(const Tensor<S>& grad_out,
                                  const std::vector<char>& needed) override {
    return fn_(grad_out, needed);
  }
  const char* name() const override { return name_; }
  BackFn fn_;
  const char* name_;
};

// Wraps freshly computed values into a node, recording the backward closure
// only when grad mode is on and some input carries gradient history.
template <typename S>
Tensor<S> finish_op(const char* name, Shape shape, FlatArray<S> values,
                    std::vector<Tensor<S>> inputs,
                    typename LambdaGradFn<S>::BackFn backward) {
  Tensor<S> out = Tensor<S>::from_array(std::move(shape), std::move(values));
  if (GradMode::enabled()) {
    bool any = false;
    for (const auto& t : inputs)
      if (t.defined() && t.requires_grad()) any = true;
    if (any) {
      auto fn = std::make_unique<LambdaGradFn<S>>(name, std::move(backward));
      fn->inputs = std::move(inputs);
      out.set_grad_fn(std::move(fn));
    }
  }
  return out;
}

// Reverse-mode gradient of a scalar-or-seeded output with respect to
// `inputs`. Unreachable inputs yield zero tensors. With `create_graph`, the
// returned gradients carry history and can be differentiated again.
template <typename S>
std::vector<Tensor<S>> grad(const Tensor<S>& output, const std::vector<Tensor<S>>& inputs,
                            bool create_graph = false, Tensor<S> grad_output = {}) {
  if (!output.defined()) throw std::invalid_argument("grad: undefined output");
  if (!grad_output.defined()) grad_output = Tensor<S>::ones(output.shape());

  // Post-order over the graph: every node appears after all of its parents.
  std::vector<TensorNode<S>*> order;
  std::unordered_set<TensorNode<S>*> seen;
  {
    struct Frame {
      TensorNode<S>* node;
      std::size_t next_input;
    };
    std::vector<Frame> stack;
    if (seen.insert(output.node()).second) stack.push_back({output.node(), 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      GradFn<S>* fn = f.node->fn.get();
      const std::size_t n_in = fn ? fn->inputs.size() : 0;
      if (f.next_input < n_in) {
        TensorNode<S>* child = fn->inputs[f.next_input++].node();
        if (child && seen.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  // A node needs a gradient iff a requested input is reachable through it.
  std::unordered_map<TensorNode<S>*, char> needed;
  for (const auto& t : inputs)
    if (t.defined()) needed[t.node()] = 1;
  for (TensorNode<S>* n : order) {  // parents visited before children
    if (needed.count(n)) continue;
    if (!n->fn) continue;
    for (const auto& in : n->fn->inputs) {
      auto it = needed.find(in.node());
      if (it != needed.end() && it->second) {
        needed[n] = 1;
        break;
      }
    }
  }

  std::unordered_map<TensorNode<S>*, Tensor<S>> grads;
  grads[output.node()] = grad_output;

  auto run = [&]() {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<S>* node = *it;
      auto git = grads.find(node);
      if (git == grads.end() || !node->fn) continue;
      auto nit = needed.find(node);
      if (nit == needed.end() || !nit->second) continue;

      GradFn<S>& fn = *node->fn;
      std::vector<char> want(fn.inputs.size(), 0);
      bool any = false;
      for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
        auto w = needed.find(fn.inputs[i].node());
        want[i] = (w != needed.end() && w->second) ? 1 : 0;
        any |= want[i] != 0;
      }
      if (!any) continue;

      std::vector<Tensor<S>> in_grads = fn.backward(git->second, want);
      if (in_grads.size() != fn.inputs.size())
        throw std::logic_error(std::string("grad: op '") + fn.name() +
                               "' returned wrong gradient count");
      for (std::size_t i = 0; i < fn.inputs.size(); ++i) {
        if (!want[i] || !in_grads[i].defined()) continue;
        TensorNode<S>* tgt = fn.inputs[i].node();
        auto acc = grads.find(tgt);
        if (acc == grads.end()) {
          grads.emplace(tgt, in_grads[i]);
        } else {
          // accumulate; declared below in ops.hpp, found by ADL at use time
          acc->second = accumulate_grad(acc->second, in_grads[i]);
        }
      }
    }
  };

  if (create_graph) {
    EnableGradGuard guard;
    run();
  } else {
    NoGradGuard guard;
    run();
  }

  std::vector<Tensor<S>> result;
  result.reserve(inputs.size());
  for (const auto& t : inputs) {
    auto it = grads.find(t.node());
    if (it != grads.end())
      result.push_back(it->second);
    else
      result.push_back(Tensor<S>::zeros(t.shape()));
  }
  return result;
}

}  // namespace pip
