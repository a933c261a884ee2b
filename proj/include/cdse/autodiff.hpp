// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_AUTODIFF_HPP_
#define CDSE_AUTODIFF_HPP_

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cdse/tensor.hpp"

namespace cdse {

enum class OpKind {
  kLeaf,
  kMatmul,
  kConv1d,
  kConv1dTranspose,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kSigmoid,
  kRelu,
  kPrelu,
  kTanh,
  kLog,
  kConcat,
  kSliceRows,
  kReshape,
  kSum,
  kMean,
  kGlobalLayerNorm,
  kStft,
  kIstft,
  kOlaScatter,
  kCustom,
};

// Forward/backward run with graph recording unless a NoGradGuard is active
// on the current thread (inference and finite-difference probes).
bool GradRecordingEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

namespace detail {
inline thread_local bool t_grad_enabled = true;
}

inline bool GradRecordingEnabled() { return detail::t_grad_enabled; }
inline NoGradGuard::NoGradGuard() : saved_(detail::t_grad_enabled) {
  detail::t_grad_enabled = false;
}
inline NoGradGuard::~NoGradGuard() { detail::t_grad_enabled = saved_; }

// One vertex of the reverse-mode graph. `backward` reads this->grad and
// accumulates adjoints into the parents; it is dropped (with the parent
// references) after Backward() so a graph cannot be replayed.
template <typename T>
struct Node {
  OpKind op = OpKind::kLeaf;
  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void AccumulateGrad(const Tensor<T>& g) {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    CDSE_CHECK(g.SameShape(grad), ErrorKind::kDimension,
               "gradient shape ", ShapeStr(g.shape()),
               " does not match value shape ", ShapeStr(grad.shape()));
    T* dst = grad.data();
    const T* src = g.data();
    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
  }
};

template <typename T>
class Var {
 public:
  using NodeT = Node<T>;

  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<NodeT>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad && GradRecordingEnabled();
  }

  static Var Constant(T v) { return Var(Tensor<T>::Scalar(v)); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  Tensor<T>& grad() {
    if (node_->grad.empty()) node_->grad = Tensor<T>(node_->value.shape());
    return node_->grad;
  }
  const Tensor<T>& grad() const { return node_->grad; }
  void ZeroGrad() {
    if (node_->grad.empty()) node_->grad = Tensor<T>(node_->value.shape());
    node_->grad.Fill(T(0));
  }

  std::shared_ptr<NodeT> node() const { return node_; }

  // Builds a recorded op node. `backward` may be empty for non-differentiable
  // results; parents are retained only while recording is enabled.
  static Var MakeOp(OpKind op, Tensor<T> value,
                    std::vector<Var> parents,
                    std::function<void(NodeT&)> backward) {
    Var out;
    out.node_ = std::make_shared<NodeT>();
    out.node_->op = op;
    out.node_->value = std::move(value);
    if (GradRecordingEnabled()) {
      bool needs = false;
      for (const auto& p : parents) needs = needs || p.requires_grad();
      if (needs) {
        out.node_->requires_grad = true;
        out.node_->parents.reserve(parents.size());
        for (auto& p : parents) out.node_->parents.push_back(p.node());
        out.node_->backward = std::move(backward);
      }
    }
    return out;
  }

 private:
  std::shared_ptr<NodeT> node_;
};

// Reverse accumulation from a scalar loss. Populates .grad on every
// reachable node that requires grad; unreachable leaves keep whatever grad
// they had (zeros after ZeroGrad). The traversed graph is freed afterwards.
template <typename T>
void Backward(const Var<T>& loss) {
  CDSE_CHECK(loss.defined() && loss.numel() == 1, ErrorKind::kContract,
             "backward requires a scalar loss, got shape ",
             loss.defined() ? ShapeStr(loss.shape()) : "<undefined>");
  if (!loss.requires_grad()) return;

  using NodeT = Node<T>;
  std::vector<NodeT*> topo;
  std::unordered_set<NodeT*> seen;
  // Iterative post-order DFS; graphs are deep (one node per op per frame-
  // batch, thousands per step) so recursion is off the table.
  std::vector<std::pair<NodeT*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      NodeT* child = node->parents[next_child++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->AccumulateGrad(Tensor<T>::Scalar(T(1)));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Free the tape: keep leaf grads, drop interior buffers and closures.
  for (NodeT* n : topo) {
    if (!n->parents.empty() || n->backward) {
      n->parents.clear();
      n->backward = nullptr;
      n->grad = Tensor<T>();
    }
  }
}

}  // namespace cdse

#endif  // CDSE_AUTODIFF_HPP_
