#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace uhdn {

// Reverse-mode autodiff over the tensor ops. A tape is rebuilt per forward
// pass; leaves reference externally owned tensors (parameters, inputs) so the
// graph itself stays cheap. Single-owner: one logical thread builds and
// replays it.
using NodeRef = std::int32_t;

template <typename T>
class TapeT {
 public:
  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // Leaf over caller-owned storage. The pointer must outlive the tape.
  NodeRef leaf(const Tensor4T<T>* value, bool needs_grad);
  // Leaf that owns its value.
  NodeRef leaf(Tensor4T<T> value, bool needs_grad = false);

  NodeRef conv2d(NodeRef x, NodeRef w, NodeRef b, ConvGeometry geom);
  // conv2d followed by relu as one node; stores only the activated map, which
  // halves the footprint of the conv-heavy blocks.
  NodeRef conv2d_relu(NodeRef x, NodeRef w, NodeRef b, ConvGeometry geom);
  NodeRef up_conv_2x2(NodeRef x, NodeRef w, NodeRef b);
  NodeRef max_pool_2x2(NodeRef x);
  NodeRef relu(NodeRef x);
  NodeRef sigmoid(NodeRef x);
  NodeRef concat_channels(const std::vector<NodeRef>& parts);
  NodeRef bilinear_upsample(NodeRef x, int factor);
  // Scalar sum of all elements.
  NodeRef sum(NodeRef x);

  // Mean over batch of the per-image pixel-normalized weighted cross entropy
  // of sigmoid(logits) against {0,1} targets. Probabilities are clamped to
  // [eps, 1-eps]; the clamp is honored in the gradient (zero slope outside).
  NodeRef weighted_bce(NodeRef logits, const Tensor4T<T>* target, T beta,
                       T gamma, T eps);
  // total = sum_i weights[i] * scalars[i]
  NodeRef weighted_sum(const std::vector<NodeRef>& scalars,
                       const std::vector<T>& weights);

  const Tensor4T<T>& value(NodeRef n) const;
  // Accumulated gradient; zeros if backward never reached this node.
  Tensor4T<T> grad(NodeRef n) const;

  // Reverse accumulation from a scalar node. A second call without
  // reset_grads() in between is an error.
  void backward(NodeRef root);
  void reset_grads();
  std::size_t size() const { return nodes_.size(); }

  // When set, backward frees each interior node's value and gradient as soon
  // as its closure has run; only leaf gradients survive. Keeps the peak
  // footprint of a full-resolution training step inside a few GB.
  void set_release_memory(bool on) { release_memory_ = on; }

 private:
  struct Node {
    Tensor4T<T> owned;
    const Tensor4T<T>* val = nullptr;  // points at owned or external storage
    Tensor4T<T> grad;                  // empty until first accumulation
    bool needs_grad = false;
    std::function<void()> back;  // pulls grad, pushes into parents
  };

  NodeRef push(Node n);
  NodeRef result(Tensor4T<T> value, bool needs_grad, std::function<void()> back);
  void accum(NodeRef n, const Tensor4T<T>& g);
  void accum_move(NodeRef n, Tensor4T<T>&& g);
  Tensor4T<T>& grad_buf(NodeRef n);
  void check_ref(NodeRef n, const char* op) const;

  std::vector<Node> nodes_;
  bool replayed_ = false;
  bool release_memory_ = false;
};

using Tape = TapeT<float>;
using Taped = TapeT<double>;

}  // namespace uhdn
