#include "tape.hpp"

#include <cmath>
#include <utility>

#include "error.hpp"

namespace uhdn {

template <typename T>
void TapeT<T>::check_ref(NodeRef n, const char* op) const {
  if (n < 0 || static_cast<std::size_t>(n) >= nodes_.size())
    fail(ErrorCode::usage,
         std::string(op) + ": node " + std::to_string(n) + " is not on this tape");
}

template <typename T>
NodeRef TapeT<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeRef>(nodes_.size() - 1);
}

template <typename T>
const Tensor4T<T>& TapeT<T>::value(NodeRef n) const {
  check_ref(n, "value");
  const Node& node = nodes_[n];
  return node.val ? *node.val : node.owned;
}

template <typename T>
Tensor4T<T> TapeT<T>::grad(NodeRef n) const {
  check_ref(n, "grad");
  const Node& node = nodes_[n];
  if (node.grad.empty()) return Tensor4T<T>(value(n).shape());
  return node.grad;
}

template <typename T>
Tensor4T<T>& TapeT<T>::grad_buf(NodeRef n) {
  return nodes_[n].grad;
}

template <typename T>
void TapeT<T>::accum(NodeRef n, const Tensor4T<T>& g) {
  Tensor4T<T>& dst = nodes_[n].grad;
  if (dst.empty()) {
    dst = g;
    return;
  }
  for (std::int64_t i = 0; i < g.count(); ++i) dst[i] += g[i];
}

template <typename T>
void TapeT<T>::accum_move(NodeRef n, Tensor4T<T>&& g) {
  Tensor4T<T>& dst = nodes_[n].grad;
  if (dst.empty()) {
    dst = std::move(g);
    return;
  }
  for (std::int64_t i = 0; i < g.count(); ++i) dst[i] += g[i];
}

template <typename T>
NodeRef TapeT<T>::leaf(const Tensor4T<T>* value, bool needs_grad) {
  if (!value) fail(ErrorCode::usage, "leaf: null tensor");
  Node n;
  n.val = value;
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

template <typename T>
NodeRef TapeT<T>::leaf(Tensor4T<T> value, bool needs_grad) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

template <typename T>
NodeRef TapeT<T>::result(Tensor4T<T> value, bool needs_grad,
                         std::function<void()> back) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  return push(std::move(n));
}

template <typename T>
NodeRef TapeT<T>::conv2d(NodeRef x, NodeRef w, NodeRef b, ConvGeometry geom) {
  check_ref(x, "conv2d");
  check_ref(w, "conv2d");
  check_ref(b, "conv2d");
  Tensor4T<T> out = uhdn::conv2d(value(x), value(w), value(b), geom);
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, x, w, b, geom, self]() {
    Tensor4T<T> gx, gw, gb;
    bool nx = nodes_[x].needs_grad, nw = nodes_[w].needs_grad,
         nb = nodes_[b].needs_grad;
    conv2d_backward(value(x), value(w), geom, grad_buf(self),
                    nx ? &gx : nullptr, nw ? &gw : nullptr, nb ? &gb : nullptr);
    if (nx) accum_move(x, std::move(gx));
    if (nw) accum_move(w, std::move(gw));
    if (nb) accum_move(b, std::move(gb));
  });
}

template <typename T>
NodeRef TapeT<T>::conv2d_relu(NodeRef x, NodeRef w, NodeRef b, ConvGeometry geom) {
  check_ref(x, "conv2d_relu");
  check_ref(w, "conv2d_relu");
  check_ref(b, "conv2d_relu");
  Tensor4T<T> out = uhdn::conv2d(value(x), value(w), value(b), geom);
  for (std::int64_t i = 0; i < out.count(); ++i)
    if (out[i] < T(0)) out[i] = T(0);
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, x, w, b, geom, self]() {
    // activated output > 0 iff pre-activation > 0, so the mask can be read
    // off the stored value
    const Tensor4T<T>& out = value(self);
    Tensor4T<T> masked(out.shape());
    const Tensor4T<T>& g = grad_buf(self);
    for (std::int64_t i = 0; i < out.count(); ++i)
      masked[i] = out[i] > T(0) ? g[i] : T(0);
    Tensor4T<T> gx, gw, gb;
    bool nx = nodes_[x].needs_grad, nw = nodes_[w].needs_grad,
         nb = nodes_[b].needs_grad;
    conv2d_backward(value(x), value(w), geom, masked, nx ? &gx : nullptr,
                    nw ? &gw : nullptr, nb ? &gb : nullptr);
    if (nx) accum_move(x, std::move(gx));
    if (nw) accum_move(w, std::move(gw));
    if (nb) accum_move(b, std::move(gb));
  });
}

template <typename T>
NodeRef TapeT<T>::up_conv_2x2(NodeRef x, NodeRef w, NodeRef b) {
  check_ref(x, "up_conv_2x2");
  check_ref(w, "up_conv_2x2");
  check_ref(b, "up_conv_2x2");
  Tensor4T<T> out = uhdn::up_conv_2x2(value(x), value(w), value(b));
  bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, x, w, b, self]() {
    Tensor4T<T> gx, gw, gb;
    bool nx = nodes_[x].needs_grad, nw = nodes_[w].needs_grad,
         nb = nodes_[b].needs_grad;
    up_conv_2x2_backward(value(x), value(w), grad_buf(self), nx ? &gx : nullptr,
                         nw ? &gw : nullptr, nb ? &gb : nullptr);
    if (nx) accum_move(x, std::move(gx));
    if (nw) accum_move(w, std::move(gw));
    if (nb) accum_move(b, std::move(gb));
  });
}

template <typename T>
NodeRef TapeT<T>::max_pool_2x2(NodeRef x) {
  check_ref(x, "max_pool_2x2");
  PoolResult<T> res = uhdn::max_pool_2x2(value(x));
  bool ng = nodes_[x].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  Shape4 in_shape = value(x).shape();
  // argmax moves into the closure; replay does not rerun the forward pass
  return result(std::move(res.output), ng,
                [this, x, self, in_shape, am = std::move(res.argmax)]() {
                  accum_move(x, max_pool_2x2_backward(in_shape, am, grad_buf(self)));
                });
}

template <typename T>
NodeRef TapeT<T>::relu(NodeRef x) {
  check_ref(x, "relu");
  Tensor4T<T> out = uhdn::relu(value(x));
  bool ng = nodes_[x].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, x, self]() {
    accum_move(x, relu_backward(value(x), grad_buf(self)));
  });
}

template <typename T>
NodeRef TapeT<T>::sigmoid(NodeRef x) {
  check_ref(x, "sigmoid");
  Tensor4T<T> out = uhdn::sigmoid(value(x));
  bool ng = nodes_[x].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, x, self]() {
    accum_move(x, sigmoid_backward(value(self), grad_buf(self)));
  });
}

template <typename T>
NodeRef TapeT<T>::concat_channels(const std::vector<NodeRef>& parts) {
  std::vector<const Tensor4T<T>*> vals;
  std::vector<std::int64_t> widths;
  bool ng = false;
  for (NodeRef p : parts) {
    check_ref(p, "concat_channels");
    vals.push_back(&value(p));
    widths.push_back(value(p).shape().c);
    ng = ng || nodes_[p].needs_grad;
  }
  Tensor4T<T> out = uhdn::concat_channels(vals);
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, parts, widths, self]() {
    std::vector<Tensor4T<T>> gs = split_channels(grad_buf(self), widths);
    for (std::size_t i = 0; i < parts.size(); ++i)
      if (nodes_[parts[i]].needs_grad) accum_move(parts[i], std::move(gs[i]));
  });
}

template <typename T>
NodeRef TapeT<T>::bilinear_upsample(NodeRef x, int factor) {
  check_ref(x, "bilinear_upsample");
  Tensor4T<T> out = uhdn::bilinear_upsample(value(x), factor);
  bool ng = nodes_[x].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  Shape4 in_shape = value(x).shape();
  return result(std::move(out), ng, [this, x, self, in_shape, factor]() {
    accum_move(x, bilinear_upsample_backward(in_shape, factor, grad_buf(self)));
  });
}

template <typename T>
NodeRef TapeT<T>::sum(NodeRef x) {
  check_ref(x, "sum");
  double acc = 0.0;
  for (T v : value(x)) acc += v;
  Tensor4T<T> out({1, 1, 1, 1});
  out[0] = static_cast<T>(acc);
  bool ng = nodes_[x].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, x, self]() {
    T g = grad_buf(self)[0];
    Tensor4T<T> gx(value(x).shape(), g);
    accum_move(x, std::move(gx));
  });
}

template <typename T>
NodeRef TapeT<T>::weighted_bce(NodeRef logits, const Tensor4T<T>* target, T beta,
                               T gamma, T eps) {
  check_ref(logits, "weighted_bce");
  const Tensor4T<T>& z = value(logits);
  if (!target || target->shape() != z.shape())
    fail(ErrorCode::usage,
         "weighted_bce: target shape " +
             (target ? target->shape().str() : std::string("(null)")) +
             " does not match logits " + z.shape().str());
  for (T v : *target)
    if (v != T(0) && v != T(1))
      fail(ErrorCode::usage,
           "weighted_bce: target must contain only 0 and 1, found " +
               std::to_string((double)v));
  const Shape4& s = z.shape();
  const std::int64_t per_image = s.c * s.h * s.w;
  double total = 0.0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    double img = 0.0;
    const T* zp = z.data() + n * per_image;
    const T* yp = target->data() + n * per_image;
    for (std::int64_t i = 0; i < per_image; ++i) {
      double p = 1.0 / (1.0 + std::exp(-(double)zp[i]));
      double pc = std::min(std::max(p, (double)eps), 1.0 - (double)eps);
      double y = yp[i];
      img += -(beta * y * std::log(pc) + gamma * (1.0 - y) * std::log(1.0 - pc));
    }
    total += img / (double)per_image;
  }
  Tensor4T<T> out({1, 1, 1, 1});
  out[0] = static_cast<T>(total / (double)s.n);

  bool ng = nodes_[logits].needs_grad;
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, logits, target, beta, gamma, eps, self]() {
    const Tensor4T<T>& zv = value(logits);
    const Shape4& sh = zv.shape();
    const std::int64_t per_image = sh.c * sh.h * sh.w;
    T gscale = grad_buf(self)[0];
    Tensor4T<T> gz(sh);
    for (std::int64_t n = 0; n < sh.n; ++n) {
      const T* zp = zv.data() + n * per_image;
      const T* yp = target->data() + n * per_image;
      T* gp = gz.data() + n * per_image;
      double norm = (double)gscale / ((double)per_image * (double)sh.n);
      for (std::int64_t i = 0; i < per_image; ++i) {
        double p = 1.0 / (1.0 + std::exp(-(double)zp[i]));
        // zero slope where the clamp is active
        if (p <= (double)eps || p >= 1.0 - (double)eps) {
          gp[i] = T(0);
          continue;
        }
        double y = yp[i];
        double dldp = -(beta * y / p - gamma * (1.0 - y) / (1.0 - p));
        gp[i] = static_cast<T>(norm * dldp * p * (1.0 - p));
      }
    }
    accum_move(logits, std::move(gz));
  });
}

template <typename T>
NodeRef TapeT<T>::weighted_sum(const std::vector<NodeRef>& scalars,
                               const std::vector<T>& weights) {
  if (scalars.size() != weights.size())
    fail(ErrorCode::usage, "weighted_sum: " + std::to_string(scalars.size()) +
                               " terms but " + std::to_string(weights.size()) +
                               " weights");
  bool ng = false;
  double acc = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    check_ref(scalars[i], "weighted_sum");
    if (value(scalars[i]).count() != 1)
      fail(ErrorCode::usage, "weighted_sum: term " + std::to_string(i) +
                                 " is not scalar, shape " +
                                 value(scalars[i]).shape().str());
    acc += (double)weights[i] * value(scalars[i])[0];
    ng = ng || nodes_[scalars[i]].needs_grad;
  }
  Tensor4T<T> out({1, 1, 1, 1});
  out[0] = static_cast<T>(acc);
  NodeRef self = static_cast<NodeRef>(nodes_.size());
  return result(std::move(out), ng, [this, scalars, weights, self]() {
    T g = grad_buf(self)[0];
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      if (!nodes_[scalars[i]].needs_grad) continue;
      Tensor4T<T> gi({1, 1, 1, 1});
      gi[0] = g * weights[i];
      accum(scalars[i], gi);
    }
  });
}

template <typename T>
void TapeT<T>::backward(NodeRef root) {
  check_ref(root, "backward");
  if (replayed_)
    fail(ErrorCode::usage,
         "backward: tape already replayed; call reset_grads() before replaying "
         "again");
  if (value(root).count() != 1)
    fail(ErrorCode::usage, "backward: root must be scalar, got shape " +
                               value(root).shape().str());
  replayed_ = true;
  Tensor4T<T> seed(value(root).shape());
  seed[0] = T(1);
  accum(root, seed);
  for (NodeRef i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.back && !n.grad.empty()) n.back();
    // interior storage is dead once the closure has run: every consumer of
    // this value has a higher index and was replayed already
    if (release_memory_ && n.back) {
      if (i != root) n.owned = Tensor4T<T>();
      n.grad = Tensor4T<T>();
    }
  }
}

template <typename T>
void TapeT<T>::reset_grads() {
  for (Node& n : nodes_) n.grad = Tensor4T<T>();
  replayed_ = false;
}

template class TapeT<float>;
template class TapeT<double>;

}  // namespace uhdn
