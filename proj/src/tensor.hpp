#pragma once

#include <cstdint>
#include <new>
#include <string>
#include <vector>

#include "error.hpp"

namespace uhdn {

// All numeric buffers share one alignment so the vectorized kernels always
// take the same code path; run-to-run bit determinism depends on it.
template <typename T>
struct AlignedAllocator {
  static constexpr std::size_t kAlign = 64;
  using value_type = T;
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t(kAlign));
  }
  bool operator==(const AlignedAllocator&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

struct Shape4 {
  std::int64_t n = 0;  // batch
  std::int64_t c = 0;  // channels
  std::int64_t h = 0;  // rows
  std::int64_t w = 0;  // cols

  std::int64_t count() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

// Dense rank-4 array in contiguous row-major (n, c, h, w) order.
// float for production paths, double for gradient checking.
template <typename T>
class Tensor4T {
 public:
  Tensor4T() = default;
  explicit Tensor4T(Shape4 s, T fill = T(0))
      : shape_(s), data_(static_cast<std::size_t>(s.count()), fill) {}

  static Tensor4T zeros(Shape4 s) { return Tensor4T(s); }
  static Tensor4T full(Shape4 s, T v) { return Tensor4T(s, v); }

  const Shape4& shape() const { return shape_; }
  std::int64_t count() const { return shape_.count(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  void fill(T v) { data_.assign(data_.size(), v); }
  bool all_finite() const;
  T max_abs() const;

 private:
  Shape4 shape_{};
  AlignedVector<T> data_;
};

using Tensor4 = Tensor4T<float>;
using Tensor4d = Tensor4T<double>;

template <typename Dst, typename Src>
Tensor4T<Dst> tensor_cast(const Tensor4T<Src>& src) {
  Tensor4T<Dst> out(src.shape());
  for (std::int64_t i = 0; i < src.count(); ++i)
    out[i] = static_cast<Dst>(src[i]);
  return out;
}

// Convolution geometry: stride is 1 for every convolution in the network; the
// only stride-2 operation is the dedicated transposed convolution below.
struct ConvGeometry {
  int dilation = 1;
  int padding = 0;  // same zero padding on all four sides
};

// k_d = k + (k - 1)(r - 1)
int effective_kernel_size(int k, int r);

// Padding that preserves spatial size at stride 1 for odd k.
int same_padding(int k, int r);

// --- forward ops -----------------------------------------------------------

// 2-D dilated cross-correlation plus per-channel bias.
// input (n, cin, h, w), weight (cout, cin, kh, kw), bias (1, cout, 1, 1).
template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                   const Tensor4T<T>& bias, const ConvGeometry& geom);

template <typename T>
struct PoolResult {
  Tensor4T<T> output;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

template <typename T>
PoolResult<T> max_pool_2x2(const Tensor4T<T>& input);

// Transposed convolution, kernel 2x2, stride 2 (non-overlapping footprints).
// weight (cout, cin, 2, 2), bias (1, cout, 1, 1); output (n, cout, 2h, 2w).
template <typename T>
Tensor4T<T> up_conv_2x2(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                        const Tensor4T<T>& bias);

template <typename T>
Tensor4T<T> relu(const Tensor4T<T>& input);

template <typename T>
Tensor4T<T> sigmoid(const Tensor4T<T>& input);

template <typename T>
Tensor4T<T> concat_channels(const std::vector<const Tensor4T<T>*>& parts);

template <typename T>
std::vector<Tensor4T<T>> split_channels(const Tensor4T<T>& x,
                                        const std::vector<std::int64_t>& widths);

// Align-corners-false bilinear interpolation; factor in {1, 2, 4, 8}.
template <typename T>
Tensor4T<T> bilinear_upsample(const Tensor4T<T>& input, int factor);

// --- reverse-mode kernels --------------------------------------------------

template <typename T>
void conv2d_backward(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                     const ConvGeometry& geom, const Tensor4T<T>& grad_out,
                     Tensor4T<T>* grad_input, Tensor4T<T>* grad_weight,
                     Tensor4T<T>* grad_bias);

template <typename T>
Tensor4T<T> max_pool_2x2_backward(const Shape4& in_shape,
                                  const std::vector<std::int64_t>& argmax,
                                  const Tensor4T<T>& grad_out);

template <typename T>
void up_conv_2x2_backward(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                          const Tensor4T<T>& grad_out, Tensor4T<T>* grad_input,
                          Tensor4T<T>* grad_weight, Tensor4T<T>* grad_bias);

// Gradient passes where x > 0 (subgradient 0 at x = 0).
template <typename T>
Tensor4T<T> relu_backward(const Tensor4T<T>& input, const Tensor4T<T>& grad_out);

// Takes the forward output y: dy/dx = y(1-y).
template <typename T>
Tensor4T<T> sigmoid_backward(const Tensor4T<T>& output, const Tensor4T<T>& grad_out);

template <typename T>
Tensor4T<T> bilinear_upsample_backward(const Shape4& in_shape, int factor,
                                       const Tensor4T<T>& grad_out);

}  // namespace uhdn
