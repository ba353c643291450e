#include "tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace uhdn {

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

template <typename T>
bool Tensor4T<T>::all_finite() const {
  for (T v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
T Tensor4T<T>::max_abs() const {
  T m = T(0);
  for (T v : data_) m = std::max(m, std::abs(v));
  return m;
}

int effective_kernel_size(int k, int r) {
  if (k < 1 || r < 1)
    fail(ErrorCode::usage, "effective_kernel_size requires k >= 1 and r >= 1");
  return k + (k - 1) * (r - 1);
}

int same_padding(int k, int r) { return r * (k - 1) / 2; }

namespace {

template <typename T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;
// Maps a channels-x-strip view of an NCHW tensor whose rows sit a full
// image plane apart.
template <typename T>
using StridedMatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
               Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>,
    Eigen::Unaligned, Eigen::OuterStride<>>;

// Cap on the im2col scratch buffer; large images are processed in row strips.
constexpr std::int64_t kMaxColElems = 1 << 22;

struct ConvDims {
  std::int64_t out_h, out_w, col_rows;
};

ConvDims conv_dims(const Shape4& in, const Shape4& wt, const ConvGeometry& g) {
  if (g.dilation < 1)
    fail(ErrorCode::usage, "conv2d: dilation must be positive, got " +
                               std::to_string(g.dilation));
  if (g.padding < 0)
    fail(ErrorCode::usage, "conv2d: padding must be non-negative");
  if (in.c != wt.c)
    fail(ErrorCode::usage, "conv2d: input channels " + in.str() +
                               " do not match kernel " + wt.str());
  std::int64_t eh = (wt.h - 1) * g.dilation + 1;
  std::int64_t ew = (wt.w - 1) * g.dilation + 1;
  std::int64_t oh = in.h + 2 * g.padding - eh + 1;
  std::int64_t ow = in.w + 2 * g.padding - ew + 1;
  if (oh < 1 || ow < 1)
    fail(ErrorCode::usage, "conv2d: kernel extent exceeds padded input, input " +
                               in.str() + " kernel " + wt.str() + " dilation " +
                               std::to_string(g.dilation));
  return {oh, ow, wt.c * wt.h * wt.w};
}

// Fills col (col_rows x strip*out_w) for output rows [y0, y0+strip) of batch
// item n. Row layout: ci * kh * kw + ky * kw + kx.
template <typename T>
void im2col_strip(const Tensor4T<T>& x, std::int64_t n, const Shape4& wt,
                  const ConvGeometry& g, std::int64_t out_w, std::int64_t y0,
                  std::int64_t strip, T* col) {
  const Shape4& s = x.shape();
  const std::int64_t r = g.dilation, p = g.padding;
  const std::int64_t cols = strip * out_w;
  for (std::int64_t ci = 0; ci < wt.c; ++ci) {
    for (std::int64_t ky = 0; ky < wt.h; ++ky) {
      for (std::int64_t kx = 0; kx < wt.w; ++kx) {
        T* dst = col + ((ci * wt.h + ky) * wt.w + kx) * cols;
        // valid ox span for this tap: 0 <= ox + kx*r - p < w
        std::int64_t ox_lo = std::max<std::int64_t>(0, p - kx * r);
        std::int64_t ox_hi = std::min(out_w, s.w + p - kx * r);
        for (std::int64_t dy = 0; dy < strip; ++dy, dst += out_w) {
          std::int64_t iy = (y0 + dy) + ky * r - p;
          if (iy < 0 || iy >= s.h || ox_lo >= ox_hi) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = &x(n, ci, iy, 0);
          if (ox_lo > 0) std::fill(dst, dst + ox_lo, T(0));
          std::memcpy(dst + ox_lo, src + (ox_lo + kx * r - p),
                      sizeof(T) * (ox_hi - ox_lo));
          if (ox_hi < out_w) std::fill(dst + ox_hi, dst + out_w, T(0));
        }
      }
    }
  }
}

// Scatter-add of a col strip back into the input gradient.
template <typename T>
void col2im_strip(const T* col, std::int64_t n, const Shape4& wt,
                  const ConvGeometry& g, std::int64_t out_w, std::int64_t y0,
                  std::int64_t strip, Tensor4T<T>& dx) {
  const Shape4& s = dx.shape();
  const std::int64_t r = g.dilation, p = g.padding;
  const std::int64_t cols = strip * out_w;
  for (std::int64_t ci = 0; ci < wt.c; ++ci) {
    for (std::int64_t ky = 0; ky < wt.h; ++ky) {
      for (std::int64_t kx = 0; kx < wt.w; ++kx) {
        const T* src = col + ((ci * wt.h + ky) * wt.w + kx) * cols;
        std::int64_t ox_lo = std::max<std::int64_t>(0, p - kx * r);
        std::int64_t ox_hi = std::min(out_w, s.w + p - kx * r);
        for (std::int64_t dy = 0; dy < strip; ++dy, src += out_w) {
          std::int64_t iy = (y0 + dy) + ky * r - p;
          if (iy < 0 || iy >= s.h || ox_lo >= ox_hi) continue;
          T* dst = &dx(n, ci, iy, 0) + (ox_lo + kx * r - p);
          const T* row = src + ox_lo;
          for (std::int64_t i = 0; i < ox_hi - ox_lo; ++i) dst[i] += row[i];
        }
      }
    }
  }
}

std::int64_t strip_rows(std::int64_t col_rows, std::int64_t out_w,
                        std::int64_t out_h) {
  std::int64_t per_row = col_rows * out_w;
  std::int64_t rows = std::max<std::int64_t>(1, kMaxColElems / std::max<std::int64_t>(1, per_row));
  return std::min(rows, out_h);
}

template <typename T>
void check_bias(const Shape4& bias, std::int64_t cout, const char* op) {
  if (bias.count() != cout)
    fail(ErrorCode::usage, std::string(op) + ": bias has " +
                               std::to_string(bias.count()) +
                               " elements, expected " + std::to_string(cout));
}

}  // namespace

template <typename T>
Tensor4T<T> conv2d(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                   const Tensor4T<T>& bias, const ConvGeometry& geom) {
  const Shape4& in = input.shape();
  const Shape4& wt = weight.shape();
  ConvDims d = conv_dims(in, wt, geom);
  check_bias<T>(bias.shape(), wt.n, "conv2d");

  Tensor4T<T> out({in.n, wt.n, d.out_h, d.out_w});
  const std::int64_t strip = strip_rows(d.col_rows, d.out_w, d.out_h);
  AlignedVector<T> col(static_cast<std::size_t>(d.col_rows * strip * d.out_w));

  ConstMatMap<T> wmat(weight.data(), wt.n, d.col_rows);
  ConstVecMap<T> bvec(bias.data(), wt.n);
  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t y0 = 0; y0 < d.out_h; y0 += strip) {
      std::int64_t rows = std::min(strip, d.out_h - y0);
      std::int64_t cols = rows * d.out_w;
      im2col_strip(input, n, wt, geom, d.out_w, y0, rows, col.data());
      ConstMatMap<T> cmat(col.data(), d.col_rows, cols);
      // channel rows of out are a full plane apart, hence the outer stride
      StridedMatMap<T> omat(&out(n, 0, y0, 0), wt.n, cols,
                            Eigen::OuterStride<>(d.out_h * d.out_w));
      omat.noalias() = wmat * cmat;
      omat.colwise() += bvec;
    }
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                     const ConvGeometry& geom, const Tensor4T<T>& grad_out,
                     Tensor4T<T>* grad_input, Tensor4T<T>* grad_weight,
                     Tensor4T<T>* grad_bias) {
  const Shape4& in = input.shape();
  const Shape4& wt = weight.shape();
  ConvDims d = conv_dims(in, wt, geom);
  if (grad_out.shape() != Shape4{in.n, wt.n, d.out_h, d.out_w})
    fail(ErrorCode::usage, "conv2d_backward: grad shape " +
                               grad_out.shape().str() + " does not match " +
                               Shape4{in.n, wt.n, d.out_h, d.out_w}.str());

  if (grad_input && grad_input->shape() != in) *grad_input = Tensor4T<T>(in);
  if (grad_weight && grad_weight->shape() != wt) *grad_weight = Tensor4T<T>(wt);
  if (grad_bias && grad_bias->count() != wt.n)
    *grad_bias = Tensor4T<T>({1, wt.n, 1, 1});

  const std::int64_t strip = strip_rows(d.col_rows, d.out_w, d.out_h);
  AlignedVector<T> col(static_cast<std::size_t>(d.col_rows * strip * d.out_w));
  AlignedVector<T> dcol(grad_input ? col.size() : 0);

  ConstMatMap<T> wmat(weight.data(), wt.n, d.col_rows);
  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t y0 = 0; y0 < d.out_h; y0 += strip) {
      std::int64_t rows = std::min(strip, d.out_h - y0);
      std::int64_t cols = rows * d.out_w;
      if (grad_weight || grad_input)
        im2col_strip(input, n, wt, geom, d.out_w, y0, rows, col.data());
      ConstMatMap<T> cmat(col.data(), d.col_rows, cols);
      ConstStridedMatMap<T> gomat(&grad_out(n, 0, y0, 0), wt.n, cols,
                                  Eigen::OuterStride<>(d.out_h * d.out_w));

      if (grad_weight) {
        MatMap<T> gwmat(grad_weight->data(), wt.n, d.col_rows);
        gwmat.noalias() += gomat * cmat.transpose();
      }
      if (grad_bias) {
        VecMap<T> gbvec(grad_bias->data(), wt.n);
        gbvec += gomat.rowwise().sum();
      }
      if (grad_input) {
        MatMap<T> dcmat(dcol.data(), d.col_rows, cols);
        dcmat.noalias() = wmat.transpose() * gomat;
        col2im_strip(dcol.data(), n, wt, geom, d.out_w, y0, rows, *grad_input);
      }
    }
  }
}

template <typename T>
PoolResult<T> max_pool_2x2(const Tensor4T<T>& input) {
  const Shape4& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0)
    fail(ErrorCode::usage, "max_pool_2x2: spatial size " + s.str() +
                               " is odd; pad the input to even dimensions first");
  PoolResult<T> res;
  res.output = Tensor4T<T>({s.n, s.c, s.h / 2, s.w / 2});
  res.argmax.resize(static_cast<std::size_t>(res.output.count()));
  std::int64_t o = 0;
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < s.h; y += 2)
        for (std::int64_t x = 0; x < s.w; x += 2) {
          // first maximal element in row-major window order wins
          std::int64_t base = ((n * s.c + c) * s.h + y) * s.w + x;
          std::int64_t idx[4] = {base, base + 1, base + s.w, base + s.w + 1};
          std::int64_t best = idx[0];
          T bv = input[idx[0]];
          for (int k = 1; k < 4; ++k)
            if (input[idx[k]] > bv) { bv = input[idx[k]]; best = idx[k]; }
          res.output[o] = bv;
          res.argmax[o] = best;
          ++o;
        }
  return res;
}

template <typename T>
Tensor4T<T> max_pool_2x2_backward(const Shape4& in_shape,
                                  const std::vector<std::int64_t>& argmax,
                                  const Tensor4T<T>& grad_out) {
  Tensor4T<T> dx(in_shape);
  for (std::int64_t i = 0; i < grad_out.count(); ++i)
    dx[argmax[i]] += grad_out[i];
  return dx;
}

template <typename T>
Tensor4T<T> up_conv_2x2(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                        const Tensor4T<T>& bias) {
  const Shape4& s = input.shape();
  const Shape4& wt = weight.shape();
  if (wt.h != 2 || wt.w != 2)
    fail(ErrorCode::usage, "up_conv_2x2: kernel must be 2x2, got " + wt.str());
  if (wt.c != s.c)
    fail(ErrorCode::usage, "up_conv_2x2: input channels " + s.str() +
                               " do not match kernel " + wt.str());
  check_bias<T>(bias.shape(), wt.n, "up_conv_2x2");

  Tensor4T<T> out({s.n, wt.n, 2 * s.h, 2 * s.w});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t co = 0; co < wt.n; ++co) {
      T b = bias[co];
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
          T acc[4] = {b, b, b, b};
          for (std::int64_t ci = 0; ci < s.c; ++ci) {
            T v = input(n, ci, y, x);
            const T* wp = &weight(co, ci, 0, 0);
            acc[0] += v * wp[0];
            acc[1] += v * wp[1];
            acc[2] += v * wp[2];
            acc[3] += v * wp[3];
          }
          out(n, co, 2 * y, 2 * x) = acc[0];
          out(n, co, 2 * y, 2 * x + 1) = acc[1];
          out(n, co, 2 * y + 1, 2 * x) = acc[2];
          out(n, co, 2 * y + 1, 2 * x + 1) = acc[3];
        }
    }
  return out;
}

template <typename T>
void up_conv_2x2_backward(const Tensor4T<T>& input, const Tensor4T<T>& weight,
                          const Tensor4T<T>& grad_out, Tensor4T<T>* grad_input,
                          Tensor4T<T>* grad_weight, Tensor4T<T>* grad_bias) {
  const Shape4& s = input.shape();
  const Shape4& wt = weight.shape();
  if (grad_input && grad_input->shape() != s) *grad_input = Tensor4T<T>(s);
  if (grad_weight && grad_weight->shape() != wt) *grad_weight = Tensor4T<T>(wt);
  if (grad_bias && grad_bias->count() != wt.n)
    *grad_bias = Tensor4T<T>({1, wt.n, 1, 1});

  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t co = 0; co < wt.n; ++co)
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) {
          T g[4] = {grad_out(n, co, 2 * y, 2 * x),
                    grad_out(n, co, 2 * y, 2 * x + 1),
                    grad_out(n, co, 2 * y + 1, 2 * x),
                    grad_out(n, co, 2 * y + 1, 2 * x + 1)};
          if (grad_bias) (*grad_bias)[co] += g[0] + g[1] + g[2] + g[3];
          for (std::int64_t ci = 0; ci < s.c; ++ci) {
            const T* wp = &weight(co, ci, 0, 0);
            T v = input(n, ci, y, x);
            if (grad_input)
              (*grad_input)(n, ci, y, x) +=
                  g[0] * wp[0] + g[1] * wp[1] + g[2] * wp[2] + g[3] * wp[3];
            if (grad_weight) {
              T* gw = &(*grad_weight)(co, ci, 0, 0);
              gw[0] += v * g[0];
              gw[1] += v * g[1];
              gw[2] += v * g[2];
              gw[3] += v * g[3];
            }
          }
        }
}

template <typename T>
Tensor4T<T> relu(const Tensor4T<T>& input) {
  Tensor4T<T> out(input.shape());
  for (std::int64_t i = 0; i < input.count(); ++i)
    out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
Tensor4T<T> relu_backward(const Tensor4T<T>& input, const Tensor4T<T>& grad_out) {
  Tensor4T<T> dx(input.shape());
  for (std::int64_t i = 0; i < input.count(); ++i)
    dx[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return dx;
}

template <typename T>
Tensor4T<T> sigmoid(const Tensor4T<T>& input) {
  Tensor4T<T> out(input.shape());
  for (std::int64_t i = 0; i < input.count(); ++i)
    out[i] = T(1) / (T(1) + std::exp(-input[i]));
  return out;
}

template <typename T>
Tensor4T<T> sigmoid_backward(const Tensor4T<T>& output, const Tensor4T<T>& grad_out) {
  Tensor4T<T> dx(output.shape());
  for (std::int64_t i = 0; i < output.count(); ++i)
    dx[i] = grad_out[i] * output[i] * (T(1) - output[i]);
  return dx;
}

template <typename T>
Tensor4T<T> concat_channels(const std::vector<const Tensor4T<T>*>& parts) {
  if (parts.empty()) fail(ErrorCode::usage, "concat_channels: no parts");
  const Shape4& first = parts[0]->shape();
  std::int64_t total_c = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Shape4& s = parts[i]->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      fail(ErrorCode::usage, "concat_channels: part " + std::to_string(i) +
                                 " has shape " + s.str() +
                                 ", incompatible with part 0 " + first.str());
    total_c += s.c;
  }
  Tensor4T<T> out({first.n, total_c, first.h, first.w});
  const std::int64_t plane = first.h * first.w;
  for (std::int64_t n = 0; n < first.n; ++n) {
    std::int64_t off = 0;
    for (const auto* p : parts) {
      std::int64_t pc = p->shape().c;
      std::memcpy(&out(n, off, 0, 0), &(*p)(n, 0, 0, 0),
                  sizeof(T) * pc * plane);
      off += pc;
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor4T<T>> split_channels(const Tensor4T<T>& x,
                                        const std::vector<std::int64_t>& widths) {
  const Shape4& s = x.shape();
  std::int64_t total = 0;
  for (auto w : widths) total += w;
  if (total != s.c)
    fail(ErrorCode::usage, "split_channels: widths sum to " +
                               std::to_string(total) + " but tensor has " +
                               std::to_string(s.c) + " channels");
  std::vector<Tensor4T<T>> parts;
  parts.reserve(widths.size());
  const std::int64_t plane = s.h * s.w;
  std::int64_t off = 0;
  for (auto wc : widths) {
    Tensor4T<T> p({s.n, wc, s.h, s.w});
    for (std::int64_t n = 0; n < s.n; ++n)
      std::memcpy(&p(n, 0, 0, 0), &x(n, off, 0, 0), sizeof(T) * wc * plane);
    parts.push_back(std::move(p));
    off += wc;
  }
  return parts;
}

namespace {

// Per-axis sample taps for align-corners-false interpolation.
struct LerpTap {
  std::int64_t i0, i1;
  double w0, w1;
};

std::vector<LerpTap> lerp_taps(std::int64_t out_len, std::int64_t in_len, int factor) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out_len));
  for (std::int64_t o = 0; o < out_len; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    double fl = std::floor(src);
    double frac = src - fl;
    std::int64_t i0 = static_cast<std::int64_t>(fl);
    std::int64_t i1 = i0 + 1;
    i0 = std::clamp<std::int64_t>(i0, 0, in_len - 1);
    i1 = std::clamp<std::int64_t>(i1, 0, in_len - 1);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

void check_factor(int factor) {
  if (factor != 1 && factor != 2 && factor != 4 && factor != 8)
    fail(ErrorCode::usage, "bilinear_upsample: unsupported factor " +
                               std::to_string(factor) + " (expected 1, 2, 4, or 8)");
}

}  // namespace

template <typename T>
Tensor4T<T> bilinear_upsample(const Tensor4T<T>& input, int factor) {
  check_factor(factor);
  if (factor == 1) return input;
  const Shape4& s = input.shape();
  Tensor4T<T> out({s.n, s.c, s.h * factor, s.w * factor});
  auto ty = lerp_taps(s.h * factor, s.h, factor);
  auto tx = lerp_taps(s.w * factor, s.w, factor);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < s.h * factor; ++y) {
        const LerpTap& a = ty[y];
        for (std::int64_t x = 0; x < s.w * factor; ++x) {
          const LerpTap& b = tx[x];
          double v = a.w0 * (b.w0 * input(n, c, a.i0, b.i0) +
                             b.w1 * input(n, c, a.i0, b.i1)) +
                     a.w1 * (b.w0 * input(n, c, a.i1, b.i0) +
                             b.w1 * input(n, c, a.i1, b.i1));
          out(n, c, y, x) = static_cast<T>(v);
        }
      }
  return out;
}

template <typename T>
Tensor4T<T> bilinear_upsample_backward(const Shape4& in_shape, int factor,
                                       const Tensor4T<T>& grad_out) {
  check_factor(factor);
  if (factor == 1) return grad_out;
  Tensor4T<T> dx(in_shape);
  auto ty = lerp_taps(in_shape.h * factor, in_shape.h, factor);
  auto tx = lerp_taps(in_shape.w * factor, in_shape.w, factor);
  for (std::int64_t n = 0; n < in_shape.n; ++n)
    for (std::int64_t c = 0; c < in_shape.c; ++c)
      for (std::int64_t y = 0; y < in_shape.h * factor; ++y) {
        const LerpTap& a = ty[y];
        for (std::int64_t x = 0; x < in_shape.w * factor; ++x) {
          const LerpTap& b = tx[x];
          T g = grad_out(n, c, y, x);
          dx(n, c, a.i0, b.i0) += static_cast<T>(a.w0 * b.w0) * g;
          dx(n, c, a.i0, b.i1) += static_cast<T>(a.w0 * b.w1) * g;
          dx(n, c, a.i1, b.i0) += static_cast<T>(a.w1 * b.w0) * g;
          dx(n, c, a.i1, b.i1) += static_cast<T>(a.w1 * b.w1) * g;
        }
      }
  return dx;
}

#define UHDN_INSTANTIATE(T)                                                     \
  template class Tensor4T<T>;                                                   \
  template Tensor4T<T> conv2d(const Tensor4T<T>&, const Tensor4T<T>&,           \
                              const Tensor4T<T>&, const ConvGeometry&);         \
  template void conv2d_backward(const Tensor4T<T>&, const Tensor4T<T>&,         \
                                const ConvGeometry&, const Tensor4T<T>&,        \
                                Tensor4T<T>*, Tensor4T<T>*, Tensor4T<T>*);      \
  template PoolResult<T> max_pool_2x2(const Tensor4T<T>&);                      \
  template Tensor4T<T> max_pool_2x2_backward(                                   \
      const Shape4&, const std::vector<std::int64_t>&, const Tensor4T<T>&);     \
  template Tensor4T<T> up_conv_2x2(const Tensor4T<T>&, const Tensor4T<T>&,      \
                                   const Tensor4T<T>&);                         \
  template void up_conv_2x2_backward(const Tensor4T<T>&, const Tensor4T<T>&,    \
                                     const Tensor4T<T>&, Tensor4T<T>*,          \
                                     Tensor4T<T>*, Tensor4T<T>*);               \
  template Tensor4T<T> relu(const Tensor4T<T>&);                                \
  template Tensor4T<T> relu_backward(const Tensor4T<T>&, const Tensor4T<T>&);   \
  template Tensor4T<T> sigmoid(const Tensor4T<T>&);                             \
  template Tensor4T<T> sigmoid_backward(const Tensor4T<T>&,                     \
                                        const Tensor4T<T>&);                    \
  template Tensor4T<T> concat_channels(const std::vector<const Tensor4T<T>*>&); \
  template std::vector<Tensor4T<T>> split_channels(                             \
      const Tensor4T<T>&, const std::vector<std::int64_t>&);                    \
  template Tensor4T<T> bilinear_upsample(const Tensor4T<T>&, int);              \
  template Tensor4T<T> bilinear_upsample_backward(const Shape4&, int,           \
                                                  const Tensor4T<T>&);

UHDN_INSTANTIATE(float)
UHDN_INSTANTIATE(double)

#undef UHDN_INSTANTIATE

}  // namespace uhdn
