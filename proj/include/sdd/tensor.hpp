#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdd {

using index_t = std::int64_t;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when operand extents are incompatible. The message always names
/// the offending shapes.
struct ShapeError : Error {
  using Error::Error;
};

/// Raised on malformed tensor files (bad header, payload size mismatch).
struct FormatError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DivergenceError : Error {
  using Error::Error;
};

inline std::string shape_str(const std::vector<index_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor of 64-bit reals.
///
/// The shape is an explicit extent list; there is no broadcasting. All
/// numerical modules in this library build on this type, so it stays
/// deliberately small: storage, indexing, elementwise arithmetic and a few
/// reductions. Structured operations (convolution, resampling) are free
/// functions below.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<index_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(checked_numel(shape_)), 0.0);
  }

  Tensor(std::vector<index_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<index_t>(data_.size()) != checked_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor full(std::vector<index_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<index_t>& shape() const { return shape_; }
  index_t rank() const { return static_cast<index_t>(shape_.size()); }
  index_t extent(index_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  index_t numel() const { return static_cast<index_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double operator[](index_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& operator[](index_t i) { return data_[static_cast<std::size_t>(i)]; }

  template <typename... Ix>
  double operator()(Ix... ix) const {
    return data_[offset(ix...)];
  }
  template <typename... Ix>
  double& operator()(Ix... ix) {
    return data_[offset(ix...)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

  double squared_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor& operator+=(const Tensor& rhs) {
    require_same_shape(rhs, "+=");
    for (index_t i = 0; i < numel(); ++i) data_[static_cast<std::size_t>(i)] += rhs[i];
    return *this;
  }

  Tensor& operator-=(const Tensor& rhs) {
    require_same_shape(rhs, "-=");
    for (index_t i = 0; i < numel(); ++i) data_[static_cast<std::size_t>(i)] -= rhs[i];
    return *this;
  }

  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new extents; the element count must be unchanged.
  Tensor reshaped(std::vector<index_t> shape) const {
    if (checked_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

 private:
  static index_t checked_numel(const std::vector<index_t>& shape) {
    index_t n = 1;
    for (index_t e : shape) {
      if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
      n *= e;
    }
    return n;
  }

  void require_same_shape(const Tensor& rhs, const char* op) const {
    if (!same_shape(rhs)) {
      throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_str(shape_) +
                       " vs " + shape_str(rhs.shape_));
    }
  }

  template <typename... Ix>
  std::size_t offset(Ix... ix) const {
    const index_t idx[] = {static_cast<index_t>(ix)...};
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(Ix); ++a) {
      off = off * static_cast<std::size_t>(shape_[a]) + static_cast<std::size_t>(idx[a]);
    }
    return off;
  }

  std::vector<index_t> shape_;
  std::vector<double> data_;
};

inline Tensor operator+(Tensor lhs, const Tensor& rhs) {
  lhs += rhs;
  return lhs;
}

inline Tensor operator-(Tensor lhs, const Tensor& rhs) {
  lhs -= rhs;
  return lhs;
}

inline Tensor operator*(double s, Tensor t) {
  t *= s;
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("dot: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double s = 0.0;
  for (index_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

enum class PadMode { zero, periodic };

namespace detail {

/// Copies a C×H×W tensor into a C×(H+2p)×(W+2p) buffer with the requested
/// boundary extension. Periodic extension requires p <= extent.
inline Tensor pad2d(const Tensor& input, index_t pad, PadMode mode) {
  const index_t c = input.extent(0), h = input.extent(1), w = input.extent(2);
  if (pad == 0) return input;
  if (mode == PadMode::periodic && (pad > h || pad > w)) {
    throw ShapeError("periodic pad " + std::to_string(pad) + " exceeds extents " +
                     shape_str(input.shape()));
  }
  Tensor out({c, h + 2 * pad, w + 2 * pad});
  for (index_t ch = 0; ch < c; ++ch) {
    for (index_t i = -pad; i < h + pad; ++i) {
      for (index_t j = -pad; j < w + pad; ++j) {
        double v = 0.0;
        if (mode == PadMode::zero) {
          if (i >= 0 && i < h && j >= 0 && j < w) v = input(ch, i, j);
        } else {
          const index_t ii = ((i % h) + h) % h;
          const index_t jj = ((j % w) + w) % w;
          v = input(ch, ii, jj);
        }
        out(ch, i + pad, j + pad) = v;
      }
    }
  }
  return out;
}

/// Scatters gradients from the padded buffer back onto the original extents,
/// folding wrapped cells for periodic extension.
inline Tensor unpad2d_accumulate(const Tensor& grad_padded, index_t c, index_t h, index_t w,
                                 index_t pad, PadMode mode) {
  if (pad == 0) return grad_padded;
  Tensor out({c, h, w});
  for (index_t ch = 0; ch < c; ++ch) {
    for (index_t i = -pad; i < h + pad; ++i) {
      for (index_t j = -pad; j < w + pad; ++j) {
        const double g = grad_padded(ch, i + pad, j + pad);
        if (mode == PadMode::zero) {
          if (i >= 0 && i < h && j >= 0 && j < w) out(ch, i, j) += g;
        } else {
          const index_t ii = ((i % h) + h) % h;
          const index_t jj = ((j % w) + w) % w;
          out(ch, ii, jj) += g;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

/// 2D cross-correlation of a C×H×W input with an O×C×kh×kw kernel.
///
/// Output extents follow floor((H + 2*pad - kh) / stride) + 1. `bias` may be
/// null; when present it must hold O entries.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor* bias,
                     index_t stride, PadMode mode, index_t pad) {
  if (input.rank() != 3 || kernel.rank() != 4) {
    throw ShapeError("conv2d expects C×H×W input and O×C×kh×kw kernel, got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (kernel.extent(1) != input.extent(0)) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                     " vs kernel " + shape_str(kernel.shape()));
  }
  if (stride < 1) throw ShapeError("conv2d stride must be >= 1");
  const index_t oc = kernel.extent(0), ic = kernel.extent(1);
  const index_t kh = kernel.extent(2), kw = kernel.extent(3);
  const index_t h = input.extent(1), w = input.extent(2);
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw ShapeError("conv2d kernel " + shape_str(kernel.shape()) +
                     " exceeds padded input " + shape_str(input.shape()) + " with pad " +
                     std::to_string(pad));
  }
  if (bias && (bias->rank() != 1 || bias->extent(0) != oc)) {
    throw ShapeError("conv2d bias shape " + shape_str(bias->shape()) +
                     " does not match output channels " + std::to_string(oc));
  }
  const Tensor padded = detail::pad2d(input, pad, mode);
  const index_t ph = padded.extent(1), pw = padded.extent(2);
  const index_t oh = (ph - kh) / stride + 1;
  const index_t ow = (pw - kw) / stride + 1;

  Tensor out({oc, oh, ow});
  const double* in = padded.data();
  const double* kd = kernel.data();
  double* od = out.data();
  for (index_t o = 0; o < oc; ++o) {
    double* oplane = od + o * oh * ow;
    if (bias) {
      const double b = (*bias)[o];
      for (index_t i = 0; i < oh * ow; ++i) oplane[i] = b;
    }
    for (index_t c = 0; c < ic; ++c) {
      const double* iplane = in + c * ph * pw;
      const double* kplane = kd + (o * ic + c) * kh * kw;
      for (index_t ki = 0; ki < kh; ++ki) {
        for (index_t kj = 0; kj < kw; ++kj) {
          const double kv = kplane[ki * kw + kj];
          for (index_t y = 0; y < oh; ++y) {
            const double* irow = iplane + (y * stride + ki) * pw + kj;
            double* orow = oplane + y * ow;
            for (index_t x = 0; x < ow; ++x) {
              orow[x] += kv * irow[x * stride];
            }
          }
        }
      }
    }
  }
  return out;
}

struct Conv2dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};

/// Adjoint of conv2d: given d(loss)/d(output), returns gradients with respect
/// to the input, the kernel and the bias.
inline Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel,
                                   const Tensor& grad_out, index_t stride, PadMode mode,
                                   index_t pad) {
  const index_t oc = kernel.extent(0), ic = kernel.extent(1);
  const index_t kh = kernel.extent(2), kw = kernel.extent(3);
  const index_t h = input.extent(1), w = input.extent(2);
  const Tensor padded = detail::pad2d(input, pad, mode);
  const index_t ph = padded.extent(1), pw = padded.extent(2);
  const index_t oh = grad_out.extent(1), ow = grad_out.extent(2);
  if (grad_out.extent(0) != oc || oh != (ph - kh) / stride + 1 || ow != (pw - kw) / stride + 1) {
    throw ShapeError("conv2d_backward: grad shape " + shape_str(grad_out.shape()) +
                     " inconsistent with forward call");
  }

  Tensor grad_padded({ic, ph, pw});
  Tensor grad_kernel({oc, ic, kh, kw});
  Tensor grad_bias({oc});

  const double* in = padded.data();
  const double* kd = kernel.data();
  const double* gd = grad_out.data();
  double* gp = grad_padded.data();
  double* gk = grad_kernel.data();
  for (index_t o = 0; o < oc; ++o) {
    const double* gplane = gd + o * oh * ow;
    double b = 0.0;
    for (index_t i = 0; i < oh * ow; ++i) b += gplane[i];
    grad_bias[o] = b;
    for (index_t c = 0; c < ic; ++c) {
      const double* iplane = in + c * ph * pw;
      double* gpplane = gp + c * ph * pw;
      const double* kplane = kd + (o * ic + c) * kh * kw;
      double* gkplane = gk + (o * ic + c) * kh * kw;
      for (index_t ki = 0; ki < kh; ++ki) {
        for (index_t kj = 0; kj < kw; ++kj) {
          const double kv = kplane[ki * kw + kj];
          double acc = 0.0;
          for (index_t y = 0; y < oh; ++y) {
            const double* irow = iplane + (y * stride + ki) * pw + kj;
            double* gprow = gpplane + (y * stride + ki) * pw + kj;
            const double* grow = gplane + y * ow;
            for (index_t x = 0; x < ow; ++x) {
              acc += grow[x] * irow[x * stride];
              gprow[x * stride] += kv * grow[x];
            }
          }
          gkplane[ki * kw + kj] += acc;
        }
      }
    }
  }
  Conv2dGrads g;
  g.input = detail::unpad2d_accumulate(grad_padded, ic, h, w, pad, mode);
  g.kernel = std::move(grad_kernel);
  g.bias = std::move(grad_bias);
  return g;
}

/// Replicates every cell of the two trailing axes into a 2×2 block.
inline Tensor upsample_nearest2x(const Tensor& input) {
  if (input.rank() < 2) throw ShapeError("upsample_nearest2x expects rank >= 2");
  const index_t h = input.extent(input.rank() - 2);
  const index_t w = input.extent(input.rank() - 1);
  index_t planes = 1;
  std::vector<index_t> oshape = input.shape();
  for (index_t a = 0; a < input.rank() - 2; ++a) planes *= input.extent(a);
  oshape[static_cast<std::size_t>(input.rank() - 2)] = 2 * h;
  oshape[static_cast<std::size_t>(input.rank() - 1)] = 2 * w;
  Tensor out(oshape);
  const double* in = input.data();
  double* od = out.data();
  for (index_t p = 0; p < planes; ++p) {
    const double* ip = in + p * h * w;
    double* op = od + p * 4 * h * w;
    for (index_t i = 0; i < h; ++i) {
      for (index_t j = 0; j < w; ++j) {
        const double v = ip[i * w + j];
        op[(2 * i) * 2 * w + 2 * j] = v;
        op[(2 * i) * 2 * w + 2 * j + 1] = v;
        op[(2 * i + 1) * 2 * w + 2 * j] = v;
        op[(2 * i + 1) * 2 * w + 2 * j + 1] = v;
      }
    }
  }
  return out;
}

/// Adjoint of upsample_nearest2x: sums each 2×2 block.
inline Tensor upsample_nearest2x_backward(const Tensor& grad) {
  if (grad.rank() < 2) throw ShapeError("upsample_nearest2x_backward expects rank >= 2");
  const index_t h2 = grad.extent(grad.rank() - 2);
  const index_t w2 = grad.extent(grad.rank() - 1);
  if (h2 % 2 || w2 % 2) {
    throw ShapeError("upsample_nearest2x_backward: odd extents " + shape_str(grad.shape()));
  }
  index_t planes = 1;
  std::vector<index_t> oshape = grad.shape();
  for (index_t a = 0; a < grad.rank() - 2; ++a) planes *= grad.extent(a);
  oshape[static_cast<std::size_t>(grad.rank() - 2)] = h2 / 2;
  oshape[static_cast<std::size_t>(grad.rank() - 1)] = w2 / 2;
  Tensor out(oshape);
  const double* gd = grad.data();
  double* od = out.data();
  const index_t h = h2 / 2, w = w2 / 2;
  for (index_t p = 0; p < planes; ++p) {
    const double* gp = gd + p * h2 * w2;
    double* op = od + p * h * w;
    for (index_t i = 0; i < h; ++i) {
      for (index_t j = 0; j < w; ++j) {
        op[i * w + j] = gp[(2 * i) * w2 + 2 * j] + gp[(2 * i) * w2 + 2 * j + 1] +
                        gp[(2 * i + 1) * w2 + 2 * j] + gp[(2 * i + 1) * w2 + 2 * j + 1];
      }
    }
  }
  return out;
}

/// 2×2 average pooling over the two trailing axes (extents must be even).
inline Tensor avgpool2x(const Tensor& input) {
  Tensor sums = upsample_nearest2x_backward(input);
  sums *= 0.25;
  return sums;
}

}  // namespace sdd
