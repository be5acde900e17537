#include "spg/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace spg {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape " + a.str() + " vs " + b.str());
}

// True when the output has received gradient; ops skip backward otherwise.
template <typename T>
bool has_upstream(const Var<T>& out) {
  return out.has_grad();
}

template <typename T>
Tensor<T>& grad_of(const Var<T>& v) {
  return v.node()->grad_buffer();
}

struct ConvGeom {
  int channels, height, width, k, stride, pad, out_h, out_w;
  int rows() const { return channels * k * k; }
  int cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox*s - p + kx is inside [0, width).
inline void valid_range(int kx, const ConvGeom& g, int& lo, int& hi) {
  const int off = kx - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  const int last = g.width - 1 - off;  // ox*s <= last
  hi = last < 0 ? 0 : std::min(g.out_w, last / g.stride + 1);
  if (hi < lo) hi = lo;
}

// cols[(c*k+ky)*k+kx][oy*out_w+ox] = img[c][oy*s-p+ky][ox*s-p+kx]
template <typename T>
void im2col(const T* img, const ConvGeom& g, T* cols) {
  const int plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* src = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* dst = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * plane;
        int lo, hi;
        valid_range(kx, g, lo, hi);
        const int off = kx - g.pad;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* row = dst + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(row, row + g.out_w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * g.width;
          std::fill(row, row + lo, T(0));
          if (g.stride == 1) {
            std::copy(srow + lo + off, srow + hi + off, row + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) row[ox] = srow[ox * g.stride + off];
          }
          std::fill(row + hi, row + g.out_w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into img.
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* img) {
  const int plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* dst = img + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* src = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * plane;
        int lo, hi;
        valid_range(kx, g, lo, hi);
        const int off = kx - g.pad;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) continue;
          const T* row = src + static_cast<std::size_t>(oy) * g.out_w;
          T* drow = dst + static_cast<std::size_t>(iy) * g.width;
          if (g.stride == 1) {
            T* d = drow + lo + off;
            const T* r = row + lo;
            for (int i = 0; i < hi - lo; ++i) d[i] += r[i];
          } else {
            for (int ox = lo; ox < hi; ++ox) drow[ox * g.stride + off] += row[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

template <typename T, typename F>
Var<T> unary(const Var<T>& x, std::string_view name, F&& f, bool keep_output_for_grad,
             std::function<T(T, T)> dfdx) {
  Tensor<T> y(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x})) {
    record_op<T>(name, {&x}, out, [x, out, dfdx, keep_output_for_grad]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      auto& gx = grad_of(x);
      const auto& gy = out.grad();
      const auto& xv = x.value();
      const auto& yv = out.value();
      for (std::size_t i = 0; i < gy.size(); ++i)
        gx[i] += gy[i] * dfdx(keep_output_for_grad ? yv[i] : xv[i], xv[i]);
    });
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv2d: non-square kernel " + ws.str());
  if (ws.c != xs.c)
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                     std::to_string(ws.c));
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: invalid stride/pad");
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(ws.n))
    throw ShapeError("conv2d: bias length mismatch " + bias.shape().str());
  const int k = ws.h;
  const int out_h = (xs.h + 2 * pad - k) / stride + 1;
  const int out_w = (xs.w + 2 * pad - k) / stride + 1;
  if (xs.h + 2 * pad - k < 0 || xs.w + 2 * pad - k < 0 || out_h <= 0 || out_w <= 0)
    throw ShapeError("conv2d: non-positive output size for input " + xs.str() + " kernel " +
                     std::to_string(k));

  const ConvGeom g{xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w};
  const int c_out = ws.n;
  Tensor<T> y(Shape{xs.n, c_out, out_h, out_w});
  ConstMapMat<T> wmat(weight.value().data(), c_out, g.rows());
  // scratch, fully overwritten before use
  std::unique_ptr<T[], AlignedFree> cols;
  if (!is_pointwise(g)) cols = aligned_buffer<T>(static_cast<std::size_t>(g.rows()) * g.cols());
  for (int n = 0; n < xs.n; ++n) {
    const T* xin = x.value().plane(n, 0);
    const T* cptr = xin;
    if (!is_pointwise(g)) {
      im2col(xin, g, cols.get());
      cptr = cols.get();
    }
    ConstMapMat<T> cmat(cptr, g.rows(), g.cols());
    MapMat<T> ymat(y.plane(n, 0), c_out, g.cols());
    ymat.noalias() = wmat * cmat;
    if (bias.defined()) {
      const T* b = bias.value().data();
      for (int co = 0; co < c_out; ++co) ymat.row(co).array() += b[co];
    }
  }

  Var<T> out(std::move(y));
  if (needs_grad<T>({&x, &weight, &bias})) {
    record_op<T>("conv2d", {&x, &weight, &bias}, out, [x, weight, bias, out, g, c_out]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      const int batch = x.shape().n;
      ConstMapMat<T> wmat(weight.value().data(), c_out, g.rows());
      auto cols = aligned_buffer<T>(static_cast<std::size_t>(g.rows()) * g.cols());
      for (int n = 0; n < batch; ++n) {
        ConstMapMat<T> gymat(gy.plane(n, 0), c_out, g.cols());
        if (weight.requires_grad()) {
          const T* cptr = x.value().plane(n, 0);
          if (!is_pointwise(g)) {
            im2col(cptr, g, cols.get());
            cptr = cols.get();
          }
          ConstMapMat<T> cmat(cptr, g.rows(), g.cols());
          MapMat<T> gw(grad_of(weight).data(), c_out, g.rows());
          gw.noalias() += gymat * cmat.transpose();
        }
        if (bias.defined() && bias.requires_grad()) {
          T* gb = grad_of(bias).data();
          for (int co = 0; co < c_out; ++co) gb[co] += gymat.row(co).sum();
        }
        if (x.requires_grad()) {
          T* gx = grad_of(x).plane(n, 0);
          if (is_pointwise(g)) {
            MapMat<T> gxmat(gx, g.rows(), g.cols());
            gxmat.noalias() += wmat.transpose() * gymat;
          } else {
            MapMat<T> cmat(cols.get(), g.rows(), g.cols());
            cmat.noalias() = wmat.transpose() * gymat;
            col2im(cols.get(), g, gx);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride,
                        int pad, int output_pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.h != ws.w) throw ShapeError("conv_transpose2d: non-square kernel " + ws.str());
  if (ws.n != xs.c)
    throw ShapeError("conv_transpose2d: input has " + std::to_string(xs.c) +
                     " channels, weight expects " + std::to_string(ws.n));
  if (stride < 1 || pad < 0 || output_pad < 0 || output_pad >= stride)
    throw ShapeError("conv_transpose2d: invalid stride/pad/output_pad");
  const int k = ws.h;
  const int c_out = ws.c;
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(c_out))
    throw ShapeError("conv_transpose2d: bias length mismatch " + bias.shape().str());
  const int out_h = (xs.h - 1) * stride - 2 * pad + k + output_pad;
  const int out_w = (xs.w - 1) * stride - 2 * pad + k + output_pad;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv_transpose2d: non-positive output size");

  // The geometry of the forward conv this op is the adjoint of.
  const ConvGeom g{c_out, out_h, out_w, k, stride, pad, xs.h, xs.w};
  Tensor<T> y(Shape{xs.n, c_out, out_h, out_w});
  ConstMapMat<T> wmat(weight.value().data(), xs.c, g.rows());
  auto cols = aligned_buffer<T>(static_cast<std::size_t>(g.rows()) * g.cols());
  for (int n = 0; n < xs.n; ++n) {
    ConstMapMat<T> xmat(x.value().plane(n, 0), xs.c, g.cols());
    MapMat<T> cmat(cols.get(), g.rows(), g.cols());
    cmat.noalias() = wmat.transpose() * xmat;
    col2im(cols.get(), g, y.plane(n, 0));
    if (bias.defined()) {
      const T* b = bias.value().data();
      for (int co = 0; co < c_out; ++co) {
        T* p = y.plane(n, co);
        for (std::size_t i = 0; i < y.shape().plane(); ++i) p[i] += b[co];
      }
    }
  }

  Var<T> out(std::move(y));
  if (needs_grad<T>({&x, &weight, &bias})) {
    record_op<T>("conv_transpose2d", {&x, &weight, &bias}, out, [x, weight, bias, out, g]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      const int batch = x.shape().n;
      const int c_in = x.shape().c;
      ConstMapMat<T> wmat(weight.value().data(), c_in, g.rows());
      auto cols = aligned_buffer<T>(static_cast<std::size_t>(g.rows()) * g.cols());
      for (int n = 0; n < batch; ++n) {
        im2col(gy.plane(n, 0), g, cols.get());
        ConstMapMat<T> cmat(cols.get(), g.rows(), g.cols());
        if (x.requires_grad()) {
          MapMat<T> gx(grad_of(x).plane(n, 0), c_in, g.cols());
          gx.noalias() += wmat * cmat;
        }
        if (weight.requires_grad()) {
          ConstMapMat<T> xmat(x.value().plane(n, 0), c_in, g.cols());
          MapMat<T> gw(grad_of(weight).data(), c_in, g.rows());
          gw.noalias() += xmat * cmat.transpose();
        }
        if (bias.defined() && bias.requires_grad()) {
          T* gb = grad_of(bias).data();
          const std::size_t plane = gy.shape().plane();
          for (int co = 0; co < g.channels; ++co) {
            const T* p = gy.plane(n, co);
            T acc = 0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            gb[co] += acc;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); }, false,
      [](T, T xv) { return xv > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  return unary<T>(
      x, "leaky_relu", [s](T v) { return v > T(0) ? v : s * v; }, false,
      [s](T, T xv) { return xv > T(0) ? T(1) : s; });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return unary<T>(
      x, "tanh", [](T v) { return std::tanh(v); }, true, [](T y, T) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary<T>(
      x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); }, true,
      [](T y, T) { return y * (T(1) - y); });
}

template <typename T>
Var<T> affine(const Var<T>& x, double scale, double shift) {
  const T a = static_cast<T>(scale);
  const T b = static_cast<T>(shift);
  return unary<T>(
      x, "affine", [a, b](T v) { return a * v + b; }, false, [a](T, T) { return a; });
}

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> y(s);
  const std::size_t plane = s.plane();
  const auto& xv = x.value();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, xv.plane(n, c)[p]);
      T total = 0;
      for (int c = 0; c < s.c; ++c) {
        const T e = std::exp(xv.plane(n, c)[p] - mx);
        y.plane(n, c)[p] = e;
        total += e;
      }
      for (int c = 0; c < s.c; ++c) y.plane(n, c)[p] /= total;
    }
  }
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x})) {
    record_op<T>("softmax_channels", {&x}, out, [x, out]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      const Shape s = x.shape();
      const std::size_t plane = s.plane();
      const auto& yv = out.value();
      const auto& gy = out.grad();
      auto& gx = grad_of(x);
      for (int n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
          T dot = 0;
          for (int c = 0; c < s.c; ++c) dot += yv.plane(n, c)[p] * gy.plane(n, c)[p];
          for (int c = 0; c < s.c; ++c)
            gx.plane(n, c)[p] += yv.plane(n, c)[p] * (gy.plane(n, c)[p] - dot);
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = xs.front().shape();
  int channels = 0;
  for (const auto& v : xs) {
    const Shape s = v.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  Tensor<T> y(Shape{first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    int offset = 0;
    for (const auto& v : xs) {
      const auto& src = v.value();
      std::copy_n(src.plane(n, 0), plane * v.shape().c, y.plane(n, offset));
      offset += v.shape().c;
    }
  }
  Var<T> out(std::move(y));
  bool any = false;
  if (Tape<T>::current() != nullptr)
    for (const auto& v : xs) any = any || v.requires_grad();
  if (any) {
    std::vector<std::uint64_t> ids;
    for (const auto& v : xs) ids.push_back(v.id());
    out.set_requires_grad(true);
    Tape<T>::current()->record("concat_channels", std::move(ids), out.id(), [xs, out]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      const Shape s = out.shape();
      const std::size_t plane = s.plane();
      for (int n = 0; n < s.n; ++n) {
        int offset = 0;
        for (const auto& v : xs) {
          const int c = v.shape().c;
          if (v.requires_grad()) {
            T* dst = grad_of(v).plane(n, 0);
            const T* src = gy.plane(n, offset);
            for (std::size_t i = 0; i < plane * c; ++i) dst[i] += src[i];
          }
          offset += c;
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  Var<T> out(std::move(y));
  if (needs_grad<T>({&a, &b})) {
    record_op<T>("add", {&a, &b}, out, [a, b, out]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      for (const Var<T>* v : {&a, &b}) {
        if (!v->requires_grad()) continue;
        auto& g = grad_of(*v);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  Var<T> out(std::move(y));
  if (needs_grad<T>({&a, &b})) {
    record_op<T>("sub", {&a, &b}, out, [a, b, out]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      if (a.requires_grad()) {
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto& g = grad_of(b);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] -= gy[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  Var<T> out(std::move(y));
  if (needs_grad<T>({&a, &b})) {
    record_op<T>("mul", {&a, &b}, out, [a, b, out]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      if (a.requires_grad()) {
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * b.value()[i];
      }
      if (b.requires_grad()) {
        auto& g = grad_of(b);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * a.value()[i];
      }
    });
  }
  return out;
}

template <typename T>
Var<T> mul_channel_broadcast(const Var<T>& x, const Var<T>& mask) {
  const Shape xs = x.shape();
  const Shape ms = mask.shape();
  if (ms.c != 1 || ms.n != xs.n || ms.h != xs.h || ms.w != xs.w)
    throw ShapeError("mul_channel_broadcast: mask " + ms.str() + " for input " + xs.str());
  Tensor<T> y(xs);
  const std::size_t plane = xs.plane();
  for (int n = 0; n < xs.n; ++n) {
    const T* m = mask.value().plane(n, 0);
    for (int c = 0; c < xs.c; ++c) {
      const T* src = x.value().plane(n, c);
      T* dst = y.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * m[i];
    }
  }
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x, &mask})) {
    record_op<T>("mul_channel_broadcast", {&x, &mask}, out, [x, mask, out]() {
      if (!has_upstream(out)) return;
      const Shape xs = x.shape();
      const std::size_t plane = xs.plane();
      const auto& gy = out.grad();
      for (int n = 0; n < xs.n; ++n) {
        const T* m = mask.value().plane(n, 0);
        for (int c = 0; c < xs.c; ++c) {
          const T* g = gy.plane(n, c);
          if (x.requires_grad()) {
            T* gx = grad_of(x).plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) gx[i] += g[i] * m[i];
          }
          if (mask.requires_grad()) {
            T* gm = grad_of(mask).plane(n, 0);
            const T* xv = x.value().plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) gm[i] += g[i] * xv[i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Var<T> sigmoid_blend(const Var<T>& theta, const Var<T>& a, const Var<T>& b) {
  if (theta.value().size() != 1) throw ShapeError("sigmoid_blend: theta must hold one element");
  require_same(a.shape(), b.shape(), "sigmoid_blend");
  const T s = T(1) / (T(1) + std::exp(-theta.value()[0]));
  Tensor<T> y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = s * a.value()[i] + (T(1) - s) * b.value()[i];
  Var<T> out(std::move(y));
  if (needs_grad<T>({&theta, &a, &b})) {
    record_op<T>("sigmoid_blend", {&theta, &a, &b}, out, [theta, a, b, out, s]() {
      if (!has_upstream(out)) return;
      const auto& gy = out.grad();
      if (a.requires_grad()) {
        auto& g = grad_of(a);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += s * gy[i];
      }
      if (b.requires_grad()) {
        auto& g = grad_of(b);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += (T(1) - s) * gy[i];
      }
      if (theta.requires_grad()) {
        double acc = 0;
        for (std::size_t i = 0; i < gy.size(); ++i)
          acc += static_cast<double>(gy[i]) * (a.value()[i] - b.value()[i]);
        grad_of(theta)[0] += static_cast<T>(acc * s * (1.0 - s));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, int k) {
  const Shape s = x.shape();
  if (k < 1 || s.h % k != 0 || s.w % k != 0)
    throw ShapeError("avg_pool2d: " + s.str() + " not divisible by " + std::to_string(k));
  if (k == 1) return x;
  const Shape os{s.n, s.c, s.h / k, s.w / k};
  Tensor<T> y(os);
  const T inv = T(1) / static_cast<T>(k * k);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) {
          T acc = 0;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) acc += x.value()(n, c, oy * k + dy, ox * k + dx);
          y(n, c, oy, ox) = acc * inv;
        }
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x})) {
    record_op<T>("avg_pool2d", {&x}, out, [x, out, k, inv]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      const Shape os = out.shape();
      auto& gx = grad_of(x);
      const auto& gy = out.grad();
      for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
          for (int oy = 0; oy < os.h; ++oy)
            for (int ox = 0; ox < os.w; ++ox) {
              const T g = gy(n, c, oy, ox) * inv;
              for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) gx(n, c, oy * k + dy, ox * k + dx) += g;
            }
    });
  }
  return out;
}

template <typename T>
Var<T> downsample_nearest(const Var<T>& x, int factor) {
  const Shape s = x.shape();
  if (factor < 1 || s.h % factor != 0 || s.w % factor != 0)
    throw ShapeError("downsample_nearest: " + s.str() + " not divisible by " +
                     std::to_string(factor));
  if (factor == 1) return x;
  const Shape os{s.n, s.c, s.h / factor, s.w / factor};
  Tensor<T> y(os);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int oy = 0; oy < os.h; ++oy)
        for (int ox = 0; ox < os.w; ++ox) y(n, c, oy, ox) = x.value()(n, c, oy * factor, ox * factor);
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x})) {
    record_op<T>("downsample_nearest", {&x}, out, [x, out, factor]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      const Shape os = out.shape();
      auto& gx = grad_of(x);
      const auto& gy = out.grad();
      for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
          for (int oy = 0; oy < os.h; ++oy)
            for (int ox = 0; ox < os.w; ++ox) gx(n, c, oy * factor, ox * factor) += gy(n, c, oy, ox);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, double momentum, double eps) {
  const Shape s = x.shape();
  const auto cs = static_cast<std::size_t>(s.c);
  if (gamma.value().size() != cs || beta.value().size() != cs || running_mean.size() != cs ||
      running_var.size() != cs)
    throw ShapeError("batch_norm: parameter length mismatch for " + s.str());
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  std::vector<T> mean_c(cs), inv_std(cs);
  for (int c = 0; c < s.c; ++c) {
    if (training) {
      double acc = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / count;
      double var = 0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
      }
      var /= count;
      mean_c[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[c] = static_cast<T>((1 - momentum) * running_mean[c] + momentum * mu);
      running_var[c] = static_cast<T>((1 - momentum) * running_var[c] + momentum * unbiased);
    } else {
      mean_c[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps));
    }
  }
  Tensor<T> xhat(s);
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* h = xhat.plane(n, c);
      T* q = y.plane(n, c);
      const T gm = gamma.value()[c];
      const T bt = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - mean_c[c]) * inv_std[c];
        q[i] = gm * h[i] + bt;
      }
    }
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x, &gamma, &beta})) {
    record_op<T>("batch_norm", {&x, &gamma, &beta}, out,
                 [x, gamma, beta, out, xhat = std::move(xhat), inv_std, training, count]() {
                   if (!has_upstream(out)) return;
                   const Shape s = x.shape();
                   const std::size_t plane = s.plane();
                   const auto& gy = out.grad();
                   for (int c = 0; c < s.c; ++c) {
                     double sum_g = 0, sum_gh = 0;
                     for (int n = 0; n < s.n; ++n) {
                       const T* g = gy.plane(n, c);
                       const T* h = xhat.plane(n, c);
                       for (std::size_t i = 0; i < plane; ++i) {
                         sum_g += g[i];
                         sum_gh += static_cast<double>(g[i]) * h[i];
                       }
                     }
                     if (gamma.requires_grad()) grad_of(gamma)[c] += static_cast<T>(sum_gh);
                     if (beta.requires_grad()) grad_of(beta)[c] += static_cast<T>(sum_g);
                     if (!x.requires_grad()) continue;
                     const double scale = static_cast<double>(gamma.value()[c]) * inv_std[c];
                     for (int n = 0; n < s.n; ++n) {
                       const T* g = gy.plane(n, c);
                       const T* h = xhat.plane(n, c);
                       T* gx = grad_of(x).plane(n, c);
                       for (std::size_t i = 0; i < plane; ++i) {
                         if (training)
                           gx[i] += static_cast<T>(scale * (g[i] - sum_g / count - h[i] * sum_gh / count));
                         else
                           gx[i] += static_cast<T>(scale * g[i]);
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> instance_norm_stats(const Tensor<T>& x, double eps) {
  const Shape s = x.shape();
  Tensor<T> mu(Shape{s.n, s.c, 1, 1});
  Tensor<T> sigma(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      double acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      const double m = acc / static_cast<double>(plane);
      double var = 0;
      for (std::size_t i = 0; i < plane; ++i) var += (p[i] - m) * (p[i] - m);
      var /= static_cast<double>(plane);
      mu(n, c, 0, 0) = static_cast<T>(m);
      sigma(n, c, 0, 0) = static_cast<T>(std::sqrt(var + eps));
    }
  return {std::move(mu), std::move(sigma)};
}

template <typename T>
Var<T> instance_normalize(const Var<T>& x, double eps) {
  const Shape s = x.shape();
  auto [mu, sigma] = instance_norm_stats(x.value(), eps);
  Tensor<T> y(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.value().plane(n, c);
      T* q = y.plane(n, c);
      const T m = mu(n, c, 0, 0);
      const T sd = sigma(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - m) / sd;
    }
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x})) {
    record_op<T>("instance_normalize", {&x}, out, [x, out, sigma = std::move(sigma)]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      const Shape s = x.shape();
      const std::size_t plane = s.plane();
      const auto& gy = out.grad();
      const auto& yv = out.value();
      auto& gx = grad_of(x);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const T* g = gy.plane(n, c);
          const T* h = yv.plane(n, c);
          double sum_g = 0, sum_gh = 0;
          for (std::size_t i = 0; i < plane; ++i) {
            sum_g += g[i];
            sum_gh += static_cast<double>(g[i]) * h[i];
          }
          const double mg = sum_g / plane;
          const double mgh = sum_gh / plane;
          const double inv = 1.0 / sigma(n, c, 0, 0);
          T* dst = gx.plane(n, c);
          for (std::size_t i = 0; i < plane; ++i)
            dst[i] += static_cast<T>(inv * (g[i] - mg - h[i] * mgh));
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Permutations and sampling

namespace {

// Maps each output flat index to its input flat index for depth-to-space.
std::vector<std::size_t> shuffle_index(const Shape& in, int r) {
  const Shape os{in.n, in.c / (r * r), in.h * r, in.w * r};
  std::vector<std::size_t> idx(os.numel());
  std::size_t o = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int x = 0; x < os.w; ++x, ++o) {
          const int a = y % r, b = x % r;
          const int ic = c * r * r + a * r + b;
          idx[o] = ((static_cast<std::size_t>(n) * in.c + ic) * in.h + y / r) * in.w + x / r;
        }
  return idx;
}

template <typename T>
Var<T> gather_permutation(const Var<T>& x, Shape out_shape, std::vector<std::size_t> idx,
                          std::string_view name) {
  Tensor<T> y(out_shape);
  for (std::size_t i = 0; i < idx.size(); ++i) y[i] = x.value()[idx[i]];
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x})) {
    record_op<T>(name, {&x}, out, [x, out, idx = std::move(idx)]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      auto& gx = grad_of(x);
      const auto& gy = out.grad();
      for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += gy[i];
    });
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.c % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by r^2=" +
                     std::to_string(r * r));
  if (r == 1) return x;
  const Shape os{s.n, s.c / (r * r), s.h * r, s.w * r};
  return gather_permutation(x, os, shuffle_index(s, r), "pixel_shuffle");
}

template <typename T>
Var<T> pixel_unshuffle(const Var<T>& x, int r) {
  const Shape s = x.shape();
  if (r < 1 || s.h % r != 0 || s.w % r != 0)
    throw ShapeError("pixel_unshuffle: " + s.str() + " not divisible by " + std::to_string(r));
  if (r == 1) return x;
  const Shape os{s.n, s.c * r * r, s.h / r, s.w / r};
  // Inverse of the shuffle map: input index i of the shuffled shape lands at idx[i].
  const std::vector<std::size_t> fwd = shuffle_index(os, r);
  std::vector<std::size_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = i;
  return gather_permutation(x, os, std::move(inv), "pixel_unshuffle");
}

template <typename T>
Var<T> grid_sample_bilinear(const Var<T>& x, const Var<T>& flow) {
  const Shape xs = x.shape();
  const Shape fs = flow.shape();
  if (fs.c != 2) throw ShapeError("grid_sample_bilinear: flow needs 2 channels, got " + fs.str());
  if (fs.n != xs.n || fs.h != xs.h || fs.w != xs.w)
    throw ShapeError("grid_sample_bilinear: flow " + fs.str() + " vs input " + xs.str());
  Tensor<T> y(xs);
  const int H = xs.h, W = xs.w;
  auto tap = [&](const T* p, int yy, int xx) -> T {
    return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? p[static_cast<std::size_t>(yy) * W + xx] : T(0);
  };
  for (int n = 0; n < xs.n; ++n) {
    const T* fx = flow.value().plane(n, 0);
    const T* fy = flow.value().plane(n, 1);
    for (int yy = 0; yy < H; ++yy)
      for (int xx = 0; xx < W; ++xx) {
        const std::size_t o = static_cast<std::size_t>(yy) * W + xx;
        const T sx = static_cast<T>(xx) + fx[o];
        const T sy = static_cast<T>(yy) + fy[o];
        const T x0f = std::floor(sx), y0f = std::floor(sy);
        const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
        const T wx = sx - x0f, wy = sy - y0f;
        for (int c = 0; c < xs.c; ++c) {
          const T* p = x.value().plane(n, c);
          y.plane(n, c)[o] = (T(1) - wy) * ((T(1) - wx) * tap(p, y0, x0) + wx * tap(p, y0, x0 + 1)) +
                             wy * ((T(1) - wx) * tap(p, y0 + 1, x0) + wx * tap(p, y0 + 1, x0 + 1));
        }
      }
  }
  Var<T> out(std::move(y));
  if (needs_grad<T>({&x, &flow})) {
    record_op<T>("grid_sample_bilinear", {&x, &flow}, out, [x, flow, out]() {
      if (!has_upstream(out)) return;
      const Shape xs = x.shape();
      const int H = xs.h, W = xs.w;
      const auto& gy = out.grad();
      auto inside = [&](int yy, int xx) { return yy >= 0 && yy < H && xx >= 0 && xx < W; };
      for (int n = 0; n < xs.n; ++n) {
        const T* fx = flow.value().plane(n, 0);
        const T* fy = flow.value().plane(n, 1);
        for (int yy = 0; yy < H; ++yy)
          for (int xx = 0; xx < W; ++xx) {
            const std::size_t o = static_cast<std::size_t>(yy) * W + xx;
            const T sx = static_cast<T>(xx) + fx[o];
            const T sy = static_cast<T>(yy) + fy[o];
            const T x0f = std::floor(sx), y0f = std::floor(sy);
            const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
            const T wx = sx - x0f, wy = sy - y0f;
            double dfx = 0, dfy = 0;
            for (int c = 0; c < xs.c; ++c) {
              const T g = gy.plane(n, c)[o];
              if (g == T(0)) continue;
              const T* p = x.value().plane(n, c);
              auto val = [&](int a, int b) -> T {
                return inside(a, b) ? p[static_cast<std::size_t>(a) * W + b] : T(0);
              };
              if (x.requires_grad()) {
                T* gx = grad_of(x).plane(n, c);
                auto put = [&](int a, int b, T wgt) {
                  if (inside(a, b)) gx[static_cast<std::size_t>(a) * W + b] += g * wgt;
                };
                put(y0, x0, (T(1) - wy) * (T(1) - wx));
                put(y0, x0 + 1, (T(1) - wy) * wx);
                put(y0 + 1, x0, wy * (T(1) - wx));
                put(y0 + 1, x0 + 1, wy * wx);
              }
              if (flow.requires_grad()) {
                const T v00 = val(y0, x0), v01 = val(y0, x0 + 1);
                const T v10 = val(y0 + 1, x0), v11 = val(y0 + 1, x0 + 1);
                dfx += static_cast<double>(g) * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
                dfy += static_cast<double>(g) * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
              }
            }
            if (flow.requires_grad()) {
              auto& gf = grad_of(flow);
              gf.plane(n, 0)[o] += static_cast<T>(dfx);
              gf.plane(n, 1)[o] += static_cast<T>(dfy);
            }
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& x) {
  double acc = 0;
  for (T v : x.value().values()) acc += v;
  Var<T> out(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc)));
  if (needs_grad<T>({&x})) {
    record_op<T>("sum", {&x}, out, [x, out]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      const T g = out.grad()[0];
      for (auto& v : grad_of(x).values()) v += g;
    });
  }
  return out;
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const double count = static_cast<double>(x.value().size());
  double acc = 0;
  for (T v : x.value().values()) acc += v;
  Var<T> out(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(acc / count)));
  if (needs_grad<T>({&x})) {
    record_op<T>("mean", {&x}, out, [x, out, count]() {
      if (!has_upstream(out) || !x.requires_grad()) return;
      const T g = static_cast<T>(out.grad()[0] / count);
      for (auto& v : grad_of(x).values()) v += g;
    });
  }
  return out;
}

template <typename T>
std::vector<int> argmax_channels(const Tensor<T>& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  std::vector<int> labels(static_cast<std::size_t>(s.n) * plane);
  for (int n = 0; n < s.n; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      int best = 0;
      T bv = x.plane(n, 0)[p];
      for (int c = 1; c < s.c; ++c) {
        const T v = x.plane(n, c)[p];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      labels[static_cast<std::size_t>(n) * plane + p] = best;
    }
  return labels;
}

#define SPG_INSTANTIATE_OPS(T)                                                                  \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);               \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int, int); \
  template Var<T> relu(const Var<T>&);                                                          \
  template Var<T> leaky_relu(const Var<T>&, double);                                            \
  template Var<T> tanh(const Var<T>&);                                                          \
  template Var<T> sigmoid(const Var<T>&);                                                       \
  template Var<T> softmax_channels(const Var<T>&);                                              \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                  \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> affine(const Var<T>&, double, double);                                        \
  template Var<T> mul_channel_broadcast(const Var<T>&, const Var<T>&);                          \
  template Var<T> sigmoid_blend(const Var<T>&, const Var<T>&, const Var<T>&);                   \
  template Var<T> avg_pool2d(const Var<T>&, int);                                               \
  template Var<T> downsample_nearest(const Var<T>&, int);                                       \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,           \
                             Tensor<T>&, bool, double, double);                                 \
  template Var<T> instance_normalize(const Var<T>&, double);                                    \
  template std::pair<Tensor<T>, Tensor<T>> instance_norm_stats(const Tensor<T>&, double);       \
  template Var<T> pixel_shuffle(const Var<T>&, int);                                            \
  template Var<T> pixel_unshuffle(const Var<T>&, int);                                          \
  template Var<T> grid_sample_bilinear(const Var<T>&, const Var<T>&);                           \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> mean(const Var<T>&);                                                          \
  template std::vector<int> argmax_channels(const Tensor<T>&);

SPG_INSTANTIATE_OPS(float)
SPG_INSTANTIATE_OPS(double)

}  // namespace spg
