#include "cma/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cma/simd.hpp"

namespace cma::ops {
namespace {

std::string dims(const Tensor& t) { return t.shape().str(); }

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            std::size_t dilation, const char* what) {
  const std::size_t span = dilation * (k - 1) + 1;
  if (stride == 0 || k == 0) throw ShapeError(std::string(what) + ": zero stride or kernel");
  if (in + 2 * pad < span) {
    throw ShapeError(std::string(what) + ": window " + std::to_string(span) +
                     " larger than padded input " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - span) / stride + 1;
}

// Source coordinate and weight for one output index of a half-pixel bilinear resize.
struct Tap {
  std::size_t i0;
  std::size_t i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor flatten(const Tensor& x) {
  require_rank(x, 3, "flatten");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2), hw = h * w;
  Tensor out(Shape{c, hw});
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) out[ch * hw + p] = x[p * c + ch];
  }
  return out;
}

Tensor reshape3d(const Tensor& x, std::size_t h, std::size_t w) {
  require_rank(x, 2, "reshape3d");
  const std::size_t c = x.dim(0), hw = x.dim(1);
  if (hw != h * w) {
    throw ShapeError("reshape3d: " + dims(x) + " cannot become " + std::to_string(h) + "x" +
                     std::to_string(w) + "xC");
  }
  Tensor out(Shape{h, w, c});
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) out[p * c + ch] = x[ch * hw + p];
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner extents " + dims(a) + " x " + dims(b));
  Tensor out(Shape{m, n});
  const auto& kt = simd::active();
  for (std::size_t i = 0; i < m; ++i) {
    kt.gemv_t(&a[i * k], b.data().data(), &out[i * n], k, n);
  }
  return out;
}

PairGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout, bool want_da,
                          bool want_db) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (!(dout.shape() == Shape{m, n})) throw ShapeError("matmul_backward: dout " + dims(dout));
  PairGrads g;
  auto d = dout.data();
  const auto& kt = simd::active();
  if (want_da) {
    g.first = Tensor(a.shape());
    for (std::size_t i = 0; i < m; ++i) kt.gemv(b.data().data(), &d[i * n], &g.first[i * k], k, n);
  }
  if (want_db) {
    g.second = Tensor(b.shape());
    for (std::size_t i = 0; i < m; ++i) kt.ger(&a[i * k], &d[i * n], g.second.data().data(), k, n);
  }
  return g;
}

Tensor softmax_columns(const Tensor& x) {
  require_rank(x, 2, "softmax_columns");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> col_max(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) col_max[j] = std::max(col_max[j], x[i * n + j]);
  }
  Tensor out(x.shape());
  std::vector<double> col_sum(n, 0.0);
  const auto& kt = simd::active();
  for (std::size_t i = 0; i < m; ++i) {
    kt.exp_sub(&x[i * n], col_max.data(), &out[i * n], n);
    kt.add(&out[i * n], col_sum.data(), n);
  }
  for (auto& s : col_sum) s = 1.0 / s;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= col_sum[j];
  }
  return out;
}

Tensor softmax_columns_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "softmax_columns_backward");
  const std::size_t m = y.dim(0), n = y.dim(1);
  std::vector<double> col_dot(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) col_dot[j] += y[i * n + j] * dy[i * n + j];
  }
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dx[i * n + j] = y[i * n + j] * (dy[i * n + j] - col_dot[j]);
    }
  }
  return dx;
}

Tensor conv2d(const Tensor& x, const Tensor& k, Conv2dOptions opt) {
  require_rank(x, 3, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  if (k.dim(2) != cin) throw ShapeError("conv2d: kernel " + dims(k) + " vs input " + dims(x));
  const std::size_t oh = conv_out_extent(h, kh, opt.stride, opt.padding, opt.dilation, "conv2d");
  const std::size_t ow = conv_out_extent(w, kw, opt.stride, opt.padding, opt.dilation, "conv2d");
  Tensor out(Shape{oh, ow, cout});
  auto o = out.data();
  auto kd = k.data();
  const auto& kt = simd::active();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      auto ovec = o.subspan((oy * ow + ox) * cout, cout);
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * opt.stride + ky * opt.dilation) -
                        static_cast<std::ptrdiff_t>(opt.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * opt.stride + kx * opt.dilation) -
                          static_cast<std::ptrdiff_t>(opt.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* xin = &x[(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin];
          kt.gemv_t(xin, &kd[(ky * kw + kx) * cin * cout], ovec.data(), cin, cout);
        }
      }
    }
  }
  return out;
}

PairGrads conv2d_backward(const Tensor& x, const Tensor& k, const Tensor& dout,
                          Conv2dOptions opt, bool want_dx, bool want_dk) {
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(3);
  const std::size_t oh = dout.dim(0), ow = dout.dim(1), taps = kh * kw, pixels = oh * ow;
  PairGrads g;
  auto d = dout.data();
  auto kd = k.data();
  const auto& kt = simd::active();

  // Input offset read by output pixel p through tap t, or -1 in the padding.
  std::vector<std::ptrdiff_t> src(taps * pixels, -1);
  for (std::size_t ky = 0; ky < kh; ++ky) {
    for (std::size_t kx = 0; kx < kw; ++kx) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * opt.stride + ky * opt.dilation) -
                        static_cast<std::ptrdiff_t>(opt.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * opt.stride + kx * opt.dilation) -
                          static_cast<std::ptrdiff_t>(opt.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          src[(ky * kw + kx) * pixels + oy * ow + ox] =
              (iy * static_cast<std::ptrdiff_t>(w) + ix) * static_cast<std::ptrdiff_t>(cin);
        }
      }
    }
  }

  if (want_dx) {
    g.first = Tensor(x.shape());
    // Per-tap transposed kernel so each pixel is one cout×cin product.
    std::vector<double> kt_t(taps * cout * cin);
    for (std::size_t t = 0; t < taps; ++t) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t co = 0; co < cout; ++co) {
          kt_t[(t * cout + co) * cin + ci] = kd[(t * cin + ci) * cout + co];
        }
      }
    }
    for (std::size_t t = 0; t < taps; ++t) {
      for (std::size_t p = 0; p < pixels; ++p) {
        const auto off = src[t * pixels + p];
        if (off < 0) continue;
        kt.gemv_t(&d[p * cout], &kt_t[t * cout * cin], &g.first[static_cast<std::size_t>(off)], cout, cin);
      }
    }
  }
  if (want_dk) {
    g.second = Tensor(k.shape());
    // dK[t] = X_tᵀ · dout with X_t the pixels×cin patch matrix of tap t.
    std::vector<double> cols(cin * pixels);
    for (std::size_t t = 0; t < taps; ++t) {
      for (std::size_t p = 0; p < pixels; ++p) {
        const auto off = src[t * pixels + p];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          cols[ci * pixels + p] = off < 0 ? 0.0 : x[static_cast<std::size_t>(off) + ci];
        }
      }
      for (std::size_t ci = 0; ci < cin; ++ci) {
        kt.gemv_t(&cols[ci * pixels], d.data(), &g.second[(t * cin + ci) * cout], pixels, cout);
      }
    }
  }
  return g;
}

Tensor deconv2d(const Tensor& x, const Tensor& k, Deconv2dOptions opt) {
  require_rank(x, 3, "deconv2d input");
  require_rank(k, 4, "deconv2d kernel");
  const std::size_t h = x.dim(0), w = x.dim(1), cx = x.dim(2);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(2);
  if (k.dim(3) != cx) throw ShapeError("deconv2d: kernel " + dims(k) + " vs input " + dims(x));
  if (opt.stride == 0 || h == 0 || w == 0) throw ShapeError("deconv2d: empty input or zero stride");
  const std::size_t full_h = (h - 1) * opt.stride + kh + opt.output_padding;
  const std::size_t full_w = (w - 1) * opt.stride + kw + opt.output_padding;
  if (full_h <= 2 * opt.padding || full_w <= 2 * opt.padding) {
    throw ShapeError("deconv2d: padding consumes the whole output");
  }
  const std::size_t oh = full_h - 2 * opt.padding, ow = full_w - 2 * opt.padding;
  Tensor out(Shape{oh, ow, cout});
  auto o = out.data();
  auto xd = x.data();
  auto kd = k.data();
  const auto& kt = simd::active();
  for (std::size_t iy = 0; iy < h; ++iy) {
    for (std::size_t ix = 0; ix < w; ++ix) {
      auto xvec = xd.subspan((iy * w + ix) * cx, cx);
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto oy = static_cast<std::ptrdiff_t>(iy * opt.stride + ky) -
                        static_cast<std::ptrdiff_t>(opt.padding);
        if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ox = static_cast<std::ptrdiff_t>(ix * opt.stride + kx) -
                          static_cast<std::ptrdiff_t>(opt.padding);
          if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
          const std::size_t obase =
              (static_cast<std::size_t>(oy) * ow + static_cast<std::size_t>(ox)) * cout;
          kt.gemv(&kd[(ky * kw + kx) * cout * cx], xvec.data(), &o[obase], cout, cx);
        }
      }
    }
  }
  return out;
}

PairGrads deconv2d_backward(const Tensor& x, const Tensor& k, const Tensor& dout,
                            Deconv2dOptions opt, bool want_dx, bool want_dk) {
  const std::size_t h = x.dim(0), w = x.dim(1), cx = x.dim(2);
  const std::size_t kh = k.dim(0), kw = k.dim(1), cout = k.dim(2);
  const std::size_t oh = dout.dim(0), ow = dout.dim(1);
  PairGrads g;
  if (want_dx) g.first = Tensor(x.shape());
  if (want_dk) g.second = Tensor(k.shape());
  auto xd = x.data();
  auto kd = k.data();
  const auto& kt = simd::active();
  for (std::size_t iy = 0; iy < h; ++iy) {
    for (std::size_t ix = 0; ix < w; ++ix) {
      const std::size_t xbase = (iy * w + ix) * cx;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto oy = static_cast<std::ptrdiff_t>(iy * opt.stride + ky) -
                        static_cast<std::ptrdiff_t>(opt.padding);
        if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ox = static_cast<std::ptrdiff_t>(ix * opt.stride + kx) -
                          static_cast<std::ptrdiff_t>(opt.padding);
          if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
          const std::size_t obase =
              (static_cast<std::size_t>(oy) * ow + static_cast<std::size_t>(ox)) * cout;
          const std::size_t kbase = (ky * kw + kx) * cout * cx;
          if (want_dx) kt.gemv_t(&dout[obase], &kd[kbase], &g.first[xbase], cout, cx);
          if (want_dk) kt.ger(&dout[obase], &xd[xbase], &g.second[kbase], cout, cx);
        }
      }
    }
  }
  return g;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    // Split by sign so exp never overflows.
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  require_same_shape(y, dy, "sigmoid_backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  simd::add(b.data(), out.data());
  return out;
}

Tensor scale(const Tensor& x, double s) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * s;
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  if (x.rank() == 0 || x.dim(x.rank() - 1) != bias.dim(0)) {
    throw ShapeError("add_bias: bias " + dims(bias) + " vs " + dims(x));
  }
  const std::size_t c = bias.dim(0);
  Tensor out = x;
  auto o = out.data();
  for (std::size_t p = 0; p < x.size(); p += c) simd::add(bias.data(), o.subspan(p, c));
  return out;
}

Tensor bias_backward(const Tensor& dy, std::size_t channels) {
  Tensor db(Shape{channels});
  auto d = dy.data();
  for (std::size_t p = 0; p < dy.size(); p += channels) simd::add(d.subspan(p, channels), db.data());
  return db;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "concat_channels");
  require_rank(b, 3, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    throw ShapeError("concat_channels: spatial mismatch " + dims(a) + " vs " + dims(b));
  }
  const std::size_t hw = a.dim(0) * a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor out(Shape{a.dim(0), a.dim(1), ca + cb});
  for (std::size_t p = 0; p < hw; ++p) {
    std::copy_n(&a[p * ca], ca, &out[p * (ca + cb)]);
    std::copy_n(&b[p * cb], cb, &out[p * (ca + cb) + ca]);
  }
  return out;
}

PairGrads split_channels(const Tensor& dy, std::size_t channels_first) {
  require_rank(dy, 3, "split_channels");
  const std::size_t c = dy.dim(2);
  if (channels_first > c) throw ShapeError("split_channels: split beyond channel extent");
  const std::size_t hw = dy.dim(0) * dy.dim(1), cb = c - channels_first;
  PairGrads g{Tensor(Shape{dy.dim(0), dy.dim(1), channels_first}),
              Tensor(Shape{dy.dim(0), dy.dim(1), cb})};
  for (std::size_t p = 0; p < hw; ++p) {
    std::copy_n(&dy[p * c], channels_first, &g.first[p * channels_first]);
    std::copy_n(&dy[p * c + channels_first], cb, &g.second[p * cb]);
  }
  return g;
}

Tensor upsample_bilinear(const Tensor& x, std::size_t h, std::size_t w) {
  require_rank(x, 3, "upsample_bilinear");
  const std::size_t ih = x.dim(0), iw = x.dim(1), c = x.dim(2);
  if (ih == 0 || iw == 0 || h == 0 || w == 0) throw ShapeError("upsample_bilinear: empty extent");
  const auto ty = bilinear_taps(ih, h);
  const auto tx = bilinear_taps(iw, w);
  Tensor out(Shape{h, w, c});
  for (std::size_t y = 0; y < h; ++y) {
    const double wy1 = ty[y].w1, wy0 = 1.0 - wy1;
    for (std::size_t xo = 0; xo < w; ++xo) {
      const double wx1 = tx[xo].w1, wx0 = 1.0 - wx1;
      const double* p00 = &x[(ty[y].i0 * iw + tx[xo].i0) * c];
      const double* p01 = &x[(ty[y].i0 * iw + tx[xo].i1) * c];
      const double* p10 = &x[(ty[y].i1 * iw + tx[xo].i0) * c];
      const double* p11 = &x[(ty[y].i1 * iw + tx[xo].i1) * c];
      double* o = &out[(y * w + xo) * c];
      for (std::size_t ch = 0; ch < c; ++ch) {
        o[ch] = wy0 * (wx0 * p00[ch] + wx1 * p01[ch]) + wy1 * (wx0 * p10[ch] + wx1 * p11[ch]);
      }
    }
  }
  return out;
}

Tensor upsample_bilinear_backward(const Tensor& dy, std::size_t in_h, std::size_t in_w) {
  require_rank(dy, 3, "upsample_bilinear_backward");
  const std::size_t h = dy.dim(0), w = dy.dim(1), c = dy.dim(2);
  const auto ty = bilinear_taps(in_h, h);
  const auto tx = bilinear_taps(in_w, w);
  Tensor dx(Shape{in_h, in_w, c});
  for (std::size_t y = 0; y < h; ++y) {
    const double wy1 = ty[y].w1, wy0 = 1.0 - wy1;
    for (std::size_t xo = 0; xo < w; ++xo) {
      const double wx1 = tx[xo].w1, wx0 = 1.0 - wx1;
      const double* g = &dy[(y * w + xo) * c];
      double* p00 = &dx[(ty[y].i0 * in_w + tx[xo].i0) * c];
      double* p01 = &dx[(ty[y].i0 * in_w + tx[xo].i1) * c];
      double* p10 = &dx[(ty[y].i1 * in_w + tx[xo].i0) * c];
      double* p11 = &dx[(ty[y].i1 * in_w + tx[xo].i1) * c];
      for (std::size_t ch = 0; ch < c; ++ch) {
        p00[ch] += wy0 * wx0 * g[ch];
        p01[ch] += wy0 * wx1 * g[ch];
        p10[ch] += wy1 * wx0 * g[ch];
        p11[ch] += wy1 * wx1 * g[ch];
      }
    }
  }
  return dx;
}

}  // namespace cma::ops
