#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "lumina/tensor.hpp"

namespace lumina {

namespace detail {

/// Dot product over k contiguous elements. Eight independent partial sums keep
/// the loop free of a serial FP dependency so it vectorizes under strict IEEE
/// semantics; the lane-combine order is fixed, so results are bit-stable.
template <class S>
inline S dot_k(const S* a, const S* b, int64_t k) {
  S lanes[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
  int64_t i = 0;
  for (; i + 8 <= k; i += 8)
    for (int j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
  S tail = S(0);
  for (; i < k; ++i) tail += a[i] * b[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

template <class S>
inline void axpy_k(S* acc, S scale, const S* v, int64_t k) {
  for (int64_t i = 0; i < k; ++i) acc[i] += scale * v[i];
}

inline void check_rank4(const Shape& s, const char* op, const char* arg) {
  if (s.size() != 4)
    throw DimensionError(std::string(op) + ": " + arg + " must be rank 4, got " +
                         shape_str(s));
}

/// Patch-major im2col: row `pos` holds the (C_in * k * k) input window that
/// produces output position pos, zero-filled where the window leaves the image.
template <class S>
void im2col(const S* x, int cin, int h, int w, int k, int stride, int pad,
            int oh, int ow, S* col) {
  const int64_t patch = static_cast<int64_t>(cin) * k * k;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      S* row = col + (static_cast<int64_t>(oy) * ow + ox) * patch;
      for (int c = 0; c < cin; ++c) {
        const S* plane = x + static_cast<int64_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          S* dst = row + (static_cast<int64_t>(c) * k + ky) * k;
          if (iy < 0 || iy >= h) {
            for (int kx = 0; kx < k; ++kx) dst[kx] = S(0);
            continue;
          }
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            dst[kx] = (ix < 0 || ix >= w) ? S(0) : plane[static_cast<int64_t>(iy) * w + ix];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

/// 2-D cross-correlation of x (N x C_in x H x W) with weight
/// (C_out x C_in x k x k) and per-channel bias, zero padding.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 int stride = 1, int pad = 0) {
  detail::check_rank4(x.shape(), "conv2d", "input");
  detail::check_rank4(weight.shape(), "conv2d", "weight");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw DimensionError("conv2d: input channel axis mismatch: input has C=" +
                         std::to_string(cin) + ", weight expects C_in=" +
                         std::to_string(weight.dim(1)));
  if (weight.dim(3) != k)
    throw DimensionError("conv2d: weight kernel must be square, got " +
                         shape_str(weight.shape()));
  if (k % 2 == 0 || k <= 0)
    throw GeometryError("conv2d: kernel size must be odd and positive, got k=" +
                        std::to_string(k));
  if (bias.rank() != 1 || bias.dim(0) != cout)
    throw DimensionError("conv2d: bias axis mismatch: expected [" +
                         std::to_string(cout) + "], got " + shape_str(bias.shape()));
  if (stride <= 0 || pad < 0)
    throw GeometryError("conv2d: stride must be positive and padding non-negative");
  const int numer_h = h + 2 * pad - k, numer_w = w + 2 * pad - k;
  if (numer_h < 0 || numer_w < 0 || numer_h % stride != 0 || numer_w % stride != 0)
    throw GeometryError("conv2d: geometry (H=" + std::to_string(h) + ", W=" +
                        std::to_string(w) + ", k=" + std::to_string(k) +
                        ", stride=" + std::to_string(stride) + ", pad=" +
                        std::to_string(pad) + ") has no integer output size");
  const int oh = numer_h / stride + 1, ow = numer_w / stride + 1;

  const int64_t patch = static_cast<int64_t>(cin) * k * k;
  const int64_t opix = static_cast<int64_t>(oh) * ow;
  Tensor<S> y({n, cout, oh, ow});
  std::vector<S> col(static_cast<size_t>(opix * patch));
  const S* xv = x.data();
  const S* wv = weight.data();
  const S* bv = bias.data();
  S* yv = y.data();
  for (int b = 0; b < n; ++b) {
    detail::im2col(xv + static_cast<int64_t>(b) * cin * h * w, cin, h, w, k,
                   stride, pad, oh, ow, col.data());
    S* yb = yv + static_cast<int64_t>(b) * cout * opix;
    for (int64_t pos = 0; pos < opix; ++pos) {
      const S* row = col.data() + pos * patch;
      for (int co = 0; co < cout; ++co)
        yb[static_cast<int64_t>(co) * opix + pos] =
            bv[co] + detail::dot_k(wv + static_cast<int64_t>(co) * patch, row, patch);
    }
  }

  if (Tape<S>* tp = tape_of(x, weight, bias)) {
    auto xs = x.storage();
    auto ws = weight.storage();
    const int xn = x.node(), wn = weight.node(), bn = bias.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      std::vector<S> colb(static_cast<size_t>(opix * patch));
      std::vector<S> gcol(static_cast<size_t>(patch));
      for (int b = 0; b < n; ++b) {
        const S* gb = g.data() + static_cast<int64_t>(b) * cout * opix;
        detail::im2col(xs->data() + static_cast<int64_t>(b) * cin * h * w, cin, h,
                       w, k, stride, pad, oh, ow, colb.data());
        t.accum(bn, [&](S* gbias) {
          for (int co = 0; co < cout; ++co) {
            S s = S(0);
            const S* gr = gb + static_cast<int64_t>(co) * opix;
            for (int64_t pos = 0; pos < opix; ++pos) s += gr[pos];
            gbias[co] += s;
          }
        });
        t.accum(wn, [&](S* gw) {
          for (int64_t pos = 0; pos < opix; ++pos) {
            const S* row = colb.data() + pos * patch;
            for (int co = 0; co < cout; ++co)
              detail::axpy_k(gw + static_cast<int64_t>(co) * patch,
                             gb[static_cast<int64_t>(co) * opix + pos], row, patch);
          }
        });
        t.accum(xn, [&](S* gx) {
          S* gxb = gx + static_cast<int64_t>(b) * cin * h * w;
          for (int64_t pos = 0; pos < opix; ++pos) {
            std::fill(gcol.begin(), gcol.end(), S(0));
            for (int co = 0; co < cout; ++co)
              detail::axpy_k(gcol.data(), gb[static_cast<int64_t>(co) * opix + pos],
                             ws->data() + static_cast<int64_t>(co) * patch, patch);
            // col2im scatter for this output position
            const int oy = static_cast<int>(pos) / ow, ox = static_cast<int>(pos) % ow;
            for (int c = 0; c < cin; ++c) {
              for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= w) continue;
                  gxb[(static_cast<int64_t>(c) * h + iy) * w + ix] +=
                      gcol[(static_cast<int64_t>(c) * k + ky) * k + kx];
                }
              }
            }
          }
        });
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Fully connected

/// y = x * W^T + b for x: N x F, weight: O x F, bias: O.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1)
    throw DimensionError("linear: expected x rank 2, weight rank 2, bias rank 1");
  const int n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f)
    throw DimensionError("linear: feature axis mismatch: x has F=" + std::to_string(f) +
                         ", weight expects F=" + std::to_string(weight.dim(1)));
  if (bias.dim(0) != o)
    throw DimensionError("linear: bias axis mismatch: expected [" + std::to_string(o) +
                         "], got " + shape_str(bias.shape()));
  Tensor<S> y({n, o});
  const S* xv = x.data();
  const S* wv = weight.data();
  const S* bv = bias.data();
  S* yv = y.data();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < o; ++j)
      yv[static_cast<int64_t>(i) * o + j] =
          bv[j] + detail::dot_k(xv + static_cast<int64_t>(i) * f,
                                wv + static_cast<int64_t>(j) * f, f);

  if (Tape<S>* tp = tape_of(x, weight, bias)) {
    auto xs = x.storage();
    auto ws = weight.storage();
    const int xn = x.node(), wn = weight.node(), bn = bias.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(bn, [&](S* gb) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < o; ++j) gb[j] += g[static_cast<size_t>(i) * o + j];
      });
      t.accum(wn, [&](S* gw) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < o; ++j)
            detail::axpy_k(gw + static_cast<int64_t>(j) * f,
                           g[static_cast<size_t>(i) * o + j],
                           xs->data() + static_cast<int64_t>(i) * f, f);
      });
      t.accum(xn, [&](S* gx) {
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < o; ++j)
            detail::axpy_k(gx + static_cast<int64_t>(i) * f,
                           g[static_cast<size_t>(i) * o + j],
                           ws->data() + static_cast<int64_t>(j) * f, f);
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Activations

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) yv[i] = xv[i] > S(0) ? xv[i] : S(0);
  if (Tape<S>* tp = tape_of(x)) {
    auto xs = x.storage();
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        const S* in = xs->data();
        for (int64_t i = 0; i < m; ++i)
          if (in[i] > S(0)) gx[i] += g[i];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) {
    const S v = xv[i];
    yv[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                      : std::exp(v) / (S(1) + std::exp(v));
  }
  if (Tape<S>* tp = tape_of(x)) {
    auto ys = y.storage();
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        const S* out = ys->data();
        for (int64_t i = 0; i < m; ++i) gx[i] += g[i] * out[i] * (S(1) - out[i]);
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Element-wise binary ops with singleton-axis broadcast

enum class BinOp { add, sub, mul, div, pow };

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size())
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a) +
                         " vs " + shape_str(b));
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || a[i] == 1 || b[i] == 1)
      out[i] = std::max(a[i], b[i]);
    else
      throw DimensionError(std::string(op) + ": axis " + std::to_string(i) +
                           " not broadcastable: " + shape_str(a) + " vs " +
                           shape_str(b));
  }
  return out;
}

/// Row-major strides with 0 on broadcast (size-1) axes.
inline std::vector<int64_t> bcast_strides(const Shape& s, const Shape& out) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = (s[static_cast<size_t>(i)] == 1 && out[static_cast<size_t>(i)] != 1) ? 0 : acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

/// Odometer walk over `out`, calling fn(out_index, a_offset, b_offset).
template <class Fn>
void for_each_bcast(const Shape& out, const std::vector<int64_t>& as,
                    const std::vector<int64_t>& bs, Fn&& fn) {
  const int r = static_cast<int>(out.size());
  const int64_t total = numel(out);
  std::vector<int> ctr(static_cast<size_t>(r), 0);
  int64_t ao = 0, bo = 0;
  for (int64_t o = 0; o < total; ++o) {
    fn(o, ao, bo);
    for (int ax = r - 1; ax >= 0; --ax) {
      ++ctr[static_cast<size_t>(ax)];
      ao += as[static_cast<size_t>(ax)];
      bo += bs[static_cast<size_t>(ax)];
      if (ctr[static_cast<size_t>(ax)] < out[static_cast<size_t>(ax)]) break;
      ctr[static_cast<size_t>(ax)] = 0;
      ao -= as[static_cast<size_t>(ax)] * out[static_cast<size_t>(ax)];
      bo -= bs[static_cast<size_t>(ax)] * out[static_cast<size_t>(ax)];
    }
  }
}

template <class S>
S apply_bin(BinOp op, S a, S b) {
  switch (op) {
    case BinOp::add: return a + b;
    case BinOp::sub: return a - b;
    case BinOp::mul: return a * b;
    case BinOp::div: return a / b;
    case BinOp::pow: return std::pow(a, b);
  }
  return S(0);
}

}  // namespace detail

template <class S>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, BinOp op) {
  static const char* names[] = {"add", "sub", "mul", "div", "pow"};
  const char* name = names[static_cast<int>(op)];
  const Shape oshape = detail::broadcast_shape(a.shape(), b.shape(), name);
  const auto as = detail::bcast_strides(a.shape(), oshape);
  const auto bs = detail::bcast_strides(b.shape(), oshape);
  Tensor<S> y(oshape);
  const S* av = a.data();
  const S* bv = b.data();
  S* yv = y.data();
  if (a.shape() == b.shape()) {
    const int64_t m = y.size();
    switch (op) {
      case BinOp::add: for (int64_t i = 0; i < m; ++i) yv[i] = av[i] + bv[i]; break;
      case BinOp::sub: for (int64_t i = 0; i < m; ++i) yv[i] = av[i] - bv[i]; break;
      case BinOp::mul: for (int64_t i = 0; i < m; ++i) yv[i] = av[i] * bv[i]; break;
      case BinOp::div: for (int64_t i = 0; i < m; ++i) yv[i] = av[i] / bv[i]; break;
      case BinOp::pow: for (int64_t i = 0; i < m; ++i) yv[i] = std::pow(av[i], bv[i]); break;
    }
  } else {
    detail::for_each_bcast(oshape, as, bs, [&](int64_t o, int64_t ao, int64_t bo) {
      yv[o] = detail::apply_bin(op, av[ao], bv[bo]);
    });
  }

  if (Tape<S>* tp = tape_of(a, b)) {
    auto asr = a.storage();
    auto bsr = b.storage();
    auto ysr = y.storage();
    const int an = a.node(), bn = b.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      const S* avv = asr->data();
      const S* bvv = bsr->data();
      const S* yvv = ysr->data();
      t.accum(an, [&](S* ga) {
        detail::for_each_bcast(oshape, as, bs, [&](int64_t o, int64_t ao, int64_t bo) {
          switch (op) {
            case BinOp::add: case BinOp::sub: ga[ao] += g[static_cast<size_t>(o)]; break;
            case BinOp::mul: ga[ao] += g[static_cast<size_t>(o)] * bvv[bo]; break;
            case BinOp::div: ga[ao] += g[static_cast<size_t>(o)] / bvv[bo]; break;
            case BinOp::pow:
              ga[ao] += g[static_cast<size_t>(o)] * bvv[bo] * std::pow(avv[ao], bvv[bo] - S(1));
              break;
          }
        });
      });
      t.accum(bn, [&](S* gb) {
        detail::for_each_bcast(oshape, as, bs, [&](int64_t o, int64_t ao, int64_t bo) {
          switch (op) {
            case BinOp::add: gb[bo] += g[static_cast<size_t>(o)]; break;
            case BinOp::sub: gb[bo] -= g[static_cast<size_t>(o)]; break;
            case BinOp::mul: gb[bo] += g[static_cast<size_t>(o)] * avv[ao]; break;
            case BinOp::div:
              gb[bo] -= g[static_cast<size_t>(o)] * avv[ao] / (bvv[bo] * bvv[bo]);
              break;
            case BinOp::pow:
              gb[bo] += g[static_cast<size_t>(o)] * yvv[o] * std::log(avv[ao]);
              break;
          }
        });
      });
    });
  }
  return y;
}

template <class S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::add); }
template <class S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::sub); }
template <class S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::mul); }
template <class S> Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::div); }
template <class S> Tensor<S> pow(const Tensor<S>& a, const Tensor<S>& b) { return binary(a, b, BinOp::pow); }

// ---------------------------------------------------------------------------
// Scalar variants

template <class S>
Tensor<S> mul_scalar(const Tensor<S>& x, S c) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) yv[i] = xv[i] * c;
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t i = 0; i < m; ++i) gx[i] += g[i] * c;
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& x, S c) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) yv[i] = xv[i] + c;
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t i = 0; i < m; ++i) gx[i] += g[i];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> pow_scalar(const Tensor<S>& x, S c) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) yv[i] = std::pow(xv[i], c);
  if (Tape<S>* tp = tape_of(x)) {
    auto xs = x.storage();
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        const S* in = xs->data();
        for (int64_t i = 0; i < m; ++i)
          gx[i] += g[i] * c * std::pow(in[i], c - S(1));
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling

template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  detail::check_rank4(x.shape(), "global_avg_pool", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h <= 0 || w <= 0)
    throw DimensionError("global_avg_pool: empty spatial extent " + shape_str(x.shape()));
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor<S> y({n, c, 1, 1});
  const S* xv = x.data();
  S* yv = y.data();
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    S s = S(0);
    const S* base = xv + p * plane;
    for (int64_t i = 0; i < plane; ++i) s += base[i];
    yv[p] = s / static_cast<S>(plane);
  }
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
          const S gv = g[static_cast<size_t>(p)] / static_cast<S>(plane);
          S* base = gx + p * plane;
          for (int64_t i = 0; i < plane; ++i) base[i] += gv;
        }
      });
    });
  }
  return y;
}

/// Adaptive average pooling to out_h x out_w; cell (i, j) is the mean of the
/// contiguous bin [floor(i*H/oh), ceil((i+1)*H/oh)) x [floor(j*W/ow), ...).
template <class S>
Tensor<S> adaptive_avg_pool(const Tensor<S>& x, int out_h, int out_w) {
  detail::check_rank4(x.shape(), "adaptive_avg_pool", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h <= 0 || w <= 0)
    throw DimensionError("adaptive_avg_pool: empty spatial extent " + shape_str(x.shape()));
  if (out_h <= 0 || out_w <= 0 || out_h > h || out_w > w)
    throw DimensionError("adaptive_avg_pool: output " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " invalid for input " +
                         shape_str(x.shape()));
  Tensor<S> y({n, c, out_h, out_w});
  const S* xv = x.data();
  S* yv = y.data();
  auto bin = [](int i, int in, int out) {
    return std::pair<int, int>{(i * in) / out, ((i + 1) * in + out - 1) / out};
  };
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    const S* plane = xv + p * h * w;
    S* out = yv + p * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      auto [y0, y1] = bin(oy, h, out_h);
      for (int ox = 0; ox < out_w; ++ox) {
        auto [x0, x1] = bin(ox, w, out_w);
        S s = S(0);
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) s += plane[static_cast<int64_t>(iy) * w + ix];
        out[static_cast<int64_t>(oy) * out_w + ox] =
            s / static_cast<S>((y1 - y0) * (x1 - x0));
      }
    }
  }
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
          S* plane = gx + p * h * w;
          const S* gout = g.data() + p * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const int y0 = (oy * h) / out_h, y1 = ((oy + 1) * h + out_h - 1) / out_h;
            for (int ox = 0; ox < out_w; ++ox) {
              const int x0 = (ox * w) / out_w, x1 = ((ox + 1) * w + out_w - 1) / out_w;
              const S gv = gout[static_cast<int64_t>(oy) * out_w + ox] /
                           static_cast<S>((y1 - y0) * (x1 - x0));
              for (int iy = y0; iy < y1; ++iy)
                for (int ix = x0; ix < x1; ++ix)
                  plane[static_cast<int64_t>(iy) * w + ix] += gv;
            }
          }
        }
      });
    });
  }
  return y;
}

/// Max over the channel axis: N x C x H x W -> N x 1 x H x W.
template <class S>
Tensor<S> channel_max(const Tensor<S>& x) {
  detail::check_rank4(x.shape(), "channel_max", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h <= 0 || w <= 0 || c <= 0)
    throw DimensionError("channel_max: empty extent " + shape_str(x.shape()));
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor<S> y({n, 1, h, w});
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * plane);
  const S* xv = x.data();
  S* yv = y.data();
  for (int b = 0; b < n; ++b) {
    const S* xb = xv + static_cast<int64_t>(b) * c * plane;
    for (int64_t i = 0; i < plane; ++i) {
      S best = xb[i];
      int bc = 0;
      for (int ch = 1; ch < c; ++ch) {
        const S v = xb[static_cast<int64_t>(ch) * plane + i];
        if (v > best) { best = v; bc = ch; }
      }
      yv[static_cast<int64_t>(b) * plane + i] = best;
      (*argmax)[static_cast<size_t>(b * plane + i)] = bc;
    }
  }
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int b = 0; b < n; ++b)
          for (int64_t i = 0; i < plane; ++i) {
            const int bc = (*argmax)[static_cast<size_t>(b * plane + i)];
            gx[(static_cast<int64_t>(b) * c + bc) * plane + i] +=
                g[static_cast<size_t>(b * plane + i)];
          }
      });
    });
  }
  return y;
}

/// Mean over the channel axis: N x C x H x W -> N x 1 x H x W.
template <class S>
Tensor<S> channel_avg(const Tensor<S>& x) {
  detail::check_rank4(x.shape(), "channel_avg", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h <= 0 || w <= 0 || c <= 0)
    throw DimensionError("channel_avg: empty extent " + shape_str(x.shape()));
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor<S> y({n, 1, h, w});
  const S* xv = x.data();
  S* yv = y.data();
  for (int b = 0; b < n; ++b) {
    const S* xb = xv + static_cast<int64_t>(b) * c * plane;
    for (int64_t i = 0; i < plane; ++i) {
      S s = S(0);
      for (int ch = 0; ch < c; ++ch) s += xb[static_cast<int64_t>(ch) * plane + i];
      yv[static_cast<int64_t>(b) * plane + i] = s / static_cast<S>(c);
    }
  }
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int b = 0; b < n; ++b)
          for (int64_t i = 0; i < plane; ++i) {
            const S gv = g[static_cast<size_t>(b * plane + i)] / static_cast<S>(c);
            for (int ch = 0; ch < c; ++ch)
              gx[(static_cast<int64_t>(b) * c + ch) * plane + i] += gv;
          }
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Structure ops

template <class S>
Tensor<S> reshape(const Tensor<S>& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " +
                         shape_str(new_shape) + " changes element count");
  Tensor<S> y(std::move(new_shape),
              std::vector<S>(x.values().begin(), x.values().end()));
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    const int64_t m = x.size();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t i = 0; i < m; ++i) gx[i] += g[i];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_rank4(a.shape(), "concat_channels", "a");
  detail::check_rank4(b.shape(), "concat_channels", "b");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw DimensionError("concat_channels: non-channel axes differ: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  Tensor<S> y({n, ca + cb, h, w});
  const S* av = a.data();
  const S* bv = b.data();
  S* yv = y.data();
  for (int i = 0; i < n; ++i) {
    std::copy(av + static_cast<int64_t>(i) * ca * plane,
              av + static_cast<int64_t>(i + 1) * ca * plane,
              yv + static_cast<int64_t>(i) * (ca + cb) * plane);
    std::copy(bv + static_cast<int64_t>(i) * cb * plane,
              bv + static_cast<int64_t>(i + 1) * cb * plane,
              yv + static_cast<int64_t>(i) * (ca + cb) * plane + ca * plane);
  }
  if (Tape<S>* tp = tape_of(a, b)) {
    const int an = a.node(), bn = b.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(an, [&](S* ga) {
        for (int i = 0; i < n; ++i)
          for (int64_t j = 0; j < ca * plane; ++j)
            ga[static_cast<int64_t>(i) * ca * plane + j] +=
                g[static_cast<size_t>(static_cast<int64_t>(i) * (ca + cb) * plane + j)];
      });
      t.accum(bn, [&](S* gb) {
        for (int i = 0; i < n; ++i)
          for (int64_t j = 0; j < cb * plane; ++j)
            gb[static_cast<int64_t>(i) * cb * plane + j] +=
                g[static_cast<size_t>(static_cast<int64_t>(i) * (ca + cb) * plane +
                                      ca * plane + j)];
      });
    });
  }
  return y;
}

/// Forward identity whose output is detached from the tape: nothing upstream
/// of the argument receives gradient through it.
template <class S>
Tensor<S> stop_gradient(const Tensor<S>& x) {
  return x.detached();
}

/// Keep the top-left out_h x out_w window of each plane. Used to make spatial
/// extents odd ahead of stride-2 convolutions, whose exact-division geometry
/// has no solution for odd kernels on even extents.
template <class S>
Tensor<S> crop2d(const Tensor<S>& x, int out_h, int out_w) {
  detail::check_rank4(x.shape(), "crop2d", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h <= 0 || out_w <= 0 || out_h > h || out_w > w)
    throw DimensionError("crop2d: window " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " invalid for input " +
                         shape_str(x.shape()));
  Tensor<S> y({n, c, out_h, out_w});
  const S* xv = x.data();
  S* yv = y.data();
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p)
    for (int yy = 0; yy < out_h; ++yy)
      std::copy(xv + (p * h + yy) * w, xv + (p * h + yy) * w + out_w,
                yv + (p * out_h + yy) * out_w);
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p)
          for (int yy = 0; yy < out_h; ++yy)
            for (int xx = 0; xx < out_w; ++xx)
              gx[(p * h + yy) * w + xx] +=
                  g[static_cast<size_t>((p * out_h + yy) * out_w + xx)];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) yv[i] = std::min(std::max(xv[i], lo), hi);
  if (Tape<S>* tp = tape_of(x)) {
    auto xs = x.storage();
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        const S* in = xs->data();
        for (int64_t i = 0; i < m; ++i)
          if (in[i] > lo && in[i] < hi) gx[i] += g[i];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> abs(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  const int64_t m = x.size();
  for (int64_t i = 0; i < m; ++i) yv[i] = std::fabs(xv[i]);
  if (Tape<S>* tp = tape_of(x)) {
    auto xs = x.storage();
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        const S* in = xs->data();
        for (int64_t i = 0; i < m; ++i) {
          if (in[i] > S(0)) gx[i] += g[i];
          else if (in[i] < S(0)) gx[i] -= g[i];
        }
      });
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  const S* xv = x.data();
  const int64_t m = x.size();
  S lanes[8] = {S(0), S(0), S(0), S(0), S(0), S(0), S(0), S(0)};
  int64_t i = 0;
  for (; i + 8 <= m; i += 8)
    for (int j = 0; j < 8; ++j) lanes[j] += xv[i + j];
  S tail = S(0);
  for (; i < m; ++i) tail += xv[i];
  Tensor<S> y = Tensor<S>::scalar(((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
                                  ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail);
  if (Tape<S>* tp = tape_of(x)) {
    const int xn = x.node();
    tp->record(y, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        for (int64_t j = 0; j < m; ++j) gx[j] += g[0];
      });
    });
  }
  return y;
}

template <class S>
Tensor<S> mean(const Tensor<S>& x) {
  if (x.size() == 0) throw DimensionError("mean: empty tensor");
  return mul_scalar(sum(x), S(1) / static_cast<S>(x.size()));
}

/// Mean squared difference, the ||a - b||^2 workhorse of the loss suite
/// (mean over elements so crop size does not rescale the loss weights).
template <class S>
Tensor<S> mean_sq_diff(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("mean_sq_diff: shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  Tensor<S> d = sub(a, b);
  return mean(mul(d, d));
}

// ---------------------------------------------------------------------------
// Total-variation smoothness

/// Mean L1 norm of the forward-difference gradient field: per pixel
/// |L[y+1,x] - L[y,x]| + |L[y,x+1] - L[y,x]|, replicate boundary (so the last
/// row/column contribute zero), averaged over N*C*H*W.
template <class S>
Tensor<S> tv_l1_mean(const Tensor<S>& x) {
  detail::check_rank4(x.shape(), "tv_l1_mean", "input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t plane = static_cast<int64_t>(h) * w;
  const S norm = static_cast<S>(x.size());
  const S* xv = x.data();
  S total = S(0);
  for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
    const S* pl = xv + p * plane;
    for (int y = 0; y < h; ++y)
      for (int xw = 0; xw < w; ++xw) {
        const S v = pl[static_cast<int64_t>(y) * w + xw];
        if (y + 1 < h) total += std::fabs(pl[static_cast<int64_t>(y + 1) * w + xw] - v);
        if (xw + 1 < w) total += std::fabs(pl[static_cast<int64_t>(y) * w + xw + 1] - v);
      }
  }
  Tensor<S> out = Tensor<S>::scalar(total / norm);
  if (Tape<S>* tp = tape_of(x)) {
    auto xs = x.storage();
    const int xn = x.node();
    tp->record(out, [=](Tape<S>& t, std::span<const S> g) {
      t.accum(xn, [&](S* gx) {
        const S* in = xs->data();
        const S gv = g[0] / norm;
        for (int64_t p = 0; p < static_cast<int64_t>(n) * c; ++p) {
          const S* pl = in + p * plane;
          S* gp = gx + p * plane;
          for (int y = 0; y < h; ++y)
            for (int xw = 0; xw < w; ++xw) {
              const int64_t at = static_cast<int64_t>(y) * w + xw;
              if (y + 1 < h) {
                const S d = pl[at + w] - pl[at];
                const S s = d > S(0) ? gv : (d < S(0) ? -gv : S(0));
                gp[at + w] += s;
                gp[at] -= s;
              }
              if (xw + 1 < w) {
                const S d = pl[at + 1] - pl[at];
                const S s = d > S(0) ? gv : (d < S(0) ? -gv : S(0));
                gp[at + 1] += s;
                gp[at] -= s;
              }
            }
        }
      });
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient verification

/// Compares tape gradients of a scalar-valued f against central finite
/// differences at step h. Returns the max over elements of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <class S>
S gradient_check(const std::function<Tensor<S>(const Tensor<S>&)>& f,
                 const Tensor<S>& x0, S h) {
  Tape<S> tape;
  Tensor<S> x(x0.shape(), std::vector<S>(x0.values().begin(), x0.values().end()));
  tape.watch(x);
  Tensor<S> y = f(x);
  if (y.size() != 1)
    throw ContractError("gradient_check: f must be scalar-valued, got " +
                        shape_str(y.shape()));
  // A constant f never lands on the tape; its analytic gradient is zero and
  // the central differences below agree, so the check degenerates to 0.
  std::vector<S> analytic(static_cast<size_t>(x.size()), S(0));
  if (y.requires_grad()) {
    tape.backward(y);
    auto gspan = tape.grad_of(x);
    analytic.assign(gspan.begin(), gspan.end());
  }

  Tensor<S> probe(x0.shape(), std::vector<S>(x0.values().begin(), x0.values().end()));
  S max_rel = S(0);
  for (int64_t i = 0; i < probe.size(); ++i) {
    const S saved = probe.data()[i];
    S fp, fm;
    try {
      probe.data()[i] = saved + h;
      fp = f(probe).value();
      probe.data()[i] = saved - h;
      fm = f(probe).value();
    } catch (const Error& e) {
      throw DomainError("gradient_check: domain violation perturbing element " +
                        std::to_string(i) + ": " + e.what());
    }
    probe.data()[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw DomainError("gradient_check: non-finite value perturbing element " +
                        std::to_string(i));
    const S numeric = (fp - fm) / (S(2) * h);
    const S denom = std::max({std::fabs(analytic[static_cast<size_t>(i)]),
                              std::fabs(numeric), S(1e-8)});
    max_rel = std::max(max_rel, std::fabs(analytic[static_cast<size_t>(i)] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace lumina
