#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "avic/parallel.hpp"
#include "avic/tensor.hpp"

namespace avic {

// ---------------------------------------------------------------------------
// dense kernels
// ---------------------------------------------------------------------------

// Dot product with eight independent lanes; the combine order is fixed, so
// results are bit-stable while the lane loop still vectorizes.
template <typename T>
T dot_lanes(const T* a, const T* b, int64_t n) {
    constexpr int L = 8;
    T acc[L] = {};
    int64_t i = 0;
    for (; i + L <= n; i += L)
        for (int j = 0; j < L; ++j) acc[j] += a[i + j] * b[i + j];
    T tail = T(0);
    for (; i < n; ++i) tail += a[i] * b[i];
    T s = T(0);
    for (int j = 0; j < L; ++j) s += acc[j];
    return s + tail;
}

// C[M,N] = A[M,K] * B[K,N]
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int64_t M, int64_t K, int64_t N) {
    for (int64_t m = 0; m < M; ++m) {
        T* crow = C + m * N;
        std::fill(crow, crow + N, T(0));
        for (int64_t k = 0; k < K; ++k) {
            T a = A[m * K + k];
            const T* brow = B + k * N;
            for (int64_t n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

// C[M,N] = A^T * B with A[P,M], B[P,N]
template <typename T>
void gemm_at_b(const T* A, const T* B, T* C, int64_t P, int64_t M, int64_t N) {
    std::fill(C, C + M * N, T(0));
    for (int64_t p = 0; p < P; ++p) {
        const T* arow = A + p * M;
        const T* brow = B + p * N;
        for (int64_t m = 0; m < M; ++m) {
            T a = arow[m];
            T* crow = C + m * N;
            for (int64_t n = 0; n < N; ++n) crow[n] += a * brow[n];
        }
    }
}

// C[M,N] += A * B^T with A[M,P], B[N,P], restricted to rows [m0,m1)
template <typename T>
void gemm_abt_acc_rows(const T* A, const T* B, T* C, int64_t P, int64_t N, int64_t m0, int64_t m1) {
    for (int64_t m = m0; m < m1; ++m)
        for (int64_t n = 0; n < N; ++n)
            C[m * N + n] += dot_lanes(A + m * P, B + n * P, P);
}

// ---------------------------------------------------------------------------
// conv geometry and kernels
//
// Geometry is expressed from the correlation side: `big` is the spatially
// larger tensor (conv input / deconv output), `small` the other one.
// ---------------------------------------------------------------------------

struct ConvGeom {
    int N;                  // batch
    int C;                  // big-side channels
    int H, W;               // big-side spatial dims
    int O;                  // small-side channels
    int OH, OW;             // small-side spatial dims
    int KH, KW, stride, pad;
    int64_t col_rows() const { return int64_t(C) * KH * KW; }
    int64_t col_cols() const { return int64_t(OH) * OW; }
};

inline ConvGeom conv_geom(const Shape& x, const Shape& w, int stride, int pad, const char* op) {
    if (x.size() != 4) throw ShapeError(std::string(op) + ": input must be rank 4, got " + shape_str(x));
    if (w.size() != 4) throw ShapeError(std::string(op) + ": kernel must be rank 4, got " + shape_str(w));
    if (stride < 1) throw ShapeError(std::string(op) + ": stride must be positive");
    if (pad < 0) throw ShapeError(std::string(op) + ": padding must be non-negative");
    ConvGeom g;
    g.N = x[0];
    g.C = x[1];
    g.H = x[2];
    g.W = x[3];
    g.O = w[0];
    g.KH = w[2];
    g.KW = w[3];
    g.stride = stride;
    g.pad = pad;
    if (w[1] != g.C)
        throw ShapeError(std::string(op) + ": channel mismatch, input " + shape_str(x) + " vs kernel " +
                         shape_str(w));
    int nh = g.H + 2 * pad - g.KH;
    int nw = g.W + 2 * pad - g.KW;
    if (nh < 0 || nw < 0 || nh % stride != 0 || nw % stride != 0)
        throw ShapeError(std::string(op) + ": non-integral output size for input " + shape_str(x) +
                         ", kernel " + shape_str(w) + ", stride " + std::to_string(stride) + ", pad " +
                         std::to_string(pad));
    g.OH = nh / stride + 1;
    g.OW = nw / stride + 1;
    return g;
}

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* col) {
    const int64_t cols = g.col_cols();
    for (int c = 0; c < g.C; ++c)
        for (int kh = 0; kh < g.KH; ++kh)
            for (int kw = 0; kw < g.KW; ++kw) {
                T* crow = col + ((int64_t(c) * g.KH + kh) * g.KW + kw) * cols;
                for (int oh = 0; oh < g.OH; ++oh) {
                    int h = oh * g.stride - g.pad + kh;
                    T* dst = crow + int64_t(oh) * g.OW;
                    if (h < 0 || h >= g.H) {
                        std::fill(dst, dst + g.OW, T(0));
                        continue;
                    }
                    const T* src = img + (int64_t(c) * g.H + h) * g.W;
                    for (int ow = 0; ow < g.OW; ++ow) {
                        int w = ow * g.stride - g.pad + kw;
                        dst[ow] = (w < 0 || w >= g.W) ? T(0) : src[w];
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* img) {
    const int64_t cols = g.col_cols();
    for (int c = 0; c < g.C; ++c)
        for (int kh = 0; kh < g.KH; ++kh)
            for (int kw = 0; kw < g.KW; ++kw) {
                const T* crow = col + ((int64_t(c) * g.KH + kh) * g.KW + kw) * cols;
                for (int oh = 0; oh < g.OH; ++oh) {
                    int h = oh * g.stride - g.pad + kh;
                    if (h < 0 || h >= g.H) continue;
                    T* dst = img + (int64_t(c) * g.H + h) * g.W;
                    const T* src = crow + int64_t(oh) * g.OW;
                    for (int ow = 0; ow < g.OW; ++ow) {
                        int w = ow * g.stride - g.pad + kw;
                        if (w >= 0 && w < g.W) dst[w] += src[ow];
                    }
                }
            }
}

// y_small[n] = w * im2col(x_big[n]) (+ bias per small channel)
template <typename T>
void k_conv_fwd(const T* x, const T* w, const T* bias, T* y, const ConvGeom& g) {
    const int64_t ckk = g.col_rows(), hw = g.col_cols();
    const int64_t xsz = int64_t(g.C) * g.H * g.W, ysz = int64_t(g.O) * hw;
    parallel_for(0, g.N, [&](int64_t n0, int64_t n1) {
        std::vector<T> col(ckk * hw);
        for (int64_t n = n0; n < n1; ++n) {
            im2col(x + n * xsz, g, col.data());
            T* yn = y + n * ysz;
            gemm_nn(w, col.data(), yn, g.O, ckk, hw);
            if (bias)
                for (int o = 0; o < g.O; ++o) {
                    T b = bias[o];
                    T* row = yn + int64_t(o) * hw;
                    for (int64_t i = 0; i < hw; ++i) row[i] += b;
                }
        }
    });
}

// gx_big[n] += col2im(w^T * gy_small[n])
template <typename T>
void k_conv_bwd_data(const T* gy, const T* w, T* gx, const ConvGeom& g) {
    const int64_t ckk = g.col_rows(), hw = g.col_cols();
    const int64_t xsz = int64_t(g.C) * g.H * g.W, ysz = int64_t(g.O) * hw;
    parallel_for(0, g.N, [&](int64_t n0, int64_t n1) {
        std::vector<T> col(ckk * hw);
        for (int64_t n = n0; n < n1; ++n) {
            gemm_at_b(w, gy + n * ysz, col.data(), g.O, ckk, hw);
            col2im_add(col.data(), g, gx + n * xsz);
        }
    });
}

// gw[O,CKK] += sum_n gy_small[n] * im2col(x_big[n])^T; each output row owns
// its full batch sum, so the result is independent of the thread count.
template <typename T>
void k_conv_bwd_weight(const T* x, const T* gy, T* gw, const ConvGeom& g) {
    const int64_t ckk = g.col_rows(), hw = g.col_cols();
    const int64_t xsz = int64_t(g.C) * g.H * g.W, ysz = int64_t(g.O) * hw;
    parallel_for(0, g.O, [&](int64_t o0, int64_t o1) {
        std::vector<T> col(ckk * hw);
        for (int64_t n = 0; n < g.N; ++n) {
            im2col(x + n * xsz, g, col.data());
            gemm_abt_acc_rows(gy + n * ysz, col.data(), gw, hw, ckk, o0, o1);
        }
    });
}

template <typename T>
void k_bias_grad(const T* gy, T* gb, int N, int O, int64_t hw) {
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) {
            const T* row = gy + (int64_t(n) * O + o) * hw;
            T s = T(0);
            for (int64_t i = 0; i < hw; ++i) s += row[i];
            gb[o] += s;
        }
}

// ---------------------------------------------------------------------------
// elementwise primitives
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
TensorRef unary_op(Tape<T>& t, TensorRef a, const char* op, FwdFn f, BwdFn dfdx) {
    const auto& av = t.value(a);
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    int aid = a.id;
    return t.make(t.shape(a), std::move(out), t.requires_grad(a), op,
                  [aid, dfdx](Tape<T>& tp, const std::vector<T>& g) {
                      const auto& x = tp.value(TensorRef{aid});
                      auto& gx = tp.grad_buffer(aid, x.size());
                      for (size_t i = 0; i < x.size(); ++i) gx[i] += dfdx(x[i]) * g[i];
                  });
}

}  // namespace detail

template <typename T>
TensorRef add(Tape<T>& t, TensorRef a, TensorRef b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.shape(a) != t.shape(b))
        throw ShapeError("add: shape mismatch " + shape_str(t.shape(a)) + " vs " + shape_str(t.shape(b)));
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    int aid = a.id, bid = b.id;
    bool ag = t.requires_grad(a), bg = t.requires_grad(b);
    return t.make(t.shape(a), std::move(out), ag || bg, "add",
                  [aid, bid, ag, bg](Tape<T>& tp, const std::vector<T>& g) {
                      if (ag) tp.accumulate_grad(aid, g.data(), g.size());
                      if (bg) tp.accumulate_grad(bid, g.data(), g.size());
                  });
}

template <typename T>
TensorRef sub(Tape<T>& t, TensorRef a, TensorRef b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.shape(a) != t.shape(b))
        throw ShapeError("sub: shape mismatch " + shape_str(t.shape(a)) + " vs " + shape_str(t.shape(b)));
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    int aid = a.id, bid = b.id;
    bool ag = t.requires_grad(a), bg = t.requires_grad(b);
    return t.make(t.shape(a), std::move(out), ag || bg, "sub",
                  [aid, bid, ag, bg](Tape<T>& tp, const std::vector<T>& g) {
                      if (ag) tp.accumulate_grad(aid, g.data(), g.size());
                      if (bg) {
                          auto& gb = tp.grad_buffer(bid, g.size());
                          for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                      }
                  });
}

template <typename T>
TensorRef mul(Tape<T>& t, TensorRef a, TensorRef b) {
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.shape(a) != t.shape(b))
        throw ShapeError("mul: shape mismatch " + shape_str(t.shape(a)) + " vs " + shape_str(t.shape(b)));
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    int aid = a.id, bid = b.id;
    bool ag = t.requires_grad(a), bg = t.requires_grad(b);
    return t.make(t.shape(a), std::move(out), ag || bg, "mul",
                  [aid, bid, ag, bg](Tape<T>& tp, const std::vector<T>& g) {
                      const auto& x = tp.value(TensorRef{aid});
                      const auto& y = tp.value(TensorRef{bid});
                      if (ag) {
                          auto& gx = tp.grad_buffer(aid, x.size());
                          for (size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * g[i];
                      }
                      if (bg) {
                          auto& gy = tp.grad_buffer(bid, y.size());
                          for (size_t i = 0; i < g.size(); ++i) gy[i] += x[i] * g[i];
                      }
                  });
}

template <typename T>
TensorRef scale(Tape<T>& t, TensorRef a, T c) {
    const auto& av = t.value(a);
    std::vector<T> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = c * av[i];
    int aid = a.id;
    return t.make(t.shape(a), std::move(out), t.requires_grad(a), "scale",
                  [aid, c](Tape<T>& tp, const std::vector<T>& g) {
                      auto& gx = tp.grad_buffer(aid, g.size());
                      for (size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
                  });
}

template <typename T>
TensorRef neg(Tape<T>& t, TensorRef a) {
    return scale(t, a, T(-1));
}

template <typename T>
TensorRef relu(Tape<T>& t, TensorRef a) {
    // relu'(0) = 0
    return detail::unary_op(
        t, a, "relu", [](T x) { return x > T(0) ? x : T(0); }, [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorRef sigmoid(Tape<T>& t, TensorRef a) {
    return detail::unary_op(
        t, a, "sigmoid", [](T x) { return T(1) / (T(1) + std::exp(-x)); },
        [](T x) {
            T y = T(1) / (T(1) + std::exp(-x));
            return y * (T(1) - y);
        });
}

template <typename T>
TensorRef tanh_op(Tape<T>& t, TensorRef a) {
    return detail::unary_op(
        t, a, "tanh", [](T x) { return std::tanh(x); },
        [](T x) {
            T y = std::tanh(x);
            return T(1) - y * y;
        });
}

template <typename T>
TensorRef exp_op(Tape<T>& t, TensorRef a) {
    return detail::unary_op(
        t, a, "exp", [](T x) { return std::exp(x); }, [](T x) { return std::exp(x); });
}

template <typename T>
TensorRef clamp_op(Tape<T>& t, TensorRef a, T lo, T hi) {
    // subgradient: 1 strictly inside (lo,hi), 0 elsewhere
    return detail::unary_op(
        t, a, "clamp", [lo, hi](T x) { return std::min(hi, std::max(lo, x)); },
        [lo, hi](T x) { return (x > lo && x < hi) ? T(1) : T(0); });
}

template <typename T>
TensorRef reshape(Tape<T>& t, TensorRef a, Shape s) {
    if (numel(s) != numel(t.shape(a)))
        throw ShapeError("reshape: cannot view " + shape_str(t.shape(a)) + " as " + shape_str(s));
    int aid = a.id;
    std::vector<T> out = t.value(a);
    return t.make(std::move(s), std::move(out), t.requires_grad(a), "reshape",
                  [aid](Tape<T>& tp, const std::vector<T>& g) {
                      tp.accumulate_grad(aid, g.data(), g.size());
                  });
}

// ---------------------------------------------------------------------------
// linear layers
// ---------------------------------------------------------------------------

template <typename T>
TensorRef dense(Tape<T>& t, TensorRef x, TensorRef w, TensorRef b) {
    const Shape& xs = t.shape(x);
    const Shape& ws = t.shape(w);
    const Shape& bs = t.shape(b);
    if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0])
        throw ShapeError("dense: shape mismatch " + shape_str(xs) + " x " + shape_str(ws));
    if (bs.size() != 1 || bs[0] != ws[1])
        throw ShapeError("dense: bias shape " + shape_str(bs) + " does not match " + shape_str(ws));
    const int64_t N = xs[0], D = xs[1], K = ws[1];
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    const auto& bv = t.value(b);
    std::vector<T> out(size_t(N * K));
    parallel_for(0, N, [&](int64_t n0, int64_t n1) {
        for (int64_t n = n0; n < n1; ++n) {
            T* row = out.data() + n * K;
            std::copy(bv.begin(), bv.end(), row);
            for (int64_t d = 0; d < D; ++d) {
                T a = xv[n * D + d];
                const T* wrow = wv.data() + d * K;
                for (int64_t k = 0; k < K; ++k) row[k] += a * wrow[k];
            }
        }
    }, 8);
    int xid = x.id, wid = w.id, bid = b.id;
    bool xg = t.requires_grad(x), wg = t.requires_grad(w), bg = t.requires_grad(b);
    return t.make({int(N), int(K)}, std::move(out), xg || wg || bg, "dense",
                  [xid, wid, bid, xg, wg, bg, N, D, K](Tape<T>& tp, const std::vector<T>& g) {
                      const auto& xv = tp.value(TensorRef{xid});
                      const auto& wv = tp.value(TensorRef{wid});
                      if (xg) {
                          auto& gx = tp.grad_buffer(xid, size_t(N * D));
                          parallel_for(0, N, [&](int64_t n0, int64_t n1) {
                              for (int64_t n = n0; n < n1; ++n)
                                  for (int64_t d = 0; d < D; ++d)
                                      gx[n * D + d] +=
                                          dot_lanes(g.data() + n * K, wv.data() + d * K, K);
                          }, 8);
                      }
                      if (wg) {
                          auto& gw = tp.grad_buffer(wid, size_t(D * K));
                          for (int64_t n = 0; n < N; ++n)
                              for (int64_t d = 0; d < D; ++d) {
                                  T a = xv[n * D + d];
                                  const T* grow = g.data() + n * K;
                                  T* wrow = gw.data() + d * K;
                                  for (int64_t k = 0; k < K; ++k) wrow[k] += a * grow[k];
                              }
                      }
                      if (bg) {
                          auto& gb = tp.grad_buffer(bid, size_t(K));
                          for (int64_t n = 0; n < N; ++n)
                              for (int64_t k = 0; k < K; ++k) gb[k] += g[n * K + k];
                      }
                  });
}

template <typename T>
TensorRef conv2d(Tape<T>& t, TensorRef x, TensorRef w, TensorRef bias, int stride, int pad) {
    ConvGeom g = conv_geom(t.shape(x), t.shape(w), stride, pad, "conv2d");
    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    const T* bptr = nullptr;
    if (bias.valid()) {
        if (t.shape(bias) != Shape{g.O})
            throw ShapeError("conv2d: bias shape " + shape_str(t.shape(bias)) + " != [" +
                             std::to_string(g.O) + "]");
        bptr = t.value(bias).data();
    }
    std::vector<T> out(size_t(g.N) * g.O * g.OH * g.OW);
    k_conv_fwd(xv.data(), wv.data(), bptr, out.data(), g);
    int xid = x.id, wid = w.id, bid = bias.valid() ? bias.id : -1;
    bool xg = t.requires_grad(x), wg = t.requires_grad(w);
    bool bg = bias.valid() && t.requires_grad(bias);
    return t.make({g.N, g.O, g.OH, g.OW}, std::move(out), xg || wg || bg, "conv2d",
                  [xid, wid, bid, xg, wg, bg, g](Tape<T>& tp, const std::vector<T>& gr) {
                      const auto& xv = tp.value(TensorRef{xid});
                      const auto& wv = tp.value(TensorRef{wid});
                      if (xg) {
                          auto& gx = tp.grad_buffer(xid, xv.size());
                          k_conv_bwd_data(gr.data(), wv.data(), gx.data(), g);
                      }
                      if (wg) {
                          auto& gw = tp.grad_buffer(wid, wv.size());
                          k_conv_bwd_weight(xv.data(), gr.data(), gw.data(), g);
                      }
                      if (bg) {
                          auto& gb = tp.grad_buffer(bid, size_t(g.O));
                          k_bias_grad(gr.data(), gb.data(), g.N, g.O, g.col_cols());
                      }
                  });
}

// kernel layout [C_in, C_out, KH, KW]; output H = (H-1)*stride - 2*pad + KH
template <typename T>
TensorRef conv2d_transpose(Tape<T>& t, TensorRef x, TensorRef w, TensorRef bias, int stride, int pad) {
    const Shape& xs = t.shape(x);
    const Shape& ws = t.shape(w);
    if (xs.size() != 4 || ws.size() != 4 || ws[0] != xs[1])
        throw ShapeError("conv2d_transpose: shape mismatch " + shape_str(xs) + " vs kernel " +
                         shape_str(ws));
    const int N = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    const int Cout = ws[1], KH = ws[2], KW = ws[3];
    const int OH = (H - 1) * stride - 2 * pad + KH;
    const int OW = (W - 1) * stride - 2 * pad + KW;
    if (OH <= 0 || OW <= 0)
        throw ShapeError("conv2d_transpose: non-positive output size");
    // correlation view: deconv output is the big side, deconv input the small
    ConvGeom g;
    g.N = N;
    g.C = Cout;
    g.H = OH;
    g.W = OW;
    g.O = Cin;
    g.OH = H;
    g.OW = W;
    g.KH = KH;
    g.KW = KW;
    g.stride = stride;
    g.pad = pad;

    const auto& xv = t.value(x);
    const auto& wv = t.value(w);
    std::vector<T> out(size_t(N) * Cout * OH * OW, T(0));
    k_conv_bwd_data(xv.data(), wv.data(), out.data(), g);
    if (bias.valid()) {
        if (t.shape(bias) != Shape{Cout})
            throw ShapeError("conv2d_transpose: bias shape " + shape_str(t.shape(bias)) + " != [" +
                             std::to_string(Cout) + "]");
        const auto& bv = t.value(bias);
        const int64_t hw = int64_t(OH) * OW;
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < Cout; ++c) {
                T b = bv[c];
                T* row = out.data() + (int64_t(n) * Cout + c) * hw;
                for (int64_t i = 0; i < hw; ++i) row[i] += b;
            }
    }
    int xid = x.id, wid = w.id, bid = bias.valid() ? bias.id : -1;
    bool xg = t.requires_grad(x), wg = t.requires_grad(w);
    bool bg = bias.valid() && t.requires_grad(bias);
    return t.make({N, Cout, OH, OW}, std::move(out), xg || wg || bg, "conv2d_transpose",
                  [xid, wid, bid, xg, wg, bg, g](Tape<T>& tp, const std::vector<T>& gr) {
                      const auto& xv = tp.value(TensorRef{xid});
                      const auto& wv = tp.value(TensorRef{wid});
                      if (xg) {
                          auto& gx = tp.grad_buffer(xid, xv.size());
                          k_conv_fwd(gr.data(), wv.data(), static_cast<const T*>(nullptr), gx.data(), g);
                      }
                      if (wg) {
                          auto& gw = tp.grad_buffer(wid, wv.size());
                          k_conv_bwd_weight(gr.data(), xv.data(), gw.data(), g);
                      }
                      if (bg) {
                          auto& gb = tp.grad_buffer(bid, size_t(g.C));
                          const int64_t hw = int64_t(g.H) * g.W;
                          for (int n = 0; n < g.N; ++n)
                              for (int c = 0; c < g.C; ++c) {
                                  const T* row = gr.data() + (int64_t(n) * g.C + c) * hw;
                                  T s = T(0);
                                  for (int64_t i = 0; i < hw; ++i) s += row[i];
                                  gb[c] += s;
                              }
                      }
                  });
}

// gx accumulation for conv2d_transpose reuses k_conv_fwd without bias; the
// overload above needs the null pointer typed explicitly.

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

// 2x2 window, stride 2, trailing odd row/col dropped; ties keep the first
// element in scan order.
template <typename T>
TensorRef maxpool2(Tape<T>& t, TensorRef x) {
    const Shape& xs = t.shape(x);
    if (xs.size() != 4) throw ShapeError("maxpool2: input must be rank 4, got " + shape_str(xs));
    const int N = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int OH = H / 2, OW = W / 2;
    if (OH == 0 || OW == 0) throw ShapeError("maxpool2: input too small " + shape_str(xs));
    const auto& xv = t.value(x);
    std::vector<T> out(size_t(N) * C * OH * OW);
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        T* dst = out.data() + nc * OH * OW;
        int64_t* am = argmax->data() + nc * OH * OW;
        for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
                int64_t base = int64_t(2 * oh) * W + 2 * ow;
                int64_t best = base;
                T bv = src[base];
                const int64_t cand[3] = {base + 1, base + W, base + W + 1};
                for (int64_t idx : cand)
                    if (src[idx] > bv) {
                        bv = src[idx];
                        best = idx;
                    }
                dst[int64_t(oh) * OW + ow] = bv;
                am[int64_t(oh) * OW + ow] = nc * H * W + best;
            }
    }
    int xid = x.id;
    return t.make({N, C, OH, OW}, std::move(out), t.requires_grad(x), "maxpool2",
                  [xid, argmax](Tape<T>& tp, const std::vector<T>& g) {
                      auto& gx = tp.grad_buffer(xid, tp.value(TensorRef{xid}).size());
                      for (size_t i = 0; i < g.size(); ++i) gx[size_t((*argmax)[i])] += g[i];
                  });
}

template <typename T>
TensorRef global_avg_pool(Tape<T>& t, TensorRef x) {
    const Shape& xs = t.shape(x);
    if (xs.size() != 4) throw ShapeError("global_avg_pool: input must be rank 4, got " + shape_str(xs));
    const int N = xs[0], C = xs[1];
    const int64_t hw = int64_t(xs[2]) * xs[3];
    const auto& xv = t.value(x);
    std::vector<T> out(size_t(N) * C);
    for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        const T* src = xv.data() + nc * hw;
        T s = T(0);
        for (int64_t i = 0; i < hw; ++i) s += src[i];
        out[size_t(nc)] = s / T(hw);
    }
    int xid = x.id;
    return t.make({N, C}, std::move(out), t.requires_grad(x), "global_avg_pool",
                  [xid, hw](Tape<T>& tp, const std::vector<T>& g) {
                      auto& gx = tp.grad_buffer(xid, tp.value(TensorRef{xid}).size());
                      for (size_t i = 0; i < g.size(); ++i) {
                          T gi = g[i] / T(hw);
                          T* dst = gx.data() + int64_t(i) * hw;
                          for (int64_t j = 0; j < hw; ++j) dst[j] += gi;
                      }
                  });
}

// ---------------------------------------------------------------------------
// losses and reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorRef sum_all(Tape<T>& t, TensorRef x) {
    const auto& xv = t.value(x);
    T s = T(0);
    for (T v : xv) s += v;
    int xid = x.id;
    size_t n = xv.size();
    return t.make({1}, {s}, t.requires_grad(x), "sum",
                  [xid, n](Tape<T>& tp, const std::vector<T>& g) {
                      auto& gx = tp.grad_buffer(xid, n);
                      for (size_t i = 0; i < n; ++i) gx[i] += g[0];
                  });
}

// mean over rows of -log softmax(logits)[label], max-stabilized
template <typename T>
TensorRef softmax_cross_entropy(Tape<T>& t, TensorRef logits, const std::vector<int>& labels) {
    const Shape& ls = t.shape(logits);
    if (ls.size() != 2) throw ShapeError("softmax_cross_entropy: logits must be rank 2, got " + shape_str(ls));
    const int64_t N = ls[0], K = ls[1];
    if (N < 1) throw ShapeError("softmax_cross_entropy: empty batch");
    if (static_cast<int64_t>(labels.size()) != N)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(N));
    for (int y : labels)
        if (y < 0 || y >= K)
            throw Error("softmax_cross_entropy: label " + std::to_string(y) + " out of range [0," +
                        std::to_string(K) + ")");
    const auto& lv = t.value(logits);
    T total = T(0);
    for (int64_t n = 0; n < N; ++n) {
        const T* row = lv.data() + n * K;
        T m = row[0];
        for (int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
        T se = T(0);
        for (int64_t k = 0; k < K; ++k) se += std::exp(row[k] - m);
        total += (m + std::log(se)) - row[labels[size_t(n)]];
    }
    int lid = logits.id;
    auto lab = std::make_shared<std::vector<int>>(labels);
    return t.make({1}, {total / T(N)}, t.requires_grad(logits), "softmax_cross_entropy",
                  [lid, lab, N, K](Tape<T>& tp, const std::vector<T>& g) {
                      const auto& lv = tp.value(TensorRef{lid});
                      auto& gl = tp.grad_buffer(lid, lv.size());
                      T s = g[0] / T(N);
                      for (int64_t n = 0; n < N; ++n) {
                          const T* row = lv.data() + n * K;
                          T* grow = gl.data() + n * K;
                          T m = row[0];
                          for (int64_t k = 1; k < K; ++k) m = std::max(m, row[k]);
                          T se = T(0);
                          for (int64_t k = 0; k < K; ++k) se += std::exp(row[k] - m);
                          for (int64_t k = 0; k < K; ++k) grow[k] += s * (std::exp(row[k] - m) / se);
                          grow[(*lab)[size_t(n)]] -= s;
                      }
                  });
}

// mean over the leading (batch) dim of 0.5 * sum of squared differences
template <typename T>
TensorRef half_sse(Tape<T>& t, TensorRef x, TensorRef y) {
    if (t.shape(x) != t.shape(y))
        throw ShapeError("half_sse: shape mismatch " + shape_str(t.shape(x)) + " vs " +
                         shape_str(t.shape(y)));
    const auto& xv = t.value(x);
    const auto& yv = t.value(y);
    const int64_t N = t.shape(x)[0];
    T s = T(0);
    for (size_t i = 0; i < xv.size(); ++i) {
        T d = xv[i] - yv[i];
        s += d * d;
    }
    int xid = x.id, yid = y.id;
    bool xg = t.requires_grad(x), yg = t.requires_grad(y);
    return t.make({1}, {s / (T(2) * T(N))}, xg || yg, "half_sse",
                  [xid, yid, xg, yg, N](Tape<T>& tp, const std::vector<T>& g) {
                      const auto& xv = tp.value(TensorRef{xid});
                      const auto& yv = tp.value(TensorRef{yid});
                      T s = g[0] / T(N);
                      if (xg) {
                          auto& gx = tp.grad_buffer(xid, xv.size());
                          for (size_t i = 0; i < xv.size(); ++i) gx[i] += s * (xv[i] - yv[i]);
                      }
                      if (yg) {
                          auto& gy = tp.grad_buffer(yid, yv.size());
                          for (size_t i = 0; i < yv.size(); ++i) gy[i] -= s * (xv[i] - yv[i]);
                      }
                  });
}

// mean over batch of 0.5 * sum(mu^2 + exp(logvar) - logvar - 1); KL between
// a diagonal Gaussian and the standard normal prior
template <typename T>
TensorRef kl_diag_gaussian(Tape<T>& t, TensorRef mu, TensorRef logvar) {
    if (t.shape(mu) != t.shape(logvar))
        throw ShapeError("kl_diag_gaussian: shape mismatch " + shape_str(t.shape(mu)) + " vs " +
                         shape_str(t.shape(logvar)));
    const auto& mv = t.value(mu);
    const auto& lv = t.value(logvar);
    const int64_t N = t.shape(mu)[0];
    T s = T(0);
    for (size_t i = 0; i < mv.size(); ++i) s += mv[i] * mv[i] + std::exp(lv[i]) - lv[i] - T(1);
    int mid = mu.id, lid = logvar.id;
    bool mg = t.requires_grad(mu), lg = t.requires_grad(logvar);
    return t.make({1}, {s / (T(2) * T(N))}, mg || lg, "kl_diag_gaussian",
                  [mid, lid, mg, lg, N](Tape<T>& tp, const std::vector<T>& g) {
                      const auto& mv = tp.value(TensorRef{mid});
                      const auto& lv = tp.value(TensorRef{lid});
                      T s = g[0] / T(N);
                      if (mg) {
                          auto& gm = tp.grad_buffer(mid, mv.size());
                          for (size_t i = 0; i < mv.size(); ++i) gm[i] += s * mv[i];
                      }
                      if (lg) {
                          auto& gl = tp.grad_buffer(lid, lv.size());
                          for (size_t i = 0; i < lv.size(); ++i)
                              gl[i] += s * (std::exp(lv[i]) - T(1)) / T(2);
                      }
                  });
}

}  // namespace avic
