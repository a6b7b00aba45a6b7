#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "disfas/errors.hpp"
#include "disfas/kernels.hpp"
#include "disfas/rng.hpp"
#include "disfas/tensor.hpp"

// Layer primitives with hand-written backward passes. Forward passes write
// everything the backward needs into caller-owned Cache objects, so layers
// hold no mutable state and concurrent forwards on disjoint batches are safe.

namespace disfas::nn {

enum class ParamGroup {
    stem,
    enc_liveness,
    enc_content,
    enc_domain,
    w_live,
    cls_domain,
    dec_content,
};

inline const char* group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::stem: return "stem";
        case ParamGroup::enc_liveness: return "enc_liveness";
        case ParamGroup::enc_content: return "enc_content";
        case ParamGroup::enc_domain: return "enc_domain";
        case ParamGroup::w_live: return "w_live";
        case ParamGroup::cls_domain: return "cls_domain";
        case ParamGroup::dec_content: return "dec_content";
    }
    return "?";
}

template <typename T>
struct Param {
    std::string name;
    ParamGroup group = ParamGroup::stem;
    bool decay = true;
    Tensor<T> value;
    Tensor<T> grad;

    void setup(std::string n, ParamGroup g, std::vector<int64_t> shape, bool apply_decay) {
        name = std::move(n);
        group = g;
        decay = apply_decay;
        value = Tensor<T>(shape);
        grad = Tensor<T>(std::move(shape));
    }
};

// -- im2col / col2im ---------------------------------------------------------

inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// x: [ch, h, w] -> cols: [ch*k*k, oh*ow]
template <typename T>
void im2col(const T* x, int ch, int h, int w, int k, int stride, int pad, T* cols) {
    const int oh = conv_out_size(h, k, stride, pad);
    const int ow = conv_out_size(w, k, stride, pad);
    T* out = cols;
    for (int c = 0; c < ch; ++c) {
        const T* plane = x + static_cast<int64_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        for (int ox = 0; ox < ow; ++ox) *out++ = T(0);
                        continue;
                    }
                    const T* row = plane + static_cast<int64_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        *out++ = (ix >= 0 && ix < w) ? row[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add cols back into x (caller zeroes x first).
template <typename T>
void col2im(const T* cols, int ch, int h, int w, int k, int stride, int pad, T* x) {
    const int oh = conv_out_size(h, k, stride, pad);
    const int ow = conv_out_size(w, k, stride, pad);
    const T* in = cols;
    for (int c = 0; c < ch; ++c) {
        T* plane = x + static_cast<int64_t>(c) * h * w;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) {
                        in += ow;
                        continue;
                    }
                    T* row = plane + static_cast<int64_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) row[ix] += *in;
                        ++in;
                    }
                }
            }
        }
    }
}

// -- convolution -------------------------------------------------------------

template <typename T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    Param<T> w;  // [out_ch, in_ch*k*k]
    Param<T> b;  // [out_ch]

    struct Cache {
        Tensor<T> cols;  // [B, in_ch*k*k, oh*ow]
        int in_h = 0, in_w = 0;
    };

    void configure(const std::string& prefix, ParamGroup g, int in, int out, int k, int s, int p) {
        in_ch = in;
        out_ch = out;
        ksize = k;
        stride = s;
        pad = p;
        w.setup(prefix + ".w", g, {out, static_cast<int64_t>(in) * k * k}, true);
        b.setup(prefix + ".b", g, {out}, false);
    }

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize));
        for (int64_t i = 0; i < w.value.size(); ++i) w.value[i] = static_cast<T>(rng.normal(0.0, std));
        b.value.zero();
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
        check_contract(x.rank() == 4 && x.dim(1) == in_ch, "conv2d: input shape mismatch " + x.shape_str());
        const int bsz = static_cast<int>(x.dim(0));
        const int h = static_cast<int>(x.dim(2));
        const int wd = static_cast<int>(x.dim(3));
        const int oh = conv_out_size(h, ksize, stride, pad);
        const int ow = conv_out_size(wd, ksize, stride, pad);
        check_contract(oh > 0 && ow > 0, "conv2d: input smaller than kernel");
        const int kk = in_ch * ksize * ksize;

        Tensor<T> y({bsz, out_ch, oh, ow});
        cache->cols = Tensor<T>({bsz, kk, static_cast<int64_t>(oh) * ow});
        cache->in_h = h;
        cache->in_w = wd;
        for (int n = 0; n < bsz; ++n) {
            T* cols = cache->cols.data() + static_cast<int64_t>(n) * kk * oh * ow;
            im2col(x.data() + static_cast<int64_t>(n) * in_ch * h * wd, in_ch, h, wd, ksize, stride,
                   pad, cols);
            T* yn = y.data() + static_cast<int64_t>(n) * out_ch * oh * ow;
            kernels::gemm(false, false, out_ch, oh * ow, kk, T(1), w.value.data(), kk, cols,
                          oh * ow, T(0), yn, oh * ow);
            for (int c = 0; c < out_ch; ++c) {
                const T bias = b.value[c];
                T* plane = yn + static_cast<int64_t>(c) * oh * ow;
                for (int i = 0; i < oh * ow; ++i) plane[i] += bias;
            }
        }
        return y;
    }

    // Returns gx; accumulates into w.grad/b.grad when param_grads is set.
    Tensor<T> backward(const Cache& cache, const Tensor<T>& gy, bool param_grads) {
        const int bsz = static_cast<int>(gy.dim(0));
        const int oh = static_cast<int>(gy.dim(2));
        const int ow = static_cast<int>(gy.dim(3));
        const int kk = in_ch * ksize * ksize;
        Tensor<T> gx({bsz, in_ch, cache.in_h, cache.in_w});
        Tensor<T> gcols({kk, static_cast<int64_t>(oh) * ow});
        for (int n = 0; n < bsz; ++n) {
            const T* gyn = gy.data() + static_cast<int64_t>(n) * out_ch * oh * ow;
            if (param_grads) {
                const T* cols = cache.cols.data() + static_cast<int64_t>(n) * kk * oh * ow;
                kernels::gemm(false, true, out_ch, kk, oh * ow, T(1), gyn, oh * ow, cols, oh * ow,
                              T(1), w.grad.data(), kk);
                for (int c = 0; c < out_ch; ++c) {
                    b.grad[c] += static_cast<T>(
                        kernels::sum(static_cast<int64_t>(oh) * ow, gyn + static_cast<int64_t>(c) * oh * ow));
                }
            }
            kernels::gemm(true, false, kk, oh * ow, out_ch, T(1), w.value.data(), kk, gyn, oh * ow,
                          T(0), gcols.data(), oh * ow);
            col2im(gcols.data(), in_ch, cache.in_h, cache.in_w, ksize, stride, pad,
                   gx.data() + static_cast<int64_t>(n) * in_ch * cache.in_h * cache.in_w);
        }
        return gx;
    }
};

// Transposed convolution, stored as the adjoint conv's weights
// w: [in_ch, out_ch*k*k]; maps [B,in,H,W] -> [B,out,stride*H,...] for k=2*pad+stride.
template <typename T>
struct TConv2d {
    int in_ch = 0, out_ch = 0, ksize = 4, stride = 2, pad = 1;
    Param<T> w;
    Param<T> b;

    struct Cache {
        Tensor<T> x;
    };

    void configure(const std::string& prefix, ParamGroup g, int in, int out) {
        in_ch = in;
        out_ch = out;
        w.setup(prefix + ".w", g, {in, static_cast<int64_t>(out) * ksize * ksize}, true);
        b.setup(prefix + ".b", g, {out}, false);
    }

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / (static_cast<double>(in_ch) * ksize * ksize));
        for (int64_t i = 0; i < w.value.size(); ++i) w.value[i] = static_cast<T>(rng.normal(0.0, std));
        b.value.zero();
    }

    int out_size(int in) const { return (in - 1) * stride + ksize - 2 * pad; }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
        check_contract(x.rank() == 4 && x.dim(1) == in_ch, "tconv2d: input shape mismatch " + x.shape_str());
        const int bsz = static_cast<int>(x.dim(0));
        const int h = static_cast<int>(x.dim(2));
        const int wd = static_cast<int>(x.dim(3));
        const int oh = out_size(h);
        const int ow = out_size(wd);
        const int kk = out_ch * ksize * ksize;
        cache->x = x;

        Tensor<T> y({bsz, out_ch, oh, ow});
        Tensor<T> cols({kk, static_cast<int64_t>(h) * wd});
        for (int n = 0; n < bsz; ++n) {
            const T* xn = x.data() + static_cast<int64_t>(n) * in_ch * h * wd;
            kernels::gemm(true, false, kk, h * wd, in_ch, T(1), w.value.data(), kk, xn, h * wd,
                          T(0), cols.data(), h * wd);
            T* yn = y.data() + static_cast<int64_t>(n) * out_ch * oh * ow;
            col2im(cols.data(), out_ch, oh, ow, ksize, stride, pad, yn);
            for (int c = 0; c < out_ch; ++c) {
                const T bias = b.value[c];
                T* plane = yn + static_cast<int64_t>(c) * oh * ow;
                for (int i = 0; i < oh * ow; ++i) plane[i] += bias;
            }
        }
        return y;
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& gy, bool param_grads) {
        const int bsz = static_cast<int>(gy.dim(0));
        const int oh = static_cast<int>(gy.dim(2));
        const int ow = static_cast<int>(gy.dim(3));
        const int h = static_cast<int>(cache.x.dim(2));
        const int wd = static_cast<int>(cache.x.dim(3));
        const int kk = out_ch * ksize * ksize;
        Tensor<T> gx({bsz, in_ch, h, wd});
        Tensor<T> cols({kk, static_cast<int64_t>(h) * wd});
        for (int n = 0; n < bsz; ++n) {
            const T* gyn = gy.data() + static_cast<int64_t>(n) * out_ch * oh * ow;
            im2col(gyn, out_ch, oh, ow, ksize, stride, pad, cols.data());
            kernels::gemm(false, false, in_ch, h * wd, kk, T(1), w.value.data(), kk, cols.data(),
                          h * wd, T(0), gx.data() + static_cast<int64_t>(n) * in_ch * h * wd, h * wd);
            if (param_grads) {
                const T* xn = cache.x.data() + static_cast<int64_t>(n) * in_ch * h * wd;
                kernels::gemm(false, true, in_ch, kk, h * wd, T(1), xn, h * wd, cols.data(), h * wd,
                              T(1), w.grad.data(), kk);
                for (int c = 0; c < out_ch; ++c) {
                    b.grad[c] += static_cast<T>(
                        kernels::sum(static_cast<int64_t>(oh) * ow, gyn + static_cast<int64_t>(c) * oh * ow));
                }
            }
        }
        return gx;
    }
};

// -- linear ------------------------------------------------------------------

template <typename T>
struct Linear {
    int in_dim = 0, out_dim = 0;
    Param<T> w;  // [out, in]
    Param<T> b;  // [out]

    struct Cache {
        Tensor<T> x;
    };

    void configure(const std::string& prefix, ParamGroup g, int in, int out) {
        in_dim = in;
        out_dim = out;
        w.setup(prefix + ".w", g, {out, in}, true);
        b.setup(prefix + ".b", g, {out}, false);
    }

    void init(Rng& rng) {
        const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
        for (int64_t i = 0; i < w.value.size(); ++i) w.value[i] = static_cast<T>(rng.normal(0.0, std));
        b.value.zero();
    }

    Tensor<T> forward(const Tensor<T>& x, Cache* cache) const {
        check_contract(x.rank() == 2 && x.dim(1) == in_dim, "linear: input shape mismatch " + x.shape_str());
        const int bsz = static_cast<int>(x.dim(0));
        if (cache) cache->x = x;
        Tensor<T> y({bsz, out_dim});
        kernels::gemm(false, true, bsz, out_dim, in_dim, T(1), x.data(), in_dim, w.value.data(),
                      in_dim, T(0), y.data(), out_dim);
        for (int i = 0; i < bsz; ++i) {
            for (int j = 0; j < out_dim; ++j) y.at(i, j) += b.value[j];
        }
        return y;
    }

    Tensor<T> backward(const Cache& cache, const Tensor<T>& gy, bool param_grads) {
        const int bsz = static_cast<int>(gy.dim(0));
        if (param_grads) {
            kernels::gemm(true, false, out_dim, in_dim, bsz, T(1), gy.data(), out_dim,
                          cache.x.data(), in_dim, T(1), w.grad.data(), in_dim);
            for (int i = 0; i < bsz; ++i) {
                for (int j = 0; j < out_dim; ++j) b.grad[j] += gy.at(i, j);
            }
        }
        Tensor<T> gx({bsz, in_dim});
        kernels::gemm(false, false, bsz, in_dim, out_dim, T(1), gy.data(), out_dim, w.value.data(),
                      in_dim, T(0), gx.data(), in_dim);
        return gx;
    }
};

// -- activations and reshapes -------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    kernels::relu(x.size(), x.data(), y.data());
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gy) {
    Tensor<T> gx(x.shape());
    kernels::relu_backward(x.size(), x.data(), gy.data(), gx.data());
    return gx;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    Tensor<T> y(x.shape());
    kernels::leaky_relu(x.size(), x.data(), y.data(), slope);
    return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& gy, T slope) {
    Tensor<T> gx(x.shape());
    kernels::leaky_relu_backward(x.size(), x.data(), gy.data(), gx.data(), slope);
    return gx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy) {
    Tensor<T> gx(y.shape());
    for (int64_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * y[i] * (T(1) - y[i]);
    return gx;
}

// [B,C,H,W] -> [B,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const int64_t bsz = x.dim(0), ch = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> y({bsz, ch});
    const T* px = x.data();
    for (int64_t i = 0; i < bsz * ch; ++i, px += plane) {
        y[i] = static_cast<T>(kernels::sum(plane, px) / static_cast<double>(plane));
    }
    return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& gy, int h, int w) {
    const int64_t bsz = gy.dim(0), ch = gy.dim(1);
    Tensor<T> gx({bsz, ch, h, w});
    const T inv = T(1) / static_cast<T>(h * w);
    T* pg = gx.data();
    for (int64_t i = 0; i < bsz * ch; ++i) {
        const T v = gy[i] * inv;
        for (int64_t j = 0; j < static_cast<int64_t>(h) * w; ++j) *pg++ = v;
    }
    return gx;
}

// Row-wise softmax of scale*logits.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits, T scale = T(1)) {
    const int64_t bsz = logits.dim(0), k = logits.dim(1);
    Tensor<T> p(logits.shape());
    for (int64_t i = 0; i < bsz; ++i) {
        T mx = scale * logits.at(i, 0);
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, scale * logits.at(i, j));
        T denom = T(0);
        for (int64_t j = 0; j < k; ++j) {
            const T e = std::exp(scale * logits.at(i, j) - mx);
            p.at(i, j) = e;
            denom += e;
        }
        for (int64_t j = 0; j < k; ++j) p.at(i, j) /= denom;
    }
    return p;
}

// Gradient through softmax_rows: given dL/dp, produce dL/dlogits.
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& p, const Tensor<T>& gp, T scale = T(1)) {
    const int64_t bsz = p.dim(0), k = p.dim(1);
    Tensor<T> gl(p.shape());
    for (int64_t i = 0; i < bsz; ++i) {
        T inner = T(0);
        for (int64_t j = 0; j < k; ++j) inner += gp.at(i, j) * p.at(i, j);
        for (int64_t j = 0; j < k; ++j) gl.at(i, j) = scale * p.at(i, j) * (gp.at(i, j) - inner);
    }
    return gl;
}

// Row-wise L2 normalization. Throws on degenerate rows: a ~zero feature or
// prototype means dead parameters, which should surface, not be patched over.
template <typename T>
std::pair<Tensor<T>, std::vector<T>> l2_normalize_rows(const Tensor<T>& x, const char* what) {
    const int64_t bsz = x.dim(0), k = x.dim(1);
    Tensor<T> y(x.shape());
    std::vector<T> norms(static_cast<size_t>(bsz));
    for (int64_t i = 0; i < bsz; ++i) {
        const double n2 = kernels::sumsq(k, x.data() + i * k);
        const double n = std::sqrt(n2);
        if (!(n >= 1e-12)) {
            throw NumericsError(std::string("degenerate zero-norm ") + what + " at row " +
                                std::to_string(i));
        }
        norms[static_cast<size_t>(i)] = static_cast<T>(n);
        const T inv = static_cast<T>(1.0 / n);
        for (int64_t j = 0; j < k; ++j) y.at(i, j) = x.at(i, j) * inv;
    }
    return {std::move(y), std::move(norms)};
}

// Gradient through row normalization: gx = (gy - (gy.y) y) / norm.
template <typename T>
Tensor<T> l2_normalize_rows_backward(const Tensor<T>& y, const std::vector<T>& norms,
                                     const Tensor<T>& gy) {
    const int64_t bsz = y.dim(0), k = y.dim(1);
    Tensor<T> gx(y.shape());
    for (int64_t i = 0; i < bsz; ++i) {
        T inner = T(0);
        for (int64_t j = 0; j < k; ++j) inner += gy.at(i, j) * y.at(i, j);
        const T inv = T(1) / norms[static_cast<size_t>(i)];
        for (int64_t j = 0; j < k; ++j) gx.at(i, j) = (gy.at(i, j) - inner * y.at(i, j)) * inv;
    }
    return gx;
}

}  // namespace disfas::nn
