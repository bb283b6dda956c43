#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mb/error.hpp"
#include "mb/io.hpp"
#include "mb/losses.hpp"
#include "mb/rng.hpp"
#include "mb/tensor.hpp"

namespace mb {

// One conv block: conv (pad = kernel/2) followed by ReLU.
struct ConvSpec {
    int out_channels = 0;
    int kernel = 3;
    int stride = 2;
    bool operator==(const ConvSpec&) const = default;
};

// Conv stack, then global average pooling, then one linear head.
struct Arch {
    std::vector<ConvSpec> blocks;
    bool operator==(const Arch&) const = default;
};

inline Arch default_arch() {
    return Arch{{{16, 3, 2}, {32, 3, 2}, {64, 3, 2}}};
}

enum class Role : std::uint8_t { source, aux_opt, aux_sar, target };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::source: return "source";
        case Role::aux_opt: return "aux-opt";
        case Role::aux_sar: return "aux-sar";
        case Role::target: return "target";
    }
    return "?";
}

// Parameter layout: per block W (oc, ic, k, k) then b (oc); head W (M, F) then b (M).
template <class T>
struct Classifier {
    Arch arch;
    int in_channels = 0;
    int num_classes = 0;
    Role role = Role::source;
    std::vector<Tensor<T>> params;

    int feature_dim() const {
        return arch.blocks.empty() ? in_channels : arch.blocks.back().out_channels;
    }
    std::size_t head_weight_index() const { return arch.blocks.size() * 2; }
};

inline std::size_t param_count(const Arch& arch, int in_channels, int num_classes) {
    std::size_t n = 0;
    int ic = in_channels;
    for (const auto& b : arch.blocks) {
        n += static_cast<std::size_t>(b.out_channels) * ic * b.kernel * b.kernel + b.out_channels;
        ic = b.out_channels;
    }
    n += static_cast<std::size_t>(num_classes) * ic + num_classes;
    return n;
}

// Uniform fan-in init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
template <class T = float>
Classifier<T> make_classifier(const Arch& arch, int in_channels, int num_classes, Role role,
                              std::uint64_t seed) {
    if (in_channels < 1 || num_classes < 1) throw InvalidInputError("make_classifier: bad dims");
    Classifier<T> m;
    m.arch = arch;
    m.in_channels = in_channels;
    m.num_classes = num_classes;
    m.role = role;
    Rng rng(seed);
    int ic = in_channels;
    for (const auto& b : arch.blocks) {
        Tensor<T> w({b.out_channels, ic, b.kernel, b.kernel});
        const double bound = 1.0 / std::sqrt(static_cast<double>(ic) * b.kernel * b.kernel);
        for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
        m.params.push_back(std::move(w));
        m.params.emplace_back(std::vector<int>{b.out_channels});
        ic = b.out_channels;
    }
    Tensor<T> hw({num_classes, ic});
    const double bound = 1.0 / std::sqrt(static_cast<double>(ic));
    for (auto& v : hw.data) v = static_cast<T>(rng.uniform(-bound, bound));
    m.params.push_back(std::move(hw));
    m.params.emplace_back(std::vector<int>{num_classes});
    return m;
}

template <class T>
std::uint32_t params_crc(const Classifier<T>& m) {
    std::uint32_t c = 0;
    for (const auto& p : m.params) c = crc32(p.data.data(), p.data.size() * sizeof(T), c);
    return c;
}

namespace detail {

inline int conv_out_dim(int in, int k, int stride) {
    const int pad = k / 2;
    const int out = (in + 2 * pad - k) / stride + 1;
    if (out < 1) throw ShapeError("conv: input smaller than architecture minimum");
    return out;
}

// Output-coordinate range [lo, hi) for which in = out*stride - pad + koff
// stays inside [0, limit).
inline void valid_out_range(int koff, int pad, int stride, int limit, int out_dim, int& lo,
                            int& hi) {
    const int num = pad - koff;
    lo = num <= 0 ? 0 : (num + stride - 1) / stride;
    hi = std::min(out_dim, (limit - 1 + pad - koff) / stride + 1);
    if (hi < lo) hi = lo;
}

// im2col patch matrix for one image: rows = IC*K*K, cols = OH*OW.
template <class T>
void im2col(const T* xch, int IC, int H, int W, int K, int stride, int OH, int OW, T* col) {
    const int pad = K / 2;
    const int P = OH * OW;
    for (int ic = 0; ic < IC; ++ic) {
        const T* xc = xch + static_cast<std::size_t>(ic) * H * W;
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                T* crow = col + (static_cast<std::size_t>(ic) * K * K + ky * K + kx) * P;
                int oy_lo, oy_hi, ox_lo, ox_hi;
                valid_out_range(ky, pad, stride, H, OH, oy_lo, oy_hi);
                valid_out_range(kx, pad, stride, W, OW, ox_lo, ox_hi);
                std::fill(crow, crow + P, T(0));
                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    const T* xrow = xc + static_cast<std::size_t>(iy) * W;
                    T* cr = crow + oy * OW;
                    for (int ox = ox_lo; ox < ox_hi; ++ox) cr[ox] = xrow[ox * stride - pad + kx];
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
template <class T>
void col2im_add(const T* col, int IC, int H, int W, int K, int stride, int OH, int OW, T* dxch) {
    const int pad = K / 2;
    const int P = OH * OW;
    for (int ic = 0; ic < IC; ++ic) {
        T* dxc = dxch + static_cast<std::size_t>(ic) * H * W;
        for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
                const T* crow = col + (static_cast<std::size_t>(ic) * K * K + ky * K + kx) * P;
                int oy_lo, oy_hi, ox_lo, ox_hi;
                valid_out_range(ky, pad, stride, H, OH, oy_lo, oy_hi);
                valid_out_range(kx, pad, stride, W, OW, ox_lo, ox_hi);
                for (int oy = oy_lo; oy < oy_hi; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dxrow = dxc + static_cast<std::size_t>(iy) * W;
                    const T* cr = crow + oy * OW;
                    for (int ox = ox_lo; ox < ox_hi; ++ox) dxrow[ox * stride - pad + kx] += cr[ox];
                }
            }
        }
    }
}

template <class T>
std::vector<T>& conv_scratch() {
    thread_local std::vector<T> buf;
    return buf;
}

template <class T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                    Tensor<T>& y) {
    const int B = x.dim(0), IC = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = w.dim(0), K = w.dim(2);
    const int OH = y.dim(2), OW = y.dim(3);
    const int R = IC * K * K, P = OH * OW;
    auto& col = conv_scratch<T>();
    col.resize(static_cast<std::size_t>(R) * P);
    const T* wp = w.ptr();
    for (int n = 0; n < B; ++n) {
        im2col(x.ptr() + static_cast<std::size_t>(n) * IC * H * W, IC, H, W, K, stride, OH, OW,
               col.data());
        T* ych = y.ptr() + static_cast<std::size_t>(n) * OC * P;
        for (int oc = 0; oc < OC; ++oc) {
            T* yrow = ych + static_cast<std::size_t>(oc) * P;
            const T bv = bias[static_cast<std::size_t>(oc)];
            for (int p = 0; p < P; ++p) yrow[p] = bv;
            const T* wrow = wp + static_cast<std::size_t>(oc) * R;
            for (int r = 0; r < R; ++r) {
                const T wv = wrow[r];
                const T* crow = col.data() + static_cast<std::size_t>(r) * P;
                for (int p = 0; p < P; ++p) yrow[p] += wv * crow[p];
            }
        }
    }
}

// Accumulates dW/db and (optionally) dX. dZ is the gradient at the conv
// output (post-ReLU grad already applied by the caller).
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, int stride, const Tensor<T>& dz,
                     Tensor<T>& dw, Tensor<T>& db, Tensor<T>* dx) {
    const int B = x.dim(0), IC = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int OC = w.dim(0), K = w.dim(2);
    const int OH = dz.dim(2), OW = dz.dim(3);
    const int R = IC * K * K, P = OH * OW;
    auto& col = conv_scratch<T>();
    col.resize(static_cast<std::size_t>(R) * P);
    std::vector<T> dcol;
    if (dx) dcol.resize(static_cast<std::size_t>(R) * P);
    const T* wp = w.ptr();
    for (int n = 0; n < B; ++n) {
        im2col(x.ptr() + static_cast<std::size_t>(n) * IC * H * W, IC, H, W, K, stride, OH, OW,
               col.data());
        const T* dzch = dz.ptr() + static_cast<std::size_t>(n) * OC * P;
        if (dx) std::fill(dcol.begin(), dcol.end(), T(0));
        for (int oc = 0; oc < OC; ++oc) {
            const T* dzrow = dzch + static_cast<std::size_t>(oc) * P;
            T dbsum = 0;
            for (int p = 0; p < P; ++p) dbsum += dzrow[p];
            db[static_cast<std::size_t>(oc)] += dbsum;
            T* dwrow = dw.ptr() + static_cast<std::size_t>(oc) * R;
            const T* wrow = wp + static_cast<std::size_t>(oc) * R;
            for (int r = 0; r < R; ++r) {
                const T* crow = col.data() + static_cast<std::size_t>(r) * P;
                T acc = 0;
                if (dx) {
                    T* dcrow = dcol.data() + static_cast<std::size_t>(r) * P;
                    const T wv = wrow[r];
                    for (int p = 0; p < P; ++p) {
                        acc += dzrow[p] * crow[p];
                        dcrow[p] += wv * dzrow[p];
                    }
                } else {
                    for (int p = 0; p < P; ++p) acc += dzrow[p] * crow[p];
                }
                dwrow[r] += acc;
            }
        }
        if (dx)
            col2im_add(dcol.data(), IC, H, W, K, stride, OH, OW,
                       dx->ptr() + static_cast<std::size_t>(n) * IC * H * W);
    }
}

}  // namespace detail

template <class T>
struct ForwardCache {
    std::vector<Tensor<T>> acts;  // acts[0] = input, acts[i] = block i output (post-ReLU)
    Tensor<T> features;           // (B, F) after global average pooling
    Tensor<T> logits;             // (B, M)
};

template <class T>
void check_input(const Classifier<T>& m, const Tensor<T>& x) {
    if (x.shape.size() != 4) throw ShapeError("forward: expected (B, C, H, W) input");
    if (x.dim(1) != m.in_channels)
        throw ShapeError("forward: channel mismatch, model " + std::string(role_name(m.role)) +
                         " expects " + std::to_string(m.in_channels) + " got " +
                         std::to_string(x.dim(1)));
    if (x.dim(0) < 1) throw ShapeError("forward: empty batch");
}

// Conv stack + GAP. Returns (B, F) features.
template <class T>
Tensor<T> forward_features(const Classifier<T>& m, const Tensor<T>& x,
                           std::vector<Tensor<T>>* acts_out = nullptr) {
    check_input(m, x);
    Tensor<T> cur = x;
    if (acts_out) acts_out->push_back(cur);
    for (std::size_t i = 0; i < m.arch.blocks.size(); ++i) {
        const auto& spec = m.arch.blocks[i];
        const int OH = detail::conv_out_dim(cur.dim(2), spec.kernel, spec.stride);
        const int OW = detail::conv_out_dim(cur.dim(3), spec.kernel, spec.stride);
        Tensor<T> next({cur.dim(0), spec.out_channels, OH, OW});
        detail::conv2d_forward(cur, m.params[i * 2], m.params[i * 2 + 1], spec.stride, next);
        for (auto& v : next.data) v = v > T(0) ? v : T(0);
        cur = std::move(next);
        if (acts_out) acts_out->push_back(cur);
    }
    const int B = cur.dim(0), C = cur.dim(1), H = cur.dim(2), W = cur.dim(3);
    Tensor<T> feats({B, C});
    const T inv = T(1) / static_cast<T>(H * W);
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const T* p = cur.ptr() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            T s = 0;
            for (int i = 0; i < H * W; ++i) s += p[i];
            feats[static_cast<std::size_t>(n) * C + c] = s * inv;
        }
    return feats;
}

template <class T>
Tensor<T> head_forward(const Classifier<T>& m, const Tensor<T>& feats) {
    const int B = feats.dim(0), F = feats.dim(1), M = m.num_classes;
    const auto& w = m.params[m.head_weight_index()];
    const auto& b = m.params[m.head_weight_index() + 1];
    Tensor<T> logits({B, M});
    for (int n = 0; n < B; ++n)
        for (int k = 0; k < M; ++k) {
            T s = b[static_cast<std::size_t>(k)];
            const T* wk = w.ptr() + static_cast<std::size_t>(k) * F;
            const T* f = feats.ptr() + static_cast<std::size_t>(n) * F;
            for (int c = 0; c < F; ++c) s += wk[c] * f[c];
            logits[static_cast<std::size_t>(n) * M + k] = s;
        }
    return logits;
}

// Plain inference: deterministic, no stored activations.
template <class T>
Tensor<T> forward(const Classifier<T>& m, const Tensor<T>& x) {
    return head_forward(m, forward_features(m, x));
}

template <class T>
ForwardCache<T> forward_cached(const Classifier<T>& m, const Tensor<T>& x) {
    ForwardCache<T> cache;
    cache.features = forward_features(m, x, &cache.acts);
    cache.logits = head_forward(m, cache.features);
    return cache;
}

template <class T>
std::vector<Tensor<T>> make_grads(const Classifier<T>& m) {
    std::vector<Tensor<T>> g;
    g.reserve(m.params.size());
    for (const auto& p : m.params) g.emplace_back(p.shape);
    return g;
}

// Head gradients plus d(features); the stack backward consumes the latter.
template <class T>
Tensor<T> head_backward(const Classifier<T>& m, const Tensor<T>& feats, const Tensor<T>& dlogits,
                        std::vector<Tensor<T>>& grads) {
    const int B = feats.dim(0), F = feats.dim(1), M = m.num_classes;
    auto& dw = grads[m.head_weight_index()];
    auto& db = grads[m.head_weight_index() + 1];
    const auto& w = m.params[m.head_weight_index()];
    Tensor<T> dfeats({B, F});
    for (int n = 0; n < B; ++n) {
        const T* dl = dlogits.ptr() + static_cast<std::size_t>(n) * M;
        const T* f = feats.ptr() + static_cast<std::size_t>(n) * F;
        T* df = dfeats.ptr() + static_cast<std::size_t>(n) * F;
        for (int k = 0; k < M; ++k) {
            const T g = dl[k];
            db[static_cast<std::size_t>(k)] += g;
            T* dwk = dw.ptr() + static_cast<std::size_t>(k) * F;
            const T* wk = w.ptr() + static_cast<std::size_t>(k) * F;
            for (int c = 0; c < F; ++c) {
                dwk[c] += g * f[c];
                df[c] += g * wk[c];
            }
        }
    }
    return dfeats;
}

// Backward through GAP and the conv stack, starting from d(features).
template <class T>
void stack_backward(const Classifier<T>& m, const std::vector<Tensor<T>>& acts,
                    const Tensor<T>& dfeats, std::vector<Tensor<T>>& grads,
                    Tensor<T>* dinput = nullptr) {
    const auto& last = acts.back();
    const int B = last.dim(0), C = last.dim(1), H = last.dim(2), W = last.dim(3);
    Tensor<T> da(last.shape);
    const T inv = T(1) / static_cast<T>(H * W);
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const T g = dfeats[static_cast<std::size_t>(n) * C + c] * inv;
            T* p = da.ptr() + ((static_cast<std::size_t>(n) * C + c) * H) * W;
            for (int i = 0; i < H * W; ++i) p[i] = g;
        }
    for (int i = static_cast<int>(m.arch.blocks.size()) - 1; i >= 0; --i) {
        const auto& spec = m.arch.blocks[static_cast<std::size_t>(i)];
        const auto& out = acts[static_cast<std::size_t>(i) + 1];
        const auto& in = acts[static_cast<std::size_t>(i)];
        // ReLU grad: out > 0 iff pre-activation > 0.
        for (std::size_t j = 0; j < da.numel(); ++j)
            if (out[j] <= T(0)) da[j] = T(0);
        const bool need_dx = i > 0 || dinput != nullptr;
        Tensor<T> dprev;
        if (need_dx) dprev = Tensor<T>(in.shape);
        detail::conv2d_backward(in, m.params[static_cast<std::size_t>(i) * 2], spec.stride, da,
                                grads[static_cast<std::size_t>(i) * 2],
                                grads[static_cast<std::size_t>(i) * 2 + 1],
                                need_dx ? &dprev : nullptr);
        if (i == 0) {
            if (dinput) *dinput = std::move(dprev);
        } else {
            da = std::move(dprev);
        }
    }
}

// Full backward from d(logits). grads are accumulated in place.
template <class T>
void backward(const Classifier<T>& m, const ForwardCache<T>& cache, const Tensor<T>& dlogits,
              std::vector<Tensor<T>>& grads, bool head_only = false, Tensor<T>* dinput = nullptr) {
    Tensor<T> dfeats = head_backward(m, cache.features, dlogits, grads);
    if (!head_only) stack_backward(m, cache.acts, dfeats, grads, dinput);
}

}  // namespace mb
