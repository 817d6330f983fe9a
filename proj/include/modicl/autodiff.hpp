#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <vector>

#include "modicl/tensor.hpp"

namespace modicl {

/// Reverse-mode tape. Ops executed eagerly append one backward closure each,
/// so creation order is a valid topological order and backward() visits every
/// node exactly once in reverse.
template <typename T>
class Tape {
public:
    bool recording() const noexcept { return recording_; }
    void set_recording(bool on) noexcept { recording_ = on; }

    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

    size_t size() const noexcept { return nodes_.size(); }
    void clear() noexcept { nodes_.clear(); }

    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1) {
            throw std::invalid_argument("Tape::backward: loss must be a scalar tensor");
        }
        if (!loss.requires_grad()) {
            throw std::invalid_argument("Tape::backward: loss was not produced through this tape");
        }
        loss.grad()[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
    bool recording_ = true;
};

namespace ops {

namespace detail {

template <typename T>
inline bool track(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
    if (!tape.recording()) return false;
    for (const Tensor<T>* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace detail

/// y[..., N] = x[..., K] * w[K, N]
template <typename T>
Tensor<T> matmul(Tape<T>& tape, Tensor<T> x, Tensor<T> w) {
    detail::require(w.ndim() == 2, "matmul: weight must be 2-D, got " + shape_str(w.shape()));
    detail::require(x.ndim() >= 1 && x.dim(x.ndim() - 1) == w.dim(0),
                    "matmul: inner dims differ " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const int64_t K = w.dim(0), N = w.dim(1);
    const int64_t M = x.numel() / K;
    Shape out_shape = x.shape();
    out_shape.back() = N;
    Tensor<T> y(out_shape);
    kernels::mm_nn_acc(x.data(), w.data(), y.data(), M, K, N);
    check_finite(y, "matmul");
    if (detail::track(tape, {&x, &w})) {
        y.set_requires_grad(true);
        tape.record([x, w, y, M, K, N]() mutable {
            const T* dy = y.grad();
            if (x.requires_grad()) kernels::mm_nt_acc(dy, w.data(), x.grad(), M, N, K);
            if (w.requires_grad()) kernels::mm_tn_acc(x.data(), dy, w.grad(), M, K, N);
        });
    }
    return y;
}

/// y[..., N] = x[..., K] * w[N, K]^T  (linear layer with [out, in]-style weights,
/// also the tied readout against the embedding table)
template <typename T>
Tensor<T> matmul_nt(Tape<T>& tape, Tensor<T> x, Tensor<T> w) {
    detail::require(w.ndim() == 2, "matmul_nt: weight must be 2-D");
    detail::require(x.ndim() >= 1 && x.dim(x.ndim() - 1) == w.dim(1),
                    "matmul_nt: inner dims differ " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const int64_t N = w.dim(0), K = w.dim(1);
    const int64_t M = x.numel() / K;
    Shape out_shape = x.shape();
    out_shape.back() = N;
    Tensor<T> y(out_shape);
    kernels::mm_nt_acc(x.data(), w.data(), y.data(), M, K, N);
    check_finite(y, "matmul_nt");
    if (detail::track(tape, {&x, &w})) {
        y.set_requires_grad(true);
        tape.record([x, w, y, M, K, N]() mutable {
            const T* dy = y.grad();
            if (x.requires_grad()) kernels::mm_nn_acc(dy, w.data(), x.grad(), M, N, K);
            if (w.requires_grad()) kernels::mm_tn_acc(dy, x.data(), w.grad(), M, N, K);
        });
    }
    return y;
}

/// y[G,M,N] = a[G,M,K] * b[G,N,K]^T per batch entry
template <typename T>
Tensor<T> bmm_nt(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
    detail::require(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2),
                    "bmm_nt: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t G = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
    Tensor<T> y(Shape{G, M, N});
    {
        const T* pa = a.data();
        const T* pb = b.data();
        T* py = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t g = 0; g < G; ++g) {
            kernels::mm_nt_acc(pa + g * M * K, pb + g * N * K, py + g * M * N, M, K, N, false);
        }
    }
    check_finite(y, "bmm_nt");
    if (detail::track(tape, {&a, &b})) {
        y.set_requires_grad(true);
        tape.record([a, b, y, G, M, K, N]() mutable {
            const T* dy = y.grad();
#pragma omp parallel for schedule(static)
            for (int64_t g = 0; g < G; ++g) {
                if (a.requires_grad()) {
                    kernels::mm_nn_acc(dy + g * M * N, b.data() + g * N * K,
                                       a.grad() + g * M * K, M, N, K, false);
                }
                if (b.requires_grad()) {
                    kernels::mm_tn_acc(dy + g * M * N, a.data() + g * M * K,
                                       b.grad() + g * N * K, M, N, K, false);
                }
            }
        });
    }
    return y;
}

/// y[G,M,N] = a[G,M,K] * b[G,K,N] per batch entry
template <typename T>
Tensor<T> bmm_nn(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
    detail::require(a.ndim() == 3 && b.ndim() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
                    "bmm_nn: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t G = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
    Tensor<T> y(Shape{G, M, N});
    {
        const T* pa = a.data();
        const T* pb = b.data();
        T* py = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t g = 0; g < G; ++g) {
            kernels::mm_nn_acc(pa + g * M * K, pb + g * K * N, py + g * M * N, M, K, N, false);
        }
    }
    check_finite(y, "bmm_nn");
    if (detail::track(tape, {&a, &b})) {
        y.set_requires_grad(true);
        tape.record([a, b, y, G, M, K, N]() mutable {
            const T* dy = y.grad();
#pragma omp parallel for schedule(static)
            for (int64_t g = 0; g < G; ++g) {
                if (a.requires_grad()) {
                    kernels::mm_nt_acc(dy + g * M * N, b.data() + g * K * N,
                                       a.grad() + g * M * K, M, N, K, false);
                }
                if (b.requires_grad()) {
                    kernels::mm_tn_acc(a.data() + g * M * K, dy + g * M * N,
                                       b.grad() + g * K * N, M, K, N, false);
                }
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> add(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
    detail::require(a.shape() == b.shape(),
                    "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> y(a.shape());
    const int64_t n = y.numel();
    const T* pa = a.data();
    const T* pb = b.data();
    T* py = y.data();
    for (int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
    check_finite(y, "add");
    if (detail::track(tape, {&a, &b})) {
        y.set_requires_grad(true);
        tape.record([a, b, y, n]() mutable {
            const T* dy = y.grad();
            if (a.requires_grad()) {
                T* da = a.grad();
                for (int64_t i = 0; i < n; ++i) da[i] += dy[i];
            }
            if (b.requires_grad()) {
                T* db = b.grad();
                for (int64_t i = 0; i < n; ++i) db[i] += dy[i];
            }
        });
    }
    return y;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, Tensor<T> a, T c) {
    Tensor<T> y(a.shape());
    const int64_t n = y.numel();
    const T* pa = a.data();
    T* py = y.data();
    for (int64_t i = 0; i < n; ++i) py[i] = c * pa[i];
    check_finite(y, "scale");
    if (detail::track(tape, {&a})) {
        y.set_requires_grad(true);
        tape.record([a, y, c, n]() mutable {
            const T* dy = y.grad();
            T* da = a.grad();
            for (int64_t i = 0; i < n; ++i) da[i] += c * dy[i];
        });
    }
    return y;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, Tensor<T> a) {
    Tensor<T> y(a.shape());
    const int64_t n = y.numel();
    const T* pa = a.data();
    T* py = y.data();
    for (int64_t i = 0; i < n; ++i) py[i] = pa[i] > T(0) ? pa[i] : T(0);
    check_finite(y, "relu");
    if (detail::track(tape, {&a})) {
        y.set_requires_grad(true);
        tape.record([a, y, n]() mutable {
            const T* dy = y.grad();
            const T* pa2 = a.data();
            T* da = a.grad();
            for (int64_t i = 0; i < n; ++i) {
                if (pa2[i] > T(0)) da[i] += dy[i];
            }
        });
    }
    return y;
}

namespace detail {

template <typename T>
inline void softmax_row(const T* in, T* out, int64_t n) noexcept {
    T mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (int64_t j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        sum += out[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < n; ++j) out[j] *= inv;
}

template <typename T>
inline void softmax_row_backward(const T* y, const T* dy, T* dx, int64_t n) noexcept {
    T dot = 0;
    for (int64_t j = 0; j < n; ++j) dot += y[j] * dy[j];
    for (int64_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
}

} // namespace detail

/// Softmax over the last axis with max-subtraction stabilization.
template <typename T>
Tensor<T> softmax(Tape<T>& tape, Tensor<T> a) {
    detail::require(a.ndim() >= 1 && a.dim(a.ndim() - 1) > 0, "softmax: empty last axis");
    const int64_t D = a.dim(a.ndim() - 1);
    const int64_t R = a.numel() / D;
    Tensor<T> y(a.shape());
    const T* pa = a.data();
    T* py = y.data();
#pragma omp parallel for schedule(static) if (R * D > kernels::kParallelFlopThreshold)
    for (int64_t r = 0; r < R; ++r) detail::softmax_row(pa + r * D, py + r * D, D);
    check_finite(y, "softmax");
    if (detail::track(tape, {&a})) {
        y.set_requires_grad(true);
        tape.record([a, y, R, D]() mutable {
            const T* py2 = y.data();
            const T* dy = y.grad();
            T* da = a.grad();
#pragma omp parallel for schedule(static) if (R * D > kernels::kParallelFlopThreshold)
            for (int64_t r = 0; r < R; ++r) {
                detail::softmax_row_backward(py2 + r * D, dy + r * D, da + r * D, D);
            }
        });
    }
    return y;
}

/// Row-wise softmax over keys j <= i of scores[G,T,T]; entries above the
/// diagonal stay exactly zero (causal attention weights).
template <typename T>
Tensor<T> causal_softmax(Tape<T>& tape, Tensor<T> s) {
    detail::require(s.ndim() == 3 && s.dim(1) == s.dim(2),
                    "causal_softmax: expected [G,T,T], got " + shape_str(s.shape()));
    const int64_t G = s.dim(0), Tn = s.dim(1);
    Tensor<T> y(s.shape());
    const T* ps = s.data();
    T* py = y.data();
#pragma omp parallel for schedule(static)
    for (int64_t g = 0; g < G; ++g) {
        for (int64_t i = 0; i < Tn; ++i) {
            const T* row = ps + (g * Tn + i) * Tn;
            T* out = py + (g * Tn + i) * Tn;
            detail::softmax_row(row, out, i + 1);
            // out[j > i] stays zero from construction
        }
    }
    check_finite(y, "causal_softmax");
    if (detail::track(tape, {&s})) {
        y.set_requires_grad(true);
        tape.record([s, y, G, Tn]() mutable {
            const T* py2 = y.data();
            const T* dy = y.grad();
            T* ds = s.grad();
#pragma omp parallel for schedule(static)
            for (int64_t g = 0; g < G; ++g) {
                for (int64_t i = 0; i < Tn; ++i) {
                    const int64_t off = (g * Tn + i) * Tn;
                    detail::softmax_row_backward(py2 + off, dy + off, ds + off, i + 1);
                }
            }
        });
    }
    return y;
}

/// LayerNorm over the last axis with a learned gain and no bias.
template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, Tensor<T> x, Tensor<T> gain, T eps) {
    detail::require(gain.ndim() == 1 && x.ndim() >= 1 && gain.dim(0) == x.dim(x.ndim() - 1),
                    "layer_norm: gain shape " + shape_str(gain.shape()) + " does not match input " +
                        shape_str(x.shape()));
    const int64_t D = gain.dim(0);
    const int64_t R = x.numel() / D;
    Tensor<T> y(x.shape());
    // Saved for backward: normalized activations and per-row 1/std.
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(R * D));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(R));
    {
        const T* px = x.data();
        const T* pg = gain.data();
        T* py = y.data();
        T* ph = xhat->data();
        T* pis = inv_std->data();
#pragma omp parallel for schedule(static) if (R * D > kernels::kParallelFlopThreshold)
        for (int64_t r = 0; r < R; ++r) {
            const T* row = px + r * D;
            T mean = 0;
            for (int64_t j = 0; j < D; ++j) mean += row[j];
            mean /= T(D);
            T var = 0;
            for (int64_t j = 0; j < D; ++j) {
                const T c = row[j] - mean;
                var += c * c;
            }
            var /= T(D);
            const T is = T(1) / std::sqrt(var + eps);
            pis[r] = is;
            T* hrow = ph + r * D;
            T* yrow = py + r * D;
            for (int64_t j = 0; j < D; ++j) {
                hrow[j] = (row[j] - mean) * is;
                yrow[j] = hrow[j] * pg[j];
            }
        }
    }
    check_finite(y, "layer_norm");
    if (detail::track(tape, {&x, &gain})) {
        y.set_requires_grad(true);
        tape.record([x, gain, y, xhat, inv_std, R, D]() mutable {
            const T* dy = y.grad();
            const T* ph = xhat->data();
            const T* pis = inv_std->data();
            const T* pg = gain.data();
            if (gain.requires_grad()) {
                T* dg = gain.grad();
                for (int64_t r = 0; r < R; ++r) {
                    const T* dyr = dy + r * D;
                    const T* hr = ph + r * D;
                    for (int64_t j = 0; j < D; ++j) dg[j] += dyr[j] * hr[j];
                }
            }
            if (x.requires_grad()) {
                T* dx = x.grad();
#pragma omp parallel for schedule(static) if (R * D > kernels::kParallelFlopThreshold)
                for (int64_t r = 0; r < R; ++r) {
                    const T* dyr = dy + r * D;
                    const T* hr = ph + r * D;
                    T* dxr = dx + r * D;
                    T sum_dh = 0, sum_dh_h = 0;
                    for (int64_t j = 0; j < D; ++j) {
                        const T dh = dyr[j] * pg[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                    }
                    const T mean_dh = sum_dh / T(D);
                    const T mean_dh_h = sum_dh_h / T(D);
                    for (int64_t j = 0; j < D; ++j) {
                        const T dh = dyr[j] * pg[j];
                        dxr[j] += pis[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        });
    }
    return y;
}

/// Gathers embedding rows for a token stream. Output shape is out_lead + [D].
template <typename T>
Tensor<T> embed_lookup(Tape<T>& tape, Tensor<T> table, const std::vector<int32_t>& tokens,
                       Shape out_lead) {
    detail::require(table.ndim() == 2, "embed_lookup: table must be [vocab, dim]");
    const int64_t V = table.dim(0), D = table.dim(1);
    detail::require(shape_numel(out_lead) == static_cast<int64_t>(tokens.size()),
                    "embed_lookup: leading shape does not match token count");
    for (int32_t t : tokens) {
        detail::require(t >= 0 && t < V,
                        "embed_lookup: token " + std::to_string(t) + " outside vocab of " +
                            std::to_string(V));
    }
    Shape out_shape = out_lead;
    out_shape.push_back(D);
    Tensor<T> y(out_shape);
    const int64_t N = static_cast<int64_t>(tokens.size());
    const T* pt = table.data();
    T* py = y.data();
    for (int64_t i = 0; i < N; ++i) {
        const T* src = pt + static_cast<int64_t>(tokens[i]) * D;
        std::copy(src, src + D, py + i * D);
    }
    if (detail::track(tape, {&table})) {
        y.set_requires_grad(true);
        auto toks = std::make_shared<std::vector<int32_t>>(tokens);
        tape.record([table, y, toks, N, D]() mutable {
            const T* dy = y.grad();
            T* dt = table.grad();
            for (int64_t i = 0; i < N; ++i) {
                T* dst = dt + static_cast<int64_t>((*toks)[i]) * D;
                const T* src = dy + i * D;
                for (int64_t j = 0; j < D; ++j) dst[j] += src[j];
            }
        });
    }
    return y;
}

/// [B,T,D] -> [B,H,T,D/H]
template <typename T>
Tensor<T> split_heads(Tape<T>& tape, Tensor<T> x, int64_t heads) {
    detail::require(x.ndim() == 3 && x.dim(2) % heads == 0,
                    "split_heads: input " + shape_str(x.shape()) + " not divisible into " +
                        std::to_string(heads) + " heads");
    const int64_t B = x.dim(0), Tn = x.dim(1), D = x.dim(2), hd = D / heads;
    Tensor<T> y(Shape{B, heads, Tn, hd});
    const T* px = x.data();
    T* py = y.data();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t t = 0; t < Tn; ++t) {
            const T* src = px + (b * Tn + t) * D;
            for (int64_t h = 0; h < heads; ++h) {
                std::copy(src + h * hd, src + (h + 1) * hd, py + ((b * heads + h) * Tn + t) * hd);
            }
        }
    }
    if (detail::track(tape, {&x})) {
        y.set_requires_grad(true);
        tape.record([x, y, B, Tn, D, hd, heads]() mutable {
            const T* dy = y.grad();
            T* dx = x.grad();
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t t = 0; t < Tn; ++t) {
                    T* dst = dx + (b * Tn + t) * D;
                    for (int64_t h = 0; h < heads; ++h) {
                        const T* src = dy + ((b * heads + h) * Tn + t) * hd;
                        for (int64_t j = 0; j < hd; ++j) dst[h * hd + j] += src[j];
                    }
                }
            }
        });
    }
    return y;
}

/// [B,H,T,hd] -> [B,T,H*hd]
template <typename T>
Tensor<T> merge_heads(Tape<T>& tape, Tensor<T> x) {
    detail::require(x.ndim() == 4, "merge_heads: expected [B,H,T,hd]");
    const int64_t B = x.dim(0), H = x.dim(1), Tn = x.dim(2), hd = x.dim(3);
    const int64_t D = H * hd;
    Tensor<T> y(Shape{B, Tn, D});
    const T* px = x.data();
    T* py = y.data();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t h = 0; h < H; ++h) {
            for (int64_t t = 0; t < Tn; ++t) {
                const T* src = px + ((b * H + h) * Tn + t) * hd;
                std::copy(src, src + hd, py + (b * Tn + t) * D + h * hd);
            }
        }
    }
    if (detail::track(tape, {&x})) {
        y.set_requires_grad(true);
        tape.record([x, y, B, H, Tn, hd, D]() mutable {
            const T* dy = y.grad();
            T* dx = x.grad();
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t h = 0; h < H; ++h) {
                    for (int64_t t = 0; t < Tn; ++t) {
                        T* dst = dx + ((b * H + h) * Tn + t) * hd;
                        const T* src = dy + (b * Tn + t) * D + h * hd;
                        for (int64_t j = 0; j < hd; ++j) dst[j] += src[j];
                    }
                }
            }
        });
    }
    return y;
}

/// Rotary position embedding over [B,H,T,hd]; position is the index along T.
/// Adjacent pairs (2i, 2i+1) rotate by pos * theta^(-2i/hd).
template <typename T>
Tensor<T> rope(Tape<T>& tape, Tensor<T> x, T theta) {
    detail::require(x.ndim() == 4 && x.dim(3) % 2 == 0,
                    "rope: head dimension must be even, got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), H = x.dim(1), Tn = x.dim(2), hd = x.dim(3);
    const int64_t half = hd / 2;
    auto cos_tab = std::make_shared<std::vector<T>>(static_cast<size_t>(Tn * half));
    auto sin_tab = std::make_shared<std::vector<T>>(static_cast<size_t>(Tn * half));
    for (int64_t t = 0; t < Tn; ++t) {
        for (int64_t i = 0; i < half; ++i) {
            const double freq = std::pow(static_cast<double>(theta),
                                         -2.0 * static_cast<double>(i) / static_cast<double>(hd));
            const double angle = static_cast<double>(t) * freq;
            (*cos_tab)[t * half + i] = static_cast<T>(std::cos(angle));
            (*sin_tab)[t * half + i] = static_cast<T>(std::sin(angle));
        }
    }
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    const T* pc = cos_tab->data();
    const T* ps = sin_tab->data();
    for (int64_t bh = 0; bh < B * H; ++bh) {
        for (int64_t t = 0; t < Tn; ++t) {
            const T* src = px + (bh * Tn + t) * hd;
            T* dst = py + (bh * Tn + t) * hd;
            for (int64_t i = 0; i < half; ++i) {
                const T c = pc[t * half + i], s = ps[t * half + i];
                const T x0 = src[2 * i], x1 = src[2 * i + 1];
                dst[2 * i] = x0 * c - x1 * s;
                dst[2 * i + 1] = x0 * s + x1 * c;
            }
        }
    }
    check_finite(y, "rope");
    if (detail::track(tape, {&x})) {
        y.set_requires_grad(true);
        tape.record([x, y, cos_tab, sin_tab, B, H, Tn, hd, half]() mutable {
            const T* dy = y.grad();
            T* dx = x.grad();
            const T* pc2 = cos_tab->data();
            const T* ps2 = sin_tab->data();
            for (int64_t bh = 0; bh < B * H; ++bh) {
                for (int64_t t = 0; t < Tn; ++t) {
                    const T* src = dy + (bh * Tn + t) * hd;
                    T* dst = dx + (bh * Tn + t) * hd;
                    for (int64_t i = 0; i < half; ++i) {
                        const T c = pc2[t * half + i], s = ps2[t * half + i];
                        const T g0 = src[2 * i], g1 = src[2 * i + 1];
                        dst[2 * i] += g0 * c + g1 * s;
                        dst[2 * i + 1] += -g0 * s + g1 * c;
                    }
                }
            }
        });
    }
    return y;
}

/// Concatenation along the last axis; leading shapes must match.
template <typename T>
Tensor<T> concat(Tape<T>& tape, Tensor<T> a, Tensor<T> b) {
    detail::require(a.ndim() == b.ndim() && a.ndim() >= 1, "concat: rank mismatch");
    for (int64_t i = 0; i + 1 < a.ndim(); ++i) {
        detail::require(a.dim(i) == b.dim(i), "concat: leading shape mismatch " +
                                                  shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const int64_t Da = a.dim(a.ndim() - 1), Db = b.dim(b.ndim() - 1);
    const int64_t R = a.numel() / Da;
    Shape out_shape = a.shape();
    out_shape.back() = Da + Db;
    Tensor<T> y(out_shape);
    const T* pa = a.data();
    const T* pb = b.data();
    T* py = y.data();
    for (int64_t r = 0; r < R; ++r) {
        std::copy(pa + r * Da, pa + (r + 1) * Da, py + r * (Da + Db));
        std::copy(pb + r * Db, pb + (r + 1) * Db, py + r * (Da + Db) + Da);
    }
    if (detail::track(tape, {&a, &b})) {
        y.set_requires_grad(true);
        tape.record([a, b, y, R, Da, Db]() mutable {
            const T* dy = y.grad();
            if (a.requires_grad()) {
                T* da = a.grad();
                for (int64_t r = 0; r < R; ++r) {
                    const T* src = dy + r * (Da + Db);
                    for (int64_t j = 0; j < Da; ++j) da[r * Da + j] += src[j];
                }
            }
            if (b.requires_grad()) {
                T* db = b.grad();
                for (int64_t r = 0; r < R; ++r) {
                    const T* src = dy + r * (Da + Db) + Da;
                    for (int64_t j = 0; j < Db; ++j) db[r * Db + j] += src[j];
                }
            }
        });
    }
    return y;
}

/// 2-D transpose (materialized).
template <typename T>
Tensor<T> transpose(Tape<T>& tape, Tensor<T> x) {
    detail::require(x.ndim() == 2, "transpose: expected 2-D input, got " + shape_str(x.shape()));
    const int64_t M = x.dim(0), N = x.dim(1);
    Tensor<T> y(Shape{N, M});
    const T* px = x.data();
    T* py = y.data();
    for (int64_t i = 0; i < M; ++i) {
        for (int64_t j = 0; j < N; ++j) py[j * M + i] = px[i * N + j];
    }
    if (detail::track(tape, {&x})) {
        y.set_requires_grad(true);
        tape.record([x, y, M, N]() mutable {
            const T* dy = y.grad();
            T* dx = x.grad();
            for (int64_t i = 0; i < M; ++i) {
                for (int64_t j = 0; j < N; ++j) dx[i * N + j] += dy[j * M + i];
            }
        });
    }
    return y;
}

/// Mean negative log-likelihood over the masked rows of logits[..., V].
/// `targets` and `row_mask` are indexed by flattened row; rows with a zero
/// mask entry contribute nothing and need no valid target.
template <typename T>
Tensor<T> masked_cross_entropy(Tape<T>& tape, Tensor<T> logits,
                               const std::vector<int32_t>& targets,
                               const std::vector<uint8_t>& row_mask) {
    detail::require(logits.ndim() >= 2, "masked_cross_entropy: logits must be at least 2-D");
    const int64_t V = logits.dim(logits.ndim() - 1);
    const int64_t R = logits.numel() / V;
    detail::require(static_cast<int64_t>(targets.size()) == R &&
                        static_cast<int64_t>(row_mask.size()) == R,
                    "masked_cross_entropy: targets/mask must have one entry per logits row");
    int64_t count = 0;
    for (int64_t r = 0; r < R; ++r) {
        if (!row_mask[r]) continue;
        ++count;
        detail::require(targets[r] >= 0 && targets[r] < V,
                        "masked_cross_entropy: target " + std::to_string(targets[r]) +
                            " outside vocab of " + std::to_string(V));
    }
    detail::require(count > 0, "masked_cross_entropy: mask selects no positions");

    auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(R * V), T(0));
    double total = 0.0;
    {
        const T* pl = logits.data();
        T* pp = probs->data();
        for (int64_t r = 0; r < R; ++r) {
            if (!row_mask[r]) continue;
            const T* row = pl + r * V;
            T mx = row[0];
            for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            T* prow = pp + r * V;
            for (int64_t j = 0; j < V; ++j) {
                prow[j] = std::exp(row[j] - mx);
                sum += static_cast<double>(prow[j]);
            }
            const T inv = static_cast<T>(1.0 / sum);
            for (int64_t j = 0; j < V; ++j) prow[j] *= inv;
            total += std::log(sum) + static_cast<double>(mx) - static_cast<double>(row[targets[r]]);
        }
    }
    Tensor<T> loss = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(count)));
    check_finite(loss, "masked_cross_entropy");
    if (detail::track(tape, {&logits})) {
        loss.set_requires_grad(true);
        auto tgt = std::make_shared<std::vector<int32_t>>(targets);
        auto msk = std::make_shared<std::vector<uint8_t>>(row_mask);
        tape.record([logits, loss, probs, tgt, msk, R, V, count]() mutable {
            const T g = loss.grad()[0] / static_cast<T>(count);
            T* dl = logits.grad();
            const T* pp = probs->data();
            for (int64_t r = 0; r < R; ++r) {
                if (!(*msk)[r]) continue;
                const T* prow = pp + r * V;
                T* drow = dl + r * V;
                for (int64_t j = 0; j < V; ++j) drow[j] += g * prow[j];
                drow[(*tgt)[r]] -= g;
            }
        });
    }
    return loss;
}

} // namespace ops

/// Convenience wrapper matching the tape-centric call sites in tests.
template <typename T>
void backward(Tape<T>& tape, Tensor<T>& loss) {
    tape.backward(loss);
}

} // namespace modicl
