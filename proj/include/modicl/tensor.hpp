#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace modicl {

/// Training allocates and frees multi-megabyte activation buffers every step;
/// glibc serves those from fresh mmaps by default, which costs page faults on
/// every touch. Keeping large blocks on the reusable heap roughly halves the
/// forward-pass wall time. Safe to call repeatedly.
inline void tune_allocator_for_training() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_MAX, 0);
        mallopt(M_TRIM_THRESHOLD, -1);
        return true;
    }();
    (void)done;
#endif
}

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major tensor. Copies are shallow (storage is shared); gradients
/// live in a parallel buffer allocated on demand. Single precision is the
/// training type, double is used for finite-difference verification.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (static_cast<int64_t>(values.size()) != shape_numel(shape_)) {
            throw std::invalid_argument("Tensor: data size does not match shape " + shape_str(shape_));
        }
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor scalar(T v) {
        Tensor t(Shape{1});
        (*t.data_)[0] = v;
        return t;
    }

    bool defined() const noexcept { return static_cast<bool>(data_); }
    const Shape& shape() const noexcept { return shape_; }
    int64_t ndim() const noexcept { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const noexcept { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

    T* data() noexcept { return data_->data(); }
    const T* data() const noexcept { return data_->data(); }
    std::vector<T>& values() { return *data_; }
    const std::vector<T>& values() const { return *data_; }

    T item() const {
        if (numel() != 1) throw std::invalid_argument("Tensor::item: not a scalar");
        return (*data_)[0];
    }

    bool requires_grad() const noexcept { return static_cast<bool>(grad_); }

    void set_requires_grad(bool on) {
        if (on && !grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
        if (!on) grad_.reset();
    }

    T* grad() noexcept { return grad_ ? grad_->data() : nullptr; }
    const T* grad() const noexcept { return grad_ ? grad_->data() : nullptr; }
    std::vector<T>& grad_values() { return *grad_; }

    void zero_grad() noexcept {
        if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
    }

    /// Same storage, no gradient tracking.
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = data_;
        return t;
    }

    /// Deep copy of values (gradient state not copied).
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    /// Shared storage reinterpreted under a new shape with equal element count.
    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != numel()) {
            throw std::invalid_argument("Tensor::reshaped: numel mismatch " + shape_str(shape_) +
                                        " -> " + shape_str(new_shape));
        }
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        t.grad_ = grad_;
        return t;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
    std::shared_ptr<std::vector<T>> grad_;
};

namespace kernels {

// All kernels accumulate into the output and assign each output row to exactly
// one thread with a serial inner loop, so results do not depend on the thread
// count. Reductions use a fixed bank of lane accumulators that GCC vectorizes
// without reassociating the final sum.

constexpr int64_t kParallelFlopThreshold = 1 << 16;

template <typename T>
inline T dot_span(const T* a, const T* b, int64_t n) noexcept {
    constexpr int64_t lanes = 16;
    T acc[lanes] = {};
    int64_t k = 0;
    for (; k + lanes <= n; k += lanes) {
        for (int64_t j = 0; j < lanes; ++j) acc[j] += a[k + j] * b[k + j];
    }
    T tail = 0;
    for (; k < n; ++k) tail += a[k] * b[k];
    for (int64_t width = lanes / 2; width >= 1; width /= 2) {
        for (int64_t j = 0; j < width; ++j) acc[j] += acc[j + width];
    }
    return acc[0] + tail;
}

/// c[M,N] += a[M,K] * b[K,N]
template <typename T>
inline void mm_nn_acc(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N,
                      bool allow_par = true) noexcept {
    const bool par = allow_par && M * K * N > kParallelFlopThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < M; ++i) {
        T* ci = c + i * N;
        const T* ai = a + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const T aik = ai[k];
            if (aik == T(0)) continue;
            const T* bk = b + k * N;
            for (int64_t j = 0; j < N; ++j) ci[j] += aik * bk[j];
        }
    }
}

/// c[M,N] += a[M,K] * b[N,K]^T
template <typename T>
inline void mm_nt_acc(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N,
                      bool allow_par = true) noexcept {
    const bool par = allow_par && M * K * N > kParallelFlopThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < M; ++i) {
        T* ci = c + i * N;
        const T* ai = a + i * K;
        // four output columns at a time share the a-row loads
        constexpr int64_t lanes = 16;
        int64_t j = 0;
        for (; j + 4 <= N; j += 4) {
            T acc[4][lanes] = {};
            const T* b0 = b + j * K;
            const T* b1 = b0 + K;
            const T* b2 = b1 + K;
            const T* b3 = b2 + K;
            int64_t k = 0;
            for (; k + lanes <= K; k += lanes) {
                for (int64_t l = 0; l < lanes; ++l) {
                    const T av = ai[k + l];
                    acc[0][l] += av * b0[k + l];
                    acc[1][l] += av * b1[k + l];
                    acc[2][l] += av * b2[k + l];
                    acc[3][l] += av * b3[k + l];
                }
            }
            T tail[4] = {};
            for (; k < K; ++k) {
                const T av = ai[k];
                tail[0] += av * b0[k];
                tail[1] += av * b1[k];
                tail[2] += av * b2[k];
                tail[3] += av * b3[k];
            }
            for (int64_t width = lanes / 2; width >= 1; width /= 2) {
                for (int64_t q = 0; q < 4; ++q) {
                    for (int64_t l = 0; l < width; ++l) acc[q][l] += acc[q][l + width];
                }
            }
            for (int64_t q = 0; q < 4; ++q) ci[j + q] += acc[q][0] + tail[q];
        }
        for (; j < N; ++j) ci[j] += dot_span(ai, b + j * K, K);
    }
}

/// c[K,N] += a[M,K]^T * b[M,N]
template <typename T>
inline void mm_tn_acc(const T* a, const T* b, T* c, int64_t M, int64_t K, int64_t N,
                      bool allow_par = true) noexcept {
    const bool par = allow_par && M * K * N > kParallelFlopThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (int64_t k = 0; k < K; ++k) {
        T* ck = c + k * N;
        for (int64_t m = 0; m < M; ++m) {
            const T amk = a[m * K + k];
            if (amk == T(0)) continue;
            const T* bm = b + m * N;
            for (int64_t j = 0; j < N; ++j) ck[j] += amk * bm[j];
        }
    }
}

} // namespace kernels

#if defined(MODICL_CHECK_FINITE)
constexpr bool kCheckFinite = true;
#elif !defined(NDEBUG)
constexpr bool kCheckFinite = true;
#else
constexpr bool kCheckFinite = false;
#endif

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* op) {
    if constexpr (kCheckFinite) {
        const T* p = t.data();
        for (int64_t i = 0; i < t.numel(); ++i) {
            if (!std::isfinite(static_cast<double>(p[i]))) {
                throw std::runtime_error(std::string(op) + ": non-finite value at flat index " +
                                         std::to_string(i));
            }
        }
    }
}

} // namespace modicl
