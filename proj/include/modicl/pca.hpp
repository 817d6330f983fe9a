#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "modicl/tensor.hpp"

namespace modicl {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major, n x n).
/// Returns eigenvalues descending with matching eigenvector columns packed as
/// rows of `vectors`. Deterministic; fine for the few-hundred-dimensional
/// covariance matrices this project sees.
inline void jacobi_eigh(std::vector<double> a, int64_t n, std::vector<double>& eigenvalues,
                        std::vector<double>& vectors_rowmajor) {
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int64_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    auto off_diag = [&]() {
        double s = 0;
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
        }
        return s;
    };
    double norm = 0;
    for (double x : a) norm += x * x;
    const double tol = 1e-24 * std::max(norm, 1e-300);

    for (int sweep = 0; sweep < 100 && off_diag() > tol; ++sweep) {
        for (int64_t p = 0; p < n; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int64_t i, int64_t j) { return a[i * n + i] > a[j * n + j]; });

    eigenvalues.resize(static_cast<size_t>(n));
    vectors_rowmajor.assign(static_cast<size_t>(n) * n, 0.0);
    for (int64_t r = 0; r < n; ++r) {
        eigenvalues[static_cast<size_t>(r)] = a[order[r] * n + order[r]];
        for (int64_t k = 0; k < n; ++k) vectors_rowmajor[r * n + k] = v[k * n + order[r]];
    }
}

/// Principal components of mean-centered row data.
struct PcaResult {
    Tensor<double> components;  // [k, dims], orthonormal rows
    std::vector<double> explained_variance_ratio;
    Tensor<double> projections; // [rows, k]
};

/// Mean-centered PCA with a deterministic sign convention (the
/// largest-magnitude coordinate of each component is positive). Works through
/// the covariance or Gram matrix, whichever is smaller.
template <typename T>
PcaResult pca(const Tensor<T>& features, int64_t k) {
    if (features.ndim() != 2) throw std::invalid_argument("pca: features must be [rows, dims]");
    const int64_t rows = features.dim(0), dims = features.dim(1);
    if (rows < 2) throw std::invalid_argument("pca: need at least 2 rows");
    const int64_t max_rank = std::min(rows - 1, dims);
    if (k < 1 || k > max_rank) {
        throw std::invalid_argument("pca: k=" + std::to_string(k) + " exceeds rank bound " +
                                    std::to_string(max_rank));
    }

    std::vector<double> centered(static_cast<size_t>(rows) * dims);
    for (int64_t j = 0; j < dims; ++j) {
        double mean = 0;
        for (int64_t r = 0; r < rows; ++r) mean += static_cast<double>(features.data()[r * dims + j]);
        mean /= static_cast<double>(rows);
        for (int64_t r = 0; r < rows; ++r) {
            centered[r * dims + j] = static_cast<double>(features.data()[r * dims + j]) - mean;
        }
    }

    double total_variance = 0;
    for (double x : centered) total_variance += x * x;
    total_variance /= static_cast<double>(rows - 1);
    if (total_variance <= 0) throw std::invalid_argument("pca: data has zero variance");

    PcaResult out;
    out.components = Tensor<double>({k, dims});
    out.projections = Tensor<double>({rows, k});
    out.explained_variance_ratio.resize(static_cast<size_t>(k));

    std::vector<double> eigenvalues, eigenvectors;
    if (dims <= rows) {
        std::vector<double> cov(static_cast<size_t>(dims) * dims, 0.0);
        for (int64_t r = 0; r < rows; ++r) {
            const double* row = centered.data() + r * dims;
            for (int64_t i = 0; i < dims; ++i) {
                for (int64_t j = i; j < dims; ++j) cov[i * dims + j] += row[i] * row[j];
            }
        }
        for (int64_t i = 0; i < dims; ++i) {
            for (int64_t j = i; j < dims; ++j) {
                cov[i * dims + j] /= static_cast<double>(rows - 1);
                cov[j * dims + i] = cov[i * dims + j];
            }
        }
        jacobi_eigh(std::move(cov), dims, eigenvalues, eigenvectors);
        for (int64_t c = 0; c < k; ++c) {
            for (int64_t j = 0; j < dims; ++j) {
                out.components.data()[c * dims + j] = eigenvectors[c * dims + j];
            }
        }
    } else {
        // Gram trick: eigenvectors u of X X^T / (rows-1) give components X^T u.
        std::vector<double> gram(static_cast<size_t>(rows) * rows, 0.0);
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t s = r; s < rows; ++s) {
                double acc = 0;
                const double* a = centered.data() + r * dims;
                const double* b = centered.data() + s * dims;
                for (int64_t j = 0; j < dims; ++j) acc += a[j] * b[j];
                gram[r * rows + s] = acc / static_cast<double>(rows - 1);
                gram[s * rows + r] = gram[r * rows + s];
            }
        }
        jacobi_eigh(std::move(gram), rows, eigenvalues, eigenvectors);
        for (int64_t c = 0; c < k; ++c) {
            double norm = 0;
            std::vector<double> comp(static_cast<size_t>(dims), 0.0);
            for (int64_t r = 0; r < rows; ++r) {
                const double u = eigenvectors[c * rows + r];
                const double* row = centered.data() + r * dims;
                for (int64_t j = 0; j < dims; ++j) comp[static_cast<size_t>(j)] += u * row[j];
            }
            for (double x : comp) norm += x * x;
            norm = std::sqrt(norm);
            if (norm <= 0) {
                throw std::invalid_argument("pca: k=" + std::to_string(k) + " exceeds data rank");
            }
            for (int64_t j = 0; j < dims; ++j) out.components.data()[c * dims + j] = comp[j] / norm;
        }
    }

    const double rank_floor = 1e-12 * std::max(eigenvalues[0], 1e-300);
    for (int64_t c = 0; c < k; ++c) {
        if (eigenvalues[static_cast<size_t>(c)] < rank_floor) {
            throw std::invalid_argument("pca: k=" + std::to_string(k) + " exceeds data rank " +
                                        std::to_string(c));
        }
        out.explained_variance_ratio[static_cast<size_t>(c)] =
            std::max(0.0, eigenvalues[static_cast<size_t>(c)]) / total_variance;
    }

    // sign convention: largest-magnitude coordinate positive
    for (int64_t c = 0; c < k; ++c) {
        double* comp = out.components.data() + c * dims;
        int64_t arg = 0;
        for (int64_t j = 1; j < dims; ++j) {
            if (std::abs(comp[j]) > std::abs(comp[arg])) arg = j;
        }
        if (comp[arg] < 0) {
            for (int64_t j = 0; j < dims; ++j) comp[j] = -comp[j];
        }
    }

    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < k; ++c) {
            double acc = 0;
            const double* comp = out.components.data() + c * dims;
            const double* row = centered.data() + r * dims;
            for (int64_t j = 0; j < dims; ++j) acc += comp[j] * row[j];
            out.projections.data()[r * k + c] = acc;
        }
    }
    return out;
}

} // namespace modicl
