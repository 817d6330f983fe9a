#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "modicl/eval.hpp"
#include "modicl/gfp.hpp"
#include "modicl/model.hpp"
#include "modicl/pca.hpp"
#include "modicl/rng.hpp"

namespace modicl {

enum class TriplePos { x = 0, y = 1, z = 2 };

inline const char* to_string(TriplePos p) {
    switch (p) {
        case TriplePos::x: return "x";
        case TriplePos::y: return "y";
        case TriplePos::z: return "z";
    }
    return "?";
}

namespace detail {

/// Runs the model over all p^2 final inputs appended to a fixed prefix,
/// with activation capture, chunked to bound memory. `fn` receives the flat
/// scan index of the first sequence in the chunk plus that chunk's capture.
template <typename Fn>
void scan_final_inputs(ParameterSet<float>& params, const PrimeField& field, const TaskVector& task,
                       const std::vector<InputPair>& prefix_inputs, Fn&& fn, int64_t chunk = 128) {
    const uint32_t p = field.modulus();
    std::vector<TokenSequence> all;
    all.reserve(static_cast<size_t>(p) * p);
    for (uint32_t x = 0; x < p; ++x) {
        for (uint32_t y = 0; y < p; ++y) {
            std::vector<InputPair> inputs = prefix_inputs;
            inputs.push_back({x, y});
            all.push_back(build_sequence(field, task, inputs));
        }
    }
    for (size_t begin = 0; begin < all.size(); begin += static_cast<size_t>(chunk)) {
        const size_t end = std::min(all.size(), begin + static_cast<size_t>(chunk));
        std::vector<TokenSequence> part(all.begin() + static_cast<std::ptrdiff_t>(begin),
                                        all.begin() + static_cast<std::ptrdiff_t>(end));
        BatchTokens bt = flatten_batch(part);
        Tape<float> tape;
        tape.set_recording(false);
        ActivationCapture<float> capture;
        forward(tape, params, bt.tokens, bt.batch, bt.seq_len, &capture);
        fn(begin, part.size(), capture);
    }
}

} // namespace detail

/// Per-layer attention maps [H, T, T] for one sequence.
inline std::vector<Tensor<float>> attention_maps(ParameterSet<float>& params,
                                                 const TokenSequence& seq) {
    BatchTokens bt = flatten_batch({seq});
    Tape<float> tape;
    tape.set_recording(false);
    ActivationCapture<float> capture;
    forward(tape, params, bt.tokens, bt.batch, bt.seq_len, &capture);
    std::vector<Tensor<float>> maps;
    const int64_t H = params.config.heads, Tn = bt.seq_len;
    for (Tensor<float>& attn : capture.attention) {
        maps.push_back(attn.reshaped({H, Tn, Tn}).clone());
    }
    return maps;
}

/// Mean attention mass inside the causal band [i - band + 1, i], averaged over
/// query rows i >= min_row. Near 1 for heads that only look at their own
/// triple.
inline double attention_band_mass(const Tensor<float>& head_map, int64_t band = 3,
                                  int64_t min_row = 2) {
    if (head_map.ndim() != 2 || head_map.dim(0) != head_map.dim(1)) {
        throw std::invalid_argument("attention_band_mass: expected a square [T,T] map");
    }
    const int64_t Tn = head_map.dim(0);
    if (min_row >= Tn) throw std::invalid_argument("attention_band_mass: min_row beyond map");
    double total = 0;
    int64_t rows = 0;
    for (int64_t i = min_row; i < Tn; ++i) {
        double mass = 0;
        for (int64_t j = std::max<int64_t>(0, i - band + 1); j <= i; ++j) {
            mass += head_map.data()[i * Tn + j];
        }
        total += mass;
        ++rows;
    }
    return total / static_cast<double>(rows);
}

/// Features of one attention head scanned over all p^2 final inputs: the
/// head's post-projection output at the chosen tokens of the final triple,
/// concatenated per row. Annotated with the discrete logs of (x, y).
struct FeatureScan {
    Tensor<float> features;                         // [p^2, positions * d_embed]
    std::vector<std::array<uint32_t, 2>> inputs;    // (x, y) per row
    std::vector<std::array<uint32_t, 2>> log_pairs; // (log x, log y) per row
    int layer = 0;
    int head = 0;
    TaskVector task;
    std::vector<TriplePos> positions;
};

inline FeatureScan head_feature_scan(ParameterSet<float>& params, const PrimeField& field,
                                     const LogTable& logs, int layer, int head,
                                     const TaskVector& task,
                                     const std::vector<InputPair>& prefix_inputs,
                                     const std::vector<TriplePos>& positions) {
    const ModelConfig& cfg = params.config;
    if (layer < 0 || layer >= cfg.depth) {
        throw std::invalid_argument("head_feature_scan: layer " + std::to_string(layer) +
                                    " outside depth " + std::to_string(cfg.depth));
    }
    if (head < 0 || head >= cfg.heads) {
        throw std::invalid_argument("head_feature_scan: head " + std::to_string(head) +
                                    " outside " + std::to_string(cfg.heads) + " heads");
    }
    if (positions.empty()) throw std::invalid_argument("head_feature_scan: no token positions");

    const uint32_t p = field.modulus();
    const int64_t D = cfg.d_embed, hd = cfg.head_dim();
    const int64_t k = static_cast<int64_t>(prefix_inputs.size());
    const int64_t n_pos = static_cast<int64_t>(positions.size());

    FeatureScan scan;
    scan.layer = layer;
    scan.head = head;
    scan.task = task;
    scan.positions = positions;
    scan.features = Tensor<float>({static_cast<int64_t>(p) * p, n_pos * D});
    scan.inputs.reserve(static_cast<size_t>(p) * p);
    scan.log_pairs.reserve(static_cast<size_t>(p) * p);
    for (uint32_t x = 0; x < p; ++x) {
        for (uint32_t y = 0; y < p; ++y) {
            scan.inputs.push_back({x, y});
            scan.log_pairs.push_back({logs.log(x), logs.log(y)});
        }
    }

    // Per-head slice of the output projection: rows [head*hd, (head+1)*hd).
    const float* wo = params.blocks[static_cast<size_t>(layer)].wo.data();

    detail::scan_final_inputs(
        params, field, task, prefix_inputs,
        [&](size_t begin, size_t count, ActivationCapture<float>& capture) {
            const Tensor<float>& ctx = capture.head_ctx[static_cast<size_t>(layer)];
            const int64_t Tn = ctx.dim(2);
            for (size_t b = 0; b < count; ++b) {
                float* out_row = scan.features.data() + static_cast<int64_t>(begin + b) * n_pos * D;
                for (int64_t pi = 0; pi < n_pos; ++pi) {
                    const int64_t tok = 3 * k + static_cast<int64_t>(scan.positions[pi]);
                    const float* h = ctx.data() +
                                     ((static_cast<int64_t>(b) * cfg.heads + head) * Tn + tok) * hd;
                    float* dst = out_row + pi * D;
                    for (int64_t j = 0; j < hd; ++j) {
                        const float hj = h[j];
                        const float* wrow = wo + (static_cast<int64_t>(head) * hd + j) * D;
                        for (int64_t d = 0; d < D; ++d) dst[d] += hj * wrow[d];
                    }
                }
            }
        });
    return scan;
}

/// PCA of the token embeddings with discrete-log annotations.
struct EmbeddingPca {
    PcaResult pca;
    std::vector<uint32_t> logs; // log of token n, row-aligned
};

inline EmbeddingPca embedding_pca(ParameterSet<float>& params, const LogTable& logs, int64_t k = 3) {
    EmbeddingPca out;
    out.pca = pca(params.embedding, k);
    for (uint32_t n = 0; n < static_cast<uint32_t>(params.config.vocab); ++n) {
        out.logs.push_back(logs.log(n));
    }
    return out;
}

/// Cosine similarities between block-l outputs at the final y (or z) token,
/// across all p^2 final inputs under a fixed prefix. Vectors are standardized
/// by removing their own mean before the cosine.
struct CosineMatrix {
    Tensor<float> matrix;                 // [p^2, p^2]
    std::vector<int64_t> degenerate_rows; // zero-norm vectors, reported not clamped
    uint32_t p = 0;
};

inline CosineMatrix cosine_similarity_matrix(ParameterSet<float>& params, const PrimeField& field,
                                             int layer, TriplePos token, const TaskVector& task,
                                             const std::vector<InputPair>& prefix_inputs) {
    const ModelConfig& cfg = params.config;
    if (layer < 0 || layer >= cfg.depth) {
        throw std::invalid_argument("cosine_similarity_matrix: layer outside depth");
    }
    if (token == TriplePos::x) {
        throw std::invalid_argument("cosine_similarity_matrix: defined for y and z tokens");
    }
    const uint32_t p = field.modulus();
    const int64_t D = cfg.d_embed;
    const int64_t rows = static_cast<int64_t>(p) * p;
    const int64_t k = static_cast<int64_t>(prefix_inputs.size());
    const int64_t tok = 3 * k + static_cast<int64_t>(token);

    std::vector<double> vectors(static_cast<size_t>(rows) * D);
    detail::scan_final_inputs(
        params, field, task, prefix_inputs,
        [&](size_t begin, size_t count, ActivationCapture<float>& capture) {
            const Tensor<float>& block = capture.block_out[static_cast<size_t>(layer)];
            const int64_t Tn = block.dim(1);
            for (size_t b = 0; b < count; ++b) {
                const float* src = block.data() + (static_cast<int64_t>(b) * Tn + tok) * D;
                double* dst = vectors.data() + static_cast<int64_t>(begin + b) * D;
                double mean = 0;
                for (int64_t d = 0; d < D; ++d) mean += src[d];
                mean /= static_cast<double>(D);
                for (int64_t d = 0; d < D; ++d) dst[d] = src[d] - mean;
            }
        });

    CosineMatrix out;
    out.p = p;
    out.matrix = Tensor<float>({rows, rows});
    std::vector<double> norms(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        double n2 = 0;
        for (int64_t d = 0; d < D; ++d) n2 += vectors[r * D + d] * vectors[r * D + d];
        norms[static_cast<size_t>(r)] = std::sqrt(n2);
        if (norms[static_cast<size_t>(r)] == 0.0) out.degenerate_rows.push_back(r);
    }
    float* m = out.matrix.data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t s = r; s < rows; ++s) {
            double acc = 0;
            const double* a = vectors.data() + r * D;
            const double* b = vectors.data() + s * D;
            for (int64_t d = 0; d < D; ++d) acc += a[d] * b[d];
            const double denom = norms[static_cast<size_t>(r)] * norms[static_cast<size_t>(s)];
            const float value = denom > 0 ? static_cast<float>(acc / denom) : 0.0f;
            m[r * rows + s] = value;
        }
    }
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t s = 0; s < r; ++s) m[r * rows + s] = m[s * rows + r];
    }
    return out;
}

/// Ratio-class id of an input pair: pairs with equal y/x (mod p) share a
/// class, the x = 0 line is its own class, and (0,0) sits alone.
inline int64_t ratio_class(const PrimeField& field, uint32_t x, uint32_t y) {
    if (x != 0) return static_cast<int64_t>(field.mul(y, field.inv(x)));
    return y != 0 ? static_cast<int64_t>(field.modulus()) : static_cast<int64_t>(field.modulus()) + 1;
}

/// Mean within-class minus mean between-class cosine similarity, classes
/// defined by the input ratio y/x. Positive for representations that encode
/// the ratio structure.
inline double ratio_class_statistic(const CosineMatrix& cosine) {
    const uint32_t p = cosine.p;
    PrimeField field(p);
    const int64_t rows = static_cast<int64_t>(p) * p;
    std::vector<int64_t> cls(static_cast<size_t>(rows));
    for (uint32_t x = 0; x < p; ++x) {
        for (uint32_t y = 0; y < p; ++y) cls[x * p + y] = ratio_class(field, x, y);
    }
    double within = 0, between = 0;
    int64_t n_within = 0, n_between = 0;
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t s = r + 1; s < rows; ++s) {
            const double v = cosine.matrix.data()[r * rows + s];
            if (cls[static_cast<size_t>(r)] == cls[static_cast<size_t>(s)]) {
                within += v;
                ++n_within;
            } else {
                between += v;
                ++n_between;
            }
        }
    }
    if (n_within == 0 || n_between == 0) {
        throw std::logic_error("ratio_class_statistic: degenerate class partition");
    }
    return within / static_cast<double>(n_within) - between / static_cast<double>(n_between);
}

/// Post-ReLU MLP hidden activations at the final `token` position, as a p x p
/// image per hidden unit.
inline Tensor<float> mlp_activation_grid(ParameterSet<float>& params, const PrimeField& field,
                                         int layer, TriplePos token, const TaskVector& task,
                                         const std::vector<InputPair>& prefix_inputs) {
    const ModelConfig& cfg = params.config;
    if (layer < 0 || layer >= cfg.depth) {
        throw std::invalid_argument("mlp_activation_grid: layer outside depth");
    }
    const uint32_t p = field.modulus();
    const int64_t hidden = static_cast<int64_t>(cfg.mlp_widening) * cfg.d_embed;
    const int64_t k = static_cast<int64_t>(prefix_inputs.size());
    const int64_t tok = 3 * k + static_cast<int64_t>(token);
    Tensor<float> grids({hidden, p, p});
    detail::scan_final_inputs(
        params, field, task, prefix_inputs,
        [&](size_t begin, size_t count, ActivationCapture<float>& capture) {
            const Tensor<float>& h = capture.mlp_hidden[static_cast<size_t>(layer)];
            const int64_t Tn = h.dim(1);
            for (size_t b = 0; b < count; ++b) {
                const int64_t cell = static_cast<int64_t>(begin + b); // x * p + y
                const float* src = h.data() + (static_cast<int64_t>(b) * Tn + tok) * hidden;
                for (int64_t u = 0; u < hidden; ++u) {
                    grids.data()[u * p * p + cell] = src[u];
                }
            }
        });
    return grids;
}

/// Permutation test for even/odd discrete-log separation in a PCA projection.
/// The statistic is the best standardized mean gap along any of the first
/// `components` axes; the null shuffles the parity labels over nonzero tokens.
struct SeparationTest {
    double statistic = 0;
    double p_value = 1;
    int64_t permutations = 0;
};

namespace detail {

inline double parity_gap(const std::vector<std::array<double, 3>>& coords,
                         const std::vector<uint8_t>& parity, int64_t n_axes) {
    double best = 0;
    for (int64_t axis = 0; axis < n_axes; ++axis) {
        double mean[2] = {0, 0};
        int64_t count[2] = {0, 0};
        for (size_t i = 0; i < coords.size(); ++i) {
            mean[parity[i]] += coords[i][static_cast<size_t>(axis)];
            ++count[parity[i]];
        }
        if (count[0] == 0 || count[1] == 0) continue;
        mean[0] /= static_cast<double>(count[0]);
        mean[1] /= static_cast<double>(count[1]);
        double var = 0;
        for (size_t i = 0; i < coords.size(); ++i) {
            const double c = coords[i][static_cast<size_t>(axis)] - mean[parity[i]];
            var += c * c;
        }
        var /= static_cast<double>(coords.size() - 2);
        const double gap = std::abs(mean[0] - mean[1]) / std::max(std::sqrt(var), 1e-12);
        best = std::max(best, gap);
    }
    return best;
}

} // namespace detail

inline SeparationTest log_parity_separation(const EmbeddingPca& emb, uint64_t seed,
                                            int64_t permutations = 20000) {
    const int64_t k = std::min<int64_t>(3, emb.pca.projections.dim(1));
    const int64_t vocab = emb.pca.projections.dim(0);
    // token 0 carries the by-convention log and stays out of the parity test
    std::vector<std::array<double, 3>> coords;
    std::vector<uint8_t> parity;
    for (int64_t n = 1; n < vocab; ++n) {
        std::array<double, 3> c{0, 0, 0};
        for (int64_t j = 0; j < k; ++j) {
            c[static_cast<size_t>(j)] = emb.pca.projections.data()[n * emb.pca.projections.dim(1) + j];
        }
        coords.push_back(c);
        parity.push_back(static_cast<uint8_t>(emb.logs[static_cast<size_t>(n)] % 2));
    }
    SeparationTest test;
    test.statistic = detail::parity_gap(coords, parity, k);
    test.permutations = permutations;
    Rng rng(seed);
    int64_t at_least = 0;
    std::vector<uint8_t> shuffled = parity;
    for (int64_t it = 0; it < permutations; ++it) {
        rng.shuffle(shuffled);
        if (detail::parity_gap(coords, shuffled, k) >= test.statistic) ++at_least;
    }
    // add-one smoothing keeps the estimate conservative
    test.p_value = static_cast<double>(at_least + 1) / static_cast<double>(permutations + 1);
    return test;
}

/// Fraction of non-DC spectral power held by the strongest frequency of a
/// p x p activation image. Periodic structure concentrates power; shuffled
/// grids spread it.
inline double spectral_concentration(const float* grid, uint32_t p) {
    const double two_pi = 6.283185307179586476925286766559;
    double total = 0, peak = 0;
    for (uint32_t u = 0; u < p; ++u) {
        for (uint32_t v = 0; v < p; ++v) {
            if (u == 0 && v == 0) continue;
            double re = 0, im = 0;
            for (uint32_t x = 0; x < p; ++x) {
                for (uint32_t y = 0; y < p; ++y) {
                    const double angle = -two_pi * (static_cast<double>(u) * x +
                                                    static_cast<double>(v) * y) / p;
                    re += grid[x * p + y] * std::cos(angle);
                    im += grid[x * p + y] * std::sin(angle);
                }
            }
            const double power = re * re + im * im;
            total += power;
            peak = std::max(peak, power);
        }
    }
    return total > 0 ? peak / total : 0.0;
}

/// Null distribution of spectral_concentration under random pixel shuffles.
inline std::vector<double> spectral_concentration_null(const float* grid, uint32_t p,
                                                       int64_t shuffles, uint64_t seed) {
    std::vector<float> pixels(grid, grid + static_cast<size_t>(p) * p);
    Rng rng(seed);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(shuffles));
    for (int64_t i = 0; i < shuffles; ++i) {
        rng.shuffle(pixels);
        out.push_back(spectral_concentration(pixels.data(), p));
    }
    return out;
}

} // namespace modicl
