#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "modicl/checkpoint.hpp"
#include "modicl/model.hpp"
#include "modicl/oracles.hpp"
#include "modicl/rng.hpp"

namespace modicl {

/// Mean loss and accuracy at every z position of one evaluation set.
struct ShotMetrics {
    std::vector<double> loss_per_shot;
    std::vector<double> acc_per_shot;
    std::string set_id;
    int64_t sample_count = 0;

    double last_shot_loss() const { return loss_per_shot.back(); }
    double last_shot_accuracy() const { return acc_per_shot.back(); }
    double mean_shot_accuracy() const {
        double s = 0;
        for (double a : acc_per_shot) s += a;
        return s / static_cast<double>(acc_per_shot.size());
    }
    double mean_shot_loss() const {
        double s = 0;
        for (double l : loss_per_shot) s += l;
        return s / static_cast<double>(loss_per_shot.size());
    }
};

namespace detail {

/// Forward pass in chunks (no tape growth), invoking `fn(seq_index, logits,
/// chunk_sequences, chunk_offset_in_logits)` once per chunk.
template <typename Fn>
void forward_chunks(ParameterSet<float>& params, const std::vector<TokenSequence>& sequences,
                    int64_t chunk, Fn&& fn) {
    for (size_t begin = 0; begin < sequences.size(); begin += static_cast<size_t>(chunk)) {
        const size_t end = std::min(sequences.size(), begin + static_cast<size_t>(chunk));
        std::vector<TokenSequence> part(sequences.begin() + static_cast<std::ptrdiff_t>(begin),
                                        sequences.begin() + static_cast<std::ptrdiff_t>(end));
        BatchTokens bt = flatten_batch(part);
        Tape<float> tape;
        tape.set_recording(false);
        Tensor<float> logits = forward(tape, params, bt.tokens, bt.batch, bt.seq_len);
        fn(begin, logits, part);
    }
}

inline double row_nll(const float* logits, int64_t vocab, int32_t target) {
    float mx = logits[0];
    for (int64_t v = 1; v < vocab; ++v) mx = std::max(mx, logits[v]);
    double sum = 0.0;
    for (int64_t v = 0; v < vocab; ++v) sum += std::exp(static_cast<double>(logits[v] - mx));
    return std::log(sum) + static_cast<double>(mx) - static_cast<double>(logits[target]);
}

inline int32_t row_argmax(const float* logits, int64_t vocab) {
    int32_t best = 0;
    for (int64_t v = 1; v < vocab; ++v) {
        if (logits[v] > logits[best]) best = static_cast<int32_t>(v);
    }
    return best;
}

} // namespace detail

/// Per-shot loss and accuracy averaged over an evaluation set. When
/// `reference` is given, the model reads `sequences` but is scored against the
/// reference labels (used by the corruption harness, where noisy labels are
/// inputs and the clean task defines correctness).
inline ShotMetrics per_shot_metrics(ParameterSet<float>& params,
                                    const std::vector<TokenSequence>& sequences,
                                    std::string set_id = "", int64_t chunk = 32,
                                    const std::vector<TokenSequence>* reference = nullptr) {
    if (sequences.empty()) throw std::invalid_argument("per_shot_metrics: empty evaluation set");
    if (reference != nullptr && reference->size() != sequences.size()) {
        throw std::invalid_argument("per_shot_metrics: reference set size mismatch");
    }
    const size_t shots = sequences[0].target_positions.size();
    ShotMetrics m;
    m.set_id = std::move(set_id);
    m.sample_count = static_cast<int64_t>(sequences.size());
    m.loss_per_shot.assign(shots, 0.0);
    m.acc_per_shot.assign(shots, 0.0);
    const int64_t V = params.config.vocab;

    detail::forward_chunks(params, sequences, chunk,
                           [&](size_t begin, const Tensor<float>& logits,
                               const std::vector<TokenSequence>& part) {
        const int64_t seq_len = logits.dim(1);
        const float* pl = logits.data();
        for (size_t b = 0; b < part.size(); ++b) {
            const TokenSequence& s = part[b];
            const TokenSequence& truth =
                reference != nullptr ? (*reference)[begin + b] : s;
            for (size_t j = 0; j < s.target_positions.size(); ++j) {
                const int64_t row = static_cast<int64_t>(b) * seq_len + s.target_positions[j] - 1;
                const int32_t target = truth.tokens[static_cast<size_t>(s.target_positions[j])];
                m.loss_per_shot[j] += detail::row_nll(pl + row * V, V, target);
                m.acc_per_shot[j] += detail::row_argmax(pl + row * V, V) == target;
            }
        }
    });

    for (size_t j = 0; j < shots; ++j) {
        m.loss_per_shot[j] /= static_cast<double>(sequences.size());
        m.acc_per_shot[j] /= static_cast<double>(sequences.size());
    }
    return m;
}

/// Oracle stand-in for per_shot_metrics: the prediction at shot j comes from
/// running the oracle on the first j examples. Unpredicted queries count as
/// wrong. Used to cross-check model evaluation paths against closed forms.
inline ShotMetrics oracle_per_shot_accuracy(const PrimeField& field, OracleAlgorithm algorithm,
                                            const std::vector<TokenSequence>& sequences) {
    if (sequences.empty()) throw std::invalid_argument("oracle_per_shot_accuracy: empty set");
    const size_t shots = sequences[0].target_positions.size();
    ShotMetrics m;
    m.set_id = to_string(algorithm);
    m.sample_count = static_cast<int64_t>(sequences.size());
    m.loss_per_shot.assign(shots, 0.0);
    m.acc_per_shot.assign(shots, 0.0);
    for (const TokenSequence& s : sequences) {
        for (size_t j = 0; j < shots; ++j) {
            const uint32_t qx = static_cast<uint32_t>(s.tokens[3 * j]);
            const uint32_t qy = static_cast<uint32_t>(s.tokens[3 * j + 1]);
            const uint32_t truth = static_cast<uint32_t>(s.tokens[3 * j + 2]);
            std::optional<uint32_t> pred;
            if (j > 0) {
                const auto context = context_from_sequence(s, static_cast<int>(j));
                pred = algorithm == OracleAlgorithm::ratio
                           ? ratio_match(field, context, qx, qy)
                           : modular_regress(field, context, qx, qy);
            }
            m.acc_per_shot[j] += (pred && *pred == truth);
        }
    }
    for (size_t j = 0; j < shots; ++j) m.acc_per_shot[j] /= static_cast<double>(sequences.size());
    return m;
}

/// Last-shot accuracies of the four sequence sets, in the fixed order
/// (id_train, id_test, ood_train, ood_test).
using PhaseQuadruple = std::array<double, 4>;

/// none < id-memorization < id-generalization < ood-memorization <
/// ood-generalization; the strongest satisfied region wins.
inline int classify_phase(const PhaseQuadruple& q, double threshold = 0.75) {
    for (double v : q) {
        if (v < 0.0 || v > 1.0) {
            throw std::invalid_argument("classify_phase: accuracies must lie in [0,1]");
        }
    }
    if (q[3] >= threshold) return 4;
    if (q[2] >= threshold) return 3;
    if (q[1] >= threshold) return 2;
    if (q[0] >= threshold) return 1;
    return 0;
}

inline const char* phase_name(int phase) {
    switch (phase) {
        case 1: return "id-memorization";
        case 2: return "id-generalization";
        case 3: return "ood-memorization";
        case 4: return "ood-generalization";
        default: return "none";
    }
}

enum class Monotonicity { increasing, non_monotonic, decreasing };

inline const char* to_string(Monotonicity m) {
    switch (m) {
        case Monotonicity::increasing: return "monotonic-increasing";
        case Monotonicity::non_monotonic: return "non-monotonic";
        case Monotonicity::decreasing: return "monotonic-decreasing";
    }
    return "?";
}

/// Classifies a per-shot curve, ignoring direction changes smaller than
/// eps * range. Curves flat within tolerance report their net direction.
inline Monotonicity monotonicity_class(const std::vector<double>& curve, double eps = 0.02) {
    if (curve.size() < 3) throw std::invalid_argument("monotonicity_class: need at least 3 shots");
    double lo = curve[0], hi = curve[0];
    for (double v : curve) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double tol = eps * (hi - lo);
    bool can_increase = true, can_decrease = true;
    double run_min = curve[0], run_max = curve[0];
    for (double v : curve) {
        if (v < run_max - tol) can_increase = false;
        if (v > run_min + tol) can_decrease = false;
        run_min = std::min(run_min, v);
        run_max = std::max(run_max, v);
    }
    if (can_increase && can_decrease) {
        return curve.back() >= curve.front() ? Monotonicity::increasing : Monotonicity::decreasing;
    }
    if (can_increase) return Monotonicity::increasing;
    if (can_decrease) return Monotonicity::decreasing;
    return Monotonicity::non_monotonic;
}

/// Model correctness over the full query grid for a fixed k-shot prefix, plus
/// the signed diff against an oracle grid (+1 where the model beats the
/// oracle, -1 where the oracle beats the model).
struct PredictionGrid {
    uint32_t p = 0;
    std::vector<uint8_t> model_correct; // row-major over (x, y)
    std::vector<int8_t> diff;

    int64_t count_diff(int8_t v) const {
        int64_t n = 0;
        for (int8_t d : diff) n += (d == v);
        return n;
    }
};

inline PredictionGrid prediction_grid(ParameterSet<float>& params, const PrimeField& field,
                                      const TaskVector& task,
                                      const std::vector<InputPair>& prefix_inputs,
                                      const OracleGrid& oracle) {
    const uint32_t p = field.modulus();
    if (oracle.p != p) throw std::invalid_argument("prediction_grid: oracle grid p mismatch");
    PredictionGrid grid;
    grid.p = p;
    grid.model_correct.assign(static_cast<size_t>(p) * p, 0);
    grid.diff.assign(static_cast<size_t>(p) * p, 0);

    std::vector<TokenSequence> queries;
    queries.reserve(static_cast<size_t>(p) * p);
    for (uint32_t x = 0; x < p; ++x) {
        for (uint32_t y = 0; y < p; ++y) {
            std::vector<InputPair> inputs = prefix_inputs;
            inputs.push_back({x, y});
            queries.push_back(build_sequence(field, task, inputs));
        }
    }

    detail::forward_chunks(params, queries, 64,
                           [&](size_t begin, const Tensor<float>& logits,
                               const std::vector<TokenSequence>& part) {
        const int64_t V = params.config.vocab;
        const int64_t seq_len = logits.dim(1);
        const float* pl = logits.data();
        for (size_t b = 0; b < part.size(); ++b) {
            const TokenSequence& s = part[b];
            const int32_t zpos = s.target_positions.back();
            const int64_t row = static_cast<int64_t>(b) * seq_len + zpos - 1;
            const int32_t target = s.tokens[static_cast<size_t>(zpos)];
            grid.model_correct[begin + b] = detail::row_argmax(pl + row * V, V) == target;
        }
    });

    for (size_t i = 0; i < grid.diff.size(); ++i) {
        const int model = grid.model_correct[i] ? 1 : 0;
        const int orc = oracle.marks[i] == GridMark::correct ? 1 : 0;
        grid.diff[i] = static_cast<int8_t>(model - orc);
    }
    return grid;
}

inline void prediction_grid_to_csv(const PredictionGrid& grid, std::ostream& os) {
    os << "x,y,model_correct,diff\n";
    for (uint32_t x = 0; x < grid.p; ++x) {
        for (uint32_t y = 0; y < grid.p; ++y) {
            const size_t i = x * grid.p + y;
            os << x << "," << y << "," << int(grid.model_correct[i]) << "," << int(grid.diff[i])
               << "\n";
        }
    }
}

/// Replaces the z label of shot `position` (1-based) with a uniformly chosen
/// different token. Scoring elsewhere is always against the true labels.
inline std::vector<TokenSequence> corrupt_single(const std::vector<TokenSequence>& sequences,
                                                 int position, uint32_t p, uint64_t seed) {
    Rng rng(seed);
    std::vector<TokenSequence> out = sequences;
    for (TokenSequence& s : out) {
        if (position < 1 || position > s.n_ctx()) {
            throw std::invalid_argument("corrupt_single: position outside [1, n_ctx]");
        }
        int32_t& z = s.tokens[static_cast<size_t>(3 * (position - 1) + 2)];
        const uint32_t offset = 1 + rng.below_u32(p - 1);
        z = static_cast<int32_t>((static_cast<uint32_t>(z) + offset) % p);
    }
    return out;
}

/// Corrupts a random fraction f of the in-context labels (shots before the
/// final one), each replaced by a uniformly chosen different token.
inline std::vector<TokenSequence> corrupt_multi(const std::vector<TokenSequence>& sequences,
                                                double fraction, uint32_t p, uint64_t seed) {
    if (fraction < 0.0 || fraction > 1.0) {
        throw std::invalid_argument("corrupt_multi: fraction outside [0,1]");
    }
    Rng rng(seed);
    std::vector<TokenSequence> out = sequences;
    for (TokenSequence& s : out) {
        const uint32_t eligible = static_cast<uint32_t>(s.n_ctx() - 1);
        const uint32_t n_corrupt =
            static_cast<uint32_t>(std::llround(fraction * static_cast<double>(eligible)));
        for (uint32_t shot : rng.sample_distinct(eligible, n_corrupt)) {
            int32_t& z = s.tokens[static_cast<size_t>(3 * shot + 2)];
            const uint32_t offset = 1 + rng.below_u32(p - 1);
            z = static_cast<int32_t>((static_cast<uint32_t>(z) + offset) % p);
        }
    }
    return out;
}

/// Accuracy per shot after corrupting the label at one position. Corrupted
/// tokens are model inputs only; scoring stays against the true labels, so
/// causality makes shots <= position match the uncorrupted metrics exactly.
inline ShotMetrics label_corruption_single(ParameterSet<float>& params,
                                           const std::vector<TokenSequence>& sequences,
                                           int position, uint64_t seed) {
    auto corrupted = corrupt_single(sequences, position, static_cast<uint32_t>(params.config.vocab),
                                    seed);
    return per_shot_metrics(params, corrupted, "corrupt_single@" + std::to_string(position), 32,
                            &sequences);
}

/// Accuracy surface: one row per corrupted position, columns are shots.
inline std::vector<std::vector<double>> label_corruption_surface(
    ParameterSet<float>& params, const std::vector<TokenSequence>& sequences, uint64_t seed) {
    const int n_ctx = sequences.at(0).n_ctx();
    std::vector<std::vector<double>> surface;
    surface.reserve(static_cast<size_t>(n_ctx));
    for (int j = 1; j <= n_ctx; ++j) {
        surface.push_back(label_corruption_single(params, sequences, j, seed + static_cast<uint64_t>(j))
                              .acc_per_shot);
    }
    return surface;
}

inline ShotMetrics label_corruption_multi(ParameterSet<float>& params,
                                          const std::vector<TokenSequence>& sequences,
                                          double fraction, uint64_t seed) {
    auto corrupted =
        corrupt_multi(sequences, fraction, static_cast<uint32_t>(params.config.vocab), seed);
    return per_shot_metrics(params, corrupted, "corrupt_multi@" + std::to_string(fraction), 32,
                            &sequences);
}

/// Last-shot accuracy per task over an evaluation set (training curves per
/// task show a few tasks being learned long before the rest).
inline std::vector<std::pair<TaskVector, double>> per_task_accuracy(
    ParameterSet<float>& params, const std::vector<TokenSequence>& sequences) {
    if (sequences.empty()) throw std::invalid_argument("per_task_accuracy: empty set");
    std::vector<TaskVector> order;
    std::vector<double> correct, total;
    const int64_t V = params.config.vocab;
    detail::forward_chunks(params, sequences, 32,
                           [&](size_t, const Tensor<float>& logits,
                               const std::vector<TokenSequence>& part) {
        const int64_t seq_len = logits.dim(1);
        const float* pl = logits.data();
        for (size_t b = 0; b < part.size(); ++b) {
            const TokenSequence& s = part[b];
            size_t slot = 0;
            for (; slot < order.size(); ++slot) {
                if (order[slot] == s.task) break;
            }
            if (slot == order.size()) {
                order.push_back(s.task);
                correct.push_back(0);
                total.push_back(0);
            }
            const int32_t zpos = s.target_positions.back();
            const int64_t row = static_cast<int64_t>(b) * seq_len + zpos - 1;
            correct[slot] += detail::row_argmax(pl + row * V, V) ==
                             s.tokens[static_cast<size_t>(zpos)];
            total[slot] += 1;
        }
    });
    std::vector<std::pair<TaskVector, double>> out;
    for (size_t i = 0; i < order.size(); ++i) out.push_back({order[i], correct[i] / total[i]});
    return out;
}

/// Merge by sample-weighted average; the union of two disjoint evaluation sets
/// must match evaluating them together.
inline ShotMetrics merge_metrics(const ShotMetrics& a, const ShotMetrics& b) {
    if (a.loss_per_shot.size() != b.loss_per_shot.size()) {
        throw std::invalid_argument("merge_metrics: shot counts differ");
    }
    ShotMetrics out;
    out.set_id = a.set_id + "+" + b.set_id;
    out.sample_count = a.sample_count + b.sample_count;
    const double wa = static_cast<double>(a.sample_count) / static_cast<double>(out.sample_count);
    const double wb = 1.0 - wa;
    out.loss_per_shot.resize(a.loss_per_shot.size());
    out.acc_per_shot.resize(a.acc_per_shot.size());
    for (size_t j = 0; j < out.loss_per_shot.size(); ++j) {
        out.loss_per_shot[j] = wa * a.loss_per_shot[j] + wb * b.loss_per_shot[j];
        out.acc_per_shot[j] = wa * a.acc_per_shot[j] + wb * b.acc_per_shot[j];
    }
    return out;
}

inline void shot_metrics_to_csv(const ShotMetrics& m, std::ostream& os) {
    os << "shot,loss,accuracy\n";
    for (size_t j = 0; j < m.loss_per_shot.size(); ++j) {
        os << (j + 1) << "," << m.loss_per_shot[j] << "," << m.acc_per_shot[j] << "\n";
    }
}

} // namespace modicl
