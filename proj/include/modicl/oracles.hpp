#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "modicl/dataset.hpp"
#include "modicl/gfp.hpp"

namespace modicl {

/// One labeled in-context example. Labels are taken verbatim; nothing here
/// assumes they are consistent with any task.
struct ContextExample {
    uint32_t x = 0;
    uint32_t y = 0;
    uint32_t z = 0;
};

/// A k-shot context plus the query it should answer.
struct ContextSet {
    std::vector<ContextExample> examples;
    uint32_t query_x = 0;
    uint32_t query_y = 0;
};

/// Scalar multiple c of (x, y) against (ex, ey), if one exists.
/// (0,0) is a multiple of anything via c = 0; a (0,0) example reaches only
/// the (0,0) query.
inline std::optional<uint32_t> scalar_multiple(const PrimeField& field, uint32_t ex, uint32_t ey,
                                               uint32_t x, uint32_t y) {
    if (ex != 0) {
        const uint32_t c = field.mul(x, field.inv(ex));
        if (field.mul(c, ey) == y) return c;
        return std::nullopt;
    }
    if (ey != 0) {
        if (x != 0) return std::nullopt;
        return field.mul(y, field.inv(ey));
    }
    if (x == 0 && y == 0) return 0u;
    return std::nullopt;
}

/// Ratio Matching: scan the examples in order; on the first example whose
/// input is a scalar multiple of the query, predict the same multiple of its
/// label. Returns nullopt when no example lies on the query's ray.
inline std::optional<uint32_t> ratio_match(const PrimeField& field,
                                           const std::vector<ContextExample>& examples,
                                           uint32_t query_x, uint32_t query_y) {
    if (examples.empty()) throw std::invalid_argument("ratio_match: empty context");
    for (const ContextExample& ex : examples) {
        if (auto c = scalar_multiple(field, ex.x, ex.y, query_x, query_y)) {
            return field.mul(*c, ex.z);
        }
    }
    return std::nullopt;
}

/// Modular Regression: find coefficients with sum c_i * (x_i, y_i) = (x, y)
/// over GF(p) and predict sum c_i * z_i. Returns nullopt when the query is
/// outside the span of the context inputs.
inline std::optional<uint32_t> modular_regress(const PrimeField& field,
                                               const std::vector<ContextExample>& examples,
                                               uint32_t query_x, uint32_t query_y) {
    if (examples.empty()) throw std::invalid_argument("modular_regress: empty context");
    std::vector<std::array<uint32_t, 2>> columns;
    columns.reserve(examples.size());
    for (const ContextExample& ex : examples) columns.push_back({ex.x, ex.y});
    auto coeffs = solve_linear_mod_p(field, columns, {query_x, query_y});
    if (!coeffs) return std::nullopt;
    uint32_t acc = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        acc = field.add(acc, field.mul((*coeffs)[i], examples[i].z));
    }
    return acc;
}

/// Exhaustive filter over all p^2 task vectors: keeps exactly those consistent
/// with every triple. Empty context keeps everything; an inconsistent
/// (corrupted) context can empty the set.
inline std::vector<TaskVector> infer_tasks(const PrimeField& field,
                                           const std::vector<ContextExample>& examples) {
    const uint32_t p = field.modulus();
    std::vector<TaskVector> consistent;
    for (uint32_t a = 0; a < p; ++a) {
        for (uint32_t b = 0; b < p; ++b) {
            bool ok = true;
            for (const ContextExample& ex : examples) {
                if (field.linear_eval(a, b, ex.x, ex.y) != ex.z) {
                    ok = false;
                    break;
                }
            }
            if (ok) consistent.push_back({a, b});
        }
    }
    return consistent;
}

enum class OracleAlgorithm { ratio, regression };

inline const char* to_string(OracleAlgorithm a) {
    return a == OracleAlgorithm::ratio ? "ratio" : "regression";
}

enum class GridMark : uint8_t { unpredicted = 0, correct = 1, incorrect = 2 };

/// Per-query outcome of one oracle on the full p x p input grid, against the
/// true task used to score correctness. Row-major over (x, y).
struct OracleGrid {
    uint32_t p = 0;
    OracleAlgorithm algorithm = OracleAlgorithm::ratio;
    std::vector<GridMark> marks;

    GridMark at(uint32_t x, uint32_t y) const { return marks[x * p + y]; }

    int64_t count(GridMark m) const {
        int64_t n = 0;
        for (GridMark g : marks) n += (g == m);
        return n;
    }
};

inline OracleGrid oracle_grid(const PrimeField& field, const std::vector<ContextExample>& examples,
                              const TaskVector& task, OracleAlgorithm algorithm) {
    const uint32_t p = field.modulus();
    OracleGrid grid;
    grid.p = p;
    grid.algorithm = algorithm;
    grid.marks.resize(static_cast<size_t>(p) * p, GridMark::unpredicted);
    for (uint32_t x = 0; x < p; ++x) {
        for (uint32_t y = 0; y < p; ++y) {
            const auto pred = algorithm == OracleAlgorithm::ratio
                                  ? ratio_match(field, examples, x, y)
                                  : modular_regress(field, examples, x, y);
            if (!pred) continue;
            const uint32_t truth = field.linear_eval(task.a, task.b, x, y);
            grid.marks[x * p + y] = (*pred == truth) ? GridMark::correct : GridMark::incorrect;
        }
    }
    return grid;
}

inline void oracle_grid_to_csv(const OracleGrid& grid, std::ostream& os) {
    os << "x,y,status\n";
    for (uint32_t x = 0; x < grid.p; ++x) {
        for (uint32_t y = 0; y < grid.p; ++y) {
            const char* status = "unpredicted";
            if (grid.at(x, y) == GridMark::correct) status = "correct";
            if (grid.at(x, y) == GridMark::incorrect) status = "incorrect";
            os << x << "," << y << "," << status << "\n";
        }
    }
}

/// Context examples labeled consistently with `task` from a sequence prefix.
inline std::vector<ContextExample> labeled_context(const PrimeField& field, const TaskVector& task,
                                                   const std::vector<InputPair>& inputs) {
    std::vector<ContextExample> out;
    out.reserve(inputs.size());
    for (const InputPair& in : inputs) {
        out.push_back({in.x, in.y, field.linear_eval(task.a, task.b, in.x, in.y)});
    }
    return out;
}

/// Context triples read off a token sequence prefix of `shots` examples.
inline std::vector<ContextExample> context_from_sequence(const TokenSequence& seq, int shots) {
    if (shots < 0 || shots > seq.n_ctx()) {
        throw std::invalid_argument("context_from_sequence: shots outside sequence");
    }
    std::vector<ContextExample> out;
    out.reserve(static_cast<size_t>(shots));
    for (int j = 0; j < shots; ++j) {
        out.push_back({static_cast<uint32_t>(seq.tokens[3 * j]),
                       static_cast<uint32_t>(seq.tokens[3 * j + 1]),
                       static_cast<uint32_t>(seq.tokens[3 * j + 2])});
    }
    return out;
}

} // namespace modicl
