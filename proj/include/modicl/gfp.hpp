#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace modicl {

inline bool is_prime(uint32_t n) {
    if (n < 2) return false;
    if (n % 2 == 0) return n == 2;
    for (uint32_t d = 3; static_cast<uint64_t>(d) * d <= n; d += 2) {
        if (n % d == 0) return false;
    }
    return true;
}

/// Arithmetic context over GF(p). Primality is verified once at construction;
/// element ops assume reduced inputs in [0, p) and never allocate.
class PrimeField {
public:
    explicit PrimeField(uint32_t p) : p_(p) {
        if (!is_prime(p)) {
            throw std::invalid_argument("PrimeField: modulus " + std::to_string(p) + " is not prime");
        }
    }

    uint32_t modulus() const noexcept { return p_; }

    uint32_t add(uint32_t a, uint32_t b) const noexcept {
        uint32_t s = a + b;
        return s >= p_ ? s - p_ : s;
    }

    uint32_t sub(uint32_t a, uint32_t b) const noexcept {
        return a >= b ? a - b : a + p_ - b;
    }

    uint32_t neg(uint32_t a) const noexcept { return a == 0 ? 0 : p_ - a; }

    uint32_t mul(uint32_t a, uint32_t b) const noexcept {
        return static_cast<uint32_t>((static_cast<uint64_t>(a) * b) % p_);
    }

    uint32_t pow(uint32_t base, uint64_t exp) const noexcept {
        uint32_t result = 1 % p_;
        uint32_t acc = base % p_;
        while (exp != 0) {
            if (exp & 1) result = mul(result, acc);
            acc = mul(acc, acc);
            exp >>= 1;
        }
        return result;
    }

    /// Multiplicative inverse via extended Euclid. Zero has no inverse.
    uint32_t inv(uint32_t a) const {
        if (a % p_ == 0) {
            throw std::domain_error("PrimeField: zero is not invertible mod " + std::to_string(p_));
        }
        int64_t t = 0, new_t = 1;
        int64_t r = p_, new_r = a % p_;
        while (new_r != 0) {
            int64_t q = r / new_r;
            t -= q * new_t;
            std::swap(t, new_t);
            r -= q * new_r;
            std::swap(r, new_r);
        }
        if (t < 0) t += p_;
        return static_cast<uint32_t>(t);
    }

    uint32_t reduce(int64_t v) const noexcept {
        int64_t r = v % static_cast<int64_t>(p_);
        if (r < 0) r += p_;
        return static_cast<uint32_t>(r);
    }

    /// a*x + b*y mod p, the linear map evaluated everywhere in this project.
    uint32_t linear_eval(uint32_t a, uint32_t b, uint32_t x, uint32_t y) const noexcept {
        return add(mul(a, x), mul(b, y));
    }

private:
    uint32_t p_;
};

/// One value of GF(p) together with its modulus. Ops check that both operands
/// live in the same field; the modulus itself is validated by PrimeField.
struct FieldElement {
    uint32_t value = 0;
    uint32_t p = 2;
};

namespace detail {
inline void require_same_field(const FieldElement& a, const FieldElement& b, const char* op) {
    if (a.p != b.p) {
        throw std::invalid_argument(std::string(op) + ": modulus mismatch (" + std::to_string(a.p) +
                                    " vs " + std::to_string(b.p) + ")");
    }
}
} // namespace detail

inline FieldElement field_add(const FieldElement& a, const FieldElement& b) {
    detail::require_same_field(a, b, "field_add");
    uint32_t s = a.value + b.value;
    if (s >= a.p) s -= a.p;
    return {s, a.p};
}

inline FieldElement field_mul(const FieldElement& a, const FieldElement& b) {
    detail::require_same_field(a, b, "field_mul");
    return {static_cast<uint32_t>((static_cast<uint64_t>(a.value) * b.value) % a.p), a.p};
}

inline FieldElement field_inverse(const FieldElement& a) {
    return {PrimeField(a.p).inv(a.value), a.p};
}

inline bool operator==(const FieldElement& a, const FieldElement& b) {
    return a.value == b.value && a.p == b.p;
}

inline std::ostream& operator<<(std::ostream& os, const FieldElement& e) {
    return os << e.value << " (mod " << e.p << ")";
}

inline std::vector<uint32_t> prime_factors(uint32_t n) {
    std::vector<uint32_t> factors;
    for (uint32_t d = 2; static_cast<uint64_t>(d) * d <= n; ++d) {
        if (n % d == 0) {
            factors.push_back(d);
            while (n % d == 0) n /= d;
        }
    }
    if (n > 1) factors.push_back(n);
    return factors;
}

inline bool is_primitive_root(const PrimeField& field, uint32_t g) {
    uint32_t p = field.modulus();
    if (g % p == 0) return false;
    for (uint32_t q : prime_factors(p - 1)) {
        if (field.pow(g, (p - 1) / q) == 1) return false;
    }
    return true;
}

inline uint32_t smallest_primitive_root(uint32_t p) {
    PrimeField field(p);
    for (uint32_t g = 1; g < p; ++g) {
        if (is_primitive_root(field, g)) return g;
    }
    throw std::logic_error("smallest_primitive_root: none found for p=" + std::to_string(p));
}

/// Discrete-log table for GF(p) with respect to a primitive root g.
/// Nonzero n map bijectively onto exponents [1, p); log(0) is written as 0
/// by convention (the value is not a real logarithm -- callers that annotate
/// plots should render n == 0 distinctly).
class LogTable {
public:
    LogTable(uint32_t p, uint32_t base) : field_(p), base_(base), log_(p, 0) {
        if (!is_primitive_root(field_, base)) {
            throw std::invalid_argument("LogTable: base " + std::to_string(base) +
                                        " is not a primitive root of " + std::to_string(p));
        }
        uint32_t acc = 1;
        for (uint32_t e = 1; e < p; ++e) {
            acc = field_.mul(acc, base_);
            log_[acc] = e;
        }
        // acc has cycled back to 1 here, so log_[1] == p - 1.
    }

    /// Paper-facing default: base 27 when p == 29, otherwise the smallest
    /// primitive root.
    static LogTable with_default_base(uint32_t p) {
        return LogTable(p, p == 29 ? 27u : smallest_primitive_root(p));
    }

    uint32_t modulus() const noexcept { return field_.modulus(); }
    uint32_t base() const noexcept { return base_; }

    uint32_t log(uint32_t n) const {
        if (n >= log_.size()) {
            throw std::out_of_range("LogTable::log: value " + std::to_string(n) + " outside [0, p)");
        }
        return log_[n];
    }

    /// True when log(n) is the 0-by-convention entry rather than a real log.
    static bool is_convention_zero(uint32_t n) noexcept { return n == 0; }

    void write_csv(std::ostream& os) const {
        os << "n,log\n";
        for (uint32_t n = 0; n < log_.size(); ++n) {
            os << n << "," << log_[n] << "\n";
        }
    }

private:
    PrimeField field_;
    uint32_t base_;
    std::vector<uint32_t> log_;
};

/// Solves A*c = target over GF(p) for a 2-row system whose columns are given
/// as (x, y) pairs. Gaussian elimination with first-nonzero pivoting in column
/// order; free coefficients are set to 0. Returns nullopt when target lies
/// outside the column span.
inline std::optional<std::vector<uint32_t>> solve_linear_mod_p(
    const PrimeField& field,
    const std::vector<std::array<uint32_t, 2>>& columns,
    const std::array<uint32_t, 2>& target) {
    if (columns.empty()) {
        throw std::invalid_argument("solve_linear_mod_p: need at least one column");
    }
    const size_t k = columns.size();
    // Augmented rows, k coefficients plus rhs.
    std::array<std::vector<uint32_t>, 2> row;
    for (int r = 0; r < 2; ++r) {
        row[r].resize(k + 1);
        for (size_t j = 0; j < k; ++j) row[r][j] = columns[j][r] % field.modulus();
        row[r][k] = target[r] % field.modulus();
    }

    size_t pivot_row = 0;
    std::vector<std::pair<size_t, size_t>> pivots; // (row, col)
    for (size_t col = 0; col < k && pivot_row < 2; ++col) {
        size_t found = 2;
        for (size_t r = pivot_row; r < 2; ++r) {
            if (row[r][col] != 0) { found = r; break; }
        }
        if (found == 2) continue;
        std::swap(row[pivot_row], row[found]);
        uint32_t inv = field.inv(row[pivot_row][col]);
        for (size_t j = col; j <= k; ++j) row[pivot_row][j] = field.mul(row[pivot_row][j], inv);
        for (size_t r = 0; r < 2; ++r) {
            if (r == pivot_row || row[r][col] == 0) continue;
            uint32_t factor = row[r][col];
            for (size_t j = col; j <= k; ++j) {
                row[r][j] = field.sub(row[r][j], field.mul(factor, row[pivot_row][j]));
            }
        }
        pivots.emplace_back(pivot_row, col);
        ++pivot_row;
    }

    for (size_t r = pivot_row; r < 2; ++r) {
        if (row[r][k] != 0) return std::nullopt; // inconsistent
    }

    std::vector<uint32_t> solution(k, 0);
    for (auto [r, c] : pivots) solution[c] = row[r][k];
    return solution;
}

} // namespace modicl
