#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <sstream>

#include "modicl/gfp.hpp"
#include "modicl/rng.hpp"

using namespace modicl;

namespace {

// Independent oracle: enumerate all p^k coefficient vectors.
std::optional<std::vector<uint32_t>> brute_force_solve(const PrimeField& field,
                                                       const std::vector<std::array<uint32_t, 2>>& cols,
                                                       const std::array<uint32_t, 2>& target) {
    const uint32_t p = field.modulus();
    const size_t k = cols.size();
    std::vector<uint32_t> c(k, 0);
    for (;;) {
        uint32_t r0 = 0, r1 = 0;
        for (size_t j = 0; j < k; ++j) {
            r0 = field.add(r0, field.mul(c[j], cols[j][0]));
            r1 = field.add(r1, field.mul(c[j], cols[j][1]));
        }
        if (r0 == target[0] && r1 == target[1]) return c;
        size_t j = 0;
        while (j < k && ++c[j] == p) c[j++] = 0;
        if (j == k) return std::nullopt;
    }
}

} // namespace

TEST_CASE("field add/mul basics") {
    FieldElement six{6, 29}, two{2, 29}, three{3, 29};
    CHECK(field_add(field_mul(six, two), field_mul(six, three)).value == 1); // 30 mod 29
    FieldElement zero{0, 29}, x{17, 29};
    CHECK(field_add(zero, x) == x);
    FieldElement four{4, 5};
    CHECK(field_mul(four, four).value == 1); // 16 mod 5
}

TEST_CASE("field ops reject modulus mismatch") {
    FieldElement a{1, 29}, b{1, 31};
    CHECK_THROWS_AS(field_add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(field_mul(a, b), std::invalid_argument);
}

TEST_CASE("inverses") {
    CHECK(field_inverse({2, 29}).value == 15);
    CHECK(field_inverse({1, 29}).value == 1);
    CHECK_THROWS_AS(field_inverse({0, 29}), std::domain_error);
    CHECK_THROWS_AS(field_inverse({0, 7}), std::domain_error);
}

TEST_CASE("PrimeField rejects composite moduli") {
    CHECK_THROWS_AS(PrimeField(1), std::invalid_argument);
    CHECK_THROWS_AS(PrimeField(28), std::invalid_argument);
    CHECK_NOTHROW(PrimeField(2));
    CHECK_NOTHROW(PrimeField(29));
}

TEST_CASE("field axioms hold exhaustively for p in {5,7,11,29}") {
    for (uint32_t p : {5u, 7u, 11u, 29u}) {
        PrimeField f(p);
        for (uint32_t a = 0; a < p; ++a) {
            if (a != 0) CHECK(f.mul(a, f.inv(a)) == 1);
            for (uint32_t b = 0; b < p; ++b) {
                CHECK(f.add(a, b) == f.add(b, a));
                CHECK(f.mul(a, b) == f.mul(b, a));
                for (uint32_t c = 0; c < p; ++c) {
                    CHECK(f.add(f.add(a, b), c) == f.add(a, f.add(b, c)));
                    CHECK(f.mul(f.mul(a, b), c) == f.mul(a, f.mul(b, c)));
                    CHECK(f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c)));
                }
            }
        }
    }
}

TEST_CASE("log table for p=29, base 27 matches the published map") {
    LogTable table(29, 27);
    const std::array<uint32_t, 29> expected = {0,  28, 15, 19, 2,  22, 6,  12, 17, 10,
                                               9,  11, 21, 18, 27, 13, 4,  7,  25, 23,
                                               24, 3,  26, 20, 8,  16, 5,  1,  14};
    for (uint32_t n = 0; n < 29; ++n) CHECK(table.log(n) == expected[n]);
    CHECK(table.log(0) == 0);
    CHECK(LogTable::is_convention_zero(0));
    CHECK_FALSE(LogTable::is_convention_zero(5));
}

TEST_CASE("log table invariants") {
    for (uint32_t p : {5u, 7u, 11u, 29u}) {
        LogTable table = LogTable::with_default_base(p);
        PrimeField f(p);
        std::vector<bool> seen(p, false);
        for (uint32_t n = 1; n < p; ++n) {
            const uint32_t e = table.log(n);
            CHECK(e >= 1);
            CHECK(e <= p - 1);
            CHECK(f.pow(table.base(), e) == n);
            CHECK_FALSE(seen[e]);
            seen[e] = true;
        }
    }
    CHECK(LogTable::with_default_base(29).base() == 27);
    CHECK_THROWS_AS(LogTable(29, 28), std::invalid_argument); // 28 = -1 has order 2
}

TEST_CASE("log table CSV export") {
    LogTable table(5, 2);
    std::stringstream ss;
    table.write_csv(ss);
    CHECK(ss.str() == "n,log\n0,0\n1,4\n2,1\n3,3\n4,2\n");
}

TEST_CASE("solve_linear_mod_p canonical cases") {
    PrimeField f29(29);
    auto sol = solve_linear_mod_p(f29, {{1, 0}, {0, 1}}, {4, 6});
    REQUIRE(sol.has_value());
    CHECK(*sol == std::vector<uint32_t>{4, 6});

    auto scalar = solve_linear_mod_p(f29, {{2, 3}}, {4, 6});
    REQUIRE(scalar.has_value());
    CHECK(*scalar == std::vector<uint32_t>{2});

    PrimeField f5(5);
    // Parallel columns, target off the line; brute force over all 25 pairs
    // confirms there is no solution.
    CHECK(!brute_force_solve(f5, {{1, 2}, {2, 4}}, {0, 1}).has_value());
    CHECK(!solve_linear_mod_p(f5, {{1, 2}, {2, 4}}, {0, 1}).has_value());

    CHECK_THROWS_AS(solve_linear_mod_p(f29, {}, {0, 0}), std::invalid_argument);
}

TEST_CASE("solve_linear_mod_p agrees with brute-force enumeration") {
    Rng rng(20240817);
    for (uint32_t p : {5u, 7u}) {
        PrimeField f(p);
        for (int k = 1; k <= 3; ++k) {
            for (int trial = 0; trial < 60; ++trial) {
                std::vector<std::array<uint32_t, 2>> cols(static_cast<size_t>(k));
                for (auto& c : cols) c = {rng.below_u32(p), rng.below_u32(p)};
                std::array<uint32_t, 2> target = {rng.below_u32(p), rng.below_u32(p)};
                auto fast = solve_linear_mod_p(f, cols, target);
                auto brute = brute_force_solve(f, cols, target);
                CHECK(fast.has_value() == brute.has_value());
                if (fast) {
                    uint32_t r0 = 0, r1 = 0;
                    for (size_t j = 0; j < cols.size(); ++j) {
                        r0 = f.add(r0, f.mul((*fast)[j], cols[j][0]));
                        r1 = f.add(r1, f.mul((*fast)[j], cols[j][1]));
                    }
                    CHECK(r0 == target[0]);
                    CHECK(r1 == target[1]);
                }
            }
        }
    }
}

TEST_CASE("primitive root discovery") {
    CHECK(smallest_primitive_root(5) == 2);
    CHECK(smallest_primitive_root(7) == 3);
    CHECK(smallest_primitive_root(11) == 2);
    CHECK(smallest_primitive_root(29) == 2);
    PrimeField f29(29);
    CHECK(is_primitive_root(f29, 27));
    CHECK_FALSE(is_primitive_root(f29, 1));
}
