// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "oatok/common.hpp"
#include "oatok/fsq.hpp"
#include "oatok/random.hpp"

using namespace oatok;
using namespace oatok::fsq;

namespace {

const std::vector<FsqLevels> kTableLevels{{{8, 6, 5}}, {{8, 8, 8}}, {{8, 5, 5, 5}}, {{8, 8, 6, 5}}, {{7, 5, 5, 5, 5}}};

// Independent re-statement of the bound: (tanh z + 1) / 2 * (L - 1).
double oracle_bound(double z, int L) { return (std::tanh(z) + 1.0) / 2.0 * (L - 1); }

}  // namespace

TEST_CASE("codebook sizes") {
    const std::size_t want[] = {240, 512, 1000, 1920, 4375};
    for (std::size_t i = 0; i < kTableLevels.size(); ++i) CHECK(codebook_size(kTableLevels[i]) == want[i]);
    CHECK(codebook_size(FsqLevels{{2}}) == 2);
    CHECK_THROWS_AS(codebook_size(FsqLevels{{}}), ConfigError);
    CHECK_THROWS_AS(codebook_size(FsqLevels{{8, 1}}), ConfigError);
}

TEST_CASE("bound at zero and in the limits") {
    const FsqLevels levels{{8, 5, 5, 5}};
    const std::vector<double> zero(4, 0.0);
    const auto b = fsq_bound(zero, levels);
    CHECK(b == std::vector<double>{3.5, 2.0, 2.0, 2.0});
    const auto q = fsq_quantize(zero, levels);
    CHECK(q.code == FsqCode{4, 2, 2, 2});
    const auto hi = fsq_bound(std::vector<double>(4, 40.0), levels);
    const auto lo = fsq_bound(std::vector<double>(4, -40.0), levels);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(hi[c] == doctest::Approx(levels.L[c] - 1));
        CHECK(lo[c] == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS(fsq_bound(std::vector<double>(3, 0.0), levels), ShapeError);
    CHECK_THROWS_AS(fsq_quantize(std::vector<double>{0, 0, NAN, 0}, levels), InvalidInputError);
}

TEST_CASE("mixed radix extremes and worked index") {
    const FsqLevels levels{{8, 5, 5, 5}};
    CHECK(code_to_index(FsqCode{0, 0, 0, 0}, levels) == 0);
    CHECK(code_to_index(FsqCode{7, 4, 4, 4}, levels) == 7 + 4 * 8 + 4 * 40 + 4 * 200);
    CHECK(code_to_index(FsqCode{7, 4, 4, 4}, levels) == 999);
    CHECK_THROWS_AS(code_to_index(FsqCode{8, 0, 0, 0}, levels), BoundsError);
    CHECK_THROWS_AS(index_to_code(1000, levels), BoundsError);
    CHECK_THROWS_AS(index_to_code(-1, levels), BoundsError);
}

TEST_CASE("code/index bijection is exhaustive for every level set") {
    for (const auto& levels : kTableLevels) {
        const auto n = static_cast<TokenId>(codebook_size(levels));
        std::set<FsqCode> seen;
        for (TokenId i = 0; i < n; ++i) {
            const auto code = index_to_code(i, levels);
            REQUIRE(code_to_index(code, levels) == i);
            seen.insert(code);
        }
        CHECK(seen.size() == static_cast<std::size_t>(n));
    }
}

TEST_CASE("quantizing a code's pre-image returns the code") {
    for (const auto& levels : kTableLevels) {
        const auto n = static_cast<TokenId>(codebook_size(levels));
        for (TokenId i = 0; i < n; i += 7) {
            const auto code = index_to_code(i, levels);
            const auto e = code_embedding(code, levels);
            std::vector<double> z(e.size());
            // e is the centered bound of the pre-image: e = tanh(z).
            for (std::size_t c = 0; c < e.size(); ++c) z[c] = std::atanh(std::clamp(e[c], -1.0 + 1e-12, 1.0 - 1e-12));
            const auto q = fsq_quantize(z, levels);
            CHECK(q.code == code);
            CHECK(q.index == i);
        }
    }
}

TEST_CASE("surrogate derivatives match central differences") {
    Rng rng(21);
    const double h = 1e-5;
    for (const auto& levels : kTableLevels) {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<double> z(levels.dims());
            for (auto& v : z) v = 1.5 * rng.normal();
            const auto db = fsq_bound_derivative(z, levels);
            const auto ds = fsq_surrogate_derivative(z, levels);
            const auto q = fsq_quantize(z, levels);
            for (std::size_t c = 0; c < z.size(); ++c) {
                auto zp = z, zm = z;
                zp[c] += h;
                zm[c] -= h;
                const double fd_b = (oracle_bound(zp[c], levels.L[c]) - oracle_bound(zm[c], levels.L[c])) / (2 * h);
                const double fd_s = (fsq_surrogate(zp, levels)[c] - fsq_surrogate(zm, levels)[c]) / (2 * h);
                CHECK(std::abs(db[c] - fd_b) <= 1e-6 * std::abs(fd_b));
                CHECK(std::abs(ds[c] - fd_s) <= 1e-6 * std::abs(fd_s));
                CHECK(ds[c] > 0.0);
                CHECK(q.ste_grad[c] == doctest::Approx(ds[c]).epsilon(1e-12));
            }
        }
    }
    // At zero the bound slope is (L - 1) / 2.
    const FsqLevels levels{{8, 5, 5, 5}};
    const auto d0 = fsq_bound_derivative(std::vector<double>(4, 0.0), levels);
    CHECK(d0[0] == doctest::Approx(3.5));
    CHECK(d0[1] == doctest::Approx(2.0));
}

TEST_CASE("quantize agrees with bound-then-round") {
    Rng rng(4);
    const FsqLevels levels{{8, 5, 5, 5}};
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> z(4);
        for (auto& v : z) v = 2.0 * rng.normal();
        const auto q = fsq_quantize(z, levels);
        for (std::size_t c = 0; c < 4; ++c) {
            const double b = oracle_bound(z[c], levels.L[c]);
            CHECK(q.code[c] == static_cast<int>(std::round(b)));
            CHECK(q.ste_value[c] == doctest::Approx(2.0 * q.code[c] / (levels.L[c] - 1) - 1.0));
        }
        CHECK(q.index == code_to_index(q.code, levels));
    }
}
