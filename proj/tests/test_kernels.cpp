// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "oatok/nn/kernels.hpp"
#include "oatok/random.hpp"

using namespace oatok;
namespace k = oatok::nn::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

void require_close(const std::vector<float>& got, const std::vector<float>& want, double tol) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        INFO("index " << i);
        REQUIRE(std::abs(got[i] - want[i]) <= tol * (1.0 + std::abs(want[i])));
    }
}

std::vector<const k::KernelTable*> vector_tables() {
    std::vector<const k::KernelTable*> out;
    if (auto* t = k::avx2_table()) out.push_back(t);
    if (auto* t = k::neon_table()) out.push_back(t);
    return out;
}

}  // namespace

TEST_CASE("scalar table is always available and listed") {
    CHECK(k::available(k::Isa::Scalar));
    auto isas = k::available_isas();
    CHECK(std::find(isas.begin(), isas.end(), k::Isa::Scalar) != isas.end());
    CHECK(k::to_string(k::Isa::Scalar) == "scalar");
}

TEST_CASE("scalar gemm matches a triple loop") {
    Rng rng(1);
    const std::size_t n = 5, kk = 7, m = 3;
    auto A = random_vec(n * kk, rng), B = random_vec(kk * m, rng);
    std::vector<float> C(n * m, 0.5f), want(n * m, 0.5f);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < kk; ++p) acc += double(A[i * kk + p]) * B[p * m + j];
            want[i * m + j] += static_cast<float>(acc);
        }
    k::scalar_table().gemm_nn(n, kk, m, A.data(), B.data(), C.data());
    require_close(C, want, 1e-5);
}

TEST_CASE("vector kernels match the scalar reference") {
    const auto tables = vector_tables();
    if (tables.empty()) {
        MESSAGE("no vector kernel variant on this machine");
        return;
    }
    const auto& ref = k::scalar_table();
    Rng rng(42);
    const std::size_t sizes[] = {1, 2, 3, 7, 8, 9, 15, 16, 17, 31, 33, 64, 70};
    for (const auto* t : tables) {
        CAPTURE(t->name);
        for (std::size_t n : sizes) {
            auto a = random_vec(n, rng), b = random_vec(n, rng);
            const float d_ref = ref.dot(a.data(), b.data(), n);
            CHECK(std::abs(t->dot(a.data(), b.data(), n) - d_ref) <= 1e-5 * (n + std::abs(d_ref)));
            auto y1 = b, y2 = b;
            ref.axpy(0.37f, a.data(), y1.data(), n);
            t->axpy(0.37f, a.data(), y2.data(), n);
            require_close(y2, y1, 1e-6);
        }
        for (std::size_t n : {1, 5, 6, 13}) {
            for (std::size_t kk : {1, 4, 17, 32}) {
                for (std::size_t m : {1, 15, 16, 33, 70}) {
                    CAPTURE(n);
                    CAPTURE(kk);
                    CAPTURE(m);
                    const double tol = 1e-5 * std::sqrt(double(kk));
                    auto A = random_vec(n * kk, rng);
                    auto Bnn = random_vec(kk * m, rng);
                    auto Bnt = random_vec(m * kk, rng);
                    auto Btn = random_vec(n * m, rng);
                    auto C0 = random_vec(n * m, rng);
                    auto c1 = C0, c2 = C0;
                    ref.gemm_nn(n, kk, m, A.data(), Bnn.data(), c1.data());
                    t->gemm_nn(n, kk, m, A.data(), Bnn.data(), c2.data());
                    require_close(c2, c1, tol);
                    c1 = C0;
                    c2 = C0;
                    ref.gemm_nt(n, kk, m, A.data(), Bnt.data(), c1.data());
                    t->gemm_nt(n, kk, m, A.data(), Bnt.data(), c2.data());
                    require_close(c2, c1, tol);
                    auto D0 = random_vec(kk * m, rng);
                    auto d1 = D0, d2 = D0;
                    ref.gemm_tn(n, kk, m, A.data(), Btn.data(), d1.data());
                    t->gemm_tn(n, kk, m, A.data(), Btn.data(), d2.data());
                    require_close(d2, d1, tol);
                }
            }
        }
    }
}

TEST_CASE("set_active switches the dispatch target") {
    const auto before = k::active().isa;
    k::set_active(k::Isa::Scalar);
    CHECK(k::active().isa == k::Isa::Scalar);
    for (auto isa : k::available_isas()) {
        k::set_active(isa);
        CHECK(k::active().isa == isa);
    }
    if (!k::available(k::Isa::Neon)) CHECK_THROWS(k::set_active(k::Isa::Neon));
    k::set_active(before);
}
