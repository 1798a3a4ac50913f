// SPDX-License-Identifier: Apache-2.0
#include "oatok/nn/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

#include "oatok/common.hpp"

namespace oatok::nn::kernels {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    for (std::size_t i = 0; i < n; ++i) {
        float* c = C + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const float a = A[i * k + p];
            const float* b = B + p * m;
            for (std::size_t j = 0; j < m; ++j) c[j] += a * b[j];
        }
    }
}

void gemm_nt_scalar(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) C[i * m + j] += dot_scalar(A + i * k, B + j * k, k);
    }
}

void gemm_tn_scalar(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    for (std::size_t i = 0; i < n; ++i) {
        const float* b = B + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const float a = A[i * k + p];
            float* c = C + p * m;
            for (std::size_t j = 0; j < m; ++j) c[j] += a * b[j];
        }
    }
}

const KernelTable kScalar{"scalar", Isa::Scalar, dot_scalar, axpy_scalar, gemm_nn_scalar, gemm_nt_scalar,
                          gemm_tn_scalar};

const KernelTable* table_for(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return &kScalar;
        case Isa::Avx2: return avx2_table();
        case Isa::Neon: return neon_table();
    }
    return nullptr;
}

const KernelTable* detect() {
    if (const char* env = std::getenv("OATOK_KERNELS")) {
        const std::string_view want(env);
        for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
            if (want == to_string(isa)) {
                if (const auto* t = table_for(isa)) return t;
            }
        }
    }
    if (const auto* t = avx2_table()) return t;
    if (const auto* t = neon_table()) return t;
    return &kScalar;
}

std::atomic<const KernelTable*>& active_slot() {
    static std::atomic<const KernelTable*> slot{detect()};
    return slot;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* avx2_table() { return detail::avx2_table_impl(); }
const KernelTable* neon_table() { return detail::neon_table_impl(); }

bool available(Isa isa) { return table_for(isa) != nullptr; }

std::vector<Isa> available_isas() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
        if (available(isa)) out.push_back(isa);
    }
    return out;
}

std::string to_string(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "?";
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void set_active(Isa isa) {
    const auto* t = table_for(isa);
    if (t == nullptr) throw ConfigError("kernel variant '" + to_string(isa) + "' is not available on this CPU");
    active_slot().store(t, std::memory_order_release);
}

}  // namespace oatok::nn::kernels
