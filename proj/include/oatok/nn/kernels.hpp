// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace oatok::nn::kernels {

// Inner loops of the network. Every entry has a portable scalar reference;
// AVX2+FMA (x86-64) and NEON (AArch64) variants are selected at runtime and
// tested for equivalence against the reference.
//
// Matrix arguments are dense row-major float arrays. All gemm variants
// accumulate into C.
enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
    const char* name;
    Isa isa;
    float (*dot)(const float* a, const float* b, std::size_t n);
    /// y += alpha * x
    void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
    /// C[n x m] += A[n x k] * B[k x m]
    void (*gemm_nn)(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C);
    /// C[n x m] += A[n x k] * B[m x k]^T
    void (*gemm_nt)(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C);
    /// C[k x m] += A[n x k]^T * B[n x m]
    void (*gemm_tn)(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C);
};

const KernelTable& scalar_table();
/// nullptr when the variant is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

bool available(Isa isa);
std::vector<Isa> available_isas();
std::string to_string(Isa isa);

/// Selected once: OATOK_KERNELS=scalar|avx2|neon overrides detection,
/// otherwise the widest available variant wins.
const KernelTable& active();

/// Test hook. Throws ConfigError when the variant is unavailable.
void set_active(Isa isa);

inline float dot(const float* a, const float* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(float alpha, const float* x, float* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    active().gemm_nn(n, k, m, A, B, C);
}
inline void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    active().gemm_nt(n, k, m, A, B, C);
}
inline void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    active().gemm_tn(n, k, m, A, B, C);
}

namespace detail {
// Defined in the per-ISA translation units.
const KernelTable* avx2_table_impl();
const KernelTable* neon_table_impl();
}  // namespace detail

}  // namespace oatok::nn::kernels
