// SPDX-License-Identifier: Apache-2.0
#include "oatok/nn/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace oatok::nn::kernels::detail {
namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
        acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
    const float32x4_t va = vdupq_n_f32(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_neon(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) axpy_neon(A[i * k + p], B + p * m, C + i * m, m);
    }
}

void gemm_nt_neon(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) C[i * m + j] += dot_neon(A + i * k, B + j * k, k);
    }
}

void gemm_tn_neon(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) axpy_neon(A[i * k + p], B + i * m, C + p * m, m);
    }
}

const KernelTable kNeon{"neon", Isa::Neon, dot_neon, axpy_neon, gemm_nn_neon, gemm_nt_neon, gemm_tn_neon};

}  // namespace

// NEON is mandatory on AArch64.
const KernelTable* neon_table_impl() { return &kNeon; }

}  // namespace oatok::nn::kernels::detail

#else

namespace oatok::nn::kernels::detail {
const KernelTable* neon_table_impl() { return nullptr; }
}  // namespace oatok::nn::kernels::detail

#endif
