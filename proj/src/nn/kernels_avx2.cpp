// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma. Nothing here may run before the runtime CPU
// check in avx2_table_impl() has passed.
#include "oatok/nn/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <vector>

namespace oatok::nn::kernels::detail {
namespace {

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// R x (8 * W) register block: C rows += sum_p A(r, p) * B(p, cols). The A
// element for (row r, step p) lives at a[r * a_row + p * a_col], which lets
// gemm_tn read A transposed without a copy.
template <int R, int W>
inline void micro(std::size_t k, const float* a, std::size_t a_row, std::size_t a_col, const float* B,
                  std::size_t ldb, float* C, std::size_t ldc) {
    __m256 acc[R][W];
    for (int r = 0; r < R; ++r) {
        for (int w = 0; w < W; ++w) acc[r][w] = _mm256_loadu_ps(C + r * ldc + 8 * w);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const float* b = B + p * ldb;
        __m256 bv[W];
        for (int w = 0; w < W; ++w) bv[w] = _mm256_loadu_ps(b + 8 * w);
        const float* ap = a + p * a_col;
        for (int r = 0; r < R; ++r) {
            const __m256 x = _mm256_broadcast_ss(ap + r * a_row);
            for (int w = 0; w < W; ++w) acc[r][w] = _mm256_fmadd_ps(x, bv[w], acc[r][w]);
        }
    }
    for (int r = 0; r < R; ++r) {
        for (int w = 0; w < W; ++w) _mm256_storeu_ps(C + r * ldc + 8 * w, acc[r][w]);
    }
}

template <int W>
inline void micro_rows(std::size_t rows, std::size_t k, const float* a, std::size_t a_row, std::size_t a_col,
                       const float* B, std::size_t ldb, float* C, std::size_t ldc) {
    switch (rows) {
        case 6: micro<6, W>(k, a, a_row, a_col, B, ldb, C, ldc); break;
        case 5: micro<5, W>(k, a, a_row, a_col, B, ldb, C, ldc); break;
        case 4: micro<4, W>(k, a, a_row, a_col, B, ldb, C, ldc); break;
        case 3: micro<3, W>(k, a, a_row, a_col, B, ldb, C, ldc); break;
        case 2: micro<2, W>(k, a, a_row, a_col, B, ldb, C, ldc); break;
        case 1: micro<1, W>(k, a, a_row, a_col, B, ldb, C, ldc); break;
        default: break;
    }
}

// Shared driver for gemm_nn (a_row = k, a_col = 1) and gemm_tn (a_row = 1,
// a_col = row stride of the stored A).
void gemm_rows_block(std::size_t rows, std::size_t k, std::size_t m, const float* A, std::size_t a_row,
                     std::size_t a_col, const float* B, float* C) {
    // Column panels outermost so one packed k x 16 slice of B stays in L1
    // while every row block streams past it.
    thread_local std::vector<float> panel;
    const std::size_t m16 = m - m % 16;
    const std::size_t m8 = m - m % 8;
    panel.resize(k * 16);
    for (std::size_t j = 0; j < m16; j += 16) {
        for (std::size_t p = 0; p < k; ++p) {
            _mm256_storeu_ps(panel.data() + p * 16, _mm256_loadu_ps(B + p * m + j));
            _mm256_storeu_ps(panel.data() + p * 16 + 8, _mm256_loadu_ps(B + p * m + j + 8));
        }
        for (std::size_t i = 0; i < rows; i += 6) {
            const std::size_t r = rows - i < 6 ? rows - i : 6;
            micro_rows<2>(r, k, A + i * a_row, a_row, a_col, panel.data(), 16, C + i * m + j, m);
        }
    }
    if (m8 > m16) {
        for (std::size_t i = 0; i < rows; i += 6) {
            const std::size_t r = rows - i < 6 ? rows - i : 6;
            micro_rows<1>(r, k, A + i * a_row, a_row, a_col, B + m16, m, C + i * m + m16, m);
        }
    }
    if (m8 == m) return;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const float x = A[i * a_row + p * a_col];
            const float* b = B + p * m;
            for (std::size_t j = m8; j < m; ++j) C[i * m + j] += x * b[j];
        }
    }
}

void gemm_rows(std::size_t rows, std::size_t k, std::size_t m, const float* A, std::size_t a_row, std::size_t a_col,
               const float* B, float* C) {
    constexpr std::size_t kc = 256;
    for (std::size_t p = 0; p < k; p += kc) {
        const std::size_t len = k - p < kc ? k - p : kc;
        gemm_rows_block(rows, len, m, A + p * a_col, a_row, a_col, B + p * m, C);
    }
}

void gemm_nn_avx2(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    gemm_rows(n, k, m, A, k, 1, B, C);
}

void gemm_tn_avx2(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    // C[k x m] += A^T B: output row p reads column p of A.
    gemm_rows(k, n, m, A, 1, k, B, C);
}

void gemm_nt_avx2(std::size_t n, std::size_t k, std::size_t m, const float* A, const float* B, float* C) {
    // Transpose B (m x k) once, then run the row-panel kernel.
    thread_local std::vector<float> bt;
    bt.resize(k * m);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t p = 0; p < k; ++p) bt[p * m + j] = B[j * k + p];
    }
    gemm_rows(n, k, m, A, k, 1, bt.data(), C);
}

const KernelTable kAvx2{"avx2", Isa::Avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};

}  // namespace

const KernelTable* avx2_table_impl() {
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok ? &kAvx2 : nullptr;
}

}  // namespace oatok::nn::kernels::detail

#else

namespace oatok::nn::kernels::detail {
const KernelTable* avx2_table_impl() { return nullptr; }
}  // namespace oatok::nn::kernels::detail

#endif
