#pragma once

#include <algorithm>
#include <cstddef>

#include "fastnn/parallel.hpp"
#include "fastnn/simd.hpp"
#include "fastnn/tensor.hpp"

namespace fastnn {

struct GemmFlags {
    bool transpose_a = false;
    bool transpose_b = false;
};

// largest extent still served by the sequential small-matrix kernel
constexpr std::size_t kSmallMatrixMax = 64;

namespace detail {

// Vector loops run over logical extents with masked tails; the physical
// stride only affects addressing, so padded and unpadded operands produce
// bitwise-identical results.

#ifdef FASTNN_AVX2

// C[i][:] += over k of a_at(i,k) * B[k][:], rows [i0, i1), axpy style.
// A_T selects A[k][i] (transpose_a) over A[i][k].
template <bool A_T>
inline void mm_axpy_rows(const float* A, std::size_t lda, const float* B, std::size_t ldb, float* C, std::size_t ldc,
                         std::size_t i0, std::size_t i1, std::size_t K, std::size_t N, bool pair_rows) {
    const std::size_t jt = N / 8 * 8;
    const __m256i jm = tail_mask8(N - jt);
    auto a_at = [&](std::size_t i, std::size_t k) { return A_T ? A[k * lda + i] : A[i * lda + k]; };
    std::size_t i = i0;
    if (pair_rows) {
        for (; i + 2 <= i1; i += 2) {
            float* c0 = C + i * ldc;
            float* c1 = c0 + ldc;
            for (std::size_t j = 0; j < jt; j += 8) {
                __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
                for (std::size_t k = 0; k < K; ++k) {
                    const __m256 b = _mm256_loadu_ps(B + k * ldb + j);
                    acc0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i, k)), b, acc0);
                    acc1 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i + 1, k)), b, acc1);
                }
                _mm256_storeu_ps(c0 + j, acc0);
                _mm256_storeu_ps(c1 + j, acc1);
            }
            if (jt < N) {
                __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
                for (std::size_t k = 0; k < K; ++k) {
                    const __m256 b = _mm256_maskload_ps(B + k * ldb + jt, jm);
                    acc0 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i, k)), b, acc0);
                    acc1 = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i + 1, k)), b, acc1);
                }
                _mm256_maskstore_ps(c0 + jt, jm, acc0);
                _mm256_maskstore_ps(c1 + jt, jm, acc1);
            }
        }
    }
    for (; i < i1; ++i) {
        float* c0 = C + i * ldc;
        for (std::size_t j = 0; j < jt; j += 8) {
            __m256 acc = _mm256_setzero_ps();
            for (std::size_t k = 0; k < K; ++k)
                acc = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i, k)), _mm256_loadu_ps(B + k * ldb + j), acc);
            _mm256_storeu_ps(c0 + j, acc);
        }
        if (jt < N) {
            __m256 acc = _mm256_setzero_ps();
            for (std::size_t k = 0; k < K; ++k)
                acc = _mm256_fmadd_ps(_mm256_set1_ps(a_at(i, k)), _mm256_maskload_ps(B + k * ldb + jt, jm), acc);
            _mm256_maskstore_ps(c0 + jt, jm, acc);
        }
    }
}

// C[i][j] = dot(A.row(i), B.row(j)) for rows [i0, i1); B holds op(B) rows (N x K).
inline void mm_dot_rows(const float* A, std::size_t lda, const float* B, std::size_t ldb, float* C, std::size_t ldc,
                        std::size_t i0, std::size_t i1, std::size_t K, std::size_t N, bool block_cols) {
    const std::size_t kt = K / 8 * 8;
    const __m256i km = tail_mask8(K - kt);
    for (std::size_t i = i0; i < i1; ++i) {
        const float* a = A + i * lda;
        float* c = C + i * ldc;
        std::size_t j = 0;
        if (block_cols) {
            for (; j + 4 <= N; j += 4) {
                const float* b0 = B + j * ldb;
                const float* b1 = b0 + ldb;
                const float* b2 = b1 + ldb;
                const float* b3 = b2 + ldb;
                __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
                __m256 acc2 = _mm256_setzero_ps(), acc3 = _mm256_setzero_ps();
                for (std::size_t k = 0; k < kt; k += 8) {
                    const __m256 av = _mm256_loadu_ps(a + k);
                    acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + k), acc0);
                    acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + k), acc1);
                    acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + k), acc2);
                    acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + k), acc3);
                }
                if (kt < K) {
                    const __m256 av = _mm256_maskload_ps(a + kt, km);
                    acc0 = _mm256_fmadd_ps(av, _mm256_maskload_ps(b0 + kt, km), acc0);
                    acc1 = _mm256_fmadd_ps(av, _mm256_maskload_ps(b1 + kt, km), acc1);
                    acc2 = _mm256_fmadd_ps(av, _mm256_maskload_ps(b2 + kt, km), acc2);
                    acc3 = _mm256_fmadd_ps(av, _mm256_maskload_ps(b3 + kt, km), acc3);
                }
                c[j] = hsum8(acc0);
                c[j + 1] = hsum8(acc1);
                c[j + 2] = hsum8(acc2);
                c[j + 3] = hsum8(acc3);
            }
        }
        for (; j < N; ++j) {
            const float* b = B + j * ldb;
            __m256 acc = _mm256_setzero_ps();
            for (std::size_t k = 0; k < kt; k += 8) acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), acc);
            if (kt < K) acc = _mm256_fmadd_ps(_mm256_maskload_ps(a + kt, km), _mm256_maskload_ps(b + kt, km), acc);
            c[j] = hsum8(acc);
        }
    }
}

#else  // scalar fallbacks

template <bool A_T>
inline void mm_axpy_rows(const float* A, std::size_t lda, const float* B, std::size_t ldb, float* C, std::size_t ldc,
                         std::size_t i0, std::size_t i1, std::size_t K, std::size_t N, bool) {
    for (std::size_t i = i0; i < i1; ++i) {
        float* c = C + i * ldc;
        for (std::size_t j = 0; j < N; ++j) c[j] = 0.0f;
        for (std::size_t k = 0; k < K; ++k) {
            const float a = A_T ? A[k * lda + i] : A[i * lda + k];
            const float* b = B + k * ldb;
            for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

inline void mm_dot_rows(const float* A, std::size_t lda, const float* B, std::size_t ldb, float* C, std::size_t ldc,
                        std::size_t i0, std::size_t i1, std::size_t K, std::size_t N, bool) {
    for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            float acc = 0.0f;
            const float* a = A + i * lda;
            const float* b = B + j * ldb;
            for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
            C[i * ldc + j] = acc;
        }
}

#endif  // FASTNN_AVX2

struct GemmDims {
    std::size_t m, k, n;
};

inline GemmDims gemm_check(const Tensor& a, const Tensor& b, GemmFlags flags) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("gemm expects rank-2 tensors");
    const std::size_t m = flags.transpose_a ? a.dim(1) : a.dim(0);
    const std::size_t ka = flags.transpose_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = flags.transpose_b ? b.dim(1) : b.dim(0);
    const std::size_t n = flags.transpose_b ? b.dim(0) : b.dim(1);
    if (ka != kb)
        throw ShapeError("gemm inner extents disagree: " + std::to_string(ka) + " vs " + std::to_string(kb));
    return {m, ka, n};
}

inline Tensor transposed_copy(const Tensor& a) {
    Tensor t = make_tensor({static_cast<long long>(a.dim(1)), static_cast<long long>(a.dim(0))});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

// sequential kernel for matrices with every extent <= kSmallMatrixMax
inline Tensor gemm_small(const Tensor& a, const Tensor& b, GemmFlags flags) {
    const GemmDims d = gemm_check(a, b, flags);
    if (flags.transpose_a && flags.transpose_b) return gemm_small(transposed_copy(a), b, {false, true});
    Tensor c = make_tensor({static_cast<long long>(d.m), static_cast<long long>(d.n)});
    if (!flags.transpose_a && flags.transpose_b)
        mm_dot_rows(a.data(), a.stride_last(), b.data(), b.stride_last(), c.data(), c.stride_last(), 0, d.m, d.k, d.n,
                    /*block_cols=*/false);
    else if (flags.transpose_a)
        mm_axpy_rows<true>(a.data(), a.stride_last(), b.data(), b.stride_last(), c.data(), c.stride_last(), 0, d.m, d.k,
                           d.n, /*pair_rows=*/false);
    else
        mm_axpy_rows<false>(a.data(), a.stride_last(), b.data(), b.stride_last(), c.data(), c.stride_last(), 0, d.m, d.k,
                            d.n, /*pair_rows=*/false);
    return c;
}

// row-blocked kernel, parallel over output rows
inline Tensor gemm_blocked(const Tensor& a, const Tensor& b, GemmFlags flags) {
    const GemmDims d = gemm_check(a, b, flags);
    if (flags.transpose_a && flags.transpose_b) return gemm_blocked(transposed_copy(a), b, {false, true});
    Tensor c = make_tensor({static_cast<long long>(d.m), static_cast<long long>(d.n)});
    const float* A = a.data();
    const float* B = b.data();
    float* C = c.data();
    const std::size_t lda = a.stride_last(), ldb = b.stride_last(), ldc = c.stride_last();
    if (!flags.transpose_a && flags.transpose_b) {
        parallel_for(0, d.m, [&](std::size_t lo, std::size_t hi) {
            mm_dot_rows(A, lda, B, ldb, C, ldc, lo, hi, d.k, d.n, /*block_cols=*/true);
        });
    } else if (flags.transpose_a) {
        parallel_for(0, d.m, [&](std::size_t lo, std::size_t hi) {
            mm_axpy_rows<true>(A, lda, B, ldb, C, ldc, lo, hi, d.k, d.n, /*pair_rows=*/true);
        });
    } else {
        parallel_for(0, d.m, [&](std::size_t lo, std::size_t hi) {
            mm_axpy_rows<false>(A, lda, B, ldb, C, ldc, lo, hi, d.k, d.n, /*pair_rows=*/true);
        });
    }
    return c;
}

}  // namespace detail

// C = op(A) . op(B); small shapes take a sequential hand-vectorized kernel,
// larger ones the row-blocked parallel kernel.
inline Tensor gemm(const Tensor& a, const Tensor& b, GemmFlags flags = {}) {
    const detail::GemmDims d = detail::gemm_check(a, b, flags);
    const std::size_t widest = std::max(std::max(d.m, d.k), d.n);
    return widest <= kSmallMatrixMax ? detail::gemm_small(a, b, flags) : detail::gemm_blocked(a, b, flags);
}

}  // namespace fastnn
