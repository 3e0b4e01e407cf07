#pragma once

#include <cstddef>
#include <cstdint>

#include "fastnn/config.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#define FASTNN_AVX2 1
#include <immintrin.h>
#endif

namespace fastnn {
namespace detail {

#ifdef FASTNN_AVX2

// mask with the first r of 8 lanes active (r in [0, 8])
inline __m256i tail_mask8(std::size_t r) {
    alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - r));
}

// fixed-tree horizontal sum so results do not depend on surrounding code
inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);             // (0+4, 1+5, 2+6, 3+7)
    __m128 sh = _mm_movehl_ps(s, s);           // (2+6, 3+7, ., .)
    s = _mm_add_ps(s, sh);                     // (0+4+2+6, 1+5+3+7, ., .)
    sh = _mm_shuffle_ps(s, s, 0x1);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
}

#endif  // FASTNN_AVX2

}  // namespace detail
}  // namespace fastnn
