// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "kernels_internal.hpp"

#include <immintrin.h>

namespace dex::simd::detail {

namespace {

// Packs four 8x32-bit compare results (all-ones / zero lanes) into 32 bytes
// of 0x01 / 0x00 in source order.
inline __m256i pack_compare_bytes(__m256i a, __m256i b, __m256i c, __m256i d)
{
    const __m256i ab = _mm256_packs_epi32(a, b);
    const __m256i cd = _mm256_packs_epi32(c, d);
    const __m256i abcd = _mm256_packs_epi16(ab, cd);
    // packs interleave per 128-bit lane; restore element order
    const __m256i order = _mm256_setr_epi32(0, 4, 1, 5, 2, 6, 3, 7);
    const __m256i ordered = _mm256_permutevar8x32_epi32(abcd, order);
    return _mm256_and_si256(ordered, _mm256_set1_epi8(1));
}

template <bool Equal>
void mask_compare_avx2(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    const __m256i needle = _mm256_set1_epi32(static_cast<int>(value));
    std::size_t i = 0;
    for (; i + 32 <= n; i += 32)
    {
        const auto* src = reinterpret_cast<const __m256i*>(codes + i);
        __m256i c0 = _mm256_cmpeq_epi32(_mm256_loadu_si256(src + 0), needle);
        __m256i c1 = _mm256_cmpeq_epi32(_mm256_loadu_si256(src + 1), needle);
        __m256i c2 = _mm256_cmpeq_epi32(_mm256_loadu_si256(src + 2), needle);
        __m256i c3 = _mm256_cmpeq_epi32(_mm256_loadu_si256(src + 3), needle);
        if constexpr (!Equal)
        {
            const __m256i ones = _mm256_set1_epi32(-1);
            c0 = _mm256_xor_si256(c0, ones);
            c1 = _mm256_xor_si256(c1, ones);
            c2 = _mm256_xor_si256(c2, ones);
            c3 = _mm256_xor_si256(c3, ones);
        }
        const __m256i bytes = pack_compare_bytes(c0, c1, c2, c3);
        auto* dst = reinterpret_cast<__m256i*>(mask + i);
        _mm256_storeu_si256(dst, _mm256_and_si256(_mm256_loadu_si256(dst), bytes));
    }
    for (; i < n; ++i)
        mask[i] &= static_cast<std::uint8_t>((codes[i] == value) == Equal);
}

void mask_equal_avx2(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    mask_compare_avx2<true>(codes, n, value, mask);
}

void mask_not_equal_avx2(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    mask_compare_avx2<false>(codes, n, value, mask);
}

void mask_and_avx2(const std::uint8_t* other, std::size_t n, std::uint8_t* mask)
{
    std::size_t i = 0;
    for (; i + 32 <= n; i += 32)
    {
        const __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(other + i));
        auto* dst = reinterpret_cast<__m256i*>(mask + i);
        _mm256_storeu_si256(dst, _mm256_and_si256(_mm256_loadu_si256(dst), a));
    }
    for (; i < n; ++i)
        mask[i] &= other[i];
}

std::size_t count_set_avx2(const std::uint8_t* mask, std::size_t n)
{
    std::size_t count = 0;
    std::size_t i = 0;
    const __m256i zero = _mm256_setzero_si256();
    for (; i + 32 <= n; i += 32)
    {
        const __m256i v = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(mask + i));
        const auto zeros = static_cast<std::uint32_t>(_mm256_movemask_epi8(_mm256_cmpeq_epi8(v, zero)));
        count += 32 - static_cast<std::size_t>(__builtin_popcount(zeros));
    }
    for (; i < n; ++i)
        count += mask[i] != 0;
    return count;
}

float dot_avx2(const float* a, const float* b, std::size_t n)
{
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16)
    {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);

    const __m256 acc = _mm256_add_ps(acc0, acc1);
    __m128 lo = _mm256_castps256_ps128(acc);
    const __m128 hi = _mm256_extractf128_ps(acc, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    float total = _mm_cvtss_f32(lo);
    for (; i < n; ++i)
        total += a[i] * b[i];
    return total;
}

} // namespace

const KernelTable& avx2_table()
{
    static const KernelTable table {
        Backend::Avx2, mask_equal_avx2, mask_not_equal_avx2, mask_and_avx2, count_set_avx2, dot_avx2,
    };
    return table;
}

} // namespace dex::simd::detail
