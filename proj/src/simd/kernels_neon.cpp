// SPDX-License-Identifier: Apache-2.0
// NEON is part of the AArch64 baseline, so no runtime check is needed.
#include "kernels_internal.hpp"

#include <arm_neon.h>

namespace dex::simd::detail {

namespace {

template <bool Equal>
void mask_compare_neon(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    const uint32x4_t needle = vdupq_n_u32(value);
    const uint8x16_t one = vdupq_n_u8(1);
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16)
    {
        uint32x4_t c0 = vceqq_u32(vld1q_u32(codes + i), needle);
        uint32x4_t c1 = vceqq_u32(vld1q_u32(codes + i + 4), needle);
        uint32x4_t c2 = vceqq_u32(vld1q_u32(codes + i + 8), needle);
        uint32x4_t c3 = vceqq_u32(vld1q_u32(codes + i + 12), needle);
        if constexpr (!Equal)
        {
            c0 = vmvnq_u32(c0);
            c1 = vmvnq_u32(c1);
            c2 = vmvnq_u32(c2);
            c3 = vmvnq_u32(c3);
        }
        const uint16x8_t lo = vcombine_u16(vmovn_u32(c0), vmovn_u32(c1));
        const uint16x8_t hi = vcombine_u16(vmovn_u32(c2), vmovn_u32(c3));
        const uint8x16_t bytes = vandq_u8(vcombine_u8(vmovn_u16(lo), vmovn_u16(hi)), one);
        vst1q_u8(mask + i, vandq_u8(vld1q_u8(mask + i), bytes));
    }
    for (; i < n; ++i)
        mask[i] &= static_cast<std::uint8_t>((codes[i] == value) == Equal);
}

void mask_equal_neon(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    mask_compare_neon<true>(codes, n, value, mask);
}

void mask_not_equal_neon(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    mask_compare_neon<false>(codes, n, value, mask);
}

void mask_and_neon(const std::uint8_t* other, std::size_t n, std::uint8_t* mask)
{
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16)
        vst1q_u8(mask + i, vandq_u8(vld1q_u8(mask + i), vld1q_u8(other + i)));
    for (; i < n; ++i)
        mask[i] &= other[i];
}

std::size_t count_set_neon(const std::uint8_t* mask, std::size_t n)
{
    std::size_t count = 0;
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16)
    {
        // 0/1 bytes: nonzero -> 1 via min against one
        const uint8x16_t v = vminq_u8(vld1q_u8(mask + i), vdupq_n_u8(1));
        count += vaddvq_u8(v);
    }
    for (; i < n; ++i)
        count += mask[i] != 0;
    return count;
}

float dot_neon(const float* a, const float* b, std::size_t n)
{
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
    {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
        acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    float total = vaddvq_f32(vaddq_f32(acc0, acc1));
    for (; i < n; ++i)
        total += a[i] * b[i];
    return total;
}

} // namespace

const KernelTable& neon_table()
{
    static const KernelTable table {
        Backend::Neon, mask_equal_neon, mask_not_equal_neon, mask_and_neon, count_set_neon, dot_neon,
    };
    return table;
}

} // namespace dex::simd::detail
