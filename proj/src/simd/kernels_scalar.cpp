// SPDX-License-Identifier: Apache-2.0
#include "kernels_internal.hpp"

namespace dex::simd::detail {

namespace {

void mask_equal_scalar(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    for (std::size_t i = 0; i < n; ++i)
        mask[i] &= static_cast<std::uint8_t>(codes[i] == value);
}

void mask_not_equal_scalar(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask)
{
    for (std::size_t i = 0; i < n; ++i)
        mask[i] &= static_cast<std::uint8_t>(codes[i] != value);
}

void mask_and_scalar(const std::uint8_t* other, std::size_t n, std::uint8_t* mask)
{
    for (std::size_t i = 0; i < n; ++i)
        mask[i] &= other[i];
}

std::size_t count_set_scalar(const std::uint8_t* mask, std::size_t n)
{
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
        count += mask[i] != 0;
    return count;
}

float dot_scalar(const float* a, const float* b, std::size_t n)
{
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i)
        acc += a[i] * b[i];
    return acc;
}

} // namespace

const KernelTable& scalar_table()
{
    static const KernelTable table {
        Backend::Scalar, mask_equal_scalar, mask_not_equal_scalar, mask_and_scalar, count_set_scalar, dot_scalar,
    };
    return table;
}

} // namespace dex::simd::detail
