// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel kernels used by the aggregation and ranking hot paths.
//
// Every kernel has a scalar reference implementation. Vector variants
// (AVX2 on x86-64, NEON on AArch64) are selected once at runtime from the
// host CPU features; DEX_SIMD=scalar|avx2|neon|auto overrides the choice.
// All variants must produce identical masks and counts; dot products agree
// to float rounding.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace dex::simd {

enum class Backend
{
    Scalar,
    Avx2,
    Neon,
};

std::string_view backend_name(Backend backend);

struct KernelTable
{
    Backend backend;

    // mask[i] &= (codes[i] == value)
    void (*mask_equal)(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask);
    // mask[i] &= (codes[i] != value)
    void (*mask_not_equal)(const std::uint32_t* codes, std::size_t n, std::uint32_t value, std::uint8_t* mask);
    // mask[i] &= other[i]   (both hold 0/1 bytes)
    void (*mask_and)(const std::uint8_t* other, std::size_t n, std::uint8_t* mask);
    // number of non-zero bytes
    std::size_t (*count_set)(const std::uint8_t* mask, std::size_t n);
    // sum a[i]*b[i]
    float (*dot)(const float* a, const float* b, std::size_t n);
};

const KernelTable& scalar_kernels();

/// Backends compiled in AND supported by this CPU, scalar first.
std::vector<Backend> available_backends();

const KernelTable& kernels_for(Backend backend);

/// The table chosen for this process (env override, then best available).
const KernelTable& active();

// Span conveniences over the active table.

inline void mask_equal(std::span<const std::uint32_t> codes, std::uint32_t value, std::span<std::uint8_t> mask)
{
    active().mask_equal(codes.data(), codes.size(), value, mask.data());
}

inline void mask_not_equal(std::span<const std::uint32_t> codes, std::uint32_t value, std::span<std::uint8_t> mask)
{
    active().mask_not_equal(codes.data(), codes.size(), value, mask.data());
}

inline void mask_and(std::span<const std::uint8_t> other, std::span<std::uint8_t> mask)
{
    active().mask_and(other.data(), other.size(), mask.data());
}

inline std::size_t count_set(std::span<const std::uint8_t> mask)
{
    return active().count_set(mask.data(), mask.size());
}

inline float dot(std::span<const float> a, std::span<const float> b)
{
    return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

} // namespace dex::simd
