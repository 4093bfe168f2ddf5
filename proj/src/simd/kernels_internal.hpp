// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <dex/simd.hpp>

namespace dex::simd::detail {

const KernelTable& scalar_table();

#if defined(DEX_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

#if defined(DEX_HAVE_NEON)
const KernelTable& neon_table();
#endif

} // namespace dex::simd::detail
