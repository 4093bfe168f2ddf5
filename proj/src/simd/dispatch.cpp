// SPDX-License-Identifier: Apache-2.0
#include "kernels_internal.hpp"

#include <cstdlib>
#include <string>

namespace dex::simd {

std::string_view backend_name(Backend backend)
{
    switch (backend)
    {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "unknown";
}

const KernelTable& scalar_kernels()
{
    return detail::scalar_table();
}

namespace {

bool cpu_supports(Backend backend)
{
    switch (backend)
    {
        case Backend::Scalar: return true;
        case Backend::Avx2:
#if defined(DEX_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::Neon:
#if defined(DEX_HAVE_NEON)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& choose()
{
    const char* forced = std::getenv("DEX_SIMD");
    const std::string wanted = forced ? forced : "auto";
    for (auto backend: available_backends())
        if (wanted == backend_name(backend))
            return kernels_for(backend);

    auto backends = available_backends();
    return kernels_for(backends.back());
}

} // namespace

std::vector<Backend> available_backends()
{
    std::vector<Backend> out {Backend::Scalar};
    for (auto backend: {Backend::Avx2, Backend::Neon})
        if (cpu_supports(backend))
            out.push_back(backend);
    return out;
}

const KernelTable& kernels_for(Backend backend)
{
    switch (backend)
    {
#if defined(DEX_HAVE_AVX2)
        case Backend::Avx2:
            if (cpu_supports(backend))
                return detail::avx2_table();
            break;
#endif
#if defined(DEX_HAVE_NEON)
        case Backend::Neon: return detail::neon_table();
#endif
        default: break;
    }
    return detail::scalar_table();
}

const KernelTable& active()
{
    static const KernelTable& table = choose();
    return table;
}

} // namespace dex::simd
