// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dex {

/// Base of every error the engine raises.
class Error: public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// CSV ingestion failure. `line` is 1-based; 0 when the problem is not tied to a line.
class LoadError: public Error
{
public:
    LoadError(std::size_t line, const std::string& message):
        Error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line)
    {
    }

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// An analysis entity, filter, or config that does not fit the dataset or contract.
class ValidationError: public Error
{
public:
    using Error::Error;
};

/// An action was asked to run on an insight it does not apply to.
class ApplicabilityError: public Error
{
public:
    using Error::Error;
};

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed = kFnvOffset) noexcept
{
    std::uint64_t hash = seed;
    for (char c: text)
    {
        hash ^= static_cast<unsigned char>(c);
        hash *= kFnvPrime;
    }
    return hash;
}

inline std::string hex64(std::uint64_t value, int digits = 16)
{
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(static_cast<std::size_t>(digits), '0');
    for (int i = digits - 1; i >= 0; --i)
    {
        out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
        value >>= 4;
    }
    return out;
}

/// Fixed-precision decimal rendering ("%.*f"), locale independent.
std::string format_fixed(double value, int decimals);

} // namespace dex
