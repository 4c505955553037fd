#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace ternet {

enum class Scheme { Ternary, Quaternary2Bit, Float32 };

std::string scheme_name(Scheme s);

// Bitwise-op budget for one dot product of the given logical length.
// Everything is an exact function of the word count ceil(length / 64);
// Float32 reports plain multiply-accumulates in add_ops.
struct OpCountReport {
    Scheme scheme = Scheme::Ternary;
    std::size_t length = 0;
    std::uint64_t and_ops = 0;
    std::uint64_t xor_ops = 0;
    std::uint64_t popcount_ops = 0;
    std::uint64_t shift_ops = 0;
    std::uint64_t add_ops = 0;

    std::uint64_t total() const {
        return and_ops + xor_ops + popcount_ops + shift_ops + add_ops;
    }
};

OpCountReport count_ops(Scheme scheme, std::size_t length);

}  // namespace ternet
