#pragma once

#include <cstdint>

#include "ternet/opcount.hpp"

namespace ternet {

struct DotBenchResult {
    Scheme scheme = Scheme::Ternary;
    std::size_t length = 0;
    double ns_per_dot = 0.0;
    std::int64_t checksum = 0;  // keeps the timed loops honest
};

// Times one dot-product scheme at the given length: packed ternary, packed
// quaternary, or a plain scalar float loop. Inputs are drawn once from seed;
// the loop cycles through a small pool of vectors so no call can be hoisted.
// reps = 0 picks a count that targets a few tens of milliseconds.
DotBenchResult bench_dot(Scheme scheme, std::size_t length, std::uint64_t seed, int reps = 0);

}  // namespace ternet
