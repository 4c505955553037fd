#include "ternet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ternet/packed.hpp"
#include "ternet/rng.hpp"

namespace ternet {

namespace {

constexpr std::size_t kPool = 8;

std::vector<TernaryValue> random_ternary(Rng& rng, std::size_t n) {
    std::vector<TernaryValue> v(n);
    for (auto& x : v) x = static_cast<TernaryValue>(static_cast<int>(rng.index(3)) - 1);
    return v;
}

// deliberately plain: this is the scalar reference the packed kernels are
// measured against
float float_dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename Body>
DotBenchResult run(Scheme scheme, std::size_t length, int reps, Body&& body) {
    DotBenchResult r;
    r.scheme = scheme;
    r.length = length;
    if (reps <= 0) {
        const std::size_t target = std::size_t{1} << 25;  // elements touched per timing
        reps = static_cast<int>(std::max<std::size_t>(16, target / std::max<std::size_t>(length, 1)));
    }
    // warmup pass, also seeds the checksum
    for (int i = 0; i < reps / 16 + 1; ++i) r.checksum += body(static_cast<std::size_t>(i));

    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) r.checksum += body(static_cast<std::size_t>(i));
    const auto t1 = std::chrono::steady_clock::now();
    r.ns_per_dot = std::chrono::duration<double, std::nano>(t1 - t0).count() / reps;
    return r;
}

}  // namespace

DotBenchResult bench_dot(Scheme scheme, std::size_t length, std::uint64_t seed, int reps) {
    Rng rng(seed);
    switch (scheme) {
        case Scheme::Ternary: {
            std::vector<PackedTernaryVector> pool;
            for (std::size_t i = 0; i < kPool; ++i) pool.push_back(encode(random_ternary(rng, length)));
            return run(scheme, length, reps, [&](std::size_t i) {
                return dot_packed(pool[i % kPool], pool[(i + 3) % kPool]);
            });
        }
        case Scheme::Quaternary2Bit: {
            std::vector<PackedQuaternaryVector> pool;
            for (std::size_t p = 0; p < kPool; ++p) {
                std::vector<std::uint8_t> v(length);
                for (auto& x : v) x = static_cast<std::uint8_t>(rng.index(4));
                pool.push_back(pack_quaternary(v));
            }
            return run(scheme, length, reps, [&](std::size_t i) {
                return dot_quaternary_packed(pool[i % kPool], pool[(i + 3) % kPool]);
            });
        }
        case Scheme::Float32: {
            std::vector<std::vector<float>> pool(kPool, std::vector<float>(length));
            for (auto& v : pool) {
                for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
            }
            return run(scheme, length, reps, [&](std::size_t i) {
                return static_cast<std::int64_t>(
                    float_dot(pool[i % kPool].data(), pool[(i + 3) % kPool].data(), length));
            });
        }
    }
    throw std::invalid_argument("bench_dot: unknown scheme");
}

}  // namespace ternet
