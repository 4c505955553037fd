#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ternet {

// A ternary element is one of {-1, 0, +1}.
using TernaryValue = std::int8_t;

inline bool is_ternary(TernaryValue v) { return v == -1 || v == 0 || v == 1; }

// Two bit planes, LSB-first within each 64-bit word, element i living at
// bit (i % 64) of word (i / 64). The presence bit says "nonzero"; the sign
// bit is +1 when set and only meaningful under a set presence bit.
// Canonical form: sign bits of zero elements are clear, padding bits are
// clear in both planes. encode() always produces canonical vectors; decode()
// tolerates a stray sign bit under a clear presence bit (it still reads as 0).
struct PackedTernaryVector {
    std::size_t length = 0;
    std::vector<std::uint64_t> presence;
    std::vector<std::uint64_t> sign;

    static std::size_t words_for(std::size_t n) { return (n + 63) / 64; }

    std::size_t words() const { return presence.size(); }

    TernaryValue get(std::size_t i) const {
        const std::uint64_t bit = std::uint64_t{1} << (i & 63);
        if (!(presence[i >> 6] & bit)) return 0;
        return (sign[i >> 6] & bit) ? TernaryValue{1} : TernaryValue{-1};
    }

    void set(std::size_t i, TernaryValue v) {
        const std::uint64_t bit = std::uint64_t{1} << (i & 63);
        presence[i >> 6] &= ~bit;
        sign[i >> 6] &= ~bit;
        if (v != 0) {
            presence[i >> 6] |= bit;
            if (v > 0) sign[i >> 6] |= bit;
        }
    }

    // sign bits only under presence bits, padding clear in both planes
    bool canonical() const;
};

PackedTernaryVector encode(std::span<const TernaryValue> values);
std::vector<TernaryValue> decode(const PackedTernaryVector& v);

// Exact integer dot product of two packed ternary vectors of equal length.
std::int64_t dot_packed(const PackedTernaryVector& w, const PackedTernaryVector& a);

// Reference dot product on unpacked values. Kept deliberately boring; the
// packed kernel is tested against this.
std::int64_t dot_naive(std::span<const TernaryValue> w, std::span<const TernaryValue> a);

// 2-bit unsigned scheme used for comparison: values in {0,1,2,3} split into
// a low and a high bit plane.
struct PackedQuaternaryVector {
    std::size_t length = 0;
    std::vector<std::uint64_t> plane0;  // bit 0 of each value
    std::vector<std::uint64_t> plane1;  // bit 1 of each value
};

PackedQuaternaryVector pack_quaternary(std::span<const std::uint8_t> values);

// dot = sum over plane pairs (i, j) of 2^(i+j) * popcount(x_i & y_j)
std::int64_t dot_quaternary_packed(const PackedQuaternaryVector& x,
                                   const PackedQuaternaryVector& y);

std::int64_t dot_quaternary_2bit(std::span<const std::uint8_t> x,
                                 std::span<const std::uint8_t> y);

// Plane serialization order used by the model format: presence words first,
// then sign words, each word little-endian.
void append_planes_le(const PackedTernaryVector& v, std::vector<std::uint8_t>& out);
PackedTernaryVector read_planes_le(std::span<const std::uint8_t> bytes, std::size_t length);

}  // namespace ternet
