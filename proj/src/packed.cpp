#include "ternet/packed.hpp"

#include <bit>
#include <stdexcept>
#include <string>

namespace ternet {

namespace {

std::uint64_t tail_mask(std::size_t length) {
    const std::size_t rem = length & 63;
    return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
}

}  // namespace

bool PackedTernaryVector::canonical() const {
    const std::size_t nw = words_for(length);
    if (presence.size() != nw || sign.size() != nw) return false;
    for (std::size_t w = 0; w < nw; ++w) {
        if (sign[w] & ~presence[w]) return false;
    }
    if (nw > 0) {
        const std::uint64_t mask = tail_mask(length);
        if (presence[nw - 1] & ~mask) return false;
        if (sign[nw - 1] & ~mask) return false;
    }
    return true;
}

PackedTernaryVector encode(std::span<const TernaryValue> values) {
    PackedTernaryVector out;
    out.length = values.size();
    out.presence.assign(PackedTernaryVector::words_for(values.size()), 0);
    out.sign.assign(out.presence.size(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const TernaryValue v = values[i];
        if (!is_ternary(v)) {
            throw std::invalid_argument("encode: element " + std::to_string(i) +
                                        " is not in {-1, 0, +1}");
        }
        if (v == 0) continue;
        const std::uint64_t bit = std::uint64_t{1} << (i & 63);
        out.presence[i >> 6] |= bit;
        if (v > 0) out.sign[i >> 6] |= bit;
    }
    return out;
}

std::vector<TernaryValue> decode(const PackedTernaryVector& v) {
    const std::size_t nw = PackedTernaryVector::words_for(v.length);
    if (v.presence.size() != nw || v.sign.size() != nw) {
        throw std::invalid_argument("decode: plane word count does not match length");
    }
    std::vector<TernaryValue> out(v.length);
    for (std::size_t i = 0; i < v.length; ++i) out[i] = v.get(i);
    return out;
}

std::int64_t dot_packed(const PackedTernaryVector& w, const PackedTernaryVector& a) {
    if (w.length != a.length) {
        throw std::invalid_argument("dot_packed: length mismatch");
    }
    std::int64_t acc = 0;
    const std::size_t nw = w.words();
    for (std::size_t i = 0; i < nw; ++i) {
        const std::uint64_t both = w.presence[i] & a.presence[i];
        const std::uint64_t disagree = (w.sign[i] ^ a.sign[i]) & both;
        acc += std::popcount(both);
        acc -= 2 * std::popcount(disagree);
    }
    return acc;
}

std::int64_t dot_naive(std::span<const TernaryValue> w, std::span<const TernaryValue> a) {
    if (w.size() != a.size()) {
        throw std::invalid_argument("dot_naive: length mismatch");
    }
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!is_ternary(w[i]) || !is_ternary(a[i])) {
            throw std::invalid_argument("dot_naive: element not in {-1, 0, +1}");
        }
        acc += static_cast<std::int64_t>(w[i]) * static_cast<std::int64_t>(a[i]);
    }
    return acc;
}

PackedQuaternaryVector pack_quaternary(std::span<const std::uint8_t> values) {
    PackedQuaternaryVector out;
    out.length = values.size();
    out.plane0.assign(PackedTernaryVector::words_for(values.size()), 0);
    out.plane1.assign(out.plane0.size(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] > 3) {
            throw std::invalid_argument("pack_quaternary: element " + std::to_string(i) +
                                        " is not a 2-bit value");
        }
        const std::uint64_t bit = std::uint64_t{1} << (i & 63);
        if (values[i] & 1) out.plane0[i >> 6] |= bit;
        if (values[i] & 2) out.plane1[i >> 6] |= bit;
    }
    return out;
}

std::int64_t dot_quaternary_packed(const PackedQuaternaryVector& x,
                                   const PackedQuaternaryVector& y) {
    if (x.length != y.length) {
        throw std::invalid_argument("dot_quaternary: length mismatch");
    }
    std::int64_t acc = 0;
    const std::size_t nw = x.plane0.size();
    for (std::size_t i = 0; i < nw; ++i) {
        const std::int64_t t00 = std::popcount(x.plane0[i] & y.plane0[i]);
        const std::int64_t t01 = std::popcount(x.plane0[i] & y.plane1[i]);
        const std::int64_t t10 = std::popcount(x.plane1[i] & y.plane0[i]);
        const std::int64_t t11 = std::popcount(x.plane1[i] & y.plane1[i]);
        acc += t00 + (t01 << 1) + (t10 << 1) + (t11 << 2);
    }
    return acc;
}

std::int64_t dot_quaternary_2bit(std::span<const std::uint8_t> x,
                                 std::span<const std::uint8_t> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("dot_quaternary: length mismatch");
    }
    return dot_quaternary_packed(pack_quaternary(x), pack_quaternary(y));
}

void append_planes_le(const PackedTernaryVector& v, std::vector<std::uint8_t>& out) {
    auto put_words = [&out](const std::vector<std::uint64_t>& words) {
        for (std::uint64_t w : words) {
            for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(w >> (8 * b)));
        }
    };
    put_words(v.presence);
    put_words(v.sign);
}

PackedTernaryVector read_planes_le(std::span<const std::uint8_t> bytes, std::size_t length) {
    const std::size_t nw = PackedTernaryVector::words_for(length);
    if (bytes.size() < 16 * nw) {
        throw std::invalid_argument("read_planes_le: byte range too short for length");
    }
    PackedTernaryVector v;
    v.length = length;
    v.presence.resize(nw);
    v.sign.resize(nw);
    auto get_word = [&bytes](std::size_t offset) {
        std::uint64_t w = 0;
        for (int b = 0; b < 8; ++b) w |= std::uint64_t{bytes[offset + b]} << (8 * b);
        return w;
    };
    for (std::size_t i = 0; i < nw; ++i) v.presence[i] = get_word(8 * i);
    for (std::size_t i = 0; i < nw; ++i) v.sign[i] = get_word(8 * (nw + i));
    return v;
}

}  // namespace ternet
