#include <doctest.h>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ternet/packed.hpp"
#include "ternet/rng.hpp"

using namespace ternet;

namespace {

std::vector<TernaryValue> random_ternary(Rng& rng, std::size_t n) {
    std::vector<TernaryValue> v(n);
    for (auto& x : v) x = static_cast<TernaryValue>(static_cast<int>(rng.index(3)) - 1);
    return v;
}

// enumerate all ternary vectors of the given length in base-3 order
std::vector<std::vector<TernaryValue>> all_ternary(std::size_t length) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < length; ++i) total *= 3;
    std::vector<std::vector<TernaryValue>> out;
    out.reserve(total);
    for (std::size_t code = 0; code < total; ++code) {
        std::vector<TernaryValue> v(length);
        std::size_t c = code;
        for (std::size_t i = 0; i < length; ++i) {
            v[i] = static_cast<TernaryValue>(static_cast<int>(c % 3) - 1);
            c /= 3;
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace

TEST_CASE("single-element encodings") {
    const auto zero = encode(std::vector<TernaryValue>{0});
    CHECK(zero.presence[0] == 0);
    CHECK(zero.sign[0] == 0);

    const auto neg = encode(std::vector<TernaryValue>{-1});
    CHECK(neg.presence[0] == 1);
    CHECK(neg.sign[0] == 0);

    const auto pos = encode(std::vector<TernaryValue>{+1});
    CHECK(pos.presence[0] == 1);
    CHECK(pos.sign[0] == 1);
}

TEST_CASE("multi-element encoding is lsb-first") {
    const auto v = encode(std::vector<TernaryValue>{+1, -1, 0});
    CHECK(v.length == 3);
    CHECK(v.presence[0] == 0b011);
    CHECK(v.sign[0] == 0b001);
}

TEST_CASE("decode treats a sign bit under a cleared presence bit as zero") {
    PackedTernaryVector v;
    v.length = 1;
    v.presence = {0};
    v.sign = {1};
    CHECK(decode(v) == std::vector<TernaryValue>{0});
    CHECK_FALSE(v.canonical());
}

TEST_CASE("decode of hand-built planes") {
    PackedTernaryVector v;
    v.length = 2;
    v.presence = {0b11};
    v.sign = {0b10};
    CHECK(decode(v) == std::vector<TernaryValue>{-1, +1});
}

TEST_CASE("decode-encode identity for every vector of length <= 4") {
    for (std::size_t len = 0; len <= 4; ++len) {
        for (const auto& v : all_ternary(len)) {
            const auto packed = encode(v);
            CHECK(packed.canonical());
            CHECK(decode(packed) == v);
        }
    }
}

TEST_CASE("encode rejects non-ternary input") {
    CHECK_THROWS_AS(encode(std::vector<TernaryValue>{2}), std::invalid_argument);
    CHECK_THROWS_AS(encode(std::vector<TernaryValue>{0, -3}), std::invalid_argument);
}

TEST_CASE("decode rejects inconsistent word counts") {
    PackedTernaryVector v;
    v.length = 70;
    v.presence = {0};  // needs two words
    v.sign = {0};
    CHECK_THROWS_AS(decode(v), std::invalid_argument);
}

TEST_CASE("dot_naive hand values") {
    CHECK(dot_naive(std::vector<TernaryValue>{+1, +1, -1},
                    std::vector<TernaryValue>{+1, +1, +1}) == 1);
    CHECK(dot_naive(std::vector<TernaryValue>{}, std::vector<TernaryValue>{}) == 0);
    CHECK(dot_naive(std::vector<TernaryValue>{-1, -1}, std::vector<TernaryValue>{-1, -1}) == 2);
}

TEST_CASE("dot_packed hand values") {
    const auto w1 = encode(std::vector<TernaryValue>{+1, +1, -1});
    const auto a1 = encode(std::vector<TernaryValue>{+1, +1, +1});
    CHECK(dot_packed(w1, a1) == 1);

    const auto w2 = encode(std::vector<TernaryValue>{0, 0, 0, 0});
    const auto a2 = encode(std::vector<TernaryValue>{+1, -1, +1, -1});
    CHECK(dot_packed(w2, a2) == 0);

    const auto w3 = encode(std::vector<TernaryValue>{+1, -1});
    const auto a3 = encode(std::vector<TernaryValue>{-1, +1});
    CHECK(dot_packed(w3, a3) == -2);
}

TEST_CASE("dot length mismatch throws") {
    const auto a = encode(std::vector<TernaryValue>{+1});
    const auto b = encode(std::vector<TernaryValue>{+1, 0});
    CHECK_THROWS_AS(dot_packed(a, b), std::invalid_argument);
    CHECK_THROWS_AS(dot_naive(std::vector<TernaryValue>{1}, std::vector<TernaryValue>{1, 0}),
                    std::invalid_argument);
}

TEST_CASE("packed dot equals naive dot for every pair of length <= 4") {
    // the full length-6 sweep lives in the acceptance suite; this keeps the
    // unit run fast while still covering all small cases
    for (std::size_t len = 0; len <= 4; ++len) {
        const auto vecs = all_ternary(len);
        std::vector<PackedTernaryVector> packed;
        packed.reserve(vecs.size());
        for (const auto& v : vecs) packed.push_back(encode(v));
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            for (std::size_t j = 0; j < vecs.size(); ++j) {
                REQUIRE(dot_packed(packed[i], packed[j]) == dot_naive(vecs[i], vecs[j]));
            }
        }
    }
}

TEST_CASE("packed dot equals naive dot across word boundaries") {
    Rng rng(42);
    for (const std::size_t len : {63u, 64u, 65u, 127u, 128u, 1000u}) {
        for (int iter = 0; iter < 200; ++iter) {
            const auto w = random_ternary(rng, len);
            const auto a = random_ternary(rng, len);
            REQUIRE(dot_packed(encode(w), encode(a)) == dot_naive(w, a));
        }
    }
}

TEST_CASE("setting the sign bit of a zero element never changes the dot") {
    Rng rng(7);
    for (int iter = 0; iter < 500; ++iter) {
        const std::size_t len = 1 + rng.index(150);
        const auto w = random_ternary(rng, len);
        const auto a = random_ternary(rng, len);
        auto wp = encode(w);
        const auto ap = encode(a);
        const auto expected = dot_packed(wp, ap);

        bool flipped = false;
        for (std::size_t i = 0; i < len; ++i) {
            if (w[i] == 0 && rng.bernoulli(0.5)) {
                wp.sign[i / 64] |= std::uint64_t{1} << (i % 64);
                flipped = true;
            }
        }
        if (flipped) CHECK_FALSE(wp.canonical());
        REQUIRE(dot_packed(wp, ap) == expected);
    }
}

TEST_CASE("zero padding does not contribute to the dot") {
    Rng rng(11);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t len = 1 + rng.index(100);
        auto w = random_ternary(rng, len);
        auto a = random_ternary(rng, len);
        const auto base = dot_packed(encode(w), encode(a));

        // extending both vectors with zeros to any longer length keeps the
        // result, including across a word boundary
        const std::size_t extended = len + 1 + rng.index(80);
        w.resize(extended, 0);
        a.resize(extended, 0);
        REQUIRE(dot_packed(encode(w), encode(a)) == base);
    }
}

TEST_CASE("get/set round trip and canonical checks") {
    PackedTernaryVector v;
    v.length = 130;
    v.presence.assign(PackedTernaryVector::words_for(130), 0);
    v.sign.assign(PackedTernaryVector::words_for(130), 0);
    v.set(0, -1);
    v.set(64, +1);
    v.set(129, -1);
    CHECK(v.get(0) == -1);
    CHECK(v.get(1) == 0);
    CHECK(v.get(64) == +1);
    CHECK(v.get(129) == -1);
    CHECK(v.canonical());

    v.set(129, 0);
    CHECK(v.get(129) == 0);
    CHECK(v.canonical());
}

TEST_CASE("quaternary hand values") {
    CHECK(dot_quaternary_2bit(std::vector<std::uint8_t>{3}, std::vector<std::uint8_t>{3}) == 9);
    CHECK(dot_quaternary_2bit(std::vector<std::uint8_t>{0, 0},
                              std::vector<std::uint8_t>{3, 3}) == 0);
    CHECK(dot_quaternary_2bit(std::vector<std::uint8_t>{1, 2, 3},
                              std::vector<std::uint8_t>{3, 2, 1}) == 10);
}

TEST_CASE("quaternary dot equals the plain integer dot exhaustively to length 4") {
    for (std::size_t len = 0; len <= 4; ++len) {
        std::size_t total = 1;
        for (std::size_t i = 0; i < len; ++i) total *= 4;
        std::vector<std::vector<std::uint8_t>> vecs;
        vecs.reserve(total);
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<std::uint8_t> v(len);
            std::size_t c = code;
            for (std::size_t i = 0; i < len; ++i) {
                v[i] = static_cast<std::uint8_t>(c % 4);
                c /= 4;
            }
            vecs.push_back(std::move(v));
        }
        for (const auto& x : vecs) {
            for (const auto& y : vecs) {
                std::int64_t expected = 0;
                for (std::size_t i = 0; i < len; ++i) expected += std::int64_t{x[i]} * y[i];
                REQUIRE(dot_quaternary_2bit(x, y) == expected);
            }
        }
    }
}

TEST_CASE("quaternary input validation") {
    CHECK_THROWS_AS(pack_quaternary(std::vector<std::uint8_t>{4}), std::invalid_argument);
    CHECK_THROWS_AS(dot_quaternary_2bit(std::vector<std::uint8_t>{1},
                                        std::vector<std::uint8_t>{1, 2}),
                    std::invalid_argument);
}

TEST_CASE("plane bytes round trip") {
    Rng rng(3);
    for (const std::size_t len : {0u, 1u, 63u, 64u, 65u, 200u}) {
        const auto v = random_ternary(rng, len);
        const auto packed = encode(v);
        std::vector<std::uint8_t> bytes;
        append_planes_le(packed, bytes);
        CHECK(bytes.size() == 16 * PackedTernaryVector::words_for(len));
        const auto back = read_planes_le(bytes, len);
        CHECK(back.presence == packed.presence);
        CHECK(back.sign == packed.sign);
        CHECK(decode(back) == v);
    }
    CHECK_THROWS_AS(read_planes_le(std::vector<std::uint8_t>(8), 1), std::invalid_argument);
}
