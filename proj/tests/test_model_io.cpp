#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "model_fuzz.hpp"
#include "ternet/infer.hpp"
#include "ternet/layers.hpp"
#include "ternet/model_io.hpp"
#include "ternet/packed.hpp"
#include "ternet/rng.hpp"
#include "ternet/train.hpp"

using namespace ternet;

namespace {

void restamp_crc(std::vector<std::uint8_t>& bytes) {
    const std::uint32_t c =
        crc32(std::span<const std::uint8_t>(bytes.data() + 4, bytes.size() - 8));
    bytes[bytes.size() - 4] = static_cast<std::uint8_t>(c & 0xff);
    bytes[bytes.size() - 3] = static_cast<std::uint8_t>((c >> 8) & 0xff);
    bytes[bytes.size() - 2] = static_cast<std::uint8_t>((c >> 16) & 0xff);
    bytes[bytes.size() - 1] = static_cast<std::uint8_t>((c >> 24) & 0xff);
}

// single QuantDense record (in=8, out=1) built from the given filter values;
// its 16 plane bytes sit immediately before the trailing checksum
ModelFile one_filter_model(const std::vector<TernaryValue>& filter) {
    LayerRecord r;
    r.kind = RecordKind::QuantDense;
    r.in = static_cast<std::uint32_t>(filter.size());
    r.out = 1;
    r.gamma = 1.0f;
    r.beta = 0.0f;
    r.alpha = {1.0f};
    r.plane_len = r.in;
    append_planes_le(encode(filter), r.planes);
    ModelFile mf;
    mf.layers.push_back(std::move(r));
    return mf;
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
    const char* s = "123456789";
    CHECK(crc32(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s), 9)) ==
          0xCBF43926u);
}

TEST_CASE("an empty model survives the byte round trip") {
    const ModelFile mf;
    const auto bytes = save_model(mf);
    CHECK(bytes.size() == 16);
    const LoadedModel loaded = load_model(bytes);
    CHECK(loaded.checksum_ok);
    CHECK(loaded.model == mf);
}

TEST_CASE("a trained toy net round-trips through records and back") {
    Rng rng(60);
    const NetworkSpec spec{LayerSpec::dense(2, 3, false),
                           LayerSpec::activation(ActivationKind::Rta),
                           LayerSpec::dense(3, 2, false)};
    Network net = Network::build(spec, rng);
    TrainConfig cfg;
    for (int step = 0; step < 3; ++step) {
        Tensord x({8, 2});
        Tensord y({8, 2});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.uniform(0.0, 1.0);
        const StepResult r = forward_backward(net, x, y, cfg);
        sgd_step(net, r.grads, cfg);
    }

    const ModelFile mf = to_model_file(net);
    REQUIRE(mf.layers.size() == 3);
    const auto bytes = save_model(mf);
    const LoadedModel loaded = load_model(bytes);
    REQUIRE(loaded.checksum_ok);
    REQUIRE(loaded.model == mf);

    // rebuilding the net and serializing again must reproduce the records
    Network rebuilt = network_from_model_file(loaded.model);
    REQUIRE(rebuilt.size() == 3);
    CHECK(to_model_file(rebuilt) == mf);

    // two nets rebuilt from the same records behave identically
    Network rebuilt2 = network_from_model_file(loaded.model);
    Tensord x({6, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    PassContext eval;
    eval.training = false;
    const Tensord a = rebuilt.forward(x, eval);
    const Tensord b = rebuilt2.forward(x, eval);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("every trainable layer kind round-trips through the file format") {
    Rng rng(61);
    const NetworkSpec spec{
        LayerSpec::conv2d(2, 4, 3, 1, 1),
        LayerSpec::relu(),
        LayerSpec::batch_norm(true),
        LayerSpec::activation_quant(true, true),
        LayerSpec::weight_quant_conv(4, 5, 3, 2, 1),
        LayerSpec::relu(),
        LayerSpec::weight_quant_dense(5 * 3 * 3, 4),
        LayerSpec::relu(),
        LayerSpec::dense(4, 2),
    };
    Network net = Network::build(spec, rng);
    // one training step so batchnorm statistics and calibration are nontrivial
    TrainConfig cfg;
    Tensord x({4, 2, 6, 6});
    Tensord y({4, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const StepResult r = forward_backward(net, x, y, cfg);
    sgd_step(net, r.grads, cfg);

    const ModelFile mf = to_model_file(net);
    const LoadedModel loaded = load_model(save_model(mf));
    REQUIRE(loaded.model == mf);
    CHECK(to_model_file(network_from_model_file(loaded.model)) == mf);
}

TEST_CASE("random record soups survive save/load unchanged") {
    Rng rng(62);
    for (int iter = 0; iter < 200; ++iter) {
        const ModelFile mf = modelfuzz::random_model(rng);
        const auto bytes = save_model(mf);
        const LoadedModel loaded = load_model(bytes);
        REQUIRE(loaded.checksum_ok);
        REQUIRE(loaded.model == mf);
        // serialization is deterministic byte for byte
        REQUIRE(save_model(loaded.model) == bytes);
    }
}

TEST_CASE("the loader rejects a foreign magic") {
    auto bytes = save_model(one_filter_model({1, -1, 0, 1, 0, 0, -1, 1}));
    bytes[0] = 'X';
    bytes[1] = 'X';
    bytes[2] = 'X';
    bytes[3] = 'X';
    CHECK_THROWS_WITH_AS(load_model(bytes), "model file: bad magic", std::runtime_error);
}

TEST_CASE("the loader rejects an unknown version") {
    auto bytes = save_model(one_filter_model({1, -1, 0, 1, 0, 0, -1, 1}));
    bytes[4] = 9;  // version 9
    restamp_crc(bytes);
    CHECK_THROWS_AS(load_model(bytes), std::runtime_error);
}

TEST_CASE("every strict prefix of a valid file is rejected, never crashes") {
    const auto bytes = save_model(one_filter_model({1, -1, 0, 1, 0, 0, -1, 1}));
    for (std::size_t len = 0; len < bytes.size(); ++len) {
        CHECK_THROWS_AS(
            load_model(std::span<const std::uint8_t>(bytes.data(), len)), std::runtime_error);
    }
}

TEST_CASE("appending trailing bytes is a structural error") {
    auto bytes = save_model(one_filter_model({1, -1, 0, 1, 0, 0, -1, 1}));
    bytes.insert(bytes.end(), {0, 0, 0, 0});
    restamp_crc(bytes);
    CHECK_THROWS_AS(load_model(bytes), std::runtime_error);
}

TEST_CASE("every header bit flip is detected") {
    Rng rng(63);
    const auto bytes = save_model(modelfuzz::random_model(rng));
    // magic, version, layer count: 12 bytes
    for (std::size_t bit = 0; bit < 96; ++bit) {
        auto corrupt = bytes;
        corrupt[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
        bool detected = false;
        try {
            const LoadedModel loaded = load_model(corrupt);
            detected = !loaded.checksum_ok;
        } catch (const std::runtime_error&) {
            detected = true;
        }
        CAPTURE(bit);
        REQUIRE(detected);
    }
}

TEST_CASE("a canonical-preserving payload flip loads but fails the checksum") {
    // all-minus-one filter: presence bits set, sign bits clear
    const auto bytes = save_model(one_filter_model({-1, -1, -1, -1, -1, -1, -1, -1}));
    // plane block is the 16 bytes before the checksum; clear presence bit 3
    const std::size_t presence0 = bytes.size() - 20;
    auto corrupt = bytes;
    corrupt[presence0] ^= (1u << 3);

    const LoadedModel loaded = load_model(corrupt);
    CHECK_FALSE(loaded.checksum_ok);
    const auto& r = loaded.model.layers.at(0);
    const PackedTernaryVector v = read_planes_le(r.planes, r.plane_len);
    CHECK(v.canonical());
    CHECK(v.get(3) == 0);   // the flipped element now reads as zero
    CHECK(v.get(2) == -1);  // its neighbors are untouched
    CHECK(v.get(4) == -1);
}

TEST_CASE("a sign bit under a cleared presence bit is rejected or normalized") {
    // all-zero filter: both planes are zero words
    auto bytes = save_model(one_filter_model({0, 0, 0, 0, 0, 0, 0, 0}));
    const std::size_t sign0 = bytes.size() - 12;
    bytes[sign0] |= (1u << 2);
    restamp_crc(bytes);  // isolate canonicality from checksum reporting

    CHECK_THROWS_AS(load_model(bytes, false), std::runtime_error);

    const LoadedModel loaded = load_model(bytes, true);
    CHECK(loaded.checksum_ok);
    const auto& r = loaded.model.layers.at(0);
    const PackedTernaryVector v = read_planes_le(r.planes, r.plane_len);
    CHECK(v.canonical());
    for (std::size_t i = 0; i < 8; ++i) CHECK(v.get(i) == 0);
}

TEST_CASE("garbage in the padding bits is rejected even by the lenient loader") {
    auto bytes = save_model(one_filter_model({1, -1, 0, 1, 0, 0, -1, 1}));
    // presence word byte 7 covers bits 56..63, all beyond the 8 live elements
    const std::size_t presence_pad = bytes.size() - 20 + 7;
    bytes[presence_pad] |= (1u << 4);
    restamp_crc(bytes);
    CHECK_THROWS_AS(load_model(bytes, false), std::runtime_error);
    CHECK_THROWS_AS(load_model(bytes, true), std::runtime_error);
}

TEST_CASE("a plane length that disagrees with the layer shape is rejected") {
    Rng rng(64);
    ModelFile mf = one_filter_model({1, 0, -1, 0, 1});
    mf.layers[0].plane_len = 6;
    mf.layers[0].planes.clear();
    mf.layers[0].planes = modelfuzz::random_planes(rng, 1, 6);
    const auto bytes = save_model(mf);
    CHECK_THROWS_AS(load_model(bytes), std::runtime_error);
}

TEST_CASE("models survive the disk round trip") {
    Rng rng(65);
    const ModelFile mf = modelfuzz::random_model(rng);
    const auto path =
        (std::filesystem::temp_directory_path() / "ternet_io_roundtrip.rtn").string();
    write_model_file(path, mf);
    const LoadedModel loaded = read_model_file(path);
    std::filesystem::remove(path);
    CHECK(loaded.checksum_ok);
    CHECK(loaded.model == mf);
}

TEST_CASE("reading a missing file reports the path") {
    CHECK_THROWS_AS(read_model_file("/nonexistent/dir/model.rtn"), std::runtime_error);
}

TEST_CASE("a frozen inference net round-trips and stays behaviorally identical") {
    Rng rng(66);
    const NetworkSpec spec{
        LayerSpec::dense(6, 10),
        LayerSpec::relu(),
        LayerSpec::batch_norm(false),
        LayerSpec::activation_quant(true, true),
        LayerSpec::weight_quant_dense(10, 7),
        LayerSpec::relu(),
        LayerSpec::dense(7, 2),
    };
    Network net = Network::build(spec, rng);
    TrainConfig cfg;
    for (int step = 0; step < 3; ++step) {
        Tensord x({8, 6});
        Tensord y({8, 2});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.5, 1.5);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.uniform(0.0, 1.0);
        const StepResult r = forward_backward(net, x, y, cfg);
        sgd_step(net, r.grads, cfg);
    }
    const InferenceModel frozen = quantize_network(net);

    const ModelFile mf = to_model_file(frozen);
    REQUIRE(mf.layers.size() == 5);
    const LoadedModel loaded = load_model(save_model(mf));
    REQUIRE(loaded.checksum_ok);
    REQUIRE(loaded.model == mf);

    // once in 32-bit storage, further round trips change nothing at all
    const InferenceModel rebuilt = inference_from_model_file(loaded.model);
    const ModelFile mf2 = to_model_file(rebuilt);
    CHECK(mf2 == mf);
    const InferenceModel rebuilt2 = inference_from_model_file(mf2);

    Tensord x({16, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.5, 1.5);
    const Tensord a = rebuilt.forward(x);
    const Tensord b = rebuilt2.forward(x);
    REQUIRE(a.shape() == b.shape());
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);

    // the narrowed weights stay close to the trained ones
    const Tensord wide = frozen.forward(x);
    for (std::size_t i = 0; i < wide.size(); ++i) {
        CHECK(a[i] == doctest::Approx(wide[i]).epsilon(1e-3).scale(1.0));
    }
}

TEST_CASE("a frozen conv pipeline round-trips through records") {
    Rng rng(67);
    const NetworkSpec spec{
        LayerSpec::conv2d(1, 4, 3, 1, 1),
        LayerSpec::relu(),
        LayerSpec::batch_norm(false),
        LayerSpec::activation_quant(true, true),
        LayerSpec::weight_quant_conv(4, 6, 3, 2, 1),
        LayerSpec::relu(),
        LayerSpec::dense(6 * 4 * 4, 3),
    };
    Network net = Network::build(spec, rng);
    TrainConfig cfg;
    Tensord x({4, 1, 8, 8});
    Tensord y({4, 3});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const StepResult r = forward_backward(net, x, y, cfg);
    sgd_step(net, r.grads, cfg);

    const InferenceModel frozen = quantize_network(net);
    const ModelFile mf = to_model_file(frozen);
    const LoadedModel loaded = load_model(save_model(mf));
    REQUIRE(loaded.model == mf);

    const InferenceModel rebuilt = inference_from_model_file(loaded.model);
    CHECK(to_model_file(rebuilt) == mf);

    Tensord probe({2, 1, 8, 8});
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = rng.uniform(-1.0, 1.0);
    const Tensord out = rebuilt.forward(probe);
    CHECK(out.shape() == std::vector<std::size_t>{2, 3});
}
