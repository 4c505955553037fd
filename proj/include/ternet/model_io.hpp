#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ternet/infer.hpp"
#include "ternet/layers.hpp"

namespace ternet {

// On-disk layer records. Trainable nets use the first seven kinds; frozen
// inference nets use Dense/Conv2D/ReLU plus the three quantized kinds.
enum class RecordKind : std::uint8_t {
    Dense = 0,
    Conv2D = 1,
    ReLU = 2,
    BatchNorm = 3,
    ActivationQuant = 4,
    WeightQuantDense = 5,
    WeightQuantConv = 6,
    QuantDense = 7,
    QuantConv = 8,
    Ternarize = 9,
};

// One serialized layer. Field usage depends on kind; everything is stored in
// 32-bit precision, so a record round-trips bit-exactly.
struct LayerRecord {
    RecordKind kind = RecordKind::Dense;

    std::uint32_t in = 0, out = 0;
    std::uint8_t has_bias = 0;
    std::uint32_t in_c = 0, out_c = 0, kernel = 0, stride = 0, pad = 0;
    std::uint8_t affine = 0, transform = 0, learn = 0, calibrated = 0, activation = 0;
    float k = 0.0f, b = 0.0f, gamma = 0.0f, beta = 0.0f;
    float k_w = 0.0f, b_w = 0.0f;
    float run_mean = 0.0f, run_var = 0.0f;
    std::vector<float> weights;
    std::vector<float> bias;
    std::vector<float> alpha;
    std::uint32_t plane_len = 0;               // logical length of each filter
    std::vector<std::uint8_t> planes;          // per filter: presence then sign words

    bool operator==(const LayerRecord&) const = default;
};

struct ModelFile {
    std::vector<LayerRecord> layers;

    bool operator==(const ModelFile&) const = default;
};

inline constexpr char kModelMagic[4] = {'R', 'T', 'N', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

// Layout: magic, u32 version, u32 layer count, records, u32 crc32 of
// everything between the magic and the checksum itself.
std::vector<std::uint8_t> save_model(const ModelFile& model);

struct LoadedModel {
    ModelFile model;
    // The payload checksum is advisory: a mismatch is reported here rather
    // than thrown, so a caller can decide whether to trust the bits.
    bool checksum_ok = true;
};

// Throws on structural problems: bad magic, unknown version or record kind,
// truncation, non-canonical packed planes. With lenient=true a sign bit under
// a cleared presence bit is normalized to the canonical zero instead of
// rejected.
LoadedModel load_model(std::span<const std::uint8_t> bytes, bool lenient = false);

void write_model_file(const std::string& path, const ModelFile& model);
LoadedModel read_model_file(const std::string& path, bool lenient = false);

// trainable net <-> records
ModelFile to_model_file(const Network& net);
Network network_from_model_file(const ModelFile& model);

// frozen inference net <-> records
ModelFile to_model_file(const InferenceModel& model);
InferenceModel inference_from_model_file(const ModelFile& model);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

}  // namespace ternet
