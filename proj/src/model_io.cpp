#include "ternet/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace ternet {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int j = 0; j < 8; ++j) c = (c & 1) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t crc = 0xFFFFFFFFu;
    for (std::uint8_t b : bytes) crc = table[(crc ^ b) & 0xFFu] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr std::uint32_t kMaxLayers = 4096;
constexpr std::uint32_t kMaxDim = 1u << 22;

class Writer {
public:
    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void floats(const std::vector<float>& v) {
        for (float f : v) f32(f);
    }
    void bytes(const std::vector<std::uint8_t>& v) { out.insert(out.end(), v.begin(), v.end()); }

    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> s) : data(s) {}

    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{data[pos + i]} << (8 * i);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::vector<float> floats(std::size_t n) {
        need(4 * n);
        std::vector<float> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = f32();
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> v(data.begin() + static_cast<std::ptrdiff_t>(pos),
                                    data.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return v;
    }
    bool done() const { return pos == data.size(); }

    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

private:
    void need(std::size_t n) const {
        if (pos + n > data.size()) throw std::runtime_error("model file truncated");
    }
};

std::uint32_t checked_dim(std::uint32_t v, const char* what) {
    if (v == 0 || v > kMaxDim) {
        throw std::runtime_error(std::string("model file: implausible ") + what);
    }
    return v;
}

void write_record(Writer& w, const LayerRecord& r) {
    w.u8(static_cast<std::uint8_t>(r.kind));
    switch (r.kind) {
        case RecordKind::Dense:
            w.u32(r.in);
            w.u32(r.out);
            w.u8(r.has_bias);
            w.floats(r.weights);
            if (r.has_bias) w.floats(r.bias);
            break;
        case RecordKind::Conv2D:
            w.u32(r.in_c);
            w.u32(r.out_c);
            w.u32(r.kernel);
            w.u32(r.stride);
            w.u32(r.pad);
            w.u8(r.has_bias);
            w.floats(r.weights);
            if (r.has_bias) w.floats(r.bias);
            break;
        case RecordKind::ReLU:
            break;
        case RecordKind::BatchNorm:
            w.u8(r.affine);
            w.f32(r.k);
            w.f32(r.b);
            w.f32(r.run_mean);
            w.f32(r.run_var);
            break;
        case RecordKind::ActivationQuant:
            w.u8(r.activation);
            w.u8(r.transform);
            w.u8(r.learn);
            w.u8(r.calibrated);
            w.f32(r.k);
            w.f32(r.b);
            w.f32(r.gamma);
            w.f32(r.beta);
            break;
        case RecordKind::WeightQuantDense:
            w.u32(r.in);
            w.u32(r.out);
            w.f32(r.k_w);
            w.f32(r.b_w);
            w.floats(r.alpha);
            w.floats(r.weights);
            break;
        case RecordKind::WeightQuantConv:
            w.u32(r.in_c);
            w.u32(r.out_c);
            w.u32(r.kernel);
            w.u32(r.stride);
            w.u32(r.pad);
            w.f32(r.k_w);
            w.f32(r.b_w);
            w.floats(r.alpha);
            w.floats(r.weights);
            break;
        case RecordKind::QuantDense:
            w.u32(r.in);
            w.u32(r.out);
            w.f32(r.gamma);
            w.f32(r.beta);
            w.floats(r.alpha);
            w.u32(r.plane_len);
            w.bytes(r.planes);
            break;
        case RecordKind::QuantConv:
            w.u32(r.in_c);
            w.u32(r.out_c);
            w.u32(r.kernel);
            w.u32(r.stride);
            w.u32(r.pad);
            w.f32(r.gamma);
            w.f32(r.beta);
            w.floats(r.alpha);
            w.u32(r.plane_len);
            w.bytes(r.planes);
            break;
        case RecordKind::Ternarize:
            w.f32(r.k);
            w.f32(r.b);
            break;
    }
}

// validate + optionally normalize the packed planes of one quantized record
void check_planes(LayerRecord& r, std::size_t filters, bool lenient) {
    const std::size_t words = PackedTernaryVector::words_for(r.plane_len);
    if (r.planes.size() != filters * 16 * words) {
        throw std::runtime_error("model file: packed plane byte count mismatch");
    }
    for (std::size_t f = 0; f < filters; ++f) {
        const std::size_t base = f * 16 * words;
        PackedTernaryVector v = read_planes_le(
            std::span<const std::uint8_t>(r.planes.data() + base, 16 * words), r.plane_len);
        if (v.canonical()) continue;
        // separate the fixable defect (stray sign bit under a cleared
        // presence bit) from the unfixable ones (padding garbage)
        bool padding_ok = true;
        const std::size_t rem = r.plane_len & 63;
        if (words > 0 && rem != 0) {
            const std::uint64_t mask = (std::uint64_t{1} << rem) - 1;
            if ((v.presence[words - 1] & ~mask) || (v.sign[words - 1] & ~mask)) {
                padding_ok = false;
            }
        }
        if (!padding_ok || !lenient) {
            throw std::runtime_error(
                lenient ? "model file: packed planes have nonzero padding"
                        : "model file: packed planes are not canonical");
        }
        for (std::size_t i = 0; i < words; ++i) v.sign[i] &= v.presence[i];
        std::vector<std::uint8_t> fixed;
        append_planes_le(v, fixed);
        std::copy(fixed.begin(), fixed.end(), r.planes.begin() + static_cast<std::ptrdiff_t>(base));
    }
}

LayerRecord read_record(Reader& rd, bool lenient) {
    const std::uint8_t tag = rd.u8();
    if (tag > static_cast<std::uint8_t>(RecordKind::Ternarize)) {
        throw std::runtime_error("model file: unknown layer kind " + std::to_string(tag));
    }
    LayerRecord r;
    r.kind = static_cast<RecordKind>(tag);
    switch (r.kind) {
        case RecordKind::Dense:
            r.in = checked_dim(rd.u32(), "dense input dim");
            r.out = checked_dim(rd.u32(), "dense output dim");
            r.has_bias = rd.u8();
            r.weights = rd.floats(static_cast<std::size_t>(r.in) * r.out);
            if (r.has_bias) r.bias = rd.floats(r.out);
            break;
        case RecordKind::Conv2D:
            r.in_c = checked_dim(rd.u32(), "conv channels");
            r.out_c = checked_dim(rd.u32(), "conv filters");
            r.kernel = checked_dim(rd.u32(), "conv kernel");
            r.stride = checked_dim(rd.u32(), "conv stride");
            r.pad = rd.u32();
            r.has_bias = rd.u8();
            r.weights = rd.floats(static_cast<std::size_t>(r.out_c) * r.in_c * r.kernel * r.kernel);
            if (r.has_bias) r.bias = rd.floats(r.out_c);
            break;
        case RecordKind::ReLU:
            break;
        case RecordKind::BatchNorm:
            r.affine = rd.u8();
            r.k = rd.f32();
            r.b = rd.f32();
            r.run_mean = rd.f32();
            r.run_var = rd.f32();
            break;
        case RecordKind::ActivationQuant:
            r.activation = rd.u8();
            if (r.activation > 4) throw std::runtime_error("model file: unknown activation kind");
            r.transform = rd.u8();
            r.learn = rd.u8();
            r.calibrated = rd.u8();
            r.k = rd.f32();
            r.b = rd.f32();
            r.gamma = rd.f32();
            r.beta = rd.f32();
            break;
        case RecordKind::WeightQuantDense:
            r.in = checked_dim(rd.u32(), "dense input dim");
            r.out = checked_dim(rd.u32(), "dense output dim");
            r.k_w = rd.f32();
            r.b_w = rd.f32();
            r.alpha = rd.floats(r.out);
            r.weights = rd.floats(static_cast<std::size_t>(r.in) * r.out);
            break;
        case RecordKind::WeightQuantConv:
            r.in_c = checked_dim(rd.u32(), "conv channels");
            r.out_c = checked_dim(rd.u32(), "conv filters");
            r.kernel = checked_dim(rd.u32(), "conv kernel");
            r.stride = checked_dim(rd.u32(), "conv stride");
            r.pad = rd.u32();
            r.k_w = rd.f32();
            r.b_w = rd.f32();
            r.alpha = rd.floats(r.out_c);
            r.weights = rd.floats(static_cast<std::size_t>(r.out_c) * r.in_c * r.kernel * r.kernel);
            break;
        case RecordKind::QuantDense:
            r.in = checked_dim(rd.u32(), "dense input dim");
            r.out = checked_dim(rd.u32(), "dense output dim");
            r.gamma = rd.f32();
            r.beta = rd.f32();
            r.alpha = rd.floats(r.out);
            r.plane_len = rd.u32();
            if (r.plane_len != r.in) {
                throw std::runtime_error("model file: plane length does not match layer input");
            }
            r.planes = rd.bytes(static_cast<std::size_t>(r.out) * 16 *
                                PackedTernaryVector::words_for(r.plane_len));
            check_planes(r, r.out, lenient);
            break;
        case RecordKind::QuantConv:
            r.in_c = checked_dim(rd.u32(), "conv channels");
            r.out_c = checked_dim(rd.u32(), "conv filters");
            r.kernel = checked_dim(rd.u32(), "conv kernel");
            r.stride = checked_dim(rd.u32(), "conv stride");
            r.pad = rd.u32();
            r.gamma = rd.f32();
            r.beta = rd.f32();
            r.alpha = rd.floats(r.out_c);
            r.plane_len = rd.u32();
            if (r.plane_len != r.in_c * r.kernel * r.kernel) {
                throw std::runtime_error("model file: plane length does not match filter size");
            }
            r.planes = rd.bytes(static_cast<std::size_t>(r.out_c) * 16 *
                                PackedTernaryVector::words_for(r.plane_len));
            check_planes(r, r.out_c, lenient);
            break;
        case RecordKind::Ternarize:
            r.k = rd.f32();
            r.b = rd.f32();
            break;
    }
    return r;
}

std::vector<float> narrowed(const Tensord& t) {
    std::vector<float> v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<float>(t[i]);
    return v;
}

std::vector<float> narrowed(const Eigen::VectorXd& t) {
    std::vector<float> v(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) v[static_cast<std::size_t>(i)] =
        static_cast<float>(t[i]);
    return v;
}

void widen_into(const std::vector<float>& src, Tensord& dst) {
    if (src.size() != dst.size()) throw std::runtime_error("model file: weight count mismatch");
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
}

Eigen::VectorXd widened(const std::vector<float>& src) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(src.size()));
    for (std::size_t i = 0; i < src.size(); ++i) v[static_cast<Eigen::Index>(i)] = src[i];
    return v;
}

}  // namespace

std::vector<std::uint8_t> save_model(const ModelFile& model) {
    if (model.layers.size() > kMaxLayers) {
        throw std::invalid_argument("save_model: too many layers");
    }
    Writer w;
    w.out.insert(w.out.end(), kModelMagic, kModelMagic + 4);
    w.u32(kModelVersion);
    w.u32(static_cast<std::uint32_t>(model.layers.size()));
    for (const LayerRecord& r : model.layers) write_record(w, r);
    const std::uint32_t crc =
        crc32(std::span<const std::uint8_t>(w.out.data() + 4, w.out.size() - 4));
    w.u32(crc);
    return w.out;
}

LoadedModel load_model(std::span<const std::uint8_t> bytes, bool lenient) {
    if (bytes.size() < 16) throw std::runtime_error("model file truncated");
    if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
        throw std::runtime_error("model file: bad magic");
    }
    const std::uint32_t stored_crc = std::uint32_t{bytes[bytes.size() - 4]} |
                                     std::uint32_t{bytes[bytes.size() - 3]} << 8 |
                                     std::uint32_t{bytes[bytes.size() - 2]} << 16 |
                                     std::uint32_t{bytes[bytes.size() - 1]} << 24;
    LoadedModel loaded;
    loaded.checksum_ok =
        crc32(std::span<const std::uint8_t>(bytes.data() + 4, bytes.size() - 8)) == stored_crc;

    Reader rd(bytes.subspan(4, bytes.size() - 8));
    const std::uint32_t version = rd.u32();
    if (version != kModelVersion) {
        throw std::runtime_error("model file: unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = rd.u32();
    if (count > kMaxLayers) throw std::runtime_error("model file: implausible layer count");
    loaded.model.layers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        loaded.model.layers.push_back(read_record(rd, lenient));
    }
    if (!rd.done()) throw std::runtime_error("model file: trailing bytes after last record");
    return loaded;
}

void write_model_file(const std::string& path, const ModelFile& model) {
    const std::vector<std::uint8_t> bytes = save_model(model);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

LoadedModel read_model_file(const std::string& path, bool lenient) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return load_model(bytes, lenient);
}

// ---- trainable net conversions ----------------------------------------------

ModelFile to_model_file(const Network& net) {
    ModelFile mf;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const Layer& layer = net.layer(i);
        LayerRecord r;
        switch (layer.kind()) {
            case LayerKind::Dense: {
                const auto& l = dynamic_cast<const DenseLayer&>(layer);
                r.kind = RecordKind::Dense;
                r.in = static_cast<std::uint32_t>(l.in_dim);
                r.out = static_cast<std::uint32_t>(l.out_dim);
                r.has_bias = l.has_bias ? 1 : 0;
                r.weights = narrowed(l.w);
                if (l.has_bias) r.bias = narrowed(l.b);
                break;
            }
            case LayerKind::Conv2D: {
                const auto& l = dynamic_cast<const Conv2DLayer&>(layer);
                r.kind = RecordKind::Conv2D;
                r.in_c = static_cast<std::uint32_t>(l.geom.in_c);
                r.out_c = static_cast<std::uint32_t>(l.geom.out_c);
                r.kernel = static_cast<std::uint32_t>(l.geom.kernel);
                r.stride = static_cast<std::uint32_t>(l.geom.stride);
                r.pad = static_cast<std::uint32_t>(l.geom.pad);
                r.has_bias = l.has_bias ? 1 : 0;
                r.weights = narrowed(l.w);
                if (l.has_bias) r.bias = narrowed(l.b);
                break;
            }
            case LayerKind::ReLU:
                r.kind = RecordKind::ReLU;
                break;
            case LayerKind::BatchNorm: {
                const auto& l = dynamic_cast<const BatchNormLayer&>(layer);
                r.kind = RecordKind::BatchNorm;
                r.affine = l.affine ? 1 : 0;
                r.k = static_cast<float>(l.k);
                r.b = static_cast<float>(l.b);
                r.run_mean = static_cast<float>(l.running_mean);
                r.run_var = static_cast<float>(l.running_var);
                break;
            }
            case LayerKind::ActivationQuant: {
                const auto& l = dynamic_cast<const ActivationLayer&>(layer);
                r.kind = RecordKind::ActivationQuant;
                r.activation = static_cast<std::uint8_t>(l.activation);
                r.transform = l.transform ? 1 : 0;
                r.learn = l.learn_scale_offset ? 1 : 0;
                r.calibrated = l.gamma_ready ? 1 : 0;
                r.k = static_cast<float>(l.p.k);
                r.b = static_cast<float>(l.p.b);
                r.gamma = static_cast<float>(l.p.gamma);
                r.beta = static_cast<float>(l.p.beta);
                break;
            }
            case LayerKind::WeightQuantDense: {
                const auto& l = dynamic_cast<const WeightQuantDenseLayer&>(layer);
                r.kind = RecordKind::WeightQuantDense;
                r.in = static_cast<std::uint32_t>(l.in_dim);
                r.out = static_cast<std::uint32_t>(l.out_dim);
                r.k_w = static_cast<float>(l.qp.k_w);
                r.b_w = static_cast<float>(l.qp.b_w);
                r.alpha = narrowed(l.qp.alpha);
                r.weights = narrowed(l.w);
                break;
            }
            case LayerKind::WeightQuantConv: {
                const auto& l = dynamic_cast<const WeightQuantConvLayer&>(layer);
                r.kind = RecordKind::WeightQuantConv;
                r.in_c = static_cast<std::uint32_t>(l.geom.in_c);
                r.out_c = static_cast<std::uint32_t>(l.geom.out_c);
                r.kernel = static_cast<std::uint32_t>(l.geom.kernel);
                r.stride = static_cast<std::uint32_t>(l.geom.stride);
                r.pad = static_cast<std::uint32_t>(l.geom.pad);
                r.k_w = static_cast<float>(l.qp.k_w);
                r.b_w = static_cast<float>(l.qp.b_w);
                r.alpha = narrowed(l.qp.alpha);
                r.weights = narrowed(l.w);
                break;
            }
        }
        mf.layers.push_back(std::move(r));
    }
    return mf;
}

Network network_from_model_file(const ModelFile& mf) {
    Network net;
    for (const LayerRecord& r : mf.layers) {
        switch (r.kind) {
            case RecordKind::Dense: {
                LayerSpec s = LayerSpec::dense(static_cast<int>(r.in), static_cast<int>(r.out),
                                               r.has_bias != 0);
                auto l = std::make_unique<DenseLayer>(s.in, s.out, s.bias);
                widen_into(r.weights, l->w);
                if (r.has_bias) widen_into(r.bias, l->b);
                net.add_layer(s, std::move(l));
                break;
            }
            case RecordKind::Conv2D: {
                LayerSpec s = LayerSpec::conv2d(static_cast<int>(r.in_c),
                                                static_cast<int>(r.out_c),
                                                static_cast<int>(r.kernel),
                                                static_cast<int>(r.stride),
                                                static_cast<int>(r.pad));
                s.bias = r.has_bias != 0;
                auto l = std::make_unique<Conv2DLayer>(s.geom, s.bias);
                widen_into(r.weights, l->w);
                if (r.has_bias) widen_into(r.bias, l->b);
                net.add_layer(s, std::move(l));
                break;
            }
            case RecordKind::ReLU:
                net.add_layer(LayerSpec::relu(), std::make_unique<ReLULayer>());
                break;
            case RecordKind::BatchNorm: {
                LayerSpec s = LayerSpec::batch_norm(r.affine != 0);
                auto l = std::make_unique<BatchNormLayer>(s.affine);
                l->k = r.k;
                l->b = r.b;
                l->running_mean = r.run_mean;
                l->running_var = r.run_var;
                net.add_layer(s, std::move(l));
                break;
            }
            case RecordKind::ActivationQuant: {
                LayerSpec s;
                s.kind = LayerKind::ActivationQuant;
                s.act_kind = static_cast<ActivationKind>(r.activation);
                s.transform = r.transform != 0;
                s.learn_scale_offset = r.learn != 0;
                s.calibrate_scale = r.calibrated == 0;
                auto l = std::make_unique<ActivationLayer>(s.act_kind, s.transform,
                                                           s.learn_scale_offset,
                                                           s.calibrate_scale);
                l->p.k = r.k;
                l->p.b = r.b;
                l->p.gamma = r.gamma;
                l->p.beta = r.beta;
                net.add_layer(s, std::move(l));
                break;
            }
            case RecordKind::WeightQuantDense: {
                LayerSpec s = LayerSpec::weight_quant_dense(static_cast<int>(r.in),
                                                            static_cast<int>(r.out));
                auto l = std::make_unique<WeightQuantDenseLayer>(s.in, s.out);
                widen_into(r.weights, l->w);
                l->qp.k_w = r.k_w;
                l->qp.b_w = r.b_w;
                l->qp.alpha = widened(r.alpha);
                net.add_layer(s, std::move(l));
                break;
            }
            case RecordKind::WeightQuantConv: {
                LayerSpec s = LayerSpec::weight_quant_conv(static_cast<int>(r.in_c),
                                                           static_cast<int>(r.out_c),
                                                           static_cast<int>(r.kernel),
                                                           static_cast<int>(r.stride),
                                                           static_cast<int>(r.pad));
                auto l = std::make_unique<WeightQuantConvLayer>(s.geom);
                widen_into(r.weights, l->w);
                l->qp.k_w = r.k_w;
                l->qp.b_w = r.b_w;
                l->qp.alpha = widened(r.alpha);
                net.add_layer(s, std::move(l));
                break;
            }
            default:
                throw std::runtime_error(
                    "model file: record kind not valid in a trainable net");
        }
    }
    return net;
}

// ---- inference net conversions ------------------------------------------------

ModelFile to_model_file(const InferenceModel& model) {
    ModelFile mf;
    for (const auto& stage : model.stages) {
        LayerRecord r;
        if (const auto* s = dynamic_cast<const FloatDenseStage*>(stage.get())) {
            r.kind = RecordKind::Dense;
            r.in = static_cast<std::uint32_t>(s->w_.dim(1));
            r.out = static_cast<std::uint32_t>(s->w_.dim(0));
            r.has_bias = s->has_bias_ ? 1 : 0;
            r.weights = narrowed(s->w_);
            if (s->has_bias_) r.bias = narrowed(s->b_);
        } else if (const auto* s = dynamic_cast<const FloatConvStage*>(stage.get())) {
            r.kind = RecordKind::Conv2D;
            r.in_c = static_cast<std::uint32_t>(s->geom_.in_c);
            r.out_c = static_cast<std::uint32_t>(s->geom_.out_c);
            r.kernel = static_cast<std::uint32_t>(s->geom_.kernel);
            r.stride = static_cast<std::uint32_t>(s->geom_.stride);
            r.pad = static_cast<std::uint32_t>(s->geom_.pad);
            r.has_bias = s->has_bias_ ? 1 : 0;
            r.weights = narrowed(s->w_);
            if (s->has_bias_) r.bias = narrowed(s->b_);
        } else if (dynamic_cast<const ReluStage*>(stage.get())) {
            r.kind = RecordKind::ReLU;
        } else if (const auto* s = dynamic_cast<const TernarizeStage*>(stage.get())) {
            r.kind = RecordKind::Ternarize;
            r.k = static_cast<float>(s->k_);
            r.b = static_cast<float>(s->b_);
        } else if (const auto* s = dynamic_cast<const QuantizedStage*>(stage.get())) {
            const QuantizedLayer& q = s->layer_;
            r.kind = q.is_conv ? RecordKind::QuantConv : RecordKind::QuantDense;
            if (q.is_conv) {
                r.in_c = static_cast<std::uint32_t>(q.geom.in_c);
                r.out_c = static_cast<std::uint32_t>(q.geom.out_c);
                r.kernel = static_cast<std::uint32_t>(q.geom.kernel);
                r.stride = static_cast<std::uint32_t>(q.geom.stride);
                r.pad = static_cast<std::uint32_t>(q.geom.pad);
            } else {
                r.in = static_cast<std::uint32_t>(q.in_dim);
                r.out = static_cast<std::uint32_t>(q.out_dim);
            }
            r.gamma = static_cast<float>(q.gamma);
            r.beta = static_cast<float>(q.beta);
            r.alpha = narrowed(q.alpha);
            r.plane_len = static_cast<std::uint32_t>(q.filters.front().length);
            for (const PackedTernaryVector& filt : q.filters) append_planes_le(filt, r.planes);
        } else {
            throw std::runtime_error("to_model_file: unknown inference stage");
        }
        mf.layers.push_back(std::move(r));
    }
    return mf;
}

InferenceModel inference_from_model_file(const ModelFile& mf) {
    InferenceModel model;
    int quant_inputs = 0;
    for (const LayerRecord& r : mf.layers) {
        switch (r.kind) {
            case RecordKind::Dense: {
                Tensord w({r.out, r.in});
                widen_into(r.weights, w);
                Tensord b({r.out});
                if (r.has_bias) widen_into(r.bias, b);
                model.stages.push_back(std::make_unique<FloatDenseStage>(
                    std::move(w), std::move(b), r.has_bias != 0));
                break;
            }
            case RecordKind::Conv2D: {
                const ConvGeom geom{static_cast<int>(r.in_c), static_cast<int>(r.out_c),
                                    static_cast<int>(r.kernel), static_cast<int>(r.stride),
                                    static_cast<int>(r.pad)};
                Tensord w({r.out_c, static_cast<std::size_t>(geom.fan_in())});
                widen_into(r.weights, w);
                Tensord b({r.out_c});
                if (r.has_bias) widen_into(r.bias, b);
                model.stages.push_back(std::make_unique<FloatConvStage>(
                    geom, std::move(w), std::move(b), r.has_bias != 0));
                break;
            }
            case RecordKind::ReLU:
                model.stages.push_back(std::make_unique<ReluStage>());
                break;
            case RecordKind::Ternarize:
                model.stages.push_back(std::make_unique<TernarizeStage>(
                    r.k, r.b, "activation" + std::to_string(quant_inputs++)));
                break;
            case RecordKind::QuantDense:
            case RecordKind::QuantConv: {
                const bool conv = r.kind == RecordKind::QuantConv;
                const std::size_t filters = conv ? r.out_c : r.out;
                const std::size_t words = PackedTernaryVector::words_for(r.plane_len);
                Tensord ternary({filters, static_cast<std::size_t>(r.plane_len)});
                for (std::size_t f = 0; f < filters; ++f) {
                    const PackedTernaryVector v = read_planes_le(
                        std::span<const std::uint8_t>(r.planes.data() + f * 16 * words,
                                                      16 * words),
                        r.plane_len);
                    for (std::size_t i = 0; i < r.plane_len; ++i) {
                        ternary[f * r.plane_len + i] = v.get(i);
                    }
                }
                QuantizedLayer ql;
                if (conv) {
                    const ConvGeom geom{static_cast<int>(r.in_c), static_cast<int>(r.out_c),
                                        static_cast<int>(r.kernel), static_cast<int>(r.stride),
                                        static_cast<int>(r.pad)};
                    ql = make_quantized_conv(geom, ternary, widened(r.alpha), r.gamma, r.beta);
                } else {
                    ql = make_quantized_dense(ternary, widened(r.alpha), r.gamma, r.beta);
                }
                model.stages.push_back(std::make_unique<QuantizedStage>(std::move(ql)));
                break;
            }
            default:
                throw std::runtime_error(
                    "model file: record kind not valid in an inference net");
        }
    }
    return model;
}

}  // namespace ternet
