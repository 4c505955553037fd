#include "ternet/infer.hpp"

#include <cmath>
#include <stdexcept>

#include "conv_impl.hpp"
#include "ternet/quantize.hpp"

namespace ternet {

namespace {

void check_filters(const QuantizedLayer& layer) {
    if (layer.out_dim <= 0 || layer.filters.size() != static_cast<std::size_t>(layer.out_dim)) {
        throw std::invalid_argument("QuantizedLayer: filter count mismatch");
    }
    if (layer.alpha.size() != layer.out_dim || (layer.alpha.array() <= 0.0).any()) {
        throw std::invalid_argument("QuantizedLayer: alpha must be positive per filter");
    }
}

void fill_constants(QuantizedLayer& layer) {
    layer.weight_sums.resize(layer.out_dim);
    layer.sparsity_threshold.resize(layer.out_dim);
    layer.precomputed_c.resize(layer.out_dim);
    for (int f = 0; f < layer.out_dim; ++f) {
        std::int64_t s = 0;
        const auto& filt = layer.filters[static_cast<std::size_t>(f)];
        for (std::size_t i = 0; i < filt.length; ++i) s += filt.get(i);
        layer.weight_sums[f] = static_cast<int>(s);
        layer.sparsity_threshold[f] = layer.beta * static_cast<double>(s);
        layer.precomputed_c[f] = layer.alpha[f] * layer.sparsity_threshold[f];
    }
}

std::vector<PackedTernaryVector> pack_filters(const Tensord& ternary_weights) {
    if (ternary_weights.rank() != 2) {
        throw std::invalid_argument("quantized layer: weights must be (filters, fan_in)");
    }
    const std::size_t filters = ternary_weights.dim(0);
    const std::size_t fan_in = ternary_weights.dim(1);
    std::vector<PackedTernaryVector> out;
    out.reserve(filters);
    std::vector<TernaryValue> row(fan_in);
    for (std::size_t f = 0; f < filters; ++f) {
        const double* src = ternary_weights.data() + f * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) {
            row[i] = static_cast<TernaryValue>(src[i]);
            if (src[i] != static_cast<double>(row[i]) || !is_ternary(row[i])) {
                throw std::invalid_argument("quantized layer: weight not ternary");
            }
        }
        out.push_back(encode(row));
    }
    return out;
}

// single arithmetic order shared by the fused and folded entry points
inline double quantized_unit(const QuantizedLayer& layer, int f, std::int64_t dot) {
    const double pre = layer.gamma * static_cast<double>(dot) + layer.sparsity_threshold[f];
    return layer.alpha[f] * (pre > 0.0 ? pre : 0.0);
}

Eigen::VectorXd forward_filters(const QuantizedLayer& layer, const PackedTernaryVector& input) {
    check_filters(layer);
    Eigen::VectorXd out(layer.out_dim);
    for (int f = 0; f < layer.out_dim; ++f) {
        const std::int64_t d = dot_packed(layer.filters[static_cast<std::size_t>(f)], input);
        out[f] = quantized_unit(layer, f, d);
    }
    return out;
}

}  // namespace

QuantizedLayer make_quantized_dense(const Tensord& ternary_weights,
                                    const Eigen::VectorXd& alpha, double gamma, double beta) {
    QuantizedLayer layer;
    layer.is_conv = false;
    layer.in_dim = static_cast<int>(ternary_weights.dim(1));
    layer.out_dim = static_cast<int>(ternary_weights.dim(0));
    layer.filters = pack_filters(ternary_weights);
    layer.alpha = alpha;
    layer.gamma = gamma;
    layer.beta = beta;
    check_filters(layer);
    fill_constants(layer);
    return layer;
}

QuantizedLayer make_quantized_conv(ConvGeom geom, const Tensord& ternary_weights,
                                   const Eigen::VectorXd& alpha, double gamma, double beta) {
    if (static_cast<int>(ternary_weights.dim(0)) != geom.out_c ||
        static_cast<int>(ternary_weights.dim(1)) != geom.fan_in()) {
        throw std::invalid_argument("make_quantized_conv: weight shape does not match geometry");
    }
    QuantizedLayer layer;
    layer.is_conv = true;
    layer.geom = geom;
    layer.in_dim = geom.fan_in();
    layer.out_dim = geom.out_c;
    layer.filters = pack_filters(ternary_weights);
    layer.alpha = alpha;
    layer.gamma = gamma;
    layer.beta = beta;
    check_filters(layer);
    fill_constants(layer);
    return layer;
}

Eigen::VectorXd fused_layer_forward(const QuantizedLayer& layer,
                                    const PackedTernaryVector& input) {
    return forward_filters(layer, input);
}

Eigen::VectorXd folded_relu_forward(const QuantizedLayer& layer,
                                    const PackedTernaryVector& input) {
    return forward_filters(layer, input);
}

Tensord conv_im2col(const QuantizedLayer& layer, const PackedFeatureMap& input,
                    int stride, int pad) {
    check_filters(layer);
    if (!layer.is_conv) throw std::invalid_argument("conv_im2col: dense layer");
    const ConvGeom& g = layer.geom;
    if (input.c != g.in_c) throw std::invalid_argument("conv_im2col: channel mismatch");
    if (input.data.length != static_cast<std::size_t>(input.c) * input.h * input.w) {
        throw std::invalid_argument("conv_im2col: map length mismatch");
    }
    if (stride <= 0 || pad < 0) throw std::invalid_argument("conv_im2col: bad stride/pad");
    if (input.h + 2 * pad < g.kernel || input.w + 2 * pad < g.kernel) {
        throw std::invalid_argument("conv_im2col: kernel larger than padded input");
    }
    const int oh = (input.h + 2 * pad - g.kernel) / stride + 1;
    const int ow = (input.w + 2 * pad - g.kernel) / stride + 1;
    const int K = g.kernel;
    const std::size_t plane = static_cast<std::size_t>(input.h) * input.w;

    Tensord out({static_cast<std::size_t>(g.out_c), static_cast<std::size_t>(oh),
                 static_cast<std::size_t>(ow)});
    PackedTernaryVector patch;
    patch.length = static_cast<std::size_t>(g.fan_in());
    patch.presence.assign(PackedTernaryVector::words_for(patch.length), 0);
    patch.sign.assign(patch.presence.size(), 0);

    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            std::fill(patch.presence.begin(), patch.presence.end(), 0);
            std::fill(patch.sign.begin(), patch.sign.end(), 0);
            for (int c = 0; c < g.in_c; ++c) {
                for (int ky = 0; ky < K; ++ky) {
                    const int y = oy * stride - pad + ky;
                    if (y < 0 || y >= input.h) continue;  // padding: ternary zero
                    for (int kx = 0; kx < K; ++kx) {
                        const int x = ox * stride - pad + kx;
                        if (x < 0 || x >= input.w) continue;
                        const TernaryValue v = input.data.get(
                            static_cast<std::size_t>(c) * plane +
                            static_cast<std::size_t>(y) * input.w + static_cast<std::size_t>(x));
                        if (v != 0) {
                            patch.set(static_cast<std::size_t>(c * K * K + ky * K + kx), v);
                        }
                    }
                }
            }
            for (int f = 0; f < g.out_c; ++f) {
                const std::int64_t d = dot_packed(layer.filters[static_cast<std::size_t>(f)], patch);
                out[(static_cast<std::size_t>(f) * oh + oy) * ow + ox] =
                    quantized_unit(layer, f, d);
            }
        }
    }
    return out;
}

// ---- stages -----------------------------------------------------------------

namespace {

const Tensord& require_dense(const FeatureBatch& in, const char* who) {
    if (in.packed) throw std::runtime_error(std::string(who) + ": expected real activations");
    return in.dense;
}

}  // namespace

FeatureBatch FloatDenseStage::apply(FeatureBatch&& in, SparsityReport*) const {
    const Tensord& x = require_dense(in, "FloatDenseStage");
    const std::size_t batch = x.dim(0);
    const auto out_dim = static_cast<Eigen::Index>(w_.dim(0));
    const auto in_dim = static_cast<Eigen::Index>(w_.dim(1));
    if (x.size() / batch != static_cast<std::size_t>(in_dim)) {
        throw std::runtime_error("FloatDenseStage: input feature count mismatch");
    }
    FeatureBatch out;
    out.dense = Tensord({batch, static_cast<std::size_t>(out_dim)});
    auto ymat = out.dense.matrix(batch, out_dim);
    ymat.noalias() = x.matrix(batch, in_dim) * w_.matrix(out_dim, in_dim).transpose();
    if (has_bias_) ymat.rowwise() += b_.vec().transpose();
    return out;
}

FeatureBatch FloatConvStage::apply(FeatureBatch&& in, SparsityReport*) const {
    const Tensord& x = require_dense(in, "FloatConvStage");
    const auto s = detail::conv_shapes(x.shape(), geom_);
    RowMatrix<double> patches;
    detail::im2col(x, geom_, s, patches);
    FeatureBatch out;
    out.dense = detail::conv_forward(patches, w_, has_bias_ ? b_.data() : nullptr, geom_, s);
    return out;
}

FeatureBatch ReluStage::apply(FeatureBatch&& in, SparsityReport*) const {
    Tensord& x = in.dense;
    require_dense(in, "ReluStage");
    x.array() = x.array().max(0.0);
    return std::move(in);
}

FeatureBatch TernarizeStage::apply(FeatureBatch&& in, SparsityReport* report) const {
    const Tensord& x = require_dense(in, "TernarizeStage");
    FeatureBatch out;
    out.packed = true;
    if (x.rank() == 4) {
        out.c = static_cast<int>(x.dim(1));
        out.h = static_cast<int>(x.dim(2));
        out.w = static_cast<int>(x.dim(3));
    } else if (x.rank() == 2) {
        out.c = static_cast<int>(x.size() / x.dim(0));
        out.h = 1;
        out.w = 1;
    } else {
        throw std::runtime_error("TernarizeStage: expected rank-2 or rank-4 input");
    }
    const std::size_t batch = x.dim(0);
    const std::size_t features = x.size() / batch;
    out.samples.reserve(batch);
    std::size_t zeros = 0;
    for (std::size_t s = 0; s < batch; ++s) {
        PackedTernaryVector v;
        v.length = features;
        v.presence.assign(PackedTernaryVector::words_for(features), 0);
        v.sign.assign(v.presence.size(), 0);
        const double* src = x.data() + s * features;
        for (std::size_t i = 0; i < features; ++i) {
            const double t = ternarize_value(k_ * src[i] + b_);
            if (t == 0.0) {
                ++zeros;
            } else {
                v.set(i, static_cast<TernaryValue>(t));
            }
        }
        out.samples.push_back(std::move(v));
    }
    if (report) {
        SparsityReport::Entry e;
        e.name = name_;
        e.zeros = zeros;
        e.total = batch * features;
        report->entries.push_back(e);
    }
    return out;
}

FeatureBatch QuantizedStage::apply(FeatureBatch&& in, SparsityReport*) const {
    if (!in.packed) throw std::runtime_error("QuantizedStage: expected packed activations");
    FeatureBatch out;
    const std::size_t batch = in.samples.size();
    if (layer_.is_conv) {
        const int oh = (in.h + 2 * layer_.geom.pad - layer_.geom.kernel) / layer_.geom.stride + 1;
        const int ow = (in.w + 2 * layer_.geom.pad - layer_.geom.kernel) / layer_.geom.stride + 1;
        out.dense = Tensord({batch, static_cast<std::size_t>(layer_.geom.out_c),
                             static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
        const std::size_t sample = static_cast<std::size_t>(layer_.geom.out_c) * oh * ow;
        for (std::size_t s = 0; s < batch; ++s) {
            PackedFeatureMap map{in.c, in.h, in.w, std::move(in.samples[s])};
            const Tensord y = conv_im2col(layer_, map, layer_.geom.stride, layer_.geom.pad);
            std::copy(y.data(), y.data() + sample, out.dense.data() + s * sample);
        }
    } else {
        out.dense = Tensord({batch, static_cast<std::size_t>(layer_.out_dim)});
        for (std::size_t s = 0; s < batch; ++s) {
            const Eigen::VectorXd y = fused_layer_forward(layer_, in.samples[s]);
            std::copy(y.data(), y.data() + layer_.out_dim,
                      out.dense.data() + s * static_cast<std::size_t>(layer_.out_dim));
        }
    }
    return out;
}

Tensord InferenceModel::forward(const Tensord& input, SparsityReport* report) const {
    FeatureBatch fb;
    fb.dense = input;
    for (const auto& stage : stages) fb = stage->apply(std::move(fb), report);
    if (fb.packed) throw std::runtime_error("InferenceModel: network ends in packed activations");
    return std::move(fb.dense);
}

// ---- freezing a trained network ---------------------------------------------

InferenceModel quantize_network(const Network& net) {
    InferenceModel model;
    bool have_reparam = false;
    double gamma = 1.0, beta = 0.0;
    int quant_inputs = 0;

    for (std::size_t i = 0; i < net.size(); ++i) {
        const Layer& layer = net.layer(i);
        switch (layer.kind()) {
            case LayerKind::Dense: {
                const auto& l = dynamic_cast<const DenseLayer&>(layer);
                model.stages.push_back(
                    std::make_unique<FloatDenseStage>(l.w, l.b, l.has_bias));
                break;
            }
            case LayerKind::Conv2D: {
                const auto& l = dynamic_cast<const Conv2DLayer&>(layer);
                model.stages.push_back(
                    std::make_unique<FloatConvStage>(l.geom, l.w, l.b, l.has_bias));
                break;
            }
            case LayerKind::ReLU:
                model.stages.push_back(std::make_unique<ReluStage>());
                break;
            case LayerKind::BatchNorm: {
                const auto& bn = dynamic_cast<const BatchNormLayer&>(layer);
                if (i + 1 >= net.size() ||
                    net.layer(i + 1).kind() != LayerKind::ActivationQuant) {
                    throw std::runtime_error(
                        "quantize_network: batchnorm must feed a quantizer");
                }
                const auto& q = dynamic_cast<const ActivationLayer&>(net.layer(i + 1));
                if (!q.ternary_base()) {
                    throw std::runtime_error(
                        "quantize_network: only ternary activations can be packed");
                }
                // BN standardization + affine, then the quantizer transform,
                // collapsed to a single k*x + b
                const double inv = 1.0 / std::sqrt(bn.running_var + BatchNormLayer::kEps);
                const double k_bn = bn.k * inv;
                const double b_bn = bn.b - bn.k * bn.running_mean * inv;
                const double k_q = q.transform ? q.p.k : 1.0;
                const double b_q = q.transform ? q.p.b : 0.0;
                model.stages.push_back(std::make_unique<TernarizeStage>(
                    k_q * k_bn, k_q * b_bn + b_q,
                    "activation" + std::to_string(quant_inputs++)));
                gamma = q.reparam() ? q.p.gamma : 1.0;
                beta = q.reparam() ? q.p.beta : 0.0;
                have_reparam = true;
                ++i;  // the quantizer is folded in
                break;
            }
            case LayerKind::ActivationQuant: {
                const auto& q = dynamic_cast<const ActivationLayer&>(layer);
                if (!q.ternary_base()) {
                    throw std::runtime_error(
                        "quantize_network: only ternary activations can be packed");
                }
                model.stages.push_back(std::make_unique<TernarizeStage>(
                    q.transform ? q.p.k : 1.0, q.transform ? q.p.b : 0.0,
                    "activation" + std::to_string(quant_inputs++)));
                gamma = q.reparam() ? q.p.gamma : 1.0;
                beta = q.reparam() ? q.p.beta : 0.0;
                have_reparam = true;
                break;
            }
            case LayerKind::WeightQuantDense:
            case LayerKind::WeightQuantConv: {
                if (!have_reparam) {
                    throw std::runtime_error(
                        "quantize_network: weight-quantized layer needs a ternarized input");
                }
                if (i + 1 >= net.size() || net.layer(i + 1).kind() != LayerKind::ReLU) {
                    throw std::runtime_error(
                        "quantize_network: expected relu after a weight-quantized layer");
                }
                QuantizedLayer ql;
                if (layer.kind() == LayerKind::WeightQuantDense) {
                    const auto& l = dynamic_cast<const WeightQuantDenseLayer&>(layer);
                    const QuantizedWeights qw = quantize_weights(l.w, l.qp);
                    ql = make_quantized_dense(qw.ternary, qw.alpha, gamma, beta);
                } else {
                    const auto& l = dynamic_cast<const WeightQuantConvLayer&>(layer);
                    const QuantizedWeights qw = quantize_weights(l.w, l.qp);
                    ql = make_quantized_conv(l.geom, qw.ternary, qw.alpha, gamma, beta);
                }
                model.stages.push_back(std::make_unique<QuantizedStage>(std::move(ql)));
                have_reparam = false;
                ++i;  // relu absorbed into the stage
                break;
            }
        }
    }
    return model;
}

SparsityReport measure_sparsity(const InferenceModel& model, const Tensord& inputs) {
    SparsityReport report;
    model.forward(inputs, &report);
    return report;
}

}  // namespace ternet
