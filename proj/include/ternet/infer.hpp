#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

#include "ternet/layers.hpp"
#include "ternet/packed.hpp"
#include "ternet/tensor.hpp"

namespace ternet {

// One sample's ternary feature map, packed, flattened channel-major
// (c, then rows, then columns).
struct PackedFeatureMap {
    int c = 0;
    int h = 0;
    int w = 0;
    PackedTernaryVector data;
};

// A weight-quantized layer frozen for deployment. gamma/beta describe the
// reparameterization of the *incoming* activations; alpha is this layer's
// per-filter weight scale. The per-filter constants are precomputed:
//   weight_sums[f]        = sum of the ternary weights of filter f
//   sparsity_threshold[f] = beta * weight_sums[f]
//   precomputed_c[f]      = alpha[f] * sparsity_threshold[f]
struct QuantizedLayer {
    bool is_conv = false;
    ConvGeom geom;          // conv only
    int in_dim = 0;         // dense only
    int out_dim = 0;        // filters
    std::vector<PackedTernaryVector> filters;
    Eigen::VectorXd alpha;
    double gamma = 1.0;
    double beta = 0.0;
    Eigen::VectorXi weight_sums;
    Eigen::VectorXd sparsity_threshold;
    Eigen::VectorXd precomputed_c;
};

QuantizedLayer make_quantized_dense(const Tensord& ternary_weights,
                                    const Eigen::VectorXd& alpha, double gamma, double beta);
QuantizedLayer make_quantized_conv(ConvGeom geom, const Tensord& ternary_weights,
                                   const Eigen::VectorXd& alpha, double gamma, double beta);

// Both forwards compute, per filter f over the packed dot product d:
//   alpha[f] * max(0, gamma * d + sparsity_threshold[f])
// which equals max(0, alpha*gamma*d + precomputed_c[f]) since alpha > 0.
// They share one arithmetic order on purpose: the two formulations must
// agree bit for bit, not just algebraically.
Eigen::VectorXd fused_layer_forward(const QuantizedLayer& layer,
                                    const PackedTernaryVector& input);
Eigen::VectorXd folded_relu_forward(const QuantizedLayer& layer,
                                    const PackedTernaryVector& input);

// Patch-at-a-time convolution over a packed ternary feature map. Out-of-range
// taps read as ternary zero, so padding costs nothing in the dot products.
Tensord conv_im2col(const QuantizedLayer& layer, const PackedFeatureMap& input,
                    int stride, int pad);

struct SparsityReport {
    struct Entry {
        std::string name;
        std::size_t zeros = 0;
        std::size_t total = 0;
        double fraction() const {
            return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
        }
    };
    std::vector<Entry> entries;
};

// Value flowing between inference stages: either a dense real tensor or a
// batch of packed ternary maps.
struct FeatureBatch {
    bool packed = false;
    Tensord dense;
    int c = 0, h = 0, w = 0;
    std::vector<PackedTernaryVector> samples;
};

class InferStage {
public:
    virtual ~InferStage() = default;
    virtual FeatureBatch apply(FeatureBatch&& in, SparsityReport* report) const = 0;
};

class FloatDenseStage : public InferStage {
public:
    FloatDenseStage(Tensord w, Tensord b, bool has_bias)
        : w_(std::move(w)), b_(std::move(b)), has_bias_(has_bias) {}
    FeatureBatch apply(FeatureBatch&& in, SparsityReport* report) const override;

    Tensord w_, b_;
    bool has_bias_;
};

class FloatConvStage : public InferStage {
public:
    FloatConvStage(ConvGeom geom, Tensord w, Tensord b, bool has_bias)
        : geom_(geom), w_(std::move(w)), b_(std::move(b)), has_bias_(has_bias) {}
    FeatureBatch apply(FeatureBatch&& in, SparsityReport* report) const override;

    ConvGeom geom_;
    Tensord w_, b_;
    bool has_bias_;
};

class ReluStage : public InferStage {
public:
    FeatureBatch apply(FeatureBatch&& in, SparsityReport* report) const override;
};

// Fixed ternarization of real activations: Q(k*x + b), packed. This is where
// activation sparsity is measured.
class TernarizeStage : public InferStage {
public:
    TernarizeStage(double k, double b, std::string name)
        : k_(k), b_(b), name_(std::move(name)) {}
    FeatureBatch apply(FeatureBatch&& in, SparsityReport* report) const override;

    double k_, b_;
    std::string name_;
};

class QuantizedStage : public InferStage {
public:
    explicit QuantizedStage(QuantizedLayer layer) : layer_(std::move(layer)) {}
    FeatureBatch apply(FeatureBatch&& in, SparsityReport* report) const override;

    QuantizedLayer layer_;
};

class InferenceModel {
public:
    Tensord forward(const Tensord& input, SparsityReport* report = nullptr) const;

    std::vector<std::unique_ptr<InferStage>> stages;
};

// Freezes a trained net for deployment: latent weights are ternarized and
// packed, batchnorm running statistics fold into the following quantizer's
// k/b, and each quantized layer absorbs the ReLU that follows it. The first
// and last layers stay in full precision. Throws on layer sequences the
// packed pipeline cannot express.
InferenceModel quantize_network(const Network& net);

SparsityReport measure_sparsity(const InferenceModel& model, const Tensord& inputs);

}  // namespace ternet
