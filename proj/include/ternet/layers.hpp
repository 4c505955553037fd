#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

#include "ternet/quantize.hpp"
#include "ternet/rng.hpp"
#include "ternet/tensor.hpp"

namespace ternet {

struct TrainConfig;

enum class LayerKind {
    Dense,
    Conv2D,
    BatchNorm,
    ReLU,
    ActivationQuant,
    WeightQuantDense,
    WeightQuantConv,
};

enum class ActivationKind { Fta, Rta, Tanh, Rtanh, Relu };

ActivationKind activation_kind_from_string(const std::string& name);
std::string to_string(ActivationKind kind);

// Hard runs the real ternarizer in the forward pass. Surrogate swaps it for
// the clipped identity that the straight-through estimator assumes, making
// the whole network differentiable so central differences can be checked
// against the analytic backward pass. The backward code is the same either
// way; only the cached forward values differ.
enum class QuantForward { Hard, Surrogate };

struct PassContext {
    bool training = true;
    QuantForward quant = QuantForward::Hard;
};

struct ConvGeom {
    int in_c = 0;
    int out_c = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;

    int fan_in() const { return in_c * kernel * kernel; }
    int out_dim(int in_dim) const { return (in_dim + 2 * pad - kernel) / stride + 1; }
};

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;

    // dense
    int in = 0;
    int out = 0;
    bool bias = true;

    // conv
    ConvGeom geom;

    // batchnorm: standardization is always applied; the learnable affine
    // pair is optional (off inside quantized blocks, where the quantizer's
    // k/b plays that role)
    bool affine = true;

    // activation / quantizer
    ActivationKind act_kind = ActivationKind::Rta;
    bool transform = false;           // enable the k/b pre-transform
    bool learn_scale_offset = true;   // gamma/beta trainable
    bool calibrate_scale = false;     // init gamma from the first batch seen

    // uniform init half-width for weights; 0 picks the fan-based default
    double init_uniform = 0.0;

    static LayerSpec dense(int in, int out, bool bias = true);
    static LayerSpec conv2d(int in_c, int out_c, int kernel, int stride = 1, int pad = 0);
    static LayerSpec batch_norm(bool affine = true);
    static LayerSpec relu();
    static LayerSpec activation(ActivationKind kind, bool learn_scale_offset = true);
    static LayerSpec activation_quant(bool learn_scale_offset = true,
                                      bool calibrate_scale = true);
    static LayerSpec weight_quant_dense(int in, int out);
    static LayerSpec weight_quant_conv(int in_c, int out_c, int kernel, int stride = 1,
                                       int pad = 0);
};

using NetworkSpec = std::vector<LayerSpec>;

// Snapshot of one layer's parameter gradients after a backward pass. Slots a
// layer does not own stay empty/zero.
struct GradRecord {
    Tensord d_weights;
    Tensord d_bias;
    double d_k = 0.0;
    double d_b = 0.0;
    double d_k_w = 0.0;
    double d_b_w = 0.0;
    double d_gamma = 0.0;
    double d_beta = 0.0;
    Eigen::VectorXd d_alpha;
};

// Parameter classes drive the optimizer: quantization parameters get their
// own learning rate, and gamma/alpha are clamped positive after updates.
enum class ParamClass { Weight, Bias, BnAffine, Gamma, Beta, TransformK, TransformB,
                        WeightTransformK, WeightTransformB, Alpha };

bool is_quant_param(ParamClass cls);

// Direct handles into a layer's trainable storage, used by the optimizer-
// independent tooling (finite-difference checks, parameter counting).
struct ParamView {
    ParamClass cls;
    const char* name;
    double* value;
    double* grad;
    std::size_t count;
};

class Layer {
public:
    virtual ~Layer() = default;

    virtual LayerKind kind() const = 0;
    virtual Tensord forward(const Tensord& x, const PassContext& ctx) = 0;
    virtual Tensord backward(const Tensord& grad_out) = 0;
    virtual void zero_grad() {}
    virtual GradRecord grad_record() const { return {}; }
    virtual void apply_sgd(const GradRecord& g, const TrainConfig& cfg);
    virtual std::vector<ParamView> param_views() { return {}; }
};

class DenseLayer : public Layer {
public:
    DenseLayer(int in, int out, bool bias);

    LayerKind kind() const override { return LayerKind::Dense; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;
    void zero_grad() override;
    GradRecord grad_record() const override;
    void apply_sgd(const GradRecord& g, const TrainConfig& cfg) override;
    std::vector<ParamView> param_views() override;

    int in_dim, out_dim;
    bool has_bias;
    Tensord w;   // (out, in)
    Tensord b;   // (out)
    Tensord gw, gb;

private:
    Tensord x_;  // cached input, flattened to (batch, in)
    std::vector<std::size_t> x_shape_;
};

class Conv2DLayer : public Layer {
public:
    explicit Conv2DLayer(ConvGeom geom, bool bias = true);

    LayerKind kind() const override { return LayerKind::Conv2D; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;
    void zero_grad() override;
    GradRecord grad_record() const override;
    void apply_sgd(const GradRecord& g, const TrainConfig& cfg) override;
    std::vector<ParamView> param_views() override;

    ConvGeom geom;
    bool has_bias;
    Tensord w;   // (out_c, in_c*k*k)
    Tensord b;   // (out_c)
    Tensord gw, gb;

private:
    std::vector<std::size_t> x_shape_;
    RowMatrix<double> patches_;  // cached im2col buffer
};

// Per-layer scalar batchnorm: one mean/variance over the whole activation
// tensor, optional learnable affine, running stats for eval mode.
class BatchNormLayer : public Layer {
public:
    explicit BatchNormLayer(bool affine);

    LayerKind kind() const override { return LayerKind::BatchNorm; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;
    void zero_grad() override;
    GradRecord grad_record() const override;
    void apply_sgd(const GradRecord& g, const TrainConfig& cfg) override;
    std::vector<ParamView> param_views() override;

    bool affine;
    double k = 1.0;
    double b = 0.0;
    double gk = 0.0, gb = 0.0;
    double running_mean = 0.0;
    double running_var = 1.0;

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

private:
    Tensord xhat_;
    double inv_std_ = 1.0;
    bool trained_forward_ = true;
};

class ReLULayer : public Layer {
public:
    LayerKind kind() const override { return LayerKind::ReLU; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;

private:
    Tensord x_;
};

// The activation stack: optional k/b transform, then a base nonlinearity
// (ternarizer or tanh), then the optional gamma/beta reparameterization.
// Covers the plain quantizer (Fta), its reparameterized form (Rta), and the
// tanh pair used as a reference in the toy experiments.
class ActivationLayer : public Layer {
public:
    ActivationLayer(ActivationKind kind, bool transform, bool learn_scale_offset,
                    bool calibrate_scale);

    LayerKind kind() const override { return LayerKind::ActivationQuant; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;
    void zero_grad() override;
    GradRecord grad_record() const override;
    void apply_sgd(const GradRecord& g, const TrainConfig& cfg) override;
    std::vector<ParamView> param_views() override;

    bool reparam() const {
        return activation == ActivationKind::Rta || activation == ActivationKind::Rtanh;
    }
    bool ternary_base() const {
        return activation == ActivationKind::Fta || activation == ActivationKind::Rta;
    }

    ActivationKind activation;
    bool transform;
    bool learn_scale_offset;
    bool calibrate_scale;
    bool gamma_ready;
    ActivationQuantParams p;
    double g_k = 0.0, g_b = 0.0, g_gamma = 0.0, g_beta = 0.0;

private:
    Tensord x_;
    Tensord a_bar_;
    Tensord a_t_;
};

class WeightQuantDenseLayer : public Layer {
public:
    WeightQuantDenseLayer(int in, int out);

    LayerKind kind() const override { return LayerKind::WeightQuantDense; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;
    void zero_grad() override;
    GradRecord grad_record() const override;
    void apply_sgd(const GradRecord& g, const TrainConfig& cfg) override;
    std::vector<ParamView> param_views() override;

    void init_alpha_from_latent();

    int in_dim, out_dim;
    Tensord w;  // latent full-precision (out, in)
    WeightQuantParams qp;
    Tensord gw;
    double g_k_w = 0.0, g_b_w = 0.0;
    Eigen::VectorXd g_alpha;

private:
    Tensord x_;
    std::vector<std::size_t> x_shape_;
    Tensord w_bar_, w_t_, w_eff_;
};

class WeightQuantConvLayer : public Layer {
public:
    explicit WeightQuantConvLayer(ConvGeom geom);

    LayerKind kind() const override { return LayerKind::WeightQuantConv; }
    Tensord forward(const Tensord& x, const PassContext& ctx) override;
    Tensord backward(const Tensord& grad_out) override;
    void zero_grad() override;
    GradRecord grad_record() const override;
    void apply_sgd(const GradRecord& g, const TrainConfig& cfg) override;
    std::vector<ParamView> param_views() override;

    void init_alpha_from_latent();

    ConvGeom geom;
    Tensord w;  // latent (out_c, in_c*k*k)
    WeightQuantParams qp;
    Tensord gw;
    double g_k_w = 0.0, g_b_w = 0.0;
    Eigen::VectorXd g_alpha;

private:
    std::vector<std::size_t> x_shape_;
    RowMatrix<double> patches_;
    Tensord w_bar_, w_t_, w_eff_;
};

class Network {
public:
    Network() = default;

    static Network build(const NetworkSpec& spec, Rng& rng);

    Tensord forward(const Tensord& x, const PassContext& ctx);

    // Backward through the whole stack; expects forward() to have run with
    // training=true. Returns the gradient w.r.t. the network input.
    Tensord backward(const Tensord& grad_loss);

    void zero_grads();
    std::vector<GradRecord> grad_records() const;

    std::size_t size() const { return layers_.size(); }
    Layer& layer(std::size_t i) { return *layers_[i]; }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }
    const NetworkSpec& spec() const { return spec_; }

    std::vector<ParamView> param_views();

    void add_layer(const LayerSpec& spec, std::unique_ptr<Layer> layer);

private:
    NetworkSpec spec_;
    std::vector<std::unique_ptr<Layer>> layers_;
};

// upstream * 1[|a_bar| <= 1], elementwise: the straight-through gradient of
// the ternarizer, clip boundary included.
Tensord ste_backward(const Tensord& a_bar, const Tensord& upstream);

struct ReparamGrads {
    double d_gamma = 0.0;
    double d_beta = 0.0;
    Tensord d_a_t;
};

// d_gamma = sum(a_t * upstream), d_beta = sum(upstream),
// d_a_t = gamma * upstream.
ReparamGrads reparam_backward(const Tensord& a_t, const Tensord& upstream, double gamma);

}  // namespace ternet
