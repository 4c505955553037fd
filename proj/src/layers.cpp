#include "ternet/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "conv_impl.hpp"
#include "ternet/train.hpp"

namespace ternet {

namespace {

// (batch, anything...) -> flat (batch, features) copy with shape check
Tensord flatten_batch(const Tensord& x, int features, const char* who) {
    if (x.rank() < 2) {
        throw std::invalid_argument(std::string(who) + ": expected a batched input");
    }
    const std::size_t batch = x.dim(0);
    if (batch == 0 || x.size() % batch != 0 ||
        x.size() / batch != static_cast<std::size_t>(features)) {
        throw std::invalid_argument(std::string(who) + ": input feature count mismatch");
    }
    return x.reshaped({batch, static_cast<std::size_t>(features)});
}

double glorot_width(int fan_in, int fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void fill_uniform(Tensord& t, Rng& rng, double width) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-width, width);
}

double clamp_unit(double v) { return v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

ActivationKind activation_kind_from_string(const std::string& name) {
    if (name == "fta") return ActivationKind::Fta;
    if (name == "rta") return ActivationKind::Rta;
    if (name == "tanh") return ActivationKind::Tanh;
    if (name == "rtanh") return ActivationKind::Rtanh;
    if (name == "relu") return ActivationKind::Relu;
    throw std::invalid_argument("unknown activation kind: " + name);
}

std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Fta: return "fta";
        case ActivationKind::Rta: return "rta";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Rtanh: return "rtanh";
        case ActivationKind::Relu: return "relu";
    }
    return "?";
}

bool is_quant_param(ParamClass cls) {
    switch (cls) {
        case ParamClass::Gamma:
        case ParamClass::Beta:
        case ParamClass::TransformK:
        case ParamClass::TransformB:
        case ParamClass::WeightTransformK:
        case ParamClass::WeightTransformB:
        case ParamClass::Alpha:
            return true;
        default:
            return false;
    }
}

LayerSpec LayerSpec::dense(int in, int out, bool bias) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in = in;
    s.out = out;
    s.bias = bias;
    return s;
}

LayerSpec LayerSpec::conv2d(int in_c, int out_c, int kernel, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.geom = ConvGeom{in_c, out_c, kernel, stride, pad};
    return s;
}

LayerSpec LayerSpec::batch_norm(bool affine) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.affine = affine;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::activation(ActivationKind kind, bool learn_scale_offset) {
    LayerSpec s;
    s.kind = LayerKind::ActivationQuant;
    s.act_kind = kind;
    s.transform = false;
    s.learn_scale_offset = learn_scale_offset;
    return s;
}

LayerSpec LayerSpec::activation_quant(bool learn_scale_offset, bool calibrate_scale) {
    LayerSpec s;
    s.kind = LayerKind::ActivationQuant;
    s.act_kind = ActivationKind::Rta;
    s.transform = true;
    s.learn_scale_offset = learn_scale_offset;
    s.calibrate_scale = calibrate_scale;
    return s;
}

LayerSpec LayerSpec::weight_quant_dense(int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::WeightQuantDense;
    s.in = in;
    s.out = out;
    s.bias = false;
    return s;
}

LayerSpec LayerSpec::weight_quant_conv(int in_c, int out_c, int kernel, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::WeightQuantConv;
    s.geom = ConvGeom{in_c, out_c, kernel, stride, pad};
    s.bias = false;
    return s;
}

void Layer::apply_sgd(const GradRecord&, const TrainConfig&) {}

// ---- Dense ----------------------------------------------------------------

DenseLayer::DenseLayer(int in, int out, bool bias)
    : in_dim(in), out_dim(out), has_bias(bias),
      w({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
      b({static_cast<std::size_t>(out)}),
      gw(w.shape()), gb(b.shape()) {
    if (in <= 0 || out <= 0) throw std::invalid_argument("DenseLayer: bad dimensions");
}

Tensord DenseLayer::forward(const Tensord& x, const PassContext&) {
    x_shape_ = x.shape();
    x_ = flatten_batch(x, in_dim, "DenseLayer");
    const std::size_t batch = x_.dim(0);
    Tensord y({batch, static_cast<std::size_t>(out_dim)});
    auto ymat = y.matrix(batch, out_dim);
    ymat.noalias() = x_.matrix(batch, in_dim) * w.matrix(out_dim, in_dim).transpose();
    if (has_bias) ymat.rowwise() += b.vec().transpose();
    return y;
}

Tensord DenseLayer::backward(const Tensord& grad_out) {
    const std::size_t batch = x_.dim(0);
    const auto g = grad_out.matrix(batch, out_dim);
    const auto x = x_.matrix(batch, in_dim);
    gw.matrix(out_dim, in_dim).noalias() += g.transpose() * x;
    if (has_bias) gb.vec() += g.colwise().sum().transpose();
    Tensord dx({batch, static_cast<std::size_t>(in_dim)});
    dx.matrix(batch, in_dim).noalias() = g * w.matrix(out_dim, in_dim);
    return dx.reshaped(x_shape_);
}

void DenseLayer::zero_grad() {
    gw.set_zero();
    gb.set_zero();
}

GradRecord DenseLayer::grad_record() const {
    GradRecord r;
    r.d_weights = gw;
    if (has_bias) r.d_bias = gb;
    return r;
}

void DenseLayer::apply_sgd(const GradRecord& g, const TrainConfig& cfg) {
    w.vec() -= cfg.learning_rate * g.d_weights.vec();
    if (has_bias) b.vec() -= cfg.learning_rate * g.d_bias.vec();
}

std::vector<ParamView> DenseLayer::param_views() {
    std::vector<ParamView> v;
    v.push_back({ParamClass::Weight, "w", w.data(), gw.data(), w.size()});
    if (has_bias) v.push_back({ParamClass::Bias, "b", b.data(), gb.data(), b.size()});
    return v;
}

// ---- Conv2D ---------------------------------------------------------------

Conv2DLayer::Conv2DLayer(ConvGeom geom_, bool bias)
    : geom(geom_), has_bias(bias),
      w({static_cast<std::size_t>(geom_.out_c), static_cast<std::size_t>(geom_.fan_in())}),
      b({static_cast<std::size_t>(geom_.out_c)}),
      gw(w.shape()), gb(b.shape()) {
    if (geom.in_c <= 0 || geom.out_c <= 0 || geom.kernel <= 0 || geom.stride <= 0 ||
        geom.pad < 0) {
        throw std::invalid_argument("Conv2DLayer: bad geometry");
    }
}

Tensord Conv2DLayer::forward(const Tensord& x, const PassContext&) {
    x_shape_ = x.shape();
    const auto s = detail::conv_shapes(x_shape_, geom);
    detail::im2col(x, geom, s, patches_);
    return detail::conv_forward(patches_, w, has_bias ? b.data() : nullptr, geom, s);
}

Tensord Conv2DLayer::backward(const Tensord& grad_out) {
    const auto s = detail::conv_shapes(x_shape_, geom);
    const RowMatrix<double> gm = detail::conv_grad_matrix(grad_out, geom, s);
    gw.matrix(geom.out_c, geom.fan_in()).noalias() += gm * patches_.transpose();
    if (has_bias) gb.vec() += gm.rowwise().sum();
    const RowMatrix<double> dpatches = w.matrix(geom.out_c, geom.fan_in()).transpose() * gm;
    Tensord dx(x_shape_);
    detail::col2im(dpatches, geom, s, dx);
    return dx;
}

void Conv2DLayer::zero_grad() {
    gw.set_zero();
    gb.set_zero();
}

GradRecord Conv2DLayer::grad_record() const {
    GradRecord r;
    r.d_weights = gw;
    if (has_bias) r.d_bias = gb;
    return r;
}

void Conv2DLayer::apply_sgd(const GradRecord& g, const TrainConfig& cfg) {
    w.vec() -= cfg.learning_rate * g.d_weights.vec();
    if (has_bias) b.vec() -= cfg.learning_rate * g.d_bias.vec();
}

std::vector<ParamView> Conv2DLayer::param_views() {
    std::vector<ParamView> v;
    v.push_back({ParamClass::Weight, "w", w.data(), gw.data(), w.size()});
    if (has_bias) v.push_back({ParamClass::Bias, "b", b.data(), gb.data(), b.size()});
    return v;
}

// ---- BatchNorm ------------------------------------------------------------

BatchNormLayer::BatchNormLayer(bool affine_) : affine(affine_) {}

Tensord BatchNormLayer::forward(const Tensord& x, const PassContext& ctx) {
    if (x.empty()) throw std::invalid_argument("BatchNormLayer: empty input");
    const double n = static_cast<double>(x.size());
    double mean, var;
    if (ctx.training) {
        mean = x.vec().mean();
        var = (x.array() - mean).square().sum() / n;
        running_mean = (1.0 - kMomentum) * running_mean + kMomentum * mean;
        running_var = (1.0 - kMomentum) * running_var + kMomentum * var;
        trained_forward_ = true;
    } else {
        mean = running_mean;
        var = running_var;
        trained_forward_ = false;
    }
    inv_std_ = 1.0 / std::sqrt(var + kEps);
    xhat_ = Tensord(x.shape());
    xhat_.array() = (x.array() - mean) * inv_std_;
    if (!affine) return xhat_;
    Tensord y(x.shape());
    y.array() = xhat_.array() * k + b;
    return y;
}

Tensord BatchNormLayer::backward(const Tensord& grad_out) {
    Tensord gxhat(grad_out.shape());
    if (affine) {
        gk += (grad_out.array() * xhat_.array()).sum();
        gb += grad_out.vec().sum();
        gxhat.array() = grad_out.array() * k;
    } else {
        gxhat = grad_out;
    }
    Tensord dx(grad_out.shape());
    if (!trained_forward_) {
        dx.array() = gxhat.array() * inv_std_;
        return dx;
    }
    const double n = static_cast<double>(grad_out.size());
    const double s1 = gxhat.vec().sum() / n;
    const double s2 = (gxhat.array() * xhat_.array()).sum() / n;
    dx.array() = (gxhat.array() - s1 - xhat_.array() * s2) * inv_std_;
    return dx;
}

void BatchNormLayer::zero_grad() {
    gk = 0.0;
    gb = 0.0;
}

GradRecord BatchNormLayer::grad_record() const {
    GradRecord r;
    if (affine) {
        r.d_k = gk;
        r.d_b = gb;
    }
    return r;
}

void BatchNormLayer::apply_sgd(const GradRecord& g, const TrainConfig& cfg) {
    if (!affine) return;
    k -= cfg.learning_rate * g.d_k;
    b -= cfg.learning_rate * g.d_b;
}

std::vector<ParamView> BatchNormLayer::param_views() {
    std::vector<ParamView> v;
    if (affine) {
        v.push_back({ParamClass::BnAffine, "bn_k", &k, &gk, 1});
        v.push_back({ParamClass::BnAffine, "bn_b", &b, &gb, 1});
    }
    return v;
}

// ---- ReLU -----------------------------------------------------------------

Tensord ReLULayer::forward(const Tensord& x, const PassContext&) {
    x_ = x;
    Tensord y(x.shape());
    y.array() = x.array().max(0.0);
    return y;
}

Tensord ReLULayer::backward(const Tensord& grad_out) {
    Tensord dx(grad_out.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] = x_[i] > 0.0 ? grad_out[i] : 0.0;
    }
    return dx;
}

// ---- ActivationLayer ------------------------------------------------------

ActivationLayer::ActivationLayer(ActivationKind kind, bool transform_, bool learn, bool calibrate)
    : activation(kind), transform(transform_), learn_scale_offset(learn),
      calibrate_scale(calibrate), gamma_ready(!calibrate) {}

Tensord ActivationLayer::forward(const Tensord& x, const PassContext& ctx) {
    x_ = x;
    if (transform) {
        a_bar_ = Tensord(x.shape());
        a_bar_.array() = x.array() * p.k + p.b;
    } else {
        a_bar_ = x;
    }

    a_t_ = Tensord(x.shape());
    switch (activation) {
        case ActivationKind::Fta:
        case ActivationKind::Rta:
            if (!gamma_ready) {
                p.gamma = selection_mean(a_bar_.data(), a_bar_.size());
                gamma_ready = true;
            }
            if (ctx.quant == QuantForward::Hard) {
                for (std::size_t i = 0; i < a_bar_.size(); ++i) {
                    a_t_[i] = ternarize_value(a_bar_[i]);
                }
            } else {
                for (std::size_t i = 0; i < a_bar_.size(); ++i) {
                    a_t_[i] = clamp_unit(a_bar_[i]);
                }
            }
            break;
        case ActivationKind::Tanh:
        case ActivationKind::Rtanh:
            a_t_.array() = a_bar_.array().tanh();
            break;
        case ActivationKind::Relu:
            a_t_.array() = a_bar_.array().max(0.0);
            break;
    }

    if (!reparam()) return a_t_;
    Tensord y(x.shape());
    y.array() = a_t_.array() * p.gamma + p.beta;
    return y;
}

Tensord ActivationLayer::backward(const Tensord& grad_out) {
    Tensord work;
    if (reparam()) {
        ReparamGrads rg = reparam_backward(a_t_, grad_out, p.gamma);
        g_gamma += rg.d_gamma;
        g_beta += rg.d_beta;
        work = std::move(rg.d_a_t);
    } else {
        work = grad_out;
    }

    Tensord d_abar(work.shape());
    switch (activation) {
        case ActivationKind::Fta:
        case ActivationKind::Rta:
            d_abar = ste_backward(a_bar_, work);
            break;
        case ActivationKind::Tanh:
        case ActivationKind::Rtanh:
            d_abar.array() = work.array() * (1.0 - a_t_.array().square());
            break;
        case ActivationKind::Relu:
            for (std::size_t i = 0; i < work.size(); ++i) {
                d_abar[i] = a_bar_[i] > 0.0 ? work[i] : 0.0;
            }
            break;
    }

    if (!transform) return d_abar;
    g_k += (x_.array() * d_abar.array()).sum();
    g_b += d_abar.vec().sum();
    Tensord dx(d_abar.shape());
    dx.array() = d_abar.array() * p.k;
    return dx;
}

void ActivationLayer::zero_grad() {
    g_k = 0.0;
    g_b = 0.0;
    g_gamma = 0.0;
    g_beta = 0.0;
}

GradRecord ActivationLayer::grad_record() const {
    GradRecord r;
    r.d_k = g_k;
    r.d_b = g_b;
    r.d_gamma = g_gamma;
    r.d_beta = g_beta;
    return r;
}

void ActivationLayer::apply_sgd(const GradRecord& g, const TrainConfig& cfg) {
    if (transform) {
        p.k -= cfg.quant_param_lr * g.d_k;
        p.b -= cfg.quant_param_lr * g.d_b;
    }
    if (reparam() && learn_scale_offset) {
        p.gamma -= cfg.quant_param_lr * g.d_gamma;
        if (p.gamma < kScaleFloor) p.gamma = kScaleFloor;
        p.beta -= cfg.quant_param_lr * g.d_beta;
    }
}

std::vector<ParamView> ActivationLayer::param_views() {
    std::vector<ParamView> v;
    if (transform) {
        v.push_back({ParamClass::TransformK, "k", &p.k, &g_k, 1});
        v.push_back({ParamClass::TransformB, "b", &p.b, &g_b, 1});
    }
    if (reparam() && learn_scale_offset) {
        v.push_back({ParamClass::Gamma, "gamma", &p.gamma, &g_gamma, 1});
        v.push_back({ParamClass::Beta, "beta", &p.beta, &g_beta, 1});
    }
    return v;
}

// ---- weight-quantized layers ----------------------------------------------

namespace {

// shared by the dense and conv variants: quantize the latent weights, scale
// per filter, and stash what backward needs
struct QuantizedForward {
    Tensord w_bar;
    Tensord w_t;
    Tensord w_eff;
};

QuantizedForward quantize_latent(const Tensord& w, const WeightQuantParams& qp,
                                 QuantForward mode, Eigen::Index filters) {
    QuantizedForward q;
    q.w_bar = Tensord(w.shape());
    q.w_bar.array() = w.array() * qp.k_w + qp.b_w;
    q.w_t = Tensord(w.shape());
    if (mode == QuantForward::Hard) {
        for (std::size_t i = 0; i < w.size(); ++i) q.w_t[i] = ternarize_value(q.w_bar[i]);
    } else {
        for (std::size_t i = 0; i < w.size(); ++i) q.w_t[i] = clamp_unit(q.w_bar[i]);
    }
    q.w_eff = Tensord(w.shape());
    const std::size_t fan_in = w.size() / static_cast<std::size_t>(filters);
    for (Eigen::Index f = 0; f < filters; ++f) {
        const double a = qp.alpha[f];
        const std::size_t base = static_cast<std::size_t>(f) * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) q.w_eff[base + i] = a * q.w_t[base + i];
    }
    return q;
}

// maps d(w_eff) back onto (d_alpha, d_k_w, d_b_w, d_latent); returns nothing,
// accumulates in place
void backprop_weight_quant(const Tensord& d_weff, const Tensord& w, const Tensord& w_bar,
                           const Tensord& w_t, const WeightQuantParams& qp,
                           Eigen::VectorXd& g_alpha, double& g_k_w, double& g_b_w,
                           Tensord& gw) {
    const Eigen::Index filters = g_alpha.size();
    const std::size_t fan_in = w.size() / static_cast<std::size_t>(filters);
    for (Eigen::Index f = 0; f < filters; ++f) {
        const std::size_t base = static_cast<std::size_t>(f) * fan_in;
        const double a = qp.alpha[f];
        double da = 0.0;
        for (std::size_t i = 0; i < fan_in; ++i) {
            const std::size_t j = base + i;
            const double g_eff = d_weff[j];
            da += w_t[j] * g_eff;
            const double g_wt = a * g_eff;
            const double g_wbar = std::abs(w_bar[j]) <= 1.0 ? g_wt : 0.0;
            g_k_w += w[j] * g_wbar;
            g_b_w += g_wbar;
            gw[j] += qp.k_w * g_wbar;
        }
        g_alpha[f] += da;
    }
}

void init_alpha(const Tensord& w, Eigen::VectorXd& alpha) {
    const auto filters = static_cast<Eigen::Index>(w.dim(0));
    const std::size_t fan_in = w.dim(1);
    alpha.resize(filters);
    for (Eigen::Index f = 0; f < filters; ++f) {
        alpha[f] = selection_mean(w.data() + static_cast<std::size_t>(f) * fan_in, fan_in);
    }
}

}  // namespace

WeightQuantDenseLayer::WeightQuantDenseLayer(int in, int out)
    : in_dim(in), out_dim(out),
      w({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
      gw(w.shape()) {
    if (in <= 0 || out <= 0) throw std::invalid_argument("WeightQuantDenseLayer: bad dimensions");
    qp.alpha = Eigen::VectorXd::Ones(out);
    g_alpha = Eigen::VectorXd::Zero(out);
}

void WeightQuantDenseLayer::init_alpha_from_latent() { init_alpha(w, qp.alpha); }

Tensord WeightQuantDenseLayer::forward(const Tensord& x, const PassContext& ctx) {
    x_shape_ = x.shape();
    x_ = flatten_batch(x, in_dim, "WeightQuantDenseLayer");
    auto q = quantize_latent(w, qp, ctx.quant, out_dim);
    w_bar_ = std::move(q.w_bar);
    w_t_ = std::move(q.w_t);
    w_eff_ = std::move(q.w_eff);
    const std::size_t batch = x_.dim(0);
    Tensord y({batch, static_cast<std::size_t>(out_dim)});
    y.matrix(batch, out_dim).noalias() =
        x_.matrix(batch, in_dim) * w_eff_.matrix(out_dim, in_dim).transpose();
    return y;
}

Tensord WeightQuantDenseLayer::backward(const Tensord& grad_out) {
    const std::size_t batch = x_.dim(0);
    const auto g = grad_out.matrix(batch, out_dim);
    Tensord d_weff(w.shape());
    d_weff.matrix(out_dim, in_dim).noalias() = g.transpose() * x_.matrix(batch, in_dim);
    backprop_weight_quant(d_weff, w, w_bar_, w_t_, qp, g_alpha, g_k_w, g_b_w, gw);
    Tensord dx({batch, static_cast<std::size_t>(in_dim)});
    dx.matrix(batch, in_dim).noalias() = g * w_eff_.matrix(out_dim, in_dim);
    return dx.reshaped(x_shape_);
}

void WeightQuantDenseLayer::zero_grad() {
    gw.set_zero();
    g_k_w = 0.0;
    g_b_w = 0.0;
    g_alpha.setZero();
}

GradRecord WeightQuantDenseLayer::grad_record() const {
    GradRecord r;
    r.d_weights = gw;
    r.d_k_w = g_k_w;
    r.d_b_w = g_b_w;
    r.d_alpha = g_alpha;
    return r;
}

void WeightQuantDenseLayer::apply_sgd(const GradRecord& g, const TrainConfig& cfg) {
    w.vec() -= cfg.learning_rate * g.d_weights.vec();
    qp.k_w -= cfg.quant_param_lr * g.d_k_w;
    qp.b_w -= cfg.quant_param_lr * g.d_b_w;
    qp.alpha -= cfg.quant_param_lr * g.d_alpha;
    qp.alpha = qp.alpha.cwiseMax(kScaleFloor);
}

std::vector<ParamView> WeightQuantDenseLayer::param_views() {
    return {
        {ParamClass::Weight, "w", w.data(), gw.data(), w.size()},
        {ParamClass::WeightTransformK, "k_w", &qp.k_w, &g_k_w, 1},
        {ParamClass::WeightTransformB, "b_w", &qp.b_w, &g_b_w, 1},
        {ParamClass::Alpha, "alpha", qp.alpha.data(), g_alpha.data(),
         static_cast<std::size_t>(qp.alpha.size())},
    };
}

WeightQuantConvLayer::WeightQuantConvLayer(ConvGeom geom_)
    : geom(geom_),
      w({static_cast<std::size_t>(geom_.out_c), static_cast<std::size_t>(geom_.fan_in())}),
      gw(w.shape()) {
    if (geom.in_c <= 0 || geom.out_c <= 0 || geom.kernel <= 0 || geom.stride <= 0 ||
        geom.pad < 0) {
        throw std::invalid_argument("WeightQuantConvLayer: bad geometry");
    }
    qp.alpha = Eigen::VectorXd::Ones(geom.out_c);
    g_alpha = Eigen::VectorXd::Zero(geom.out_c);
}

void WeightQuantConvLayer::init_alpha_from_latent() { init_alpha(w, qp.alpha); }

Tensord WeightQuantConvLayer::forward(const Tensord& x, const PassContext& ctx) {
    x_shape_ = x.shape();
    const auto s = detail::conv_shapes(x_shape_, geom);
    detail::im2col(x, geom, s, patches_);
    auto q = quantize_latent(w, qp, ctx.quant, geom.out_c);
    w_bar_ = std::move(q.w_bar);
    w_t_ = std::move(q.w_t);
    w_eff_ = std::move(q.w_eff);
    return detail::conv_forward(patches_, w_eff_, nullptr, geom, s);
}

Tensord WeightQuantConvLayer::backward(const Tensord& grad_out) {
    const auto s = detail::conv_shapes(x_shape_, geom);
    const RowMatrix<double> gm = detail::conv_grad_matrix(grad_out, geom, s);
    Tensord d_weff(w.shape());
    d_weff.matrix(geom.out_c, geom.fan_in()).noalias() = gm * patches_.transpose();
    backprop_weight_quant(d_weff, w, w_bar_, w_t_, qp, g_alpha, g_k_w, g_b_w, gw);
    const RowMatrix<double> dpatches =
        w_eff_.matrix(geom.out_c, geom.fan_in()).transpose() * gm;
    Tensord dx(x_shape_);
    detail::col2im(dpatches, geom, s, dx);
    return dx;
}

void WeightQuantConvLayer::zero_grad() {
    gw.set_zero();
    g_k_w = 0.0;
    g_b_w = 0.0;
    g_alpha.setZero();
}

GradRecord WeightQuantConvLayer::grad_record() const {
    GradRecord r;
    r.d_weights = gw;
    r.d_k_w = g_k_w;
    r.d_b_w = g_b_w;
    r.d_alpha = g_alpha;
    return r;
}

void WeightQuantConvLayer::apply_sgd(const GradRecord& g, const TrainConfig& cfg) {
    w.vec() -= cfg.learning_rate * g.d_weights.vec();
    qp.k_w -= cfg.quant_param_lr * g.d_k_w;
    qp.b_w -= cfg.quant_param_lr * g.d_b_w;
    qp.alpha -= cfg.quant_param_lr * g.d_alpha;
    qp.alpha = qp.alpha.cwiseMax(kScaleFloor);
}

std::vector<ParamView> WeightQuantConvLayer::param_views() {
    return {
        {ParamClass::Weight, "w", w.data(), gw.data(), w.size()},
        {ParamClass::WeightTransformK, "k_w", &qp.k_w, &g_k_w, 1},
        {ParamClass::WeightTransformB, "b_w", &qp.b_w, &g_b_w, 1},
        {ParamClass::Alpha, "alpha", qp.alpha.data(), g_alpha.data(),
         static_cast<std::size_t>(qp.alpha.size())},
    };
}

// ---- Network --------------------------------------------------------------

void Network::add_layer(const LayerSpec& spec, std::unique_ptr<Layer> layer) {
    spec_.push_back(spec);
    layers_.push_back(std::move(layer));
}

Network Network::build(const NetworkSpec& spec, Rng& rng) {
    Network net;
    for (const LayerSpec& s : spec) {
        switch (s.kind) {
            case LayerKind::Dense: {
                auto l = std::make_unique<DenseLayer>(s.in, s.out, s.bias);
                const double width =
                    s.init_uniform > 0.0 ? s.init_uniform : glorot_width(s.in, s.out);
                fill_uniform(l->w, rng, width);
                net.add_layer(s, std::move(l));
                break;
            }
            case LayerKind::Conv2D: {
                auto l = std::make_unique<Conv2DLayer>(s.geom);
                const double width = s.init_uniform > 0.0
                                         ? s.init_uniform
                                         : glorot_width(s.geom.fan_in(),
                                                        s.geom.out_c * s.geom.kernel * s.geom.kernel);
                fill_uniform(l->w, rng, width);
                net.add_layer(s, std::move(l));
                break;
            }
            case LayerKind::BatchNorm:
                net.add_layer(s, std::make_unique<BatchNormLayer>(s.affine));
                break;
            case LayerKind::ReLU:
                net.add_layer(s, std::make_unique<ReLULayer>());
                break;
            case LayerKind::ActivationQuant:
                net.add_layer(s, std::make_unique<ActivationLayer>(
                                     s.act_kind, s.transform, s.learn_scale_offset,
                                     s.calibrate_scale));
                break;
            // Latent weights of the quantized layers start in (-1, 1), not at
            // glorot width: they must straddle the fixed 0.5 ternary threshold
            // or every filter quantizes to zero and no gradient ever reaches
            // the layers below. The per-filter alpha carries the magnitude.
            case LayerKind::WeightQuantDense: {
                auto l = std::make_unique<WeightQuantDenseLayer>(s.in, s.out);
                const double width = s.init_uniform > 0.0 ? s.init_uniform : 1.0;
                fill_uniform(l->w, rng, width);
                l->init_alpha_from_latent();
                net.add_layer(s, std::move(l));
                break;
            }
            case LayerKind::WeightQuantConv: {
                auto l = std::make_unique<WeightQuantConvLayer>(s.geom);
                const double width = s.init_uniform > 0.0 ? s.init_uniform : 1.0;
                fill_uniform(l->w, rng, width);
                l->init_alpha_from_latent();
                net.add_layer(s, std::move(l));
                break;
            }
        }
    }
    return net;
}

Tensord Network::forward(const Tensord& x, const PassContext& ctx) {
    Tensord cur = x;
    for (auto& layer : layers_) cur = layer->forward(cur, ctx);
    return cur;
}

Tensord Network::backward(const Tensord& grad_loss) {
    Tensord g = grad_loss;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
}

void Network::zero_grads() {
    for (auto& layer : layers_) layer->zero_grad();
}

std::vector<GradRecord> Network::grad_records() const {
    std::vector<GradRecord> out;
    out.reserve(layers_.size());
    for (const auto& layer : layers_) out.push_back(layer->grad_record());
    return out;
}

std::vector<ParamView> Network::param_views() {
    std::vector<ParamView> out;
    for (auto& layer : layers_) {
        auto views = layer->param_views();
        out.insert(out.end(), views.begin(), views.end());
    }
    return out;
}

// ---- free backward helpers ------------------------------------------------

Tensord ste_backward(const Tensord& a_bar, const Tensord& upstream) {
    if (!a_bar.same_shape(upstream)) {
        throw std::invalid_argument("ste_backward: shape mismatch");
    }
    Tensord out(a_bar.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::abs(a_bar[i]) <= 1.0 ? upstream[i] : 0.0;
    }
    return out;
}

ReparamGrads reparam_backward(const Tensord& a_t, const Tensord& upstream, double gamma) {
    if (!a_t.same_shape(upstream)) {
        throw std::invalid_argument("reparam_backward: shape mismatch");
    }
    ReparamGrads g;
    g.d_gamma = a_t.vec().dot(upstream.vec());
    g.d_beta = upstream.vec().sum();
    g.d_a_t = Tensord(upstream.shape());
    g.d_a_t.array() = upstream.array() * gamma;
    return g;
}

}  // namespace ternet
