#include "ternet/quantize.hpp"

#include <cmath>
#include <stdexcept>

namespace ternet {

double ternarize_value(double x) {
    if (std::isnan(x)) throw std::invalid_argument("ternarize: NaN input");
    if (x > 0.5) return 1.0;
    if (x < -0.5) return -1.0;
    return 0.0;
}

template <typename Scalar>
Tensor<Scalar> ternarize(const Tensor<Scalar>& x) {
    Tensor<Scalar> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Scalar v = x[i];
        if (std::isnan(static_cast<double>(v))) {
            throw std::invalid_argument("ternarize: NaN input");
        }
        out[i] = v > Scalar{0.5} ? Scalar{1} : (v < Scalar{-0.5} ? Scalar{-1} : Scalar{0});
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> transform_activation(const Tensor<Scalar>& a, const ActivationQuantParams& p) {
    Tensor<Scalar> out(a.shape());
    out.array() = a.array() * static_cast<Scalar>(p.k) + static_cast<Scalar>(p.b);
    return out;
}

template <typename Scalar>
Tensor<Scalar> reparam_activation(const Tensor<Scalar>& a_t, const ActivationQuantParams& p) {
    Tensor<Scalar> out(a_t.shape());
    out.array() = a_t.array() * static_cast<Scalar>(p.gamma) + static_cast<Scalar>(p.beta);
    return out;
}

template Tensor<double> ternarize(const Tensor<double>&);
template Tensor<float> ternarize(const Tensor<float>&);
template Tensor<double> transform_activation(const Tensor<double>&, const ActivationQuantParams&);
template Tensor<float> transform_activation(const Tensor<float>&, const ActivationQuantParams&);
template Tensor<double> reparam_activation(const Tensor<double>&, const ActivationQuantParams&);
template Tensor<float> reparam_activation(const Tensor<float>&, const ActivationQuantParams&);

QuantizedWeights quantize_weights(const Tensord& w, const WeightQuantParams& p) {
    if (w.rank() != 2) {
        throw std::invalid_argument("quantize_weights: expected (filters, fan_in) weights");
    }
    const auto filters = static_cast<Eigen::Index>(w.dim(0));
    if (p.alpha.size() != filters) {
        throw std::invalid_argument("quantize_weights: alpha count does not match filters");
    }
    if ((p.alpha.array() <= 0.0).any()) {
        throw std::invalid_argument("quantize_weights: alpha must be positive");
    }
    QuantizedWeights q;
    q.ternary = Tensord(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
        q.ternary[i] = ternarize_value(p.k_w * w[i] + p.b_w);
    }
    q.alpha = p.alpha;
    return q;
}

double selection_mean(const double* data, std::size_t n) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double mag = std::abs(data[i]);
        if (mag > 0.5) {
            sum += mag;
            ++count;
        }
    }
    return count == 0 ? 1.0 : sum / static_cast<double>(count);
}

std::pair<WeightQuantParams, ActivationQuantParams> init_from_full_precision(
    const Tensord& w, const Tensord& a_sample) {
    if (w.rank() != 2) {
        throw std::invalid_argument("init_from_full_precision: expected 2-D weights");
    }
    WeightQuantParams wp;
    const std::size_t filters = w.dim(0);
    const std::size_t fan_in = w.dim(1);
    wp.alpha.resize(static_cast<Eigen::Index>(filters));
    for (std::size_t f = 0; f < filters; ++f) {
        wp.alpha[static_cast<Eigen::Index>(f)] = selection_mean(w.data() + f * fan_in, fan_in);
    }
    ActivationQuantParams ap;
    ap.gamma = selection_mean(a_sample.data(), a_sample.size());
    return {wp, ap};
}

}  // namespace ternet
