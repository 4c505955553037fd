#pragma once

#include <Eigen/Core>

#include "ternet/tensor.hpp"

namespace ternet {

// Lower bound kept under gamma and alpha whenever they are updated.
inline constexpr double kScaleFloor = 1e-6;

// Per-layer scalars for the activation path: a_bar = k*a + b is what gets
// ternarized, and the ternary result is mapped back through gamma*a_t + beta.
struct ActivationQuantParams {
    double k = 1.0;
    double b = 0.0;
    double gamma = 1.0;  // > 0
    double beta = 0.0;
};

// Weight path: w_bar = k_w*w + b_w is ternarized, then scaled per output
// filter by alpha (> 0). No offset on the weight side.
struct WeightQuantParams {
    double k_w = 1.0;
    double b_w = 0.0;
    Eigen::VectorXd alpha;  // one entry per output filter
};

// sign(x) where |x| > 0.5, else 0. The threshold comparison is strict, so
// exactly 0.5 maps to 0. NaN input is rejected.
template <typename Scalar>
Tensor<Scalar> ternarize(const Tensor<Scalar>& x);

double ternarize_value(double x);

template <typename Scalar>
Tensor<Scalar> transform_activation(const Tensor<Scalar>& a, const ActivationQuantParams& p);

template <typename Scalar>
Tensor<Scalar> reparam_activation(const Tensor<Scalar>& a_t, const ActivationQuantParams& p);

struct QuantizedWeights {
    Tensord ternary;         // same shape as the input weights, values in {-1,0,+1}
    Eigen::VectorXd alpha;   // per filter, copied through from the params
};

// w is (filters, fan_in): conv filters flattened to rows, or a dense weight
// matrix as-is. Applies w_bar = k_w*w + b_w then the ternarizer.
QuantizedWeights quantize_weights(const Tensord& w, const WeightQuantParams& p);

// Mean of |v| over the selection |v| > 0.5; 1.0 when the selection is empty.
double selection_mean(const double* data, std::size_t n);

// Scale init from a trained full-precision tensor pair: gamma is the
// selection mean of the sample activations, alpha the per-filter selection
// mean of the weights. Offsets start at zero, transforms at identity.
std::pair<WeightQuantParams, ActivationQuantParams> init_from_full_precision(
    const Tensord& w, const Tensord& a_sample);

}  // namespace ternet
