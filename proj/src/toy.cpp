#include "ternet/toy.hpp"

#include <stdexcept>

namespace ternet {

ToyBatch sample_toy_batch(Rng& rng, int n) {
    ToyBatch batch;
    batch.inputs = Tensord({static_cast<std::size_t>(n), 2});
    batch.targets = Tensord({static_cast<std::size_t>(n), 2});
    for (int i = 0; i < n; ++i) {
        const int z1 = rng.bernoulli(0.5) ? 1 : 0;
        const int z2 = rng.bernoulli(0.5) ? 1 : 0;
        batch.inputs[2 * i + 0] = z1 + rng.uniform(-0.3, 0.3);
        batch.inputs[2 * i + 1] = z2 + rng.uniform(-0.3, 0.3);
        const int x = z1 ^ z2;
        batch.targets[2 * i + 0] = x;
        batch.targets[2 * i + 1] = 1 - x;
    }
    return batch;
}

std::vector<double> run_toy_experiment(ActivationKind kind, const TrainConfig& cfg) {
    switch (kind) {
        case ActivationKind::Fta:
        case ActivationKind::Rta:
        case ActivationKind::Tanh:
        case ActivationKind::Rtanh:
            break;
        default:
            throw std::invalid_argument("run_toy_experiment: unsupported activation kind " +
                                        to_string(kind));
    }
    TrainConfig toy_cfg = cfg;
    toy_cfg.loss = Loss::MSE;
    validate(toy_cfg);

    NetworkSpec spec;
    LayerSpec l1 = LayerSpec::dense(2, 3, false);
    l1.init_uniform = 1.0;
    LayerSpec l3 = LayerSpec::dense(3, 2, false);
    l3.init_uniform = 1.0;
    spec.push_back(l1);
    spec.push_back(LayerSpec::activation(kind, true));
    spec.push_back(l3);

    Rng rng(toy_cfg.seed);
    Network net = Network::build(spec, rng);

    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(toy_cfg.epochs));
    for (int epoch = 0; epoch < toy_cfg.epochs; ++epoch) {
        const ToyBatch batch = sample_toy_batch(rng);
        StepResult step = forward_backward(net, batch.inputs, batch.targets, toy_cfg);
        sgd_step(net, step.grads, toy_cfg);
        curve.push_back(step.loss);
    }
    return curve;
}

}  // namespace ternet
