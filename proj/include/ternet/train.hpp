#pragma once

#include <cstdint>
#include <vector>

#include "ternet/layers.hpp"
#include "ternet/tensor.hpp"

namespace ternet {

enum class Loss { MSE, CrossEntropy };

struct TrainConfig {
    double learning_rate = 0.01;
    double quant_param_lr = 0.01;
    int epochs = 1;
    int batch_size = 32;
    std::uint64_t seed = 0;
    Loss loss = Loss::MSE;
};

void validate(const TrainConfig& cfg);

struct StepResult {
    double loss = 0.0;
    std::vector<GradRecord> grads;
};

// One full forward/backward pass over the batch. Gradients are zeroed first,
// so the returned records are exactly this batch's gradients. Throws if the
// loss comes out non-finite.
StepResult forward_backward(Network& net, const Tensord& inputs, const Tensord& targets,
                            const TrainConfig& cfg, const PassContext& ctx = {});

// Plain SGD. Weights and biases move by learning_rate; quantization
// parameters (gamma, beta, alpha, k, b, k_w, b_w) move by quant_param_lr,
// with gamma and alpha clamped positive afterwards.
void sgd_step(Network& net, const std::vector<GradRecord>& grads, const TrainConfig& cfg);

// loss value and d(loss)/d(pred) in one go
std::pair<double, Tensord> loss_and_grad(Loss loss, const Tensord& pred, const Tensord& target);

Tensord one_hot(const std::vector<int>& labels, int num_classes);

struct FitResult {
    std::vector<double> epoch_losses;
};

// Minibatch SGD over an in-memory dataset, shuffled per epoch from cfg.seed.
FitResult fit(Network& net, const Tensord& images, const std::vector<int>& labels,
              int num_classes, const TrainConfig& cfg);

double accuracy(Network& net, const Tensord& images, const std::vector<int>& labels);

}  // namespace ternet
