#pragma once

#include <vector>

#include "ternet/layers.hpp"
#include "ternet/rng.hpp"
#include "ternet/tensor.hpp"
#include "ternet/train.hpp"

namespace ternet {

// Two-input logic benchmark: a 2-3-2 net with no bias terms learns XOR and
// XNOR of the latent bits simultaneously. Inputs are the bits plus uniform
// noise in (-0.3, 0.3); only the hidden activation differs between runs.
inline constexpr int kToySamplesPerEpoch = 256;

struct ToyBatch {
    Tensord inputs;   // (n, 2)
    Tensord targets;  // (n, 2): [xor, xnor], each 0 or 1
};

ToyBatch sample_toy_batch(Rng& rng, int n = kToySamplesPerEpoch);

// Builds the toy net (weights uniform in (-1, 1) from cfg.seed) and trains
// it for cfg.epochs full-batch steps, a fresh 256-sample batch per epoch.
// Returns the per-epoch MSE measured before each update. Only fta, rta,
// tanh and rtanh are valid hidden activations here.
std::vector<double> run_toy_experiment(ActivationKind kind, const TrainConfig& cfg);

}  // namespace ternet
