#pragma once

#include "ternet/dataset.hpp"
#include "ternet/layers.hpp"
#include "ternet/train.hpp"

namespace ternet {

// Small image classifier with two weight-quantized conv blocks: a full
// precision stem conv, two ternary conv blocks (each relu -> batchnorm ->
// activation quantizer -> ternary conv), and a full precision dense head.
// With learn_scale_offset=false the activation quantizers keep gamma at its
// calibrated value and beta at zero; the per-filter weight scales stay
// learnable either way.
NetworkSpec small_cnn_spec(int in_channels, int image_size, int num_classes,
                           bool learn_scale_offset);

struct SmallCnnResult {
    Network net;
    std::vector<double> epoch_losses;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// Builds the net from cfg.seed, trains with cross-entropy, reports accuracy
// on both splits.
SmallCnnResult train_small_cnn(const ImageDataset& train_set, const ImageDataset& test_set,
                               bool learn_scale_offset, const TrainConfig& cfg);

}  // namespace ternet
