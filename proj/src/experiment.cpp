#include "ternet/experiment.hpp"

#include <stdexcept>

namespace ternet {

NetworkSpec small_cnn_spec(int in_channels, int image_size, int num_classes,
                           bool learn_scale_offset) {
    if (image_size % 4 != 0) {
        throw std::invalid_argument("small_cnn_spec: image size must be divisible by 4");
    }
    const int c0 = 6, c1 = 10, c2 = 10;
    const int head_in = c2 * (image_size / 4) * (image_size / 4);

    NetworkSpec spec;
    spec.push_back(LayerSpec::conv2d(in_channels, c0, 3, 1, 1));
    spec.push_back(LayerSpec::relu());
    spec.push_back(LayerSpec::batch_norm(false));
    spec.push_back(LayerSpec::activation_quant(learn_scale_offset, true));
    spec.push_back(LayerSpec::weight_quant_conv(c0, c1, 3, 2, 1));
    spec.push_back(LayerSpec::relu());
    spec.push_back(LayerSpec::batch_norm(false));
    spec.push_back(LayerSpec::activation_quant(learn_scale_offset, true));
    spec.push_back(LayerSpec::weight_quant_conv(c1, c2, 3, 2, 1));
    spec.push_back(LayerSpec::relu());
    // the head input is unnormalized (ternary dot products reach the hundreds),
    // so a glorot head would start with logits in the tens and a saturated
    // softmax; a deliberately small head keeps the first steps gentle
    LayerSpec head = LayerSpec::dense(head_in, num_classes);
    head.init_uniform = 0.02;
    spec.push_back(head);
    return spec;
}

SmallCnnResult train_small_cnn(const ImageDataset& train_set, const ImageDataset& test_set,
                               bool learn_scale_offset, const TrainConfig& cfg) {
    if (train_set.images.rank() != 4 || test_set.images.rank() != 4) {
        throw std::invalid_argument("train_small_cnn: images must be (count, c, h, w)");
    }
    if (train_set.num_classes != test_set.num_classes) {
        throw std::invalid_argument("train_small_cnn: class count mismatch");
    }
    const int in_c = static_cast<int>(train_set.images.dim(1));
    const int size = static_cast<int>(train_set.images.dim(2));

    TrainConfig run = cfg;
    run.loss = Loss::CrossEntropy;
    validate(run);

    Rng rng(run.seed);
    SmallCnnResult result;
    result.net = Network::build(
        small_cnn_spec(in_c, size, train_set.num_classes, learn_scale_offset), rng);
    result.epoch_losses =
        fit(result.net, train_set.images, train_set.labels, train_set.num_classes, run)
            .epoch_losses;
    result.train_accuracy = accuracy(result.net, train_set.images, train_set.labels);
    result.test_accuracy = accuracy(result.net, test_set.images, test_set.labels);
    return result;
}

}  // namespace ternet
