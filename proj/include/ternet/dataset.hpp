#pragma once

#include <string>
#include <vector>

#include "ternet/rng.hpp"
#include "ternet/tensor.hpp"

namespace ternet {

// Labeled image set, images stored (count, channels, height, width).
struct ImageDataset {
    Tensord images;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t count() const { return images.empty() ? 0 : images.dim(0); }
};

// Synthetic oriented-grating classification task. Each sample is a sinusoidal
// grating at one of four orientations (0, 45, 90, 135 degrees) with random
// frequency, phase and amplitude plus Gaussian pixel noise. Classes are
// balanced: label = index mod 4.
ImageDataset make_grating_dataset(std::size_t count, std::uint64_t seed, int image_size = 12,
                                  double noise_sigma = 0.35);

// Tensor files are a raw little-endian float32 payload next to a JSON
// manifest: {"dtype": "float32", "shape": [...], "data": "<payload file>"}.
// Paths inside manifests are relative to the manifest's directory.
void write_tensor_file(const std::string& manifest_path, const Tensord& tensor);
Tensord read_tensor_file(const std::string& manifest_path);

// A dataset manifest points at an image tensor payload and an int32 label
// payload and records the class count.
void write_dataset(const std::string& manifest_path, const ImageDataset& ds);
ImageDataset read_dataset(const std::string& manifest_path);

}  // namespace ternet
