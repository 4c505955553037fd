#include "ternet/dataset.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace ternet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_raw(const fs::path& path, const void* data, std::size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::uint8_t> read_raw(const fs::path& path, std::size_t expected_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() != expected_bytes) {
        throw std::runtime_error(path.string() + ": expected " +
                                 std::to_string(expected_bytes) + " bytes, found " +
                                 std::to_string(bytes.size()));
    }
    return bytes;
}

json read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open " + manifest_path);
    json m;
    try {
        in >> m;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(manifest_path + ": " + e.what());
    }
    return m;
}

// payload paths are stored relative to the manifest
fs::path sibling(const std::string& manifest_path, const std::string& name) {
    return fs::path(manifest_path).parent_path() / name;
}

std::vector<std::size_t> shape_from(const json& m, const std::string& manifest_path) {
    if (!m.contains("shape") || !m["shape"].is_array()) {
        throw std::runtime_error(manifest_path + ": missing shape");
    }
    std::vector<std::size_t> shape;
    for (const auto& d : m["shape"]) shape.push_back(d.get<std::size_t>());
    return shape;
}

std::vector<float> narrowed(const Tensord& t) {
    std::vector<float> v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<float>(t[i]);
    return v;
}

Tensord widened(std::vector<std::size_t> shape, const std::vector<std::uint8_t>& bytes) {
    Tensord t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) {
        std::uint32_t u = 0;
        for (int j = 0; j < 4; ++j) u |= std::uint32_t{bytes[4 * i + j]} << (8 * j);
        float f;
        std::memcpy(&f, &u, sizeof(f));
        t[i] = f;
    }
    return t;
}

std::string payload_name(const std::string& manifest_path, const char* suffix) {
    fs::path p = fs::path(manifest_path).filename();
    p.replace_extension("");
    return p.string() + suffix;
}

}  // namespace

ImageDataset make_grating_dataset(std::size_t count, std::uint64_t seed, int image_size,
                                  double noise_sigma) {
    if (image_size < 2) throw std::invalid_argument("make_grating_dataset: image too small");
    constexpr int kClasses = 4;
    Rng rng(seed);
    ImageDataset ds;
    ds.num_classes = kClasses;
    ds.images = Tensord({count, 1, static_cast<std::size_t>(image_size),
                         static_cast<std::size_t>(image_size)});
    ds.labels.resize(count);

    const double half = (image_size - 1) / 2.0;
    const std::size_t pixels = static_cast<std::size_t>(image_size) * image_size;
    for (std::size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % kClasses);
        ds.labels[i] = label;
        const double theta = label * std::numbers::pi / 4.0;
        const double cx = std::cos(theta), sy = std::sin(theta);
        const double freq = rng.uniform(0.9, 1.3);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = rng.uniform(0.8, 1.2);
        double* img = ds.images.data() + i * pixels;
        for (int y = 0; y < image_size; ++y) {
            for (int x = 0; x < image_size; ++x) {
                const double u = (x - half) * cx + (y - half) * sy;
                img[y * image_size + x] =
                    amp * std::sin(freq * u + phase) + noise_sigma * rng.normal();
            }
        }
    }
    return ds;
}

void write_tensor_file(const std::string& manifest_path, const Tensord& tensor) {
    const std::string data_name = payload_name(manifest_path, ".bin");
    const std::vector<float> values = narrowed(tensor);
    write_raw(sibling(manifest_path, data_name), values.data(), 4 * values.size());

    json m;
    m["dtype"] = "float32";
    m["shape"] = tensor.shape();
    m["data"] = data_name;
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot open " + manifest_path + " for writing");
    out << m.dump(2) << "\n";
}

Tensord read_tensor_file(const std::string& manifest_path) {
    const json m = read_manifest(manifest_path);
    if (m.value("dtype", "") != "float32") {
        throw std::runtime_error(manifest_path + ": unsupported dtype");
    }
    std::vector<std::size_t> shape = shape_from(m, manifest_path);
    const std::size_t n = Tensord::count(shape);
    const auto bytes = read_raw(sibling(manifest_path, m.at("data").get<std::string>()), 4 * n);
    return widened(std::move(shape), bytes);
}

void write_dataset(const std::string& manifest_path, const ImageDataset& ds) {
    if (ds.images.rank() != 4 || ds.images.dim(0) != ds.labels.size()) {
        throw std::invalid_argument("write_dataset: images must be (count, c, h, w)");
    }
    const std::string images_name = payload_name(manifest_path, ".images.bin");
    const std::string labels_name = payload_name(manifest_path, ".labels.bin");

    const std::vector<float> values = narrowed(ds.images);
    write_raw(sibling(manifest_path, images_name), values.data(), 4 * values.size());

    std::vector<std::int32_t> labels(ds.labels.begin(), ds.labels.end());
    write_raw(sibling(manifest_path, labels_name), labels.data(), 4 * labels.size());

    json m;
    m["classes"] = ds.num_classes;
    m["shape"] = ds.images.shape();
    m["images"] = images_name;
    m["labels"] = labels_name;
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot open " + manifest_path + " for writing");
    out << m.dump(2) << "\n";
}

ImageDataset read_dataset(const std::string& manifest_path) {
    const json m = read_manifest(manifest_path);
    std::vector<std::size_t> shape = shape_from(m, manifest_path);
    if (shape.size() != 4) throw std::runtime_error(manifest_path + ": images must be rank 4");
    const std::size_t n = Tensord::count(shape);
    const std::size_t count = shape[0];

    ImageDataset ds;
    ds.num_classes = m.at("classes").get<int>();
    if (ds.num_classes <= 0) throw std::runtime_error(manifest_path + ": bad class count");

    const auto image_bytes =
        read_raw(sibling(manifest_path, m.at("images").get<std::string>()), 4 * n);
    ds.images = widened(std::move(shape), image_bytes);

    const auto label_bytes =
        read_raw(sibling(manifest_path, m.at("labels").get<std::string>()), 4 * count);
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = 0;
        for (int j = 0; j < 4; ++j) u |= std::uint32_t{label_bytes[4 * i + j]} << (8 * j);
        ds.labels[i] = static_cast<std::int32_t>(u);
        if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes) {
            throw std::runtime_error(manifest_path + ": label out of range");
        }
    }
    return ds;
}

}  // namespace ternet
