// ternet: command-line surface for the ternary network toolkit.
//
// Subcommands: toy, dataset, train-small, quantize, infer, bench, cost.
// Everything is single-threaded and seeded, so identical flags produce
// byte-identical outputs.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ternet/bench.hpp"
#include "ternet/dataset.hpp"
#include "ternet/experiment.hpp"
#include "ternet/infer.hpp"
#include "ternet/model_io.hpp"
#include "ternet/opcount.hpp"
#include "ternet/toy.hpp"
#include "ternet/train.hpp"

namespace {

using namespace ternet;

// shortest representation that round-trips a double
std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    return out;
}

ModelFile load_checked(const std::string& path, bool ignore_checksum) {
    LoadedModel loaded = read_model_file(path);
    if (!loaded.checksum_ok) {
        if (!ignore_checksum) {
            throw std::runtime_error(path + ": checksum mismatch (use --ignore-checksum to load anyway)");
        }
        std::cerr << "warning: " << path << ": checksum mismatch, loading anyway\n";
    }
    return std::move(loaded.model);
}

int run_toy(const std::string& activation, std::uint64_t seed, int epochs, double lr,
            double quant_lr, const std::string& out_path) {
    TrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.quant_param_lr = quant_lr > 0 ? quant_lr : lr;
    cfg.epochs = epochs;
    cfg.seed = seed;
    const std::vector<double> curve =
        run_toy_experiment(activation_kind_from_string(activation), cfg);

    auto out = open_out(out_path);
    out << "epoch,mse\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out << (i + 1) << "," << fmt(curve[i]) << "\n";
    }
    std::cout << "wrote " << curve.size() << " epochs to " << out_path
              << " (final mse " << fmt(curve.back()) << ")\n";
    return 0;
}

int run_dataset(const std::string& out_path, std::size_t count, std::uint64_t seed,
                int image_size, double noise) {
    write_dataset(out_path, make_grating_dataset(count, seed, image_size, noise));
    std::cout << "wrote " << count << " samples to " << out_path << "\n";
    return 0;
}

int run_train_small(const std::string& dataset_path, const std::string& arch,
                    const std::string& mode, const std::string& eval_path,
                    const std::string& out_path, const TrainConfig& cfg) {
    if (arch != "small-cnn") {
        throw std::runtime_error("unknown --arch '" + arch + "' (available: small-cnn)");
    }
    const bool learn_scale_offset = mode == "reparam";
    if (!learn_scale_offset && mode != "fixed") {
        throw std::runtime_error("unknown --quant-mode '" + mode + "' (reparam or fixed)");
    }

    const ImageDataset train_set = read_dataset(dataset_path);
    const ImageDataset eval_set = eval_path.empty() ? train_set : read_dataset(eval_path);
    SmallCnnResult result = train_small_cnn(train_set, eval_set, learn_scale_offset, cfg);

    std::cout << "final loss " << fmt(result.epoch_losses.back()) << "\n";
    std::cout << "train accuracy " << fmt(result.train_accuracy) << "\n";
    if (!eval_path.empty()) std::cout << "eval accuracy " << fmt(result.test_accuracy) << "\n";
    write_model_file(out_path, to_model_file(result.net));
    std::cout << "saved " << out_path << "\n";
    return 0;
}

int run_quantize(const std::string& in_path, const std::string& out_path,
                 bool ignore_checksum) {
    const Network net = network_from_model_file(load_checked(in_path, ignore_checksum));
    write_model_file(out_path, to_model_file(quantize_network(net)));
    std::cout << "saved " << out_path << "\n";
    return 0;
}

int run_infer(const std::string& model_path, const std::string& input_path,
              const std::string& out_path, bool sparsity, const std::string& report_path,
              bool ignore_checksum) {
    const InferenceModel model =
        inference_from_model_file(load_checked(model_path, ignore_checksum));
    const Tensord inputs = read_tensor_file(input_path);

    SparsityReport report;
    const Tensord outputs = model.forward(inputs, sparsity ? &report : nullptr);

    const std::size_t batch = outputs.dim(0);
    const std::size_t classes = outputs.size() / batch;
    auto mat = outputs.matrix(static_cast<Eigen::Index>(batch),
                              static_cast<Eigen::Index>(classes));
    for (std::size_t i = 0; i < batch; ++i) {
        Eigen::Index best = 0;
        mat.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
        std::cout << i << "," << best << "\n";
    }
    if (!out_path.empty()) write_tensor_file(out_path, outputs);

    if (sparsity) {
        nlohmann::json j;
        for (const auto& e : report.entries) {
            j["layers"].push_back({{"name", e.name},
                                   {"zeros", e.zeros},
                                   {"total", e.total},
                                   {"fraction", e.fraction()}});
        }
        if (report_path.empty()) {
            std::cout << j.dump(2) << "\n";
        } else {
            open_out(report_path) << j.dump(2) << "\n";
        }
    }
    return 0;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

int run_bench(const std::string& lengths_csv, const std::string& schemes_csv,
              std::uint64_t seed) {
    std::vector<Scheme> schemes;
    for (const std::string& s : split_list(schemes_csv)) {
        if (s == "ternary") {
            schemes.push_back(Scheme::Ternary);
        } else if (s == "quaternary") {
            schemes.push_back(Scheme::Quaternary2Bit);
        } else if (s == "float") {
            schemes.push_back(Scheme::Float32);
        } else {
            throw std::runtime_error("unknown scheme '" + s + "'");
        }
    }
    std::vector<std::size_t> lengths;
    for (const std::string& s : split_list(lengths_csv)) {
        lengths.push_back(static_cast<std::size_t>(std::stoull(s)));
    }
    if (schemes.empty() || lengths.empty()) {
        throw std::runtime_error("need at least one scheme and one length");
    }

    std::cout << "scheme,length,ns_per_dot,ops_counted\n";
    for (Scheme scheme : schemes) {
        for (std::size_t length : lengths) {
            const DotBenchResult r = bench_dot(scheme, length, seed);
            std::cout << scheme_name(scheme) << "," << length << "," << fmt(r.ns_per_dot)
                      << "," << count_ops(scheme, length).total() << "\n";
        }
    }
    return 0;
}

int run_cost(std::size_t length) {
    std::printf("%-12s %8s %8s %10s %8s %8s %10s\n", "scheme", "and", "xor", "popcount",
                "shift", "add", "total");
    for (Scheme scheme : {Scheme::Ternary, Scheme::Quaternary2Bit, Scheme::Float32}) {
        const OpCountReport r = count_ops(scheme, length);
        std::printf("%-12s %8zu %8zu %10zu %8zu %8zu %10zu\n", scheme_name(scheme).c_str(),
                    r.and_ops, r.xor_ops, r.popcount_ops, r.shift_ops, r.add_ops, r.total());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ternary network toolkit"};
    app.require_subcommand(1);

    // toy
    auto* toy = app.add_subcommand("toy", "train the two-bit logic toy model");
    std::string toy_activation;
    std::uint64_t toy_seed = 0;
    int toy_epochs = 15000;
    double toy_lr = 0.03, toy_quant_lr = 0.005;
    std::string toy_out = "curve.csv";
    toy->add_option("--activation", toy_activation, "hidden activation")
        ->required()
        ->check(CLI::IsMember({"fta", "rta", "tanh", "rtanh"}));
    toy->add_option("--seed", toy_seed, "rng seed");
    toy->add_option("--epochs", toy_epochs, "training epochs")->check(CLI::PositiveNumber);
    toy->add_option("--lr", toy_lr, "learning rate")->check(CLI::PositiveNumber);
    toy->add_option("--quant-lr", toy_quant_lr, "quant-parameter learning rate (0 means: use --lr)");
    toy->add_option("--out", toy_out, "output csv path");

    // dataset
    auto* dataset = app.add_subcommand("dataset", "generate an oriented-grating dataset");
    std::string ds_out;
    std::size_t ds_count = 4000;
    std::uint64_t ds_seed = 0;
    int ds_size = 12;
    double ds_noise = 0.35;
    dataset->add_option("--out", ds_out, "manifest path (json)")->required();
    dataset->add_option("--count", ds_count, "sample count")->check(CLI::PositiveNumber);
    dataset->add_option("--seed", ds_seed, "rng seed");
    dataset->add_option("--image-size", ds_size, "square image side")->check(CLI::PositiveNumber);
    dataset->add_option("--noise", ds_noise, "pixel noise sigma")->check(CLI::NonNegativeNumber);

    // train-small
    auto* train = app.add_subcommand("train-small", "train a small quantized image classifier");
    std::string tr_dataset, tr_eval, tr_arch = "small-cnn", tr_mode = "reparam";
    std::string tr_out = "model.rtn";
    TrainConfig tr_cfg;
    tr_cfg.learning_rate = 0.02;
    tr_cfg.quant_param_lr = 0.002;
    tr_cfg.epochs = 10;
    tr_cfg.batch_size = 64;
    train->add_option("--dataset", tr_dataset, "training dataset manifest")->required();
    train->add_option("--eval", tr_eval, "held-out dataset manifest");
    train->add_option("--arch", tr_arch, "architecture name");
    train->add_option("--quant-mode", tr_mode, "reparam: learn gamma/beta; fixed: freeze them");
    train->add_option("--out", tr_out, "output model path");
    train->add_option("--epochs", tr_cfg.epochs, "training epochs")->check(CLI::PositiveNumber);
    train->add_option("--lr", tr_cfg.learning_rate, "weight learning rate")
        ->check(CLI::PositiveNumber);
    train->add_option("--quant-lr", tr_cfg.quant_param_lr, "quant-parameter learning rate")
        ->check(CLI::PositiveNumber);
    train->add_option("--batch", tr_cfg.batch_size, "minibatch size")->check(CLI::PositiveNumber);
    train->add_option("--seed", tr_cfg.seed, "rng seed");

    // quantize
    auto* quantize = app.add_subcommand("quantize", "freeze a trained net for packed inference");
    std::string q_in, q_out;
    bool q_ignore = false;
    quantize->add_option("--in", q_in, "trained model path")->required();
    quantize->add_option("--out", q_out, "quantized model path")->required();
    quantize->add_flag("--ignore-checksum", q_ignore, "load despite a checksum mismatch");

    // infer
    auto* infer = app.add_subcommand("infer", "run a quantized model on a tensor file");
    std::string in_model, in_input, in_out, in_report;
    bool in_sparsity = false, in_ignore = false;
    infer->add_option("--model", in_model, "quantized model path")->required();
    infer->add_option("--input", in_input, "input tensor manifest (json)")->required();
    infer->add_option("--out", in_out, "write raw outputs to this tensor manifest");
    infer->add_flag("--sparsity-report", in_sparsity, "report activation sparsity per quantizer");
    infer->add_option("--report-out", in_report, "write the sparsity report here instead of stdout");
    infer->add_flag("--ignore-checksum", in_ignore, "load despite a checksum mismatch");

    // bench
    auto* bench = app.add_subcommand("bench", "time the dot-product kernels");
    std::string b_lengths = "64,1024,65536", b_schemes = "ternary,quaternary,float";
    std::uint64_t b_seed = 0;
    bench->add_option("--lengths", b_lengths, "comma-separated vector lengths");
    bench->add_option("--schemes", b_schemes, "comma-separated subset of ternary,quaternary,float");
    bench->add_option("--seed", b_seed, "rng seed");

    // cost
    auto* cost = app.add_subcommand("cost", "print the per-scheme operation counts");
    std::size_t c_length = 64;
    cost->add_option("--length", c_length, "vector length")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (*toy) return run_toy(toy_activation, toy_seed, toy_epochs, toy_lr, toy_quant_lr, toy_out);
        if (*dataset) return run_dataset(ds_out, ds_count, ds_seed, ds_size, ds_noise);
        if (*train) return run_train_small(tr_dataset, tr_arch, tr_mode, tr_eval, tr_out, tr_cfg);
        if (*quantize) return run_quantize(q_in, q_out, q_ignore);
        if (*infer) return run_infer(in_model, in_input, in_out, in_sparsity, in_report, in_ignore);
        if (*bench) return run_bench(b_lengths, b_schemes, b_seed);
        if (*cost) return run_cost(c_length);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
