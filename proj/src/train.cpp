#include "ternet/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ternet {

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(cfg.quant_param_lr > 0.0)) throw std::invalid_argument("TrainConfig: quant_param_lr must be > 0");
    if (cfg.epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

std::pair<double, Tensord> loss_and_grad(Loss loss, const Tensord& pred, const Tensord& target) {
    if (!pred.same_shape(target)) {
        throw std::invalid_argument("loss: prediction/target shape mismatch");
    }
    Tensord grad(pred.shape());
    if (loss == Loss::MSE) {
        const double n = static_cast<double>(pred.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double d = pred[i] - target[i];
            acc += d * d;
            grad[i] = 2.0 * d / n;
        }
        return {acc / n, grad};
    }

    // cross entropy over softmax rows; targets are one-hot (or a distribution)
    const std::size_t batch = pred.dim(0);
    const std::size_t classes = pred.size() / batch;
    double total = 0.0;
    for (std::size_t r = 0; r < batch; ++r) {
        const double* p = pred.data() + r * classes;
        const double* t = target.data() + r * classes;
        double* g = grad.data() + r * classes;
        double m = p[0];
        for (std::size_t c = 1; c < classes; ++c) m = std::max(m, p[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(p[c] - m);
        const double logz = m + std::log(z);
        for (std::size_t c = 0; c < classes; ++c) {
            const double soft = std::exp(p[c] - logz);
            g[c] = (soft - t[c]) / static_cast<double>(batch);
            total += t[c] * (logz - p[c]);
        }
    }
    return {total / static_cast<double>(batch), grad};
}

StepResult forward_backward(Network& net, const Tensord& inputs, const Tensord& targets,
                            const TrainConfig& cfg, const PassContext& ctx) {
    validate(cfg);
    net.zero_grads();
    const Tensord pred = net.forward(inputs, ctx);
    auto [loss, dloss] = loss_and_grad(cfg.loss, pred, targets);
    if (!std::isfinite(loss)) {
        throw std::runtime_error("forward_backward: non-finite loss, step aborted");
    }
    net.backward(dloss);
    StepResult r;
    r.loss = loss;
    r.grads = net.grad_records();
    return r;
}

void sgd_step(Network& net, const std::vector<GradRecord>& grads, const TrainConfig& cfg) {
    validate(cfg);
    if (grads.size() != net.size()) {
        throw std::invalid_argument("sgd_step: gradient record count mismatch");
    }
    for (std::size_t i = 0; i < net.size(); ++i) {
        net.layer(i).apply_sgd(grads[i], cfg);
    }
}

Tensord one_hot(const std::vector<int>& labels, int num_classes) {
    Tensord t({labels.size(), static_cast<std::size_t>(num_classes)});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            throw std::invalid_argument("one_hot: label out of range");
        }
        t[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
    }
    return t;
}

namespace {

Tensord gather_rows(const Tensord& data, const std::vector<std::size_t>& idx,
                    std::size_t lo, std::size_t hi) {
    const std::size_t sample = data.size() / data.dim(0);
    std::vector<std::size_t> shape = data.shape();
    shape[0] = hi - lo;
    Tensord out(shape);
    for (std::size_t r = lo; r < hi; ++r) {
        const double* src = data.data() + idx[r] * sample;
        std::copy(src, src + sample, out.data() + (r - lo) * sample);
    }
    return out;
}

}  // namespace

FitResult fit(Network& net, const Tensord& images, const std::vector<int>& labels,
              int num_classes, const TrainConfig& cfg) {
    validate(cfg);
    if (images.dim(0) != labels.size()) {
        throw std::invalid_argument("fit: image/label count mismatch");
    }
    const Tensord targets = one_hot(labels, num_classes);
    const std::size_t n = labels.size();
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    FitResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t lo = 0; lo < n; lo += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t hi = std::min(n, lo + static_cast<std::size_t>(cfg.batch_size));
            const Tensord bx = gather_rows(images, order, lo, hi);
            const Tensord bt = gather_rows(targets, order, lo, hi);
            StepResult step = forward_backward(net, bx, bt, cfg);
            sgd_step(net, step.grads, cfg);
            epoch_loss += step.loss * static_cast<double>(hi - lo);
            seen += hi - lo;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
    }
    return result;
}

double accuracy(Network& net, const Tensord& images, const std::vector<int>& labels) {
    if (images.dim(0) != labels.size() || labels.empty()) {
        throw std::invalid_argument("accuracy: image/label count mismatch");
    }
    PassContext ctx;
    ctx.training = false;
    const Tensord logits = net.forward(images, ctx);
    const std::size_t classes = logits.size() / labels.size();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* row = logits.data() + i * classes;
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (row[c] > row[best]) best = c;
        }
        if (static_cast<int>(best) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace ternet
