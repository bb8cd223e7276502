#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adml/dataio.hpp"
#include "adml/losses.hpp"
#include "adml/network.hpp"
#include "adml/optimizer.hpp"

namespace adml {

struct TrainLogEntry {
    long iteration = 0;
    double lr = 0.0;
    double loss = 0.0;
    int violation_count = 0;
    int hard_count = 0;
};

struct TrainLog {
    std::vector<TrainLogEntry> entries;
    // One snapshot per iteration for the adaptive-margin variants, empty
    // otherwise.
    std::vector<std::vector<double>> margin_snapshots;

    bool has_margins() const { return !margin_snapshots.empty(); }
};

struct TrainResult {
    NetworkState net;
    ClassHead head;
    TrainLog log;
};

/// Optimizer state for the classifier head (the network carries its own
/// buffers).
struct HeadOptState {
    Matrix weight_vel;
    double scale_vel = 0.0;
};

/// One optimization step over every trainable parameter. The learnable scale
/// moves only for variants that use it, and stays clamped above the floor.
inline void apply_step(NetworkState& net, ClassHead& head, HeadOptState& opt,
                       const NetworkGradients& grads, const LossOutput& loss,
                       const LossConfig& lcfg, const SGDConfig& scfg, long iteration) {
    const double lr = lr_at(scfg, iteration);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        sgd_step(net.weights[l], grads.weights[l], net.weight_vel[l], lr, scfg.momentum,
                 scfg.weight_decay);
        sgd_step(net.biases[l], grads.biases[l], net.bias_vel[l], lr, scfg.momentum,
                 scfg.weight_decay);
    }
    for (std::size_t l = 0; l < net.prelu_slopes.size(); ++l)
        sgd_step(net.prelu_slopes[l], grads.prelu_slopes[l], net.prelu_vel[l], lr, scfg.momentum,
                 scfg.weight_decay);
    sgd_step(head.weights, loss.grad_weights, opt.weight_vel, lr, scfg.momentum,
             scfg.weight_decay);
    if (lcfg.uses_scale() && lcfg.scale_learnable)
        sgd_step_scale(head.scale, loss.grad_scale, opt.scale_vel, lr, scfg.momentum,
                       scfg.weight_decay);
}

/// Runs the training loop: shuffled mini-batches, forward, margin refresh for
/// the adaptive variants, joint loss, backward, SGD step. Warm-start state,
/// when given, replaces the seeded initialization (momentum starts fresh).
inline TrainResult train(const Dataset& ds, const NetworkSpec& nspec, const LossConfig& lcfg,
                         const SGDConfig& scfg, std::uint64_t seed,
                         const NetworkState* warm_net = nullptr,
                         const ClassHead* warm_head = nullptr, bool augment_flip = false) {
    ds.validate();
    nspec.validate();
    lcfg.validate();
    scfg.validate();
    ADML_CHECK(ds.size() >= 1, "train: dataset must be nonempty");
    ADML_CHECK(nspec.input_dim == ds.dim(), "train: net input dimension must match dataset");

    TrainResult res;
    Rng init_rng(nspec.init_seed);
    if (warm_net) {
        ADML_CHECK(warm_net->spec.input_dim == nspec.input_dim &&
                       warm_net->spec.hidden_dims == nspec.hidden_dims &&
                       warm_net->spec.feature_dim == nspec.feature_dim &&
                       warm_net->spec.activation == nspec.activation,
                   "train: warm-start checkpoint does not match the network spec");
        res.net = *warm_net;
    } else {
        res.net = NetworkState::init(nspec, init_rng);
    }
    if (warm_head) {
        ADML_CHECK(warm_head->feature_dim() == nspec.feature_dim &&
                       warm_head->class_count() == ds.class_count,
                   "train: warm-start head does not match feature dim / class count");
        res.head = *warm_head;
    } else {
        res.head = ClassHead::init(nspec.feature_dim, ds.class_count, lcfg, init_rng);
    }

    HeadOptState opt;
    opt.weight_vel = Matrix(res.head.feature_dim(), res.head.class_count());

    long iteration = 0;
    std::uint64_t epoch = 0;
    while (iteration < scfg.max_iter) {
        const auto epoch_batches =
            batches(ds, scfg.batch_size, derive_seed(seed, epoch), augment_flip);
        for (const Batch& batch : epoch_batches) {
            if (iteration >= scfg.max_iter) break;

            ForwardCache cache;
            FeatureBatch fb;
            fb.features = forward(res.net, batch.inputs, &cache);
            fb.labels = batch.labels;

            if (lcfg.uses_adaptive_margins())
                adaptive_margins(fb, res.head, lcfg.alpha0, lcfg.p);

            const LossOutput out = joint_loss(fb, res.head, lcfg);
            const NetworkGradients grads = backward(res.net, cache, out.grad_features);

            const double lr = lr_at(scfg, iteration);
            apply_step(res.net, res.head, opt, grads, out, lcfg, scfg, iteration);

            res.log.entries.push_back({iteration, lr, out.loss,
                                       out.diagnostics.violation_count,
                                       out.diagnostics.hard_count});
            if (lcfg.uses_adaptive_margins()) res.log.margin_snapshots.push_back(res.head.margins);
            ++iteration;
        }
        ++epoch;
    }
    return res;
}

/// Fraction of samples whose argmax logit matches the label.
inline double classification_accuracy(const NetworkState& net, const ClassHead& head,
                                      const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    const Matrix features = forward(net, ds.samples);
    const Matrix logits = matmul(features, head.weights);
    int correct = 0;
    for (int i = 0; i < logits.rows; ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        if (best == ds.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / ds.size();
}

}  // namespace adml
