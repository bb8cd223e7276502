#pragma once

#include <utility>
#include <vector>

#include "adml/matrix.hpp"

namespace adml {

/// Mini-batch SGD settings: momentum 0.9, weight decay 0.0005 and batch size
/// 256 by default, with a step schedule that divides the learning rate at the
/// listed iterations.
struct SGDConfig {
    double base_lr = 0.1;
    std::vector<std::pair<long, double>> lr_drops = {{16000, 10.0}, {24000, 10.0}};
    double momentum = 0.9;
    double weight_decay = 0.0005;
    long max_iter = 28000;
    int batch_size = 256;

    void validate() const {
        ADML_CHECK(base_lr > 0.0, "sgd.base_lr must be > 0");
        ADML_CHECK(momentum >= 0.0 && momentum < 1.0, "sgd.momentum must be in [0,1)");
        ADML_CHECK(weight_decay >= 0.0, "sgd.weight_decay must be >= 0");
        ADML_CHECK(max_iter >= 0, "sgd.max_iter must be >= 0");
        ADML_CHECK(batch_size >= 1, "sgd.batch_size must be >= 1");
        long prev = -1;
        for (const auto& [it, div] : lr_drops) {
            ADML_CHECK(it > prev, "sgd.lr_drops iterations must be strictly increasing");
            ADML_CHECK(div > 0.0, "sgd.lr_drops divisors must be > 0");
            prev = it;
        }
    }
};

/// Base rate divided by every drop whose iteration has been reached.
inline double lr_at(const SGDConfig& cfg, long iteration) {
    ADML_CHECK(iteration >= 0, "lr_at: iteration must be >= 0");
    double lr = cfg.base_lr;
    for (const auto& [it, div] : cfg.lr_drops)
        if (it <= iteration) lr /= div;
    return lr;
}

/// Momentum update with decoupled-from-backward weight decay:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
inline void sgd_step(Matrix& param, const Matrix& grad, Matrix& velocity, double lr,
                     double momentum, double weight_decay) {
    ADML_CHECK(param.same_shape(grad) && param.same_shape(velocity),
               "sgd_step: parameter, gradient and velocity shapes must match");
    for (std::size_t i = 0; i < param.values.size(); ++i) {
        velocity.values[i] =
            momentum * velocity.values[i] + (grad.values[i] + weight_decay * param.values[i]);
        param.values[i] -= lr * velocity.values[i];
    }
}

inline void sgd_step_scalar(double& param, double grad, double& velocity, double lr,
                            double momentum, double weight_decay) {
    velocity = momentum * velocity + (grad + weight_decay * param);
    param -= lr * velocity;
}

/// The learnable scale stays clamped at or above this after every update.
inline constexpr double kScaleFloor = 1e-3;

inline void sgd_step_scale(double& scale, double grad, double& velocity, double lr,
                           double momentum, double weight_decay) {
    sgd_step_scalar(scale, grad, velocity, lr, momentum, weight_decay);
    if (scale < kScaleFloor) scale = kScaleFloor;
}

}  // namespace adml
