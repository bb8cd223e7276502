#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adml/matrix.hpp"
#include "adml/rng.hpp"

namespace adml {

enum class Activation { Relu, Prelu };

inline const char* activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "prelu";
}

/// Shape of the embedding network: dense layers input -> hidden... -> feature.
/// Hidden layers are followed by the nonlinearity; the feature layer is
/// linear so embeddings stay unconstrained.
struct NetworkSpec {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    int feature_dim = 0;
    Activation activation = Activation::Relu;
    std::uint64_t init_seed = 1;

    int layer_count() const { return static_cast<int>(hidden_dims.size()) + 1; }

    void validate() const {
        ADML_CHECK(input_dim >= 1, "net.input_dim must be >= 1");
        ADML_CHECK(feature_dim >= 1, "net.feature_dim must be >= 1");
        for (int d : hidden_dims) ADML_CHECK(d >= 1, "net.hidden_dims entries must be >= 1");
    }

    // out dim of layer l
    int layer_out(int l) const {
        return l < static_cast<int>(hidden_dims.size()) ? hidden_dims[static_cast<std::size_t>(l)]
                                                        : feature_dim;
    }
    int layer_in(int l) const {
        return l == 0 ? input_dim : hidden_dims[static_cast<std::size_t>(l - 1)];
    }
};

/// All trainable parameters plus shape-matched momentum buffers. Weights are
/// in x out per layer, biases 1 x out, and each hidden layer owns one prelu
/// slope (kept even under relu so layouts stay uniform; it is simply unused).
struct NetworkState {
    NetworkSpec spec;
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    std::vector<Matrix> prelu_slopes;  // 1 x 1 per hidden layer, Prelu only
    std::vector<Matrix> weight_vel;
    std::vector<Matrix> bias_vel;
    std::vector<Matrix> prelu_vel;

    static NetworkState init(const NetworkSpec& spec, Rng& rng) {
        spec.validate();
        NetworkState net;
        net.spec = spec;
        for (int l = 0; l < spec.layer_count(); ++l) {
            const int in = spec.layer_in(l);
            const int out = spec.layer_out(l);
            Matrix w(in, out);
            const double bound = std::sqrt(6.0 / (in + out));
            for (double& v : w.values) v = rng.uniform(-bound, bound);
            net.weights.push_back(std::move(w));
            net.biases.emplace_back(1, out);
            net.weight_vel.emplace_back(in, out);
            net.bias_vel.emplace_back(1, out);
        }
        if (spec.activation == Activation::Prelu) {
            for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
                Matrix slope(1, 1);
                slope(0, 0) = 0.25;
                net.prelu_slopes.push_back(std::move(slope));
                net.prelu_vel.emplace_back(1, 1);
            }
        }
        return net;
    }
};

/// Intermediates kept by forward for the matching backward call.
struct ForwardCache {
    std::vector<Matrix> layer_inputs;  // input of each layer
    std::vector<Matrix> preacts;       // pre-activation of each hidden layer
    int batch_rows = 0;
};

inline Matrix forward(const NetworkState& net, const Matrix& inputs, ForwardCache* cache = nullptr) {
    ADML_CHECK(inputs.cols == net.spec.input_dim,
               "forward: input dimension mismatch (" + std::to_string(inputs.cols) + " vs " +
                   std::to_string(net.spec.input_dim) + ")");
    if (cache) {
        cache->layer_inputs.clear();
        cache->preacts.clear();
        cache->batch_rows = inputs.rows;
    }
    const int layers = net.spec.layer_count();
    Matrix a = inputs;
    for (int l = 0; l < layers; ++l) {
        if (cache) cache->layer_inputs.push_back(a);
        Matrix z = matmul(a, net.weights[static_cast<std::size_t>(l)]);
        const Matrix& bias = net.biases[static_cast<std::size_t>(l)];
        for (int i = 0; i < z.rows; ++i) {
            double* zr = z.row(i);
            for (int j = 0; j < z.cols; ++j) zr[j] += bias(0, j);
        }
        if (l < layers - 1) {
            if (cache) cache->preacts.push_back(z);
            if (net.spec.activation == Activation::Relu) {
                for (double& v : z.values) v = v > 0.0 ? v : 0.0;
            } else {
                const double slope = net.prelu_slopes[static_cast<std::size_t>(l)](0, 0);
                for (double& v : z.values) v = v > 0.0 ? v : slope * v;
            }
        }
        a = std::move(z);
    }
    return a;
}

struct NetworkGradients {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;
    std::vector<Matrix> prelu_slopes;
};

/// Chain rule back through the dense stack. Relu takes subgradient 0 at 0;
/// the prelu slope collects sum(z * upstream) over its negative half.
inline NetworkGradients backward(const NetworkState& net, const ForwardCache& cache,
                                 const Matrix& grad_features) {
    const int layers = net.spec.layer_count();
    ADML_CHECK(static_cast<int>(cache.layer_inputs.size()) == layers &&
                   cache.batch_rows == grad_features.rows,
               "backward: cache does not match this forward pass");
    ADML_CHECK(grad_features.cols == net.spec.feature_dim,
               "backward: gradient dimension mismatch");

    NetworkGradients g;
    g.weights.resize(static_cast<std::size_t>(layers));
    g.biases.resize(static_cast<std::size_t>(layers));
    if (net.spec.activation == Activation::Prelu)
        g.prelu_slopes.assign(net.prelu_slopes.size(), Matrix(1, 1));

    Matrix dz = grad_features;
    for (int l = layers - 1; l >= 0; --l) {
        const Matrix& input = cache.layer_inputs[static_cast<std::size_t>(l)];
        g.weights[static_cast<std::size_t>(l)] = matmul(transpose(input), dz);
        Matrix db(1, dz.cols);
        for (int i = 0; i < dz.rows; ++i)
            for (int j = 0; j < dz.cols; ++j) db(0, j) += dz(i, j);
        g.biases[static_cast<std::size_t>(l)] = std::move(db);

        if (l > 0) {
            Matrix da = matmul(dz, transpose(net.weights[static_cast<std::size_t>(l)]));
            const Matrix& z = cache.preacts[static_cast<std::size_t>(l - 1)];
            if (net.spec.activation == Activation::Relu) {
                for (std::size_t i = 0; i < da.values.size(); ++i)
                    if (z.values[i] <= 0.0) da.values[i] = 0.0;
            } else {
                const double slope = net.prelu_slopes[static_cast<std::size_t>(l - 1)](0, 0);
                double dslope = 0.0;
                for (std::size_t i = 0; i < da.values.size(); ++i) {
                    if (z.values[i] <= 0.0) {
                        dslope += z.values[i] * da.values[i];
                        da.values[i] *= slope;
                    }
                }
                g.prelu_slopes[static_cast<std::size_t>(l - 1)](0, 0) = dslope;
            }
            dz = std::move(da);
        }
    }
    return g;
}

}  // namespace adml
