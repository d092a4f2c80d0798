// Feedforward multilayer perceptron with hand-derived reverse-mode
// gradients. The forward pass records every intermediate activation; the
// backward pass consumes that tape and returns gradients for all weights,
// biases and the input batch.

#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "shellvae/matrix.hpp"
#include "shellvae/rng.hpp"

namespace shellvae {

enum class Activation { rectifier, identity };

struct Layer {
    Matrix weight;  // out x in
    Vec bias;       // out
    Activation act{Activation::identity};

    std::size_t in_size() const { return weight.cols; }
    std::size_t out_size() const { return weight.rows; }
};

struct MlpParams {
    std::vector<Layer> layers;

    std::size_t input_size() const { return layers.front().in_size(); }
    std::size_t output_size() const { return layers.back().out_size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Layer& l : layers) n += l.weight.v.size() + l.bias.size();
        return n;
    }

    // Consecutive layer dimensions must chain and all entries be finite.
    void validate() const {
        require(!layers.empty(), "mlp: no layers");
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const Layer& l = layers[k];
            require(l.bias.size() == l.out_size(),
                    "mlp: layer " + std::to_string(k) + " bias size mismatch");
            require(all_finite(l.weight) && all_finite(l.bias),
                    "mlp: layer " + std::to_string(k) + " has non-finite entries");
            if (k > 0) {
                require(layers[k - 1].out_size() == l.in_size(),
                        "mlp: layer " + std::to_string(k) + " input size " +
                            std::to_string(l.in_size()) + " does not chain from previous output " +
                            std::to_string(layers[k - 1].out_size()));
            }
        }
    }
};

// Per-layer weight and bias gradients, shapes mirroring the owning MlpParams.
struct GradientBundle {
    std::vector<Matrix> weight_grad;
    std::vector<Vec> bias_grad;

    static GradientBundle zeros_like(const MlpParams& params) {
        GradientBundle g;
        g.weight_grad.reserve(params.layers.size());
        g.bias_grad.reserve(params.layers.size());
        for (const Layer& l : params.layers) {
            g.weight_grad.emplace_back(l.weight.rows, l.weight.cols, 0.0);
            g.bias_grad.emplace_back(l.bias.size(), 0.0);
        }
        return g;
    }
};

// Everything the backward pass needs: the input batch, each layer's
// pre-activations and each layer's post-activation outputs.
struct ForwardTape {
    Matrix input;
    std::vector<Matrix> pre;
    std::vector<Matrix> post;
};

inline std::pair<Matrix, ForwardTape> mlp_forward(const MlpParams& params, const DataMatrix& batch) {
    require(!params.layers.empty(), "mlp_forward: no layers");
    require(batch.cols == params.input_size(),
            "mlp_forward: batch has " + std::to_string(batch.cols) + " cols, layer 0 expects " +
                std::to_string(params.input_size()));

    ForwardTape tape;
    tape.input = batch;
    tape.pre.reserve(params.layers.size());
    tape.post.reserve(params.layers.size());

    const Matrix* cur = &batch;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const Layer& l = params.layers[k];
        require(cur->cols == l.in_size(),
                "mlp_forward: layer " + std::to_string(k) + " expects " +
                    std::to_string(l.in_size()) + " inputs, got " + std::to_string(cur->cols));

        Matrix pre(cur->rows, l.out_size());
        for (std::size_t i = 0; i < cur->rows; ++i) {
            const double* in = cur->row(i);
            double* out = pre.row(i);
            for (std::size_t o = 0; o < l.out_size(); ++o) {
                out[o] = l.bias[o] + dot(l.weight.row(o), in, l.in_size());
            }
        }

        Matrix post = pre;
        if (l.act == Activation::rectifier) {
            for (double& x : post.v) x = x > 0.0 ? x : 0.0;
        }
        tape.pre.push_back(std::move(pre));
        tape.post.push_back(std::move(post));
        cur = &tape.post.back();
    }
    return {tape.post.back(), std::move(tape)};
}

// Gradients of the scalar loss whose output-gradient is `upstream`, with
// respect to every parameter and the input batch.
inline std::pair<GradientBundle, Matrix> mlp_backward(const MlpParams& params,
                                                      const ForwardTape& tape,
                                                      const Matrix& upstream) {
    const std::size_t n_layers = params.layers.size();
    require(tape.pre.size() == n_layers && tape.post.size() == n_layers,
            "mlp_backward: tape does not match params (layer count)");
    require(upstream.same_shape(tape.post.back()),
            "mlp_backward: upstream shape does not match forward outputs");

    GradientBundle grads = GradientBundle::zeros_like(params);
    Matrix g = upstream;

    for (std::size_t k = n_layers; k-- > 0;) {
        const Layer& l = params.layers[k];
        const Matrix& pre = tape.pre[k];
        require(g.same_shape(pre), "mlp_backward: stale tape at layer " + std::to_string(k));

        if (l.act == Activation::rectifier) {
            for (std::size_t i = 0; i < g.v.size(); ++i) {
                if (pre.v[i] <= 0.0) g.v[i] = 0.0;
            }
        }

        const Matrix& input = (k == 0) ? tape.input : tape.post[k - 1];
        Matrix& wg = grads.weight_grad[k];
        Vec& bg = grads.bias_grad[k];
        for (std::size_t i = 0; i < input.rows; ++i) {
            const double* in = input.row(i);
            const double* gi = g.row(i);
            for (std::size_t o = 0; o < l.out_size(); ++o) {
                const double go = gi[o];
                if (go == 0.0) continue;
                bg[o] += go;
                double* wrow = wg.row(o);
                for (std::size_t j = 0; j < l.in_size(); ++j) wrow[j] += go * in[j];
            }
        }

        Matrix g_prev(input.rows, l.in_size(), 0.0);
        for (std::size_t i = 0; i < input.rows; ++i) {
            const double* gi = g.row(i);
            double* gp = g_prev.row(i);
            for (std::size_t o = 0; o < l.out_size(); ++o) {
                const double go = gi[o];
                if (go == 0.0) continue;
                const double* wrow = l.weight.row(o);
                for (std::size_t j = 0; j < l.in_size(); ++j) gp[j] += go * wrow[j];
            }
        }
        g = std::move(g_prev);
    }
    return {std::move(grads), std::move(g)};
}

// Central-difference gradient estimate, the oracle all analytic gradients
// are checked against.
inline Vec finite_diff_gradient(const std::function<double(const Vec&)>& loss_fn,
                                const Vec& point, double step) {
    require(step > 0.0, "finite_diff_gradient: step must be positive");
    Vec grad(point.size());
    Vec x = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        x[i] = point[i] + step;
        const double up = loss_fn(x);
        x[i] = point[i] - step;
        const double down = loss_fn(x);
        x[i] = point[i];
        require(std::isfinite(up) && std::isfinite(down),
                "finite_diff_gradient: non-finite loss at coordinate " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

// Uniform init in +-sqrt(6 / (fan_in + fan_out)), drawn in layer order,
// weights row-major then biases (biases start at zero).
inline MlpParams make_mlp(const std::vector<std::size_t>& sizes,
                          const std::vector<Activation>& acts, Rng& rng) {
    require(sizes.size() >= 2, "make_mlp: need at least one layer");
    require(acts.size() == sizes.size() - 1, "make_mlp: one activation per layer");
    MlpParams params;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        Layer l;
        l.weight = Matrix(sizes[k + 1], sizes[k]);
        l.bias = Vec(sizes[k + 1], 0.0);
        l.act = acts[k];
        const double bound = std::sqrt(6.0 / static_cast<double>(sizes[k] + sizes[k + 1]));
        for (double& w : l.weight.v) w = (2.0 * rng.uniform() - 1.0) * bound;
        params.layers.push_back(std::move(l));
    }
    return params;
}

// Flat parameter views, used by the optimizer, the checkpoint container and
// the finite-difference harness. Order: per layer, weights row-major then
// bias.
inline Vec flatten_params(const MlpParams& params) {
    Vec flat;
    flat.reserve(params.parameter_count());
    for (const Layer& l : params.layers) {
        flat.insert(flat.end(), l.weight.v.begin(), l.weight.v.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

inline void unflatten_params(MlpParams& params, const Vec& flat) {
    require(flat.size() == params.parameter_count(), "unflatten_params: size mismatch");
    std::size_t pos = 0;
    for (Layer& l : params.layers) {
        for (double& w : l.weight.v) w = flat[pos++];
        for (double& b : l.bias) b = flat[pos++];
    }
}

inline Vec flatten_grads(const GradientBundle& grads) {
    Vec flat;
    for (std::size_t k = 0; k < grads.weight_grad.size(); ++k) {
        flat.insert(flat.end(), grads.weight_grad[k].v.begin(), grads.weight_grad[k].v.end());
        flat.insert(flat.end(), grads.bias_grad[k].begin(), grads.bias_grad[k].end());
    }
    return flat;
}

}  // namespace shellvae
