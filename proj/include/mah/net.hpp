#pragma once

#include "mah/common.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace mah {

// y = x W^T + b for a batch x with one item per row. W is out x in.
struct AffineLayer {
    Matrix weight;
    Vector bias;

    std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
};

// Encoder: a chain of affine layers with tanh between them and no activation
// after the last one. With no layers the encoder is the identity.
struct EncoderSpec {
    std::vector<std::size_t> hidden{512};
    std::size_t latent_dim = 1000;  // ignored when identity is set
    bool identity = false;
};

struct NetworkSpec {
    std::size_t input_dim = 0;
    EncoderSpec encoder;
    CodeLengthGroup lengths;
    HeadVariant variant = HeadVariant::flat;
    bool use_bias = true;
};

struct ModelParams {
    std::vector<AffineLayer> encoder;
    BranchArray<AffineLayer> heads;  // indexed by Branch
    HeadVariant variant = HeadVariant::flat;
    bool use_bias = true;

    AffineLayer& head(Branch b) { return heads[index_of(b)]; }
    const AffineLayer& head(Branch b) const { return heads[index_of(b)]; }

    std::size_t input_dim() const;
    std::size_t latent_dim() const;

    // Same shapes, every entry zero.
    ModelParams zeros_like() const;

    // Visits every tensor in a fixed order with a stable dotted name, e.g.
    // "encoder.0.weight" or "head.plus.bias".
    void for_each_tensor(const std::function<void(const std::string&, Matrix&)>& weight_fn,
                         const std::function<void(const std::string&, Vector&)>& bias_fn);
    void for_each_tensor(const std::function<void(const std::string&, const Matrix&)>& weight_fn,
                         const std::function<void(const std::string&, const Vector&)>& bias_fn) const;

    bool operator==(const ModelParams& other) const;
};

using ParamGrads = ModelParams;

// Shape check of the head structure against a code-length group and variant.
void validate_params(const ModelParams& params);

// Glorot-uniform weights, zero biases, deterministic in `seed`.
ModelParams init_params(const NetworkSpec& spec, std::uint64_t seed);

// Pre-activation head embeddings, one row per batch item.
struct HeadOutputs {
    BranchArray<Matrix> values;

    Matrix& operator[](Branch b) { return values[index_of(b)]; }
    const Matrix& operator[](Branch b) const { return values[index_of(b)]; }
};

// Intermediates recorded by a forward pass for the matching backward pass.
struct ForwardPass {
    // activations[0] is the input batch, activations[l + 1] the output of encoder
    // layer l; the last entry is the latent batch.
    std::vector<Matrix> activations;
    HeadOutputs heads;

    const Matrix& latent() const { return activations.back(); }
    std::size_t batch_size() const { return static_cast<std::size_t>(activations.front().rows()); }
};

ForwardPass encoder_forward(const ModelParams& params, const Matrix& batch);
HeadOutputs heads_forward(const ModelParams& params, const Matrix& latent);
// encoder_forward followed by heads_forward, recorded into one pass.
ForwardPass forward(const ModelParams& params, const Matrix& batch);

// Exact reverse-mode gradients of a scalar whose gradients with respect to the
// head outputs of `pass` are `output_grads`.
ParamGrads backward(const ModelParams& params, const ForwardPass& pass, const HeadOutputs& output_grads);

struct OptimizerState {
    ModelParams velocity;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
};

OptimizerState make_optimizer(const ModelParams& params, double learning_rate, double momentum,
                              double weight_decay);

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
// Throws NumericError naming the first non-finite gradient tensor.
void sgd_step(ModelParams& params, const ParamGrads& grads, OptimizerState& state);

}  // namespace mah
