#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfql/array.hpp"
#include "cfql/rng.hpp"

namespace cfql {

enum class Activation { kRelu, kTanh, kGelu };
enum class OutputSquash { kIdentity, kSigmoid };

const char* to_string(Activation a);
const char* to_string(OutputSquash a);
Activation activation_from_string(const std::string& name);

/**
Fully connected network parameters.

`layer_sizes` holds [input, hidden..., output]. Weight matrices are stored
row-major with shape [out, in]; biases with shape [out]. The hidden
activation applies after every layer except the last, and `final_activation`
applies to the last layer output.
*/
struct MlpParams {
    std::vector<std::size_t> layer_sizes;
    std::vector<DenseArray> weights;
    std::vector<DenseArray> biases;
    Activation activation = Activation::kRelu;
    OutputSquash final_activation = OutputSquash::kIdentity;

    std::size_t layer_count() const { return weights.size(); }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }

    /// Total number of scalar parameters: sum over layers of (in+1)*out.
    std::size_t parameter_count() const;
};

/**
Create an MLP with uniform fan-in initialization (weights and biases
uniform in +-1/sqrt(fan_in)). `final_weight_scale` shrinks the last
layer; near-zero values stabilize early bootstrapped targets.
*/
MlpParams make_mlp(const std::vector<std::size_t>& layer_sizes, Activation activation,
                   OutputSquash final_activation, Rng& rng, double final_weight_scale = 1.0);

/// Per-layer activations cached by the forward pass for use in backward.
struct MlpTrace {
    DenseArray input;
    std::vector<DenseArray> pre;   // pre-activation per layer
    std::vector<DenseArray> post;  // post-activation per layer; back() is the output
    const DenseArray& output() const { return post.back(); }
};

/// Gradient (or optimizer-moment) storage matching an MlpParams layout.
struct MlpGrads {
    std::vector<DenseArray> weights;
    std::vector<DenseArray> biases;

    static MlpGrads zeros_like(const MlpParams& params);
    void scale(double factor);
    void accumulate(const MlpGrads& other, double factor = 1.0);
    double max_abs() const;
};

/**
Forward pass for a batch. `input` must be rank-2 [batch, input_dim];
the result is [batch, output_dim].
*/
DenseArray mlp_forward(const MlpParams& params, const DenseArray& input);

/// Forward pass retaining the per-layer values needed by mlp_backward.
MlpTrace mlp_forward_trace(const MlpParams& params, const DenseArray& input);

struct MlpBackward {
    MlpGrads grads;
    DenseArray input_grad;
};

/**
Exact reverse-mode gradients.

`upstream` is dLoss/dOutput with the same shape as the forward output; the
returned gradients are dLoss/dParams and dLoss/dInput for the scalar loss
implied by it. Throws if the upstream contains non-finite values.
*/
MlpBackward mlp_backward(const MlpParams& params, const MlpTrace& trace, const DenseArray& upstream);

// -------------------------------------------------------------------------
// Adam
// -------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment accumulators plus step count for one parameter set.
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    MlpGrads first_moment;
    MlpGrads second_moment;

    static AdamState init(const MlpParams& params, const AdamConfig& config);
};

/// One bias-corrected Adam update; increments the step count by exactly 1.
void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads);

/// FNV-1a hash over the raw parameter bytes, for update-isolation checks.
std::uint64_t parameter_checksum(const MlpParams& params);

}  // namespace cfql
