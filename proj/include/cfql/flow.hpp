#pragma once

#include <cstdint>

#include "cfql/mlp.hpp"
#include "cfql/rng.hpp"

namespace cfql {

/// Velocity field v(t, s, x_t) of the behavioral-cloning flow policy.
/// Input layout per row: [t, observation, interpolant], output: velocity.
struct VelocityField {
    std::size_t obs_dim = 0;
    std::size_t action_dim = 0;
    MlpParams net;

    static VelocityField create(std::size_t obs_dim, std::size_t action_dim,
                                const std::vector<std::size_t>& hidden, Rng& rng);
};

/// One-step target policy pi(s, z) = tanh(net([s, z])), bounded in (-1, 1)^d.
/// The noise dimension equals the action dimension so that the same z can
/// feed both this map and the Euler sampler.
struct OneStepPolicy {
    std::size_t obs_dim = 0;
    std::size_t action_dim = 0;
    MlpParams net;

    static OneStepPolicy create(std::size_t obs_dim, std::size_t action_dim,
                                const std::vector<std::size_t>& hidden, Rng& rng);
};

/// Euler-sampler and distillation knobs.
struct FlowConfig {
    std::size_t euler_steps = 10;  // M
    double distill_coef = 1.0;     // alpha

    void validate() const;
};

/// Squashed policy actions for a batch of observations and noise.
DenseArray policy_actions(const OneStepPolicy& policy, const DenseArray& obs, const DenseArray& noise);

/**
Integrate the velocity field with M explicit Euler steps at times
0, 1/M, ..., (M-1)/M starting from `noise`, then clip to [-1, 1]^d.
`clip` can be disabled for step-size diagnostics.
*/
DenseArray euler_sample(const VelocityField& field, const DenseArray& obs, const DenseArray& noise,
                        std::size_t steps, bool clip = true);

struct FlowLoss {
    double loss = 0.0;
    MlpGrads grads;
};

/**
Conditional flow-matching regression: per element draw x0 ~ N(0, I),
t ~ Uniform(0, 1), form the interpolant (1-t) x0 + t x1 and regress the
field toward (x1 - x0). Returns the mean squared residual and gradients
for the field parameters.
*/
FlowLoss flow_matching_loss(const VelocityField& field, const DenseArray& obs,
                            const DenseArray& actions, Rng& rng);

/**
Distillation loss mean ||pi(s, z) - bc_actions||^2 with gradients to the
policy only; `bc_actions` (the flow samples under the same z) are treated
as constants.
*/
FlowLoss distill_loss(const OneStepPolicy& policy, const DenseArray& obs, const DenseArray& noise,
                      const DenseArray& bc_actions);

}  // namespace cfql
