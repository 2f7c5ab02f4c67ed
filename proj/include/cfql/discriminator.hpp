#pragma once

#include <span>

#include "cfql/mlp.hpp"
#include "cfql/rng.hpp"

namespace cfql {

/**
Binary classifier over (s, x) standing in for the indicator 1{x = x'}:
class 1 means the action came from the BC flow policy, class 0 from the
one-step target policy. The net outputs a logit; the sigmoid is applied
where probabilities are needed, so the output lives strictly in (0, 1).
*/
struct Discriminator {
    std::size_t obs_dim = 0;
    std::size_t action_dim = 0;
    double loss_coef = 10.0;   // lambda_D
    double coef_decay = 0.0;   // optional exponential decay rate per step
    MlpParams net;

    static Discriminator create(std::size_t obs_dim, std::size_t action_dim,
                                const std::vector<std::size_t>& hidden, Rng& rng);

    /// Coefficient applied to the discriminator's own loss at `step`.
    double coefficient_at(std::uint64_t step) const;
};

/// Raw logits for a batch of (s, x) pairs, column vector [batch, 1].
DenseArray discriminator_logits(const Discriminator& d, const DenseArray& obs, const DenseArray& act);

/// sigmoid(logit) for a single pair; the factual weight used by robust_q.
double factual_weight(const Discriminator& d, std::span<const double> obs, std::span<const double> act);

struct DiscriminatorLoss {
    double loss = 0.0;         // per-element binary cross entropy
    double accuracy = 0.0;     // classification accuracy at threshold 0.5
    double mean_output_bc = 0.0;
    double mean_output_policy = 0.0;
    MlpGrads grads;
};

/**
Binary cross entropy with class 1 = BC flow samples and class 0 = target
policy samples: -mean[log D(s, x_bc) + log(1 - D(s, x_pi))]. Gradients
flow to the classifier only; both action batches are constants.
*/
DiscriminatorLoss discriminator_loss(const Discriminator& d, const DenseArray& obs,
                                     const DenseArray& bc_actions, const DenseArray& policy_actions);

}  // namespace cfql
