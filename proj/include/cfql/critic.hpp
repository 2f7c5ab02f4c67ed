#pragma once

#include <optional>
#include <span>

#include "cfql/discriminator.hpp"
#include "cfql/flow.hpp"
#include "cfql/mlp.hpp"

namespace cfql {

/**
Ensemble of Q networks with matching Polyak-averaged target networks.
Alg. boxes bootstrap from the bare ensemble; targets with stopped
gradients are added because desk-scale runs diverge without them.
*/
struct CriticEnsemble {
    std::size_t obs_dim = 0;
    std::size_t action_dim = 0;
    double polyak_rate = 0.005;  // tau
    std::vector<MlpParams> members;
    std::vector<MlpParams> targets;

    std::size_t size() const { return members.size(); }

    /// N >= 2 required; targets start as copies of the members.
    static CriticEnsemble create(std::size_t obs_dim, std::size_t action_dim,
                                 const std::vector<std::size_t>& hidden, std::size_t n, double tau,
                                 Rng& rng);
};

/// Q values of one member (or target) network, one scalar per batch row.
std::vector<double> critic_values(const MlpParams& net, const DenseArray& obs, const DenseArray& act);

/// One critic training batch.
struct CriticBatch {
    DenseArray obs;        // [B, obs_dim]
    DenseArray act;        // [B, action_dim]
    std::vector<double> reward;
    DenseArray next_obs;   // [B, obs_dim]
    std::vector<double> done;  // 1.0 masks the bootstrap
};

struct CriticLossResult {
    std::vector<double> member_losses;
    std::vector<MlpGrads> member_grads;
    double mean_target = 0.0;
};

/**
One-step Bellman regression per member: each member draws its own fresh
noise, forms x' = pi(s', z) and regresses Q_i(s, x) onto
y + gamma * (1 - done) * mean_target_Q(s', x'). Targets are constants.
*/
CriticLossResult critic_loss(const CriticEnsemble& ensemble, const CriticBatch& batch,
                             const OneStepPolicy& policy, double gamma, Rng& rng);

/// target <- (1 - tau) * target + tau * online, element-wise.
void polyak_update(CriticEnsemble& ensemble, double tau);

/**
Confounding-robust Q combination:
  D(s,x) * mean_i Q_i(s,x) + (1 - D(s,x)) * min_i Q_i(s,x).
`pinned_weight`, when set, replaces the discriminator output by a constant
(1.0 recovers the plain ensemble mean used by the FQL ablation).
*/
double robust_q(const CriticEnsemble& ensemble, const Discriminator& d, std::span<const double> obs,
                std::span<const double> act);

struct RobustQBatch {
    std::vector<double> values;  // robust Q per row
    DenseArray action_grad;      // d(value_b) / d(action_b), [B, action_dim]
    double mean_value = 0.0;
};

/**
Batched robust Q with exact gradients with respect to the actions, for the
policy update. Gradients flow through the critics and the discriminator's
dependence on the action; no parameter gradients leave this function.
Pass `pinned_weight` (and a null discriminator) for the FQL ablation.
*/
RobustQBatch robust_q_with_action_grad(const CriticEnsemble& ensemble, const Discriminator* d,
                                       const DenseArray& obs, const DenseArray& act,
                                       std::optional<double> pinned_weight = std::nullopt);

}  // namespace cfql
