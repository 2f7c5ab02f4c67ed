#include "cfql/critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfql {

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

DenseArray paired_input(std::size_t obs_dim, std::size_t action_dim, const DenseArray& obs,
                        const DenseArray& act) {
    const std::size_t batch = obs.rows();
    if (act.rows() != batch || act.cols() != action_dim || obs.cols() != obs_dim)
        throw std::invalid_argument("critic: (s, x) batch shape mismatch");
    DenseArray input = DenseArray::zeros({batch, obs_dim + action_dim});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < obs_dim; ++i) input(b, i) = obs(b, i);
        for (std::size_t i = 0; i < action_dim; ++i) input(b, obs_dim + i) = act(b, i);
    }
    return input;
}

}  // namespace

CriticEnsemble CriticEnsemble::create(std::size_t obs_dim, std::size_t action_dim,
                                      const std::vector<std::size_t>& hidden, std::size_t n,
                                      double tau, Rng& rng) {
    if (n < 2) throw std::invalid_argument("CriticEnsemble: at least 2 members required");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("CriticEnsemble: tau must be in (0, 1]");
    CriticEnsemble e;
    e.obs_dim = obs_dim;
    e.action_dim = action_dim;
    e.polyak_rate = tau;
    std::vector<std::size_t> sizes;
    sizes.push_back(obs_dim + action_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    for (std::size_t i = 0; i < n; ++i)
        e.members.push_back(make_mlp(sizes, Activation::kRelu, OutputSquash::kIdentity, rng, 0.01));
    e.targets = e.members;
    return e;
}

std::vector<double> critic_values(const MlpParams& net, const DenseArray& obs, const DenseArray& act) {
    DenseArray out = mlp_forward(net, paired_input(obs.cols(), act.cols(), obs, act));
    return out.data;
}

CriticLossResult critic_loss(const CriticEnsemble& ensemble, const CriticBatch& batch,
                             const OneStepPolicy& policy, double gamma, Rng& rng) {
    const std::size_t n = ensemble.size();
    const std::size_t batch_size = batch.obs.rows();
    if (batch.reward.size() != batch_size || batch.done.size() != batch_size)
        throw std::invalid_argument("critic_loss: batch vector length mismatch");

    CriticLossResult result;
    result.member_losses.resize(n);
    result.member_grads.reserve(n);
    const double inv_batch = 1.0 / static_cast<double>(batch_size);

    for (std::size_t i = 0; i < n; ++i) {
        // fresh noise per member
        DenseArray z = DenseArray::zeros({batch_size, ensemble.action_dim});
        rng.fill_normal(z.data);
        DenseArray next_act = policy_actions(policy, batch.next_obs, z);

        // bootstrapped target from the target-network ensemble mean
        std::vector<double> target(batch_size, 0.0);
        for (const MlpParams& tnet : ensemble.targets) {
            std::vector<double> q = critic_values(tnet, batch.next_obs, next_act);
            for (std::size_t b = 0; b < batch_size; ++b) target[b] += q[b];
        }
        for (std::size_t b = 0; b < batch_size; ++b) {
            target[b] = batch.reward[b] +
                        gamma * (1.0 - batch.done[b]) * target[b] / static_cast<double>(n);
            result.mean_target += target[b] * inv_batch / static_cast<double>(n);
        }

        MlpTrace trace = mlp_forward_trace(
            ensemble.members[i], paired_input(ensemble.obs_dim, ensemble.action_dim, batch.obs, batch.act));
        DenseArray upstream = DenseArray::zeros({batch_size, 1});
        double loss = 0.0;
        for (std::size_t b = 0; b < batch_size; ++b) {
            const double r = trace.output()[b] - target[b];
            loss += r * r * inv_batch;
            upstream[b] = 2.0 * r * inv_batch;
        }
        result.member_losses[i] = loss;
        result.member_grads.push_back(mlp_backward(ensemble.members[i], trace, upstream).grads);
    }
    return result;
}

void polyak_update(CriticEnsemble& ensemble, double tau) {
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak_update: tau must be in (0, 1]");
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        MlpParams& target = ensemble.targets[i];
        const MlpParams& online = ensemble.members[i];
        for (std::size_t l = 0; l < target.weights.size(); ++l) {
            for (std::size_t k = 0; k < target.weights[l].size(); ++k)
                target.weights[l][k] = (1.0 - tau) * target.weights[l][k] + tau * online.weights[l][k];
            for (std::size_t k = 0; k < target.biases[l].size(); ++k)
                target.biases[l][k] = (1.0 - tau) * target.biases[l][k] + tau * online.biases[l][k];
        }
    }
}

double robust_q(const CriticEnsemble& ensemble, const Discriminator& d, std::span<const double> obs,
                std::span<const double> act) {
    DenseArray o({1, ensemble.obs_dim}, std::vector<double>(obs.begin(), obs.end()));
    DenseArray a({1, ensemble.action_dim}, std::vector<double>(act.begin(), act.end()));
    RobustQBatch r = robust_q_with_action_grad(ensemble, &d, o, a);
    return r.values[0];
}

RobustQBatch robust_q_with_action_grad(const CriticEnsemble& ensemble, const Discriminator* d,
                                       const DenseArray& obs, const DenseArray& act,
                                       std::optional<double> pinned_weight) {
    if (d == nullptr && !pinned_weight)
        throw std::invalid_argument("robust_q: need a discriminator or a pinned weight");
    const std::size_t n = ensemble.size();
    const std::size_t batch = obs.rows();
    const std::size_t ad = ensemble.action_dim;

    DenseArray input = paired_input(ensemble.obs_dim, ad, obs, act);

    std::vector<MlpTrace> traces;
    traces.reserve(n);
    std::vector<std::vector<double>> q(n);
    for (std::size_t i = 0; i < n; ++i) {
        traces.push_back(mlp_forward_trace(ensemble.members[i], input));
        q[i] = traces.back().output().data;
    }

    std::vector<double> mean(batch, 0.0), minimum(batch, 0.0);
    std::vector<std::size_t> argmin(batch, 0);
    for (std::size_t b = 0; b < batch; ++b) {
        double m = q[0][b];
        std::size_t arg = 0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += q[i][b];
            if (q[i][b] < m) {
                m = q[i][b];
                arg = i;
            }
        }
        mean[b] = total / static_cast<double>(n);
        minimum[b] = m;
        argmin[b] = arg;
    }

    std::vector<double> weight(batch, pinned_weight.value_or(1.0));
    std::vector<double> logit(batch, 0.0);
    MlpTrace d_trace;
    if (!pinned_weight) {
        d_trace = mlp_forward_trace(d->net, input);
        for (std::size_t b = 0; b < batch; ++b) {
            logit[b] = d_trace.output()[b];
            weight[b] = sigmoid(logit[b]);
        }
    }

    RobustQBatch result;
    result.values.resize(batch);
    result.action_grad = DenseArray::zeros({batch, ad});
    for (std::size_t b = 0; b < batch; ++b) {
        result.values[b] = weight[b] * mean[b] + (1.0 - weight[b]) * minimum[b];
        result.mean_value += result.values[b] / static_cast<double>(batch);
    }

    // d(value_b)/d(x_b) through each ensemble member
    for (std::size_t i = 0; i < n; ++i) {
        DenseArray upstream = DenseArray::zeros({batch, 1});
        for (std::size_t b = 0; b < batch; ++b) {
            double coef = weight[b] / static_cast<double>(n);
            if (argmin[b] == i) coef += 1.0 - weight[b];
            upstream[b] = coef;
        }
        DenseArray in_grad = mlp_backward(ensemble.members[i], traces[i], upstream).input_grad;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t k = 0; k < ad; ++k)
                result.action_grad(b, k) += in_grad(b, ensemble.obs_dim + k);
    }
    // and through the discriminator's dependence on the action
    if (!pinned_weight) {
        DenseArray upstream = DenseArray::zeros({batch, 1});
        for (std::size_t b = 0; b < batch; ++b) {
            const double dsig = weight[b] * (1.0 - weight[b]);
            upstream[b] = dsig * (mean[b] - minimum[b]);
        }
        DenseArray in_grad = mlp_backward(d->net, d_trace, upstream).input_grad;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t k = 0; k < ad; ++k)
                result.action_grad(b, k) += in_grad(b, ensemble.obs_dim + k);
    }
    return result;
}

}  // namespace cfql
