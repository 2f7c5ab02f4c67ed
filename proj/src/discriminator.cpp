#include "cfql/discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfql {

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// -log sigmoid(x), computed without overflow
double softplus_neg(double x) { return x > 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

DenseArray paired_input(std::size_t obs_dim, std::size_t action_dim, const DenseArray& obs,
                        const DenseArray& act) {
    const std::size_t batch = obs.rows();
    if (act.rows() != batch || act.cols() != action_dim || obs.cols() != obs_dim)
        throw std::invalid_argument("discriminator: (s, x) batch shape mismatch");
    DenseArray input = DenseArray::zeros({batch, obs_dim + action_dim});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < obs_dim; ++i) input(b, i) = obs(b, i);
        for (std::size_t i = 0; i < action_dim; ++i) input(b, obs_dim + i) = act(b, i);
    }
    return input;
}

}  // namespace

Discriminator Discriminator::create(std::size_t obs_dim, std::size_t action_dim,
                                    const std::vector<std::size_t>& hidden, Rng& rng) {
    Discriminator d;
    d.obs_dim = obs_dim;
    d.action_dim = action_dim;
    std::vector<std::size_t> sizes;
    sizes.push_back(obs_dim + action_dim);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    d.net = make_mlp(sizes, Activation::kRelu, OutputSquash::kIdentity, rng);
    return d;
}

double Discriminator::coefficient_at(std::uint64_t step) const {
    if (coef_decay <= 0.0) return loss_coef;
    return loss_coef * std::exp(-coef_decay * static_cast<double>(step));
}

DenseArray discriminator_logits(const Discriminator& d, const DenseArray& obs, const DenseArray& act) {
    return mlp_forward(d.net, paired_input(d.obs_dim, d.action_dim, obs, act));
}

double factual_weight(const Discriminator& d, std::span<const double> obs, std::span<const double> act) {
    DenseArray o({1, d.obs_dim}, std::vector<double>(obs.begin(), obs.end()));
    DenseArray a({1, d.action_dim}, std::vector<double>(act.begin(), act.end()));
    // saturated logits round to exactly 0/1 in doubles; keep the output
    // strictly inside the open interval
    const double p = sigmoid(discriminator_logits(d, o, a)[0]);
    return std::min(1.0 - 1e-12, std::max(1e-12, p));
}

DiscriminatorLoss discriminator_loss(const Discriminator& d, const DenseArray& obs,
                                     const DenseArray& bc_actions, const DenseArray& policy_actions) {
    const std::size_t batch = obs.rows();
    DiscriminatorLoss result;
    result.grads = MlpGrads::zeros_like(d.net);
    const double inv_batch = 1.0 / static_cast<double>(batch);

    // class 1: BC flow samples
    {
        MlpTrace trace =
            mlp_forward_trace(d.net, paired_input(d.obs_dim, d.action_dim, obs, bc_actions));
        DenseArray upstream = DenseArray::zeros({batch, 1});
        for (std::size_t b = 0; b < batch; ++b) {
            const double logit = trace.output()[b];
            const double p = sigmoid(logit);
            result.loss += softplus_neg(logit) * inv_batch;  // -log D
            result.mean_output_bc += p * inv_batch;
            result.accuracy += (p >= 0.5 ? 0.5 : 0.0) * inv_batch;
            upstream[b] = (p - 1.0) * inv_batch;
        }
        result.grads.accumulate(mlp_backward(d.net, trace, upstream).grads);
    }
    // class 0: one-step policy samples
    {
        MlpTrace trace =
            mlp_forward_trace(d.net, paired_input(d.obs_dim, d.action_dim, obs, policy_actions));
        DenseArray upstream = DenseArray::zeros({batch, 1});
        for (std::size_t b = 0; b < batch; ++b) {
            const double logit = trace.output()[b];
            const double p = sigmoid(logit);
            result.loss += softplus_neg(-logit) * inv_batch;  // -log (1 - D)
            result.mean_output_policy += p * inv_batch;
            result.accuracy += (p < 0.5 ? 0.5 : 0.0) * inv_batch;
            upstream[b] = p * inv_batch;
        }
        result.grads.accumulate(mlp_backward(d.net, trace, upstream).grads);
    }
    return result;
}

}  // namespace cfql
