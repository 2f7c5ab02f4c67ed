#include "cfql/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfql {

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
    std::vector<std::size_t> sizes;
    sizes.push_back(in);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

}  // namespace

VelocityField VelocityField::create(std::size_t obs_dim, std::size_t action_dim,
                                    const std::vector<std::size_t>& hidden, Rng& rng) {
    VelocityField f;
    f.obs_dim = obs_dim;
    f.action_dim = action_dim;
    f.net = make_mlp(layer_sizes(1 + obs_dim + action_dim, hidden, action_dim), Activation::kGelu,
                     OutputSquash::kIdentity, rng);
    return f;
}

OneStepPolicy OneStepPolicy::create(std::size_t obs_dim, std::size_t action_dim,
                                    const std::vector<std::size_t>& hidden, Rng& rng) {
    OneStepPolicy p;
    p.obs_dim = obs_dim;
    p.action_dim = action_dim;
    p.net = make_mlp(layer_sizes(obs_dim + action_dim, hidden, action_dim), Activation::kRelu,
                     OutputSquash::kIdentity, rng);
    return p;
}

void FlowConfig::validate() const {
    if (euler_steps < 1) throw std::invalid_argument("FlowConfig: euler_steps must be >= 1");
    if (distill_coef < 0.0) throw std::invalid_argument("FlowConfig: distill_coef must be >= 0");
}

DenseArray policy_actions(const OneStepPolicy& policy, const DenseArray& obs, const DenseArray& noise) {
    const std::size_t batch = obs.rows();
    if (noise.rows() != batch || noise.cols() != policy.action_dim)
        throw std::invalid_argument("policy_actions: noise shape mismatch");
    DenseArray input = DenseArray::zeros({batch, policy.obs_dim + policy.action_dim});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < policy.obs_dim; ++i) input(b, i) = obs(b, i);
        for (std::size_t i = 0; i < policy.action_dim; ++i) input(b, policy.obs_dim + i) = noise(b, i);
    }
    DenseArray out = mlp_forward(policy.net, input);
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

DenseArray euler_sample(const VelocityField& field, const DenseArray& obs, const DenseArray& noise,
                        std::size_t steps, bool clip) {
    if (steps < 1) throw std::invalid_argument("euler_sample: steps must be >= 1");
    const std::size_t batch = obs.rows();
    const std::size_t d = field.action_dim;
    if (noise.rows() != batch || noise.cols() != d)
        throw std::invalid_argument("euler_sample: noise shape mismatch");

    DenseArray z = noise;
    DenseArray input = DenseArray::zeros({batch, 1 + field.obs_dim + d});
    const double inv_steps = 1.0 / static_cast<double>(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * inv_steps;
        for (std::size_t b = 0; b < batch; ++b) {
            input(b, 0) = t;
            for (std::size_t i = 0; i < field.obs_dim; ++i) input(b, 1 + i) = obs(b, i);
            for (std::size_t i = 0; i < d; ++i) input(b, 1 + field.obs_dim + i) = z(b, i);
        }
        DenseArray v = mlp_forward(field.net, input);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += v[i] * inv_steps;
    }
    if (clip)
        for (double& v : z.data) v = std::clamp(v, -1.0, 1.0);
    return z;
}

FlowLoss flow_matching_loss(const VelocityField& field, const DenseArray& obs,
                            const DenseArray& actions, Rng& rng) {
    const std::size_t batch = obs.rows();
    const std::size_t d = field.action_dim;
    if (actions.rows() != batch || actions.cols() != d)
        throw std::invalid_argument("flow_matching_loss: action shape mismatch");

    DenseArray input = DenseArray::zeros({batch, 1 + field.obs_dim + d});
    DenseArray target = DenseArray::zeros({batch, d});  // x1 - x0
    for (std::size_t b = 0; b < batch; ++b) {
        const double t = rng.uniform01();
        input(b, 0) = t;
        for (std::size_t i = 0; i < field.obs_dim; ++i) input(b, 1 + i) = obs(b, i);
        for (std::size_t i = 0; i < d; ++i) {
            const double x0 = rng.normal();
            const double x1 = actions(b, i);
            input(b, 1 + field.obs_dim + i) = (1.0 - t) * x0 + t * x1;
            target(b, i) = x1 - x0;
        }
    }

    MlpTrace trace = mlp_forward_trace(field.net, input);
    const DenseArray& v = trace.output();
    FlowLoss result;
    DenseArray upstream = DenseArray::zeros({batch, d});
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = v[i] - target[i];
        result.loss += r * r * inv_batch;
        upstream[i] = 2.0 * r * inv_batch;
    }
    result.grads = mlp_backward(field.net, trace, upstream).grads;
    return result;
}

FlowLoss distill_loss(const OneStepPolicy& policy, const DenseArray& obs, const DenseArray& noise,
                      const DenseArray& bc_actions) {
    const std::size_t batch = obs.rows();
    const std::size_t d = policy.action_dim;
    if (bc_actions.rows() != batch || bc_actions.cols() != d)
        throw std::invalid_argument("distill_loss: target shape mismatch");

    DenseArray input = DenseArray::zeros({batch, policy.obs_dim + d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < policy.obs_dim; ++i) input(b, i) = obs(b, i);
        for (std::size_t i = 0; i < d; ++i) input(b, policy.obs_dim + i) = noise(b, i);
    }
    MlpTrace trace = mlp_forward_trace(policy.net, input);

    FlowLoss result;
    DenseArray upstream = DenseArray::zeros({batch, d});
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        const double a = std::tanh(trace.output()[i]);
        const double r = a - bc_actions[i];
        result.loss += r * r * inv_batch;
        upstream[i] = 2.0 * r * inv_batch * (1.0 - a * a);  // through the tanh squash
    }
    result.grads = mlp_backward(policy.net, trace, upstream).grads;
    return result;
}

}  // namespace cfql
