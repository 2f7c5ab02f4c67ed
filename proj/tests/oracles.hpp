// Test-only oracles, kept independent of the implementation paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "cfql/cmdp.hpp"
#include "cfql/mlp.hpp"

namespace cfql::testing {

/// Scalar-loop forward re-evaluation of an MLP on a single input row.
/// Deliberately written as a straight per-neuron loop, separate from the
/// batched implementation.
inline std::vector<double> scalar_loop_forward(const MlpParams& p, const std::vector<double>& input) {
    auto act = [&](double x) -> double {
        switch (p.activation) {
            case Activation::kRelu: return x > 0.0 ? x : 0.0;
            case Activation::kTanh: return std::tanh(x);
            case Activation::kGelu: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        }
        return x;
    };
    std::vector<double> h = input;
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        const std::size_t nin = p.layer_sizes[l], nout = p.layer_sizes[l + 1];
        std::vector<double> next(nout, 0.0);
        for (std::size_t o = 0; o < nout; ++o) {
            double acc = p.biases[l][o];
            for (std::size_t i = 0; i < nin; ++i) acc += p.weights[l].data[o * nin + i] * h[i];
            if (l + 1 < p.layer_count())
                acc = act(acc);
            else if (p.final_activation == OutputSquash::kSigmoid)
                acc = 1.0 / (1.0 + std::exp(-acc));
            next[o] = acc;
        }
        h = std::move(next);
    }
    return h;
}

/// Central finite differences of `loss(params)` with respect to every
/// parameter. `h` is the probe step.
inline MlpGrads finite_difference_grads(MlpParams params, const std::function<double(const MlpParams&)>& loss,
                                        double h = 1e-5) {
    MlpGrads fd = MlpGrads::zeros_like(params);
    auto probe = [&](DenseArray& target, DenseArray& out) {
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double saved = target[i];
            target[i] = saved + h;
            const double up = loss(params);
            target[i] = saved - h;
            const double down = loss(params);
            target[i] = saved;
            out[i] = (up - down) / (2.0 * h);
        }
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        probe(params.weights[l], fd.weights[l]);
        probe(params.biases[l], fd.biases[l]);
    }
    return fd;
}

/// Central finite differences with respect to the input entries.
inline DenseArray finite_difference_input_grad(const MlpParams& params, DenseArray input,
                                               const std::function<double(const DenseArray&)>& loss,
                                               double h = 1e-5) {
    DenseArray fd = DenseArray::zeros(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double saved = input[i];
        input[i] = saved + h;
        const double up = loss(input);
        input[i] = saved - h;
        const double down = loss(input);
        input[i] = saved;
        fd[i] = (up - down) / (2.0 * h);
    }
    return fd;
}

inline double relative_error(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline double max_relative_error(const MlpGrads& a, const MlpGrads& b) {
    double m = 0.0;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
        for (std::size_t i = 0; i < a.weights[l].size(); ++i)
            m = std::max(m, relative_error(a.weights[l][i], b.weights[l][i]));
        for (std::size_t i = 0; i < a.biases[l].size(); ++i)
            m = std::max(m, relative_error(a.biases[l][i], b.biases[l][i]));
    }
    return m;
}

/// Empirical 1-Wasserstein distance between two scalar samples via the
/// quantile coupling (sorted pairing).
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t n = std::min(a.size(), b.size());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // align quantiles when sizes differ
        const std::size_t ia = i * a.size() / n;
        const std::size_t ib = i * b.size() / n;
        total += std::fabs(a[ia] - b[ib]);
    }
    return total / static_cast<double>(n);
}

/// Standard (confounding-unaware) policy-evaluation sweep on a nominal
/// model: Q(s,x) = R~ + gamma * sum T~ V. Used as the oracle for the
/// deterministic mu = pi case of the bound operator.
inline std::vector<double> standard_policy_eval(const NominalModel& nm, const TabularPolicy& pi,
                                                double gamma, std::size_t iters) {
    std::vector<double> v(nm.n_states, 0.0);
    for (std::size_t k = 0; k < iters; ++k) {
        std::vector<double> next(nm.n_states, 0.0);
        for (std::size_t s = 0; s < nm.n_states; ++s) {
            for (std::size_t x = 0; x < nm.n_actions; ++x) {
                if (pi(s, x) == 0.0 || !nm.is_defined(s, x)) continue;
                double boot = 0.0;
                for (std::size_t s2 = 0; s2 < nm.n_states; ++s2) boot += nm.trans(s, x, s2) * v[s2];
                next[s] += pi(s, x) * (nm.rew(s, x) + gamma * boot);
            }
        }
        v = std::move(next);
    }
    return v;
}

/// Mean and standard error of a sample.
struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) r.mean += x;
    r.mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - r.mean) * (x - r.mean);
    var /= std::max(1.0, n - 1.0);
    r.se = std::sqrt(var / n);
    return r;
}

}  // namespace cfql::testing
