#include "cfql/mlp.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace cfql {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double apply_activation(Activation act, double x) {
    switch (act) {
        case Activation::kRelu: return x > 0.0 ? x : 0.0;
        case Activation::kTanh: return std::tanh(x);
        case Activation::kGelu: return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return x;
}

double activation_derivative(Activation act, double x) {
    switch (act) {
        case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::kTanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::kGelu: {
            double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            return cdf + x * pdf;
        }
    }
    return 1.0;
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void check_input(const MlpParams& params, const DenseArray& input, const char* where) {
    if (input.rank() != 2)
        throw std::invalid_argument(std::string(where) + ": input must be rank-2 [batch, features]");
    if (input.cols() != params.input_dim())
        throw std::invalid_argument(std::string(where) + ": layer 0 expects input width " +
                                    std::to_string(params.input_dim()) + ", got " +
                                    std::to_string(input.cols()));
}

// out[b, o] = sum_i in[b, i] * w[o, i] + bias[o]
void affine_forward(const DenseArray& in, const DenseArray& w, const DenseArray& bias, DenseArray& out) {
    const std::size_t batch = in.rows(), nin = in.cols(), nout = w.rows();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = in.data.data() + b * nin;
        double* y = out.data.data() + b * nout;
        for (std::size_t o = 0; o < nout; ++o) {
            const double* wrow = w.data.data() + o * nin;
            double acc = bias[o];
            for (std::size_t i = 0; i < nin; ++i) acc += x[i] * wrow[i];
            y[o] = acc;
        }
    }
}

}  // namespace

const char* to_string(Activation a) {
    switch (a) {
        case Activation::kRelu: return "relu";
        case Activation::kTanh: return "tanh";
        case Activation::kGelu: return "gelu";
    }
    return "?";
}

const char* to_string(OutputSquash a) {
    return a == OutputSquash::kIdentity ? "identity" : "sigmoid";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::kRelu;
    if (name == "tanh") return Activation::kTanh;
    if (name == "gelu") return Activation::kGelu;
    throw std::invalid_argument("unknown activation: " + name);
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
        n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return n;
}

MlpParams make_mlp(const std::vector<std::size_t>& layer_sizes, Activation activation,
                   OutputSquash final_activation, Rng& rng, double final_weight_scale) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("make_mlp: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw std::invalid_argument("make_mlp: zero-width layer");

    MlpParams params;
    params.layer_sizes = layer_sizes;
    params.activation = activation;
    params.final_activation = final_activation;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t nin = layer_sizes[l], nout = layer_sizes[l + 1];
        DenseArray w = DenseArray::zeros({nout, nin});
        DenseArray b = DenseArray::zeros({nout});
        const bool last = (l + 2 == layer_sizes.size());
        double limit = 1.0 / std::sqrt(static_cast<double>(nin));
        if (last) limit *= final_weight_scale;
        for (double& v : w.data) v = rng.uniform(-limit, limit);
        for (double& v : b.data) v = rng.uniform(-limit, limit);
        params.weights.push_back(std::move(w));
        params.biases.push_back(std::move(b));
    }
    return params;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& params) {
    MlpGrads g;
    for (const auto& w : params.weights) g.weights.push_back(DenseArray::zeros(w.shape));
    for (const auto& b : params.biases) g.biases.push_back(DenseArray::zeros(b.shape));
    return g;
}

void MlpGrads::scale(double factor) {
    for (auto& w : weights)
        for (double& v : w.data) v *= factor;
    for (auto& b : biases)
        for (double& v : b.data) v *= factor;
}

void MlpGrads::accumulate(const MlpGrads& other, double factor) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += factor * other.weights[l][i];
        for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += factor * other.biases[l][i];
    }
}

double MlpGrads::max_abs() const {
    double m = 0.0;
    for (const auto& w : weights)
        for (double v : w.data) m = std::max(m, std::fabs(v));
    for (const auto& b : biases)
        for (double v : b.data) m = std::max(m, std::fabs(v));
    return m;
}

DenseArray mlp_forward(const MlpParams& params, const DenseArray& input) {
    check_input(params, input, "mlp_forward");
    const std::size_t batch = input.rows();
    DenseArray current = input;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        DenseArray next = DenseArray::zeros({batch, params.layer_sizes[l + 1]});
        affine_forward(current, params.weights[l], params.biases[l], next);
        const bool last = (l + 1 == params.layer_count());
        if (!last) {
            for (double& v : next.data) v = apply_activation(params.activation, v);
        } else if (params.final_activation == OutputSquash::kSigmoid) {
            for (double& v : next.data) v = sigmoid(v);
        }
        current = std::move(next);
    }
    return current;
}

MlpTrace mlp_forward_trace(const MlpParams& params, const DenseArray& input) {
    check_input(params, input, "mlp_forward_trace");
    const std::size_t batch = input.rows();
    MlpTrace trace;
    trace.input = input;
    const DenseArray* current = &trace.input;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        DenseArray pre = DenseArray::zeros({batch, params.layer_sizes[l + 1]});
        affine_forward(*current, params.weights[l], params.biases[l], pre);
        DenseArray post = pre;
        const bool last = (l + 1 == params.layer_count());
        if (!last) {
            for (double& v : post.data) v = apply_activation(params.activation, v);
        } else if (params.final_activation == OutputSquash::kSigmoid) {
            for (double& v : post.data) v = sigmoid(v);
        }
        trace.pre.push_back(std::move(pre));
        trace.post.push_back(std::move(post));
        current = &trace.post.back();
    }
    return trace;
}

MlpBackward mlp_backward(const MlpParams& params, const MlpTrace& trace, const DenseArray& upstream) {
    if (!upstream.same_shape(trace.output()))
        throw std::invalid_argument("mlp_backward: upstream shape does not match forward output");
    if (!all_finite(upstream))
        throw std::invalid_argument("mlp_backward: non-finite upstream gradient");

    const std::size_t batch = upstream.rows();
    MlpBackward result;
    result.grads = MlpGrads::zeros_like(params);

    DenseArray delta = upstream;  // dLoss/d(post-activation of current layer)
    for (std::size_t li = params.layer_count(); li-- > 0;) {
        const bool last = (li + 1 == params.layer_count());
        const DenseArray& pre = trace.pre[li];
        // 1) through the nonlinearity: delta becomes dLoss/d(pre-activation)
        if (!last) {
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta[i] *= activation_derivative(params.activation, pre[i]);
        } else if (params.final_activation == OutputSquash::kSigmoid) {
            const DenseArray& post = trace.post[li];
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= post[i] * (1.0 - post[i]);
        }
        // 2) through the affine map
        const DenseArray& x = (li == 0) ? trace.input : trace.post[li - 1];
        const DenseArray& w = params.weights[li];
        const std::size_t nin = x.cols(), nout = w.rows();
        DenseArray& gw = result.grads.weights[li];
        DenseArray& gb = result.grads.biases[li];
        DenseArray prev_delta = DenseArray::zeros({batch, nin});
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xb = x.data.data() + b * nin;
            const double* db = delta.data.data() + b * nout;
            double* pd = prev_delta.data.data() + b * nin;
            for (std::size_t o = 0; o < nout; ++o) {
                const double d = db[o];
                if (d == 0.0) continue;
                gb[o] += d;
                double* gwrow = gw.data.data() + o * nin;
                const double* wrow = w.data.data() + o * nin;
                for (std::size_t i = 0; i < nin; ++i) {
                    gwrow[i] += d * xb[i];
                    pd[i] += d * wrow[i];
                }
            }
        }
        delta = std::move(prev_delta);
    }
    result.input_grad = std::move(delta);
    return result;
}

AdamState AdamState::init(const MlpParams& params, const AdamConfig& config) {
    AdamState state;
    state.config = config;
    state.first_moment = MlpGrads::zeros_like(params);
    state.second_moment = MlpGrads::zeros_like(params);
    return state;
}

void adam_step(AdamState& state, MlpParams& params, const MlpGrads& grads) {
    const AdamConfig& c = state.config;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

    auto update = [&](DenseArray& p, DenseArray& m, DenseArray& v, const DenseArray& g) {
        if (!p.same_shape(g))
            throw std::invalid_argument("adam_step: gradient shape does not match parameters");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
        }
    };
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        update(params.weights[l], state.first_moment.weights[l], state.second_moment.weights[l],
               grads.weights[l]);
        update(params.biases[l], state.first_moment.biases[l], state.second_moment.biases[l],
               grads.biases[l]);
    }
}

std::uint64_t parameter_checksum(const MlpParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto eat = [&h](const DenseArray& a) {
        for (double v : a.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            for (int k = 0; k < 8; ++k) {
                h ^= (bits >> (8 * k)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    };
    for (const auto& w : params.weights) eat(w);
    for (const auto& b : params.biases) eat(b);
    return h;
}

}  // namespace cfql
