#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cfql/flow.hpp"
#include "oracles.hpp"

using namespace cfql;
namespace oracle = cfql::testing;

namespace {

/// Overwrite a velocity-field net so it computes a fixed affine map of its
/// input, ignoring hidden structure: one linear layer built by hand.
VelocityField constant_field(std::size_t obs_dim, std::size_t d, double c) {
    Rng rng(0);
    VelocityField f;
    f.obs_dim = obs_dim;
    f.action_dim = d;
    f.net = make_mlp({1 + obs_dim + d, d}, Activation::kGelu, OutputSquash::kIdentity, rng);
    for (auto& v : f.net.weights[0].data) v = 0.0;
    for (auto& v : f.net.biases[0].data) v = c;
    return f;
}

/// Field v(t, s, x) = x: the exact flow is z * e^t.
VelocityField identity_field(std::size_t obs_dim, std::size_t d) {
    VelocityField f = constant_field(obs_dim, d, 0.0);
    for (auto& v : f.net.biases[0].data) v = 0.0;
    for (std::size_t o = 0; o < d; ++o) f.net.weights[0].data[o * (1 + obs_dim + d) + 1 + obs_dim + o] = 1.0;
    return f;
}

/// Train a BC flow on a fixed conditional action distribution.
VelocityField train_flow(const std::vector<double>& action_pool, std::size_t steps, double lr,
                         std::uint64_t seed) {
    Rng init(seed);
    VelocityField field = VelocityField::create(1, 1, {32, 32}, init);
    AdamState opt = AdamState::init(field.net, {lr});
    Rng rng = Rng::derive(seed, 1);
    const std::size_t batch = 64;
    DenseArray obs = DenseArray::zeros({batch, 1});
    DenseArray act = DenseArray::zeros({batch, 1});
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t b = 0; b < batch; ++b)
            act(b, 0) = action_pool[rng.uniform_index(action_pool.size())];
        FlowLoss fl = flow_matching_loss(field, obs, act, rng);
        adam_step(opt, field.net, fl.grads);
    }
    return field;
}

std::vector<double> sample_flow(const VelocityField& field, std::size_t n, std::size_t euler_steps,
                                std::uint64_t seed) {
    Rng rng(seed);
    DenseArray obs = DenseArray::zeros({n, 1});
    DenseArray z = DenseArray::zeros({n, 1});
    rng.fill_normal(z.data);
    DenseArray out = euler_sample(field, obs, z, euler_steps);
    return out.data;
}

}  // namespace

TEST_CASE("euler: constant field integrates exactly for any step count") {
    VelocityField f = constant_field(2, 1, 0.4);
    DenseArray obs({1, 2}, {0.3, -0.2});
    DenseArray z({1, 1}, {0.1});
    for (std::size_t steps : {1ul, 3ul, 10ul, 64ul}) {
        DenseArray out = euler_sample(f, obs, z, steps);
        CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("euler: linear field converges to z * e, within 1% at M = 64") {
    VelocityField f = identity_field(1, 1);
    DenseArray obs({1, 1}, {0.0});
    DenseArray z({1, 1}, {0.3});
    DenseArray out = euler_sample(f, obs, z, 64);
    const double exact = 0.3 * std::exp(1.0);
    CHECK(std::fabs(out[0] - exact) / exact <= 0.01);
    // and the Euler product form is matched exactly
    double expect = 0.3;
    for (int k = 0; k < 64; ++k) expect *= 1.0 + 1.0 / 64.0;
    CHECK(out[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("euler: single step is z + v(0, s, z)") {
    VelocityField f = identity_field(1, 1);
    DenseArray obs({1, 1}, {0.0});
    DenseArray z({1, 1}, {0.25});
    DenseArray out = euler_sample(f, obs, z, 1);
    CHECK(out[0] == doctest::Approx(0.5));
}

TEST_CASE("euler: output clips to the action box") {
    VelocityField f = constant_field(1, 1, 5.0);
    DenseArray obs({1, 1}, {0.0});
    DenseArray z({1, 1}, {0.0});
    CHECK(euler_sample(f, obs, z, 4)[0] == doctest::Approx(1.0));
    CHECK(euler_sample(f, obs, z, 4, false)[0] == doctest::Approx(5.0));
}

TEST_CASE("euler: deterministic function of (params, s, z)") {
    Rng rng(9);
    VelocityField f = VelocityField::create(2, 2, {16}, rng);
    DenseArray obs({1, 2}, {0.4, 0.1});
    DenseArray z({1, 2}, {-0.3, 0.8});
    DenseArray a = euler_sample(f, obs, z, 10);
    DenseArray b = euler_sample(f, obs, z, 10);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
}

TEST_CASE("flow loss: a field equal to the drawn x1 - x0 has zero loss") {
    // Replay the loss's draw order (t, then x0) to find the target the
    // single batch element will see, and make the field output exactly it.
    Rng probe(33);
    (void)probe.uniform01();           // t
    const double x0 = probe.normal();  // x0
    DenseArray obs({1, 1}, {0.0});
    DenseArray act({1, 1}, {0.7});
    VelocityField f = constant_field(1, 1, 0.7 - x0);
    Rng rng(33);
    FlowLoss fl = flow_matching_loss(f, obs, act, rng);
    CHECK(fl.loss == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fl.grads.max_abs() <= 1e-9);
}

TEST_CASE("flow training: degenerate single-action target concentrates the sampler") {
    VelocityField field = train_flow({0.35}, 1500, 3e-3, 11);
    std::vector<double> samples = sample_flow(field, 2000, 10, 5);
    auto stat = oracle::mean_se(samples);
    double sd = 0.0;
    for (double s : samples) sd += (s - stat.mean) * (s - stat.mean);
    sd = std::sqrt(sd / static_cast<double>(samples.size()));
    CHECK(std::fabs(stat.mean - 0.35) <= 0.05);
    CHECK(sd <= 0.1);
}

TEST_CASE("flow training: bimodal target reaches W1 <= 0.1") {
    VelocityField field = train_flow({-0.8, 0.8}, 2500, 3e-3, 13);
    std::vector<double> samples = sample_flow(field, 4000, 10, 7);
    Rng rng(99);
    std::vector<double> data(4000);
    for (double& v : data) v = rng.uniform01() < 0.5 ? -0.8 : 0.8;
    CHECK(oracle::wasserstein1(samples, data) <= 0.1);
}

TEST_CASE("flow training: Euler discrepancy roughly halves when M doubles") {
    VelocityField field = train_flow({-0.8, 0.8}, 2500, 3e-3, 13);
    Rng rng(123);
    const std::size_t n = 512;
    DenseArray obs = DenseArray::zeros({n, 1});
    DenseArray z = DenseArray::zeros({n, 1});
    rng.fill_normal(z.data);
    auto mean_gap = [&](std::size_t m) {
        DenseArray a = euler_sample(field, obs, z, m, false);
        DenseArray b = euler_sample(field, obs, z, 2 * m, false);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += std::fabs(a[i] - b[i]);
        return total / static_cast<double>(n);
    };
    const double d8 = mean_gap(8), d16 = mean_gap(16), d32 = mean_gap(32);
    INFO("d8 ", d8, " d16 ", d16, " d32 ", d32);
    CHECK(d16 / d8 == doctest::Approx(0.5).epsilon(0.3));
    CHECK(d32 / d16 == doctest::Approx(0.5).epsilon(0.3));
}

TEST_CASE("distill: zero loss when the policy already matches the flow samples") {
    Rng rng(17);
    OneStepPolicy pi = OneStepPolicy::create(1, 1, {8}, rng);
    DenseArray obs({3, 1}, {0.0, 0.0, 0.0});
    DenseArray z({3, 1}, {0.1, -0.4, 0.9});
    DenseArray bc = policy_actions(pi, obs, z);  // target equals own output
    FlowLoss fl = distill_loss(pi, obs, z, bc);
    CHECK(fl.loss == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(fl.grads.max_abs() <= 1e-12);
}

TEST_CASE("distill: bounded by action dimension for bounded targets") {
    Rng rng(19);
    OneStepPolicy pi = OneStepPolicy::create(2, 3, {8}, rng);
    // force near-zero outputs
    for (auto& w : pi.net.weights) {
        for (auto& v : w.data) v = 0.0;
    }
    for (auto& b : pi.net.biases)
        for (auto& v : b.data) v = 0.0;
    DenseArray obs({4, 2}, std::vector<double>(8, 0.3));
    DenseArray z = DenseArray::zeros({4, 3});
    rng.fill_normal(z.data);
    DenseArray bc = DenseArray::zeros({4, 3});
    for (auto& v : bc.data) v = rng.uniform01() < 0.5 ? -1.0 : 1.0;  // extreme targets
    FlowLoss fl = distill_loss(pi, obs, z, bc);
    CHECK(fl.loss <= 3.0 + 1e-12);  // d = 3
}

TEST_CASE("distill: gradients match finite differences") {
    Rng rng(21);
    OneStepPolicy pi = OneStepPolicy::create(2, 2, {6}, rng);
    DenseArray obs = DenseArray::zeros({3, 2});
    DenseArray z = DenseArray::zeros({3, 2});
    DenseArray bc = DenseArray::zeros({3, 2});
    rng.fill_normal(obs.data);
    rng.fill_normal(z.data);
    for (auto& v : bc.data) v = 0.6 * rng.normal();
    FlowLoss fl = distill_loss(pi, obs, z, bc);
    MlpGrads fd = oracle::finite_difference_grads(pi.net, [&](const MlpParams& q) {
        OneStepPolicy probe = pi;
        probe.net = q;
        DenseArray a = policy_actions(probe, obs, z);
        double loss = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            loss += (a[i] - bc[i]) * (a[i] - bc[i]) / 3.0;
        return loss;
    });
    CHECK(oracle::max_relative_error(fl.grads, fd) <= 1e-4);
}

TEST_CASE("flow config validation") {
    FlowConfig cfg;
    cfg.euler_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.euler_steps = 4;
    cfg.distill_coef = -0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
