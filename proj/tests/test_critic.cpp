#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cfql/critic.hpp"
#include "oracles.hpp"

using namespace cfql;
namespace oracle = cfql::testing;

namespace {

CriticEnsemble tiny_ensemble(std::size_t n, std::uint64_t seed, double tau = 0.005) {
    Rng rng(seed);
    return CriticEnsemble::create(1, 1, {16, 16}, n, tau, rng);
}

/// Overwrite a critic member so Q(s, x) = c for all inputs.
void set_constant(MlpParams& net, double c) {
    for (auto& w : net.weights)
        for (auto& v : w.data) v = 0.0;
    for (auto& b : net.biases)
        for (auto& v : b.data) v = 0.0;
    net.biases.back()[0] = c;
}

Discriminator constant_discriminator(double logit, std::uint64_t seed = 3) {
    Rng rng(seed);
    Discriminator d = Discriminator::create(1, 1, {8}, rng);
    for (auto& w : d.net.weights)
        for (auto& v : w.data) v = 0.0;
    for (auto& b : d.net.biases)
        for (auto& v : b.data) v = 0.0;
    d.net.biases.back()[0] = logit;
    return d;
}

}  // namespace

TEST_CASE("ensemble: requires at least two members") {
    Rng rng(1);
    CHECK_THROWS_AS(CriticEnsemble::create(1, 1, {8}, 1, 0.005, rng), std::invalid_argument);
}

TEST_CASE("critic target: gamma = 0 regresses straight onto rewards") {
    CriticEnsemble e = tiny_ensemble(2, 5);
    Rng rng(7);
    OneStepPolicy pi = OneStepPolicy::create(1, 1, {8}, rng);
    CriticBatch batch;
    batch.obs = DenseArray({2, 1}, {0.0, 0.0});
    batch.act = DenseArray({2, 1}, {0.5, -0.5});
    batch.reward = {1.0, 0.25};
    batch.next_obs = DenseArray({2, 1}, {0.0, 0.0});
    batch.done = {0.0, 0.0};

    // with gamma = 0 the target is exactly y; constant members make the
    // loss analytic
    set_constant(e.members[0], 0.0);
    set_constant(e.members[1], 0.0);
    Rng lrng(9);
    CriticLossResult r = critic_loss(e, batch, pi, 0.0, lrng);
    CHECK(r.member_losses[0] == doctest::Approx(0.5 * (1.0 + 0.0625)));
    CHECK(r.member_losses[1] == doctest::Approx(0.5 * (1.0 + 0.0625)));
    CHECK(r.mean_target == doctest::Approx(0.625));
}

TEST_CASE("critic target: done = 1 masks the bootstrap") {
    CriticEnsemble e = tiny_ensemble(2, 11);
    set_constant(e.targets[0], 100.0);  // any bootstrap leak would show up
    set_constant(e.targets[1], 100.0);
    set_constant(e.members[0], 0.0);
    set_constant(e.members[1], 0.0);
    Rng rng(13);
    OneStepPolicy pi = OneStepPolicy::create(1, 1, {8}, rng);
    CriticBatch batch;
    batch.obs = DenseArray({1, 1}, {0.0});
    batch.act = DenseArray({1, 1}, {0.3});
    batch.reward = {0.7};
    batch.next_obs = DenseArray({1, 1}, {0.0});
    batch.done = {1.0};
    Rng lrng(15);
    CriticLossResult r = critic_loss(e, batch, pi, 0.9, lrng);
    CHECK(r.mean_target == doctest::Approx(0.7));
    CHECK(r.member_losses[0] == doctest::Approx(0.49));
}

TEST_CASE("critic gradients match finite differences") {
    CriticEnsemble e = tiny_ensemble(2, 17);
    Rng rng(19);
    OneStepPolicy pi = OneStepPolicy::create(1, 1, {8}, rng);
    CriticBatch batch;
    batch.obs = DenseArray({3, 1}, {0.2, -0.4, 0.9});
    batch.act = DenseArray({3, 1}, {0.5, -0.5, 0.1});
    batch.reward = {1.0, 0.25, -0.5};
    batch.next_obs = DenseArray({3, 1}, {0.1, 0.0, -0.3});
    batch.done = {0.0, 1.0, 0.0};

    // freeze the member-0 targets by replaying the same rng
    Rng lrng(21);
    CriticLossResult r = critic_loss(e, batch, pi, 0.9, lrng);

    MlpGrads fd = oracle::finite_difference_grads(e.members[0], [&](const MlpParams& q) {
        CriticEnsemble probe = e;
        probe.members[0] = q;
        Rng replay(21);
        return critic_loss(probe, batch, pi, 0.9, replay).member_losses[0];
    });
    CHECK(oracle::max_relative_error(r.member_grads[0], fd) <= 1e-4);
}

TEST_CASE("polyak: tau = 1 copies the online nets bitwise") {
    CriticEnsemble e = tiny_ensemble(2, 23);
    set_constant(e.targets[0], 5.0);
    polyak_update(e, 1.0);
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(parameter_checksum(e.targets[i]) == parameter_checksum(e.members[i]));
}

TEST_CASE("polyak: tau = 0.5 applied twice from zero reaches 0.75 of a frozen online value") {
    CriticEnsemble e = tiny_ensemble(2, 29);
    set_constant(e.members[0], 1.0);
    set_constant(e.members[1], 1.0);
    set_constant(e.targets[0], 0.0);
    set_constant(e.targets[1], 0.0);
    polyak_update(e, 0.5);
    polyak_update(e, 0.5);
    CHECK(e.targets[0].biases.back()[0] == doctest::Approx(0.75));
}

TEST_CASE("polyak: geometric convergence at rate 1 - tau") {
    CriticEnsemble e = tiny_ensemble(2, 31);
    set_constant(e.members[0], 2.0);
    set_constant(e.targets[0], 0.0);
    const double tau = 0.1;
    double prev_gap = 2.0;
    for (int k = 0; k < 5; ++k) {
        polyak_update(e, tau);
        const double gap = 2.0 - e.targets[0].biases.back()[0];
        CHECK(gap == doctest::Approx((1.0 - tau) * prev_gap).epsilon(1e-12));
        prev_gap = gap;
    }
}

TEST_CASE("robust_q: factual and counterfactual limits") {
    CriticEnsemble e = tiny_ensemble(2, 37);
    set_constant(e.members[0], 3.0);
    set_constant(e.members[1], 1.0);
    const double s = 0.0, x = 0.2;

    Discriminator d_one = constant_discriminator(40.0);   // D -> 1
    Discriminator d_zero = constant_discriminator(-40.0); // D -> 0
    CHECK(robust_q(e, d_one, {&s, 1}, {&x, 1}) == doctest::Approx(2.0));   // ensemble mean
    CHECK(robust_q(e, d_zero, {&s, 1}, {&x, 1}) == doctest::Approx(1.0));  // ensemble min
}

TEST_CASE("robust_q: hand arithmetic at D = 0.25") {
    CriticEnsemble e = tiny_ensemble(2, 41);
    set_constant(e.members[0], 3.0);
    set_constant(e.members[1], 1.0);
    const double logit = std::log(0.25 / 0.75);
    Discriminator d = constant_discriminator(logit);
    const double s = 0.0, x = -0.6;
    CHECK(robust_q(e, d, {&s, 1}, {&x, 1}) == doctest::Approx(0.25 * 2.0 + 0.75 * 1.0));
}

TEST_CASE("robust_q: pessimism ordering over random inputs") {
    Rng rng(43);
    CriticEnsemble e = tiny_ensemble(3, 47);
    Discriminator d = Discriminator::create(1, 1, {16}, rng);
    for (int k = 0; k < 2000; ++k) {
        DenseArray obs({1, 1}, {rng.normal()});
        DenseArray act({1, 1}, {rng.uniform(-1.0, 1.0)});
        RobustQBatch r = robust_q_with_action_grad(e, &d, obs, act);
        std::vector<double> q(3);
        for (std::size_t i = 0; i < 3; ++i) q[i] = critic_values(e.members[i], obs, act)[0];
        const double lo = *std::min_element(q.begin(), q.end());
        const double hi = (q[0] + q[1] + q[2]) / 3.0;
        CHECK(r.values[0] >= lo - 1e-12);
        CHECK(r.values[0] <= hi + 1e-12);
    }
}

TEST_CASE("robust_q: monotone in the discriminator output") {
    CriticEnsemble e = tiny_ensemble(2, 53);
    set_constant(e.members[0], 2.5);
    set_constant(e.members[1], -1.0);
    const double s = 0.0, x = 0.1;
    double prev = -1e9;
    for (double logit : {-4.0, -1.0, 0.0, 1.0, 4.0}) {
        Discriminator d = constant_discriminator(logit);
        const double v = robust_q(e, d, {&s, 1}, {&x, 1});
        CHECK(v >= prev);
        prev = v;
    }
}

TEST_CASE("robust_q: action gradient matches finite differences") {
    Rng rng(59);
    CriticEnsemble e = tiny_ensemble(2, 61);
    Discriminator d = Discriminator::create(1, 1, {12}, rng);
    DenseArray obs({2, 1}, {0.3, -0.7});
    DenseArray act({2, 1}, {0.2, -0.1});
    RobustQBatch r = robust_q_with_action_grad(e, &d, obs, act);

    const double h = 1e-6;
    for (std::size_t b = 0; b < 2; ++b) {
        DenseArray up = act, down = act;
        up(b, 0) += h;
        down(b, 0) -= h;
        RobustQBatch rup = robust_q_with_action_grad(e, &d, obs, up);
        RobustQBatch rdown = robust_q_with_action_grad(e, &d, obs, down);
        const double fd = (rup.values[b] - rdown.values[b]) / (2.0 * h);
        CHECK(oracle::relative_error(r.action_grad(b, 0), fd) <= 1e-4);
    }

    // pinned weight 1 reduces to the ensemble-mean gradient, no D path
    RobustQBatch pinned = robust_q_with_action_grad(e, nullptr, obs, act, 1.0);
    for (std::size_t b = 0; b < 2; ++b) {
        double mean = 0.0;
        for (std::size_t i = 0; i < 2; ++i) mean += critic_values(e.members[i], obs, act)[b] / 2.0;
        CHECK(pinned.values[b] == doctest::Approx(mean));
    }
}
