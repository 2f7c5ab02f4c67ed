#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cfql/discriminator.hpp"
#include "oracles.hpp"

using namespace cfql;
namespace oracle = cfql::testing;

namespace {

/// Train a discriminator on two fixed conditional samplers.
template <typename SampleBc, typename SamplePi>
Discriminator train_disc(SampleBc bc, SamplePi pi, std::size_t steps, std::uint64_t seed) {
    Rng init(seed);
    Discriminator d = Discriminator::create(1, 1, {32, 32}, init);
    AdamState opt = AdamState::init(d.net, {1e-3});
    Rng rng = Rng::derive(seed, 2);
    const std::size_t batch = 64;
    for (std::size_t step = 0; step < steps; ++step) {
        DenseArray obs = DenseArray::zeros({batch, 1});
        DenseArray a_bc = DenseArray::zeros({batch, 1});
        DenseArray a_pi = DenseArray::zeros({batch, 1});
        for (std::size_t b = 0; b < batch; ++b) {
            a_bc(b, 0) = bc(rng);
            a_pi(b, 0) = pi(rng);
        }
        DiscriminatorLoss dl = discriminator_loss(d, obs, a_bc, a_pi);
        adam_step(opt, d.net, dl.grads);
    }
    return d;
}

}  // namespace

TEST_CASE("factual_weight: logit zero gives one half, logit 10 gives ~0.99995") {
    Rng rng(1);
    Discriminator d = Discriminator::create(1, 1, {8}, rng);
    for (auto& w : d.net.weights)
        for (auto& v : w.data) v = 0.0;
    for (auto& b : d.net.biases)
        for (auto& v : b.data) v = 0.0;
    const double s = 0.0, x = 0.0;
    CHECK(factual_weight(d, {&s, 1}, {&x, 1}) == doctest::Approx(0.5));
    d.net.biases.back()[0] = 10.0;
    CHECK(factual_weight(d, {&s, 1}, {&x, 1}) == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))));
    // strictly inside (0, 1) even for extreme logits
    d.net.biases.back()[0] = 500.0;
    CHECK(factual_weight(d, {&s, 1}, {&x, 1}) < 1.0);
    d.net.biases.back()[0] = -500.0;
    CHECK(factual_weight(d, {&s, 1}, {&x, 1}) > 0.0);
}

TEST_CASE("loss: constant output one half costs 2 ln 2 per element") {
    Rng rng(2);
    Discriminator d = Discriminator::create(1, 1, {8}, rng);
    for (auto& w : d.net.weights)
        for (auto& v : w.data) v = 0.0;
    for (auto& b : d.net.biases)
        for (auto& v : b.data) v = 0.0;
    DenseArray obs = DenseArray::zeros({5, 1});
    DenseArray a = DenseArray::zeros({5, 1});
    DenseArray b = DenseArray::zeros({5, 1});
    DiscriminatorLoss dl = discriminator_loss(d, obs, a, b);
    CHECK(dl.loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss: label swap with negated logits gives the identical value") {
    Rng rng(3);
    Discriminator d = Discriminator::create(1, 1, {16}, rng);
    Discriminator flipped = d;
    // negate every logit by negating the last layer
    for (auto& v : flipped.net.weights.back().data) v = -v;
    for (auto& v : flipped.net.biases.back().data) v = -v;
    DenseArray obs = DenseArray::zeros({6, 1});
    DenseArray a = DenseArray::zeros({6, 1});
    DenseArray b = DenseArray::zeros({6, 1});
    rng.fill_normal(obs.data);
    rng.fill_normal(a.data);
    rng.fill_normal(b.data);
    DiscriminatorLoss straight = discriminator_loss(d, obs, a, b);
    DiscriminatorLoss swapped = discriminator_loss(flipped, obs, b, a);
    CHECK(straight.loss == doctest::Approx(swapped.loss).epsilon(1e-12));
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(5);
    Discriminator d = Discriminator::create(1, 1, {10}, rng);
    DenseArray obs = DenseArray::zeros({4, 1});
    DenseArray a_bc = DenseArray::zeros({4, 1});
    DenseArray a_pi = DenseArray::zeros({4, 1});
    rng.fill_normal(obs.data);
    rng.fill_normal(a_bc.data);
    rng.fill_normal(a_pi.data);
    DiscriminatorLoss dl = discriminator_loss(d, obs, a_bc, a_pi);
    MlpGrads fd = oracle::finite_difference_grads(d.net, [&](const MlpParams& q) {
        Discriminator probe = d;
        probe.net = q;
        return discriminator_loss(probe, obs, a_bc, a_pi).loss;
    });
    CHECK(oracle::max_relative_error(dl.grads, fd) <= 1e-4);
}

TEST_CASE("identical class distributions calibrate to ~0.5 output") {
    auto sampler = [](Rng& r) { return 0.3 + 0.2 * r.normal(); };
    Discriminator d = train_disc(sampler, sampler, 1200, 7);
    Rng rng(11);
    double mean = 0.0;
    const int n = 2000;
    for (int k = 0; k < n; ++k) {
        const double s = 0.0, x = sampler(rng);
        mean += factual_weight(d, {&s, 1}, {&x, 1}) / n;
    }
    CHECK(mean >= 0.4);
    CHECK(mean <= 0.6);
}

TEST_CASE("disjoint classes separate with accuracy above 0.95") {
    auto bc = [](Rng& r) { return 0.9 + 0.02 * r.normal(); };
    auto pi = [](Rng& r) { return -0.9 + 0.02 * r.normal(); };
    Discriminator d = train_disc(bc, pi, 800, 13);
    Rng rng(17);
    double correct = 0.0;
    const int n = 2000;
    for (int k = 0; k < n; ++k) {
        const double s = 0.0;
        const double xb = bc(rng), xp = pi(rng);
        if (factual_weight(d, {&s, 1}, {&xb, 1}) >= 0.5) correct += 0.5;
        if (factual_weight(d, {&s, 1}, {&xp, 1}) < 0.5) correct += 0.5;
    }
    CHECK(correct / n > 0.95);
}

TEST_CASE("Bayes consistency: boundary near the analytic equal-density point") {
    // classes N(0.5, 0.2) and N(-0.1, 0.2): equal densities cross at 0.2
    auto bc = [](Rng& r) { return 0.5 + 0.2 * r.normal(); };
    auto pi = [](Rng& r) { return -0.1 + 0.2 * r.normal(); };
    Discriminator d = train_disc(bc, pi, 3000, 19);
    // locate the 0.5-crossing by scanning
    const double s = 0.0;
    const double start = -1.0;
    double boundary = -2.0;
    double prev = factual_weight(d, {&s, 1}, {&start, 1});
    for (double x = -1.0; x <= 1.0; x += 0.005) {
        const double w = factual_weight(d, {&s, 1}, {&x, 1});
        if (prev < 0.5 && w >= 0.5) {
            boundary = x;
            break;
        }
        prev = w;
    }
    CHECK(std::fabs(boundary - 0.2) <= 0.1);
}

TEST_CASE("coefficient decay schedule") {
    Rng rng(23);
    Discriminator d = Discriminator::create(1, 1, {8}, rng);
    d.loss_coef = 10.0;
    d.coef_decay = 0.0;
    CHECK(d.coefficient_at(0) == doctest::Approx(10.0));
    CHECK(d.coefficient_at(100000) == doctest::Approx(10.0));
    d.coef_decay = 1e-4;
    CHECK(d.coefficient_at(0) == doctest::Approx(10.0));
    CHECK(d.coefficient_at(10000) == doctest::Approx(10.0 * std::exp(-1.0)));
}
