#include "cfql/cmdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfql {

namespace {

void solve_linear_system(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
    // Gaussian elimination with partial pivoting; a is n x n row-major.
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::fabs(a[col * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double v = std::fabs(a[r * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (best < 1e-14) throw std::runtime_error("true_policy_value: singular Bellman system");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / a[col * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            const double factor = a[r * n + col] * inv;
            if (factor == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a[r * n + c] -= factor * a[col * n + c];
            b[r] -= factor * b[col];
        }
    }
    for (std::size_t row = n; row-- > 0;) {
        double acc = b[row];
        for (std::size_t c = row + 1; c < n; ++c) acc -= a[row * n + c] * b[c];
        b[row] = acc / a[row * n + row];
    }
}

}  // namespace

void TabularCmdp::validate() const {
    if (n_states == 0 || n_actions == 0 || n_noise == 0)
        throw std::invalid_argument("TabularCmdp: sizes must be positive");
    if (noise_prob.size() != n_noise || initial_dist.size() != n_states)
        throw std::invalid_argument("TabularCmdp: distribution length mismatch");
    if (behavior.size() != n_states * n_noise)
        throw std::invalid_argument("TabularCmdp: behavior table size mismatch");
    if (transition.size() != n_states * n_actions * n_noise ||
        reward.size() != n_states * n_actions * n_noise)
        throw std::invalid_argument("TabularCmdp: mechanism table size mismatch");
    if (!(discount >= 0.0 && discount < 1.0))
        throw std::invalid_argument("TabularCmdp: discount must lie in [0, 1)");
    if (!(reward_min <= reward_max)) throw std::invalid_argument("TabularCmdp: reward bounds inverted");

    auto check_dist = [](const std::vector<double>& p, const char* what) {
        double total = 0.0;
        for (double v : p) {
            if (v < 0.0) throw std::invalid_argument(std::string("TabularCmdp: negative mass in ") + what);
            total += v;
        }
        if (std::fabs(total - 1.0) > 1e-12)
            throw std::invalid_argument(std::string("TabularCmdp: ") + what + " does not sum to 1");
    };
    check_dist(noise_prob, "P(U)");
    check_dist(initial_dist, "P(s1)");

    for (int x : behavior)
        if (x < 0 || static_cast<std::size_t>(x) >= n_actions)
            throw std::invalid_argument("TabularCmdp: behavior action out of range");
    for (int s : transition)
        if (s < 0 || static_cast<std::size_t>(s) >= n_states)
            throw std::invalid_argument("TabularCmdp: transition state out of range");
    for (double y : reward)
        if (y < reward_min - 1e-12 || y > reward_max + 1e-12)
            throw std::invalid_argument("TabularCmdp: reward outside [a, b]");
}

TabularPolicy TabularPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
    TabularPolicy p;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.prob.assign(n_states * n_actions, 1.0 / static_cast<double>(n_actions));
    return p;
}

TabularPolicy TabularPolicy::deterministic(std::size_t n_states, std::size_t n_actions,
                                           const std::vector<int>& actions) {
    if (actions.size() != n_states)
        throw std::invalid_argument("TabularPolicy::deterministic: one action per state required");
    TabularPolicy p;
    p.n_states = n_states;
    p.n_actions = n_actions;
    p.prob.assign(n_states * n_actions, 0.0);
    for (std::size_t s = 0; s < n_states; ++s) {
        if (actions[s] < 0 || static_cast<std::size_t>(actions[s]) >= n_actions)
            throw std::invalid_argument("TabularPolicy::deterministic: action out of range");
        p.at(s, static_cast<std::size_t>(actions[s])) = 1.0;
    }
    return p;
}

void TabularPolicy::validate() const {
    if (prob.size() != n_states * n_actions)
        throw std::invalid_argument("TabularPolicy: table size mismatch");
    for (std::size_t s = 0; s < n_states; ++s) {
        double total = 0.0;
        for (std::size_t x = 0; x < n_actions; ++x) {
            double v = (*this)(s, x);
            if (v < 0.0) throw std::invalid_argument("TabularPolicy: negative probability");
            total += v;
        }
        if (std::fabs(total - 1.0) > 1e-10)
            throw std::invalid_argument("TabularPolicy: row does not sum to 1");
    }
}

TransitionDataset sample_trajectories(const TabularCmdp& model, std::size_t episodes,
                                      std::size_t steps_per_episode, std::uint64_t seed) {
    if (episodes == 0) throw std::invalid_argument("sample_trajectories: episodes must be >= 1");
    model.validate();

    TransitionDataset data;
    data.env_id = "tabular";
    data.seed = seed;
    data.observation_dim = 1;
    data.action_dim = 1;
    data.reward_min = model.reward_min;
    data.reward_max = model.reward_max;
    data.episodes = episodes;
    data.discrete = true;
    data.n_states = model.n_states;
    data.n_actions = model.n_actions;
    data.records.reserve(episodes * steps_per_episode);

    for (std::size_t ep = 0; ep < episodes; ++ep) {
        Rng rng = Rng::derive(seed, ep);
        std::size_t s = rng.categorical(model.initial_dist);
        for (std::size_t t = 0; t < steps_per_episode; ++t) {
            const std::size_t u = rng.categorical(model.noise_prob);
            const std::size_t x = static_cast<std::size_t>(model.behavior_action(s, u));
            const double y = model.reward_value(s, x, u);
            const std::size_t s2 = static_cast<std::size_t>(model.next_state(s, x, u));
            TransitionRecord rec;
            rec.episode = ep;
            rec.state = {static_cast<double>(s)};
            rec.action = {static_cast<double>(x)};
            rec.reward = y;
            rec.next_state = {static_cast<double>(s2)};
            rec.done = false;
            data.records.push_back(std::move(rec));
            s = s2;
        }
    }
    return data;
}

TransitionDataset sample_trajectories(const ContinuousCmdpEnv& env, std::size_t episodes,
                                      std::uint64_t seed) {
    if (episodes == 0) throw std::invalid_argument("sample_trajectories: episodes must be >= 1");

    TransitionDataset data;
    data.env_id = env.id();
    data.seed = seed;
    data.observation_dim = env.observation_dim();
    data.action_dim = env.action_dim();
    data.reward_min = env.reward_lower();
    data.reward_max = env.reward_upper();
    data.episodes = episodes;
    data.discrete = false;
    data.records.reserve(episodes * env.horizon());

    std::unique_ptr<ContinuousCmdpEnv> inst = env.clone();
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        Rng rng = Rng::derive(seed, ep);
        inst->reset(rng);
        for (std::size_t t = 0; t < inst->horizon(); ++t) {
            TransitionRecord rec;
            rec.episode = ep;
            rec.state = inst->observation();
            rec.action = inst->expert_action(rng);
            for (double& a : rec.action) a = std::clamp(a, -1.0, 1.0);
            auto result = inst->step(rec.action, rng);
            rec.reward = result.reward;
            rec.next_state = inst->observation();
            rec.done = result.done;
            data.records.push_back(std::move(rec));
            if (result.done) break;
        }
    }
    return data;
}

NominalModel estimate_nominal(const TransitionDataset& data, std::size_t n_states,
                              std::size_t n_actions) {
    if (data.records.empty()) throw std::invalid_argument("estimate_nominal: empty dataset");
    if (!data.discrete) throw std::invalid_argument("estimate_nominal: dataset is not discrete-encoded");

    NominalModel nm;
    nm.n_states = n_states;
    nm.n_actions = n_actions;
    nm.transition.assign(n_states * n_actions * n_states, 0.0);
    nm.mean_reward.assign(n_states * n_actions, 0.0);
    nm.behavior_marginal.assign(n_states * n_actions, 0.0);
    nm.visit_count.assign(n_states * n_actions, 0);
    nm.defined.assign(n_states * n_actions, 0);

    std::vector<std::uint64_t> state_count(n_states, 0);
    for (const TransitionRecord& rec : data.records) {
        const auto s = static_cast<std::size_t>(rec.state.at(0));
        const auto x = static_cast<std::size_t>(rec.action.at(0));
        const auto s2 = static_cast<std::size_t>(rec.next_state.at(0));
        if (s >= n_states || x >= n_actions || s2 >= n_states)
            throw std::invalid_argument("estimate_nominal: index outside declared sizes");
        const std::size_t sx = s * n_actions + x;
        nm.visit_count[sx] += 1;
        nm.mean_reward[sx] += rec.reward;
        nm.transition[sx * n_states + s2] += 1.0;
        state_count[s] += 1;
    }
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t x = 0; x < n_actions; ++x) {
            const std::size_t sx = s * n_actions + x;
            const std::uint64_t c = nm.visit_count[sx];
            if (c == 0) continue;  // unvisited: mu stays 0, T~/R~ undefined
            nm.defined[sx] = 1;
            nm.mean_reward[sx] /= static_cast<double>(c);
            for (std::size_t s2 = 0; s2 < n_states; ++s2)
                nm.transition[sx * n_states + s2] /= static_cast<double>(c);
            nm.behavior_marginal[sx] =
                static_cast<double>(c) / static_cast<double>(state_count[s]);
        }
    }
    return nm;
}

NominalModel analytic_nominal(const TabularCmdp& model) {
    model.validate();
    NominalModel nm;
    nm.n_states = model.n_states;
    nm.n_actions = model.n_actions;
    nm.transition.assign(model.n_states * model.n_actions * model.n_states, 0.0);
    nm.mean_reward.assign(model.n_states * model.n_actions, 0.0);
    nm.behavior_marginal.assign(model.n_states * model.n_actions, 0.0);
    nm.visit_count.assign(model.n_states * model.n_actions, 0);
    nm.defined.assign(model.n_states * model.n_actions, 0);

    for (std::size_t s = 0; s < model.n_states; ++s) {
        for (std::size_t u = 0; u < model.n_noise; ++u) {
            const auto x = static_cast<std::size_t>(model.behavior_action(s, u));
            const std::size_t sx = s * model.n_actions + x;
            const double pu = model.noise_prob[u];
            nm.behavior_marginal[sx] += pu;
            nm.mean_reward[sx] += pu * model.reward_value(s, x, u);
            nm.transition[sx * model.n_states + static_cast<std::size_t>(model.next_state(s, x, u))] +=
                pu;
        }
        for (std::size_t x = 0; x < model.n_actions; ++x) {
            const std::size_t sx = s * model.n_actions + x;
            const double mass = nm.behavior_marginal[sx];
            if (mass <= 0.0) continue;
            nm.defined[sx] = 1;
            nm.visit_count[sx] = 1;
            nm.mean_reward[sx] /= mass;
            for (std::size_t s2 = 0; s2 < model.n_states; ++s2)
                nm.transition[sx * model.n_states + s2] /= mass;
        }
    }
    return nm;
}

std::vector<double> interventional_transition(const TabularCmdp& model) {
    std::vector<double> t(model.n_states * model.n_actions * model.n_states, 0.0);
    for (std::size_t s = 0; s < model.n_states; ++s)
        for (std::size_t x = 0; x < model.n_actions; ++x)
            for (std::size_t u = 0; u < model.n_noise; ++u)
                t[(s * model.n_actions + x) * model.n_states +
                  static_cast<std::size_t>(model.next_state(s, x, u))] += model.noise_prob[u];
    return t;
}

std::vector<double> interventional_reward(const TabularCmdp& model) {
    std::vector<double> r(model.n_states * model.n_actions, 0.0);
    for (std::size_t s = 0; s < model.n_states; ++s)
        for (std::size_t x = 0; x < model.n_actions; ++x)
            for (std::size_t u = 0; u < model.n_noise; ++u)
                r[s * model.n_actions + x] += model.noise_prob[u] * model.reward_value(s, x, u);
    return r;
}

std::vector<double> true_policy_value(const TabularCmdp& model, const TabularPolicy& policy) {
    model.validate();
    policy.validate();
    if (policy.n_states != model.n_states || policy.n_actions != model.n_actions)
        throw std::invalid_argument("true_policy_value: policy shape does not match model");

    const std::size_t n = model.n_states;
    const std::vector<double> trans = interventional_transition(model);
    const std::vector<double> rew = interventional_reward(model);

    // (I - gamma * P_pi) V = r_pi
    std::vector<double> a(n * n, 0.0);
    std::vector<double> b(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        a[s * n + s] = 1.0;
        for (std::size_t x = 0; x < model.n_actions; ++x) {
            const double px = policy(s, x);
            if (px == 0.0) continue;
            b[s] += px * rew[s * model.n_actions + x];
            for (std::size_t s2 = 0; s2 < n; ++s2)
                a[s * n + s2] -= model.discount * px * trans[(s * model.n_actions + x) * n + s2];
        }
    }
    solve_linear_system(a, b, n);
    return b;
}

double rollout_policy_value(const TabularCmdp& model, const TabularPolicy& policy, std::size_t s0,
                            std::size_t n_rollouts, std::size_t rollout_length, std::uint64_t seed) {
    double total = 0.0;
    std::vector<double> pi_row(model.n_actions);
    for (std::size_t k = 0; k < n_rollouts; ++k) {
        Rng rng = Rng::derive(seed, k);
        std::size_t s = s0;
        double ret = 0.0, disc = 1.0;
        for (std::size_t t = 0; t < rollout_length; ++t) {
            for (std::size_t x = 0; x < model.n_actions; ++x) pi_row[x] = policy(s, x);
            const std::size_t x = rng.categorical(pi_row);
            const std::size_t u = rng.categorical(model.noise_prob);
            ret += disc * model.reward_value(s, x, u);
            disc *= model.discount;
            s = static_cast<std::size_t>(model.next_state(s, x, u));
        }
        total += ret;
    }
    return total / static_cast<double>(n_rollouts);
}

}  // namespace cfql
