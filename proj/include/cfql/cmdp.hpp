#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfql/rng.hpp"

namespace cfql {

/**
Ground-truth tabular Confounded MDP.

The generative loop per step: draw exogenous noise u ~ P(U), take action
x = f_X(s, u), receive reward y = f_Y(s, x, u), move to s' = f_S(s, x, u).
Only simulators and oracles may read the mechanisms; the learner sees the
sampled (s, x, y, s') tuples.
*/
struct TabularCmdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::size_t n_noise = 0;
    std::vector<double> noise_prob;    // P(U), length n_noise
    std::vector<int> behavior;         // f_X[s*n_noise + u] -> action
    std::vector<int> transition;       // f_S[(s*n_actions + x)*n_noise + u] -> state
    std::vector<double> reward;        // f_Y[(s*n_actions + x)*n_noise + u] -> y in [a, b]
    double reward_min = 0.0;           // a
    double reward_max = 1.0;           // b
    std::vector<double> initial_dist;  // P(s1)
    double discount = 0.9;

    int behavior_action(std::size_t s, std::size_t u) const { return behavior[s * n_noise + u]; }
    int next_state(std::size_t s, std::size_t x, std::size_t u) const {
        return transition[(s * n_actions + x) * n_noise + u];
    }
    double reward_value(std::size_t s, std::size_t x, std::size_t u) const {
        return reward[(s * n_actions + x) * n_noise + u];
    }

    /// Throws when sizes, distributions or mechanism ranges are inconsistent.
    void validate() const;
};

/// Row-stochastic |S| x |X| decision rule.
struct TabularPolicy {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> prob;  // pi[s*n_actions + x]

    double operator()(std::size_t s, std::size_t x) const { return prob[s * n_actions + x]; }
    double& at(std::size_t s, std::size_t x) { return prob[s * n_actions + x]; }

    static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions);
    static TabularPolicy deterministic(std::size_t n_states, std::size_t n_actions,
                                       const std::vector<int>& actions);
    void validate() const;
};

/**
Continuous confounded environment.

The hidden confounder is drawn at reset and never appears in observations;
the demonstrator policy reads it. Actions are clipped to [-1, 1]^d.
*/
class ContinuousCmdpEnv {
  public:
    struct StepResult {
        double reward = 0.0;
        bool done = false;
    };

    virtual ~ContinuousCmdpEnv() = default;

    virtual const std::string& id() const = 0;
    virtual std::size_t observation_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual std::size_t horizon() const = 0;
    virtual double reward_lower() const = 0;
    virtual double reward_upper() const = 0;

    /// Draws the hidden confounder and start state.
    virtual void reset(Rng& rng) = 0;
    virtual std::vector<double> observation() const = 0;
    virtual StepResult step(std::span<const double> action, Rng& rng) = 0;
    /// Demonstrator action; may read the hidden confounder.
    virtual std::vector<double> expert_action(Rng& rng) const = 0;
    /// Goal reached at some point during the current episode.
    virtual bool succeeded() const = 0;

    /// Interventional mean reward E_u[f_Y(s, x, u)] at the current state,
    /// marginalizing the confounder. Oracle access for tests only.
    virtual double interventional_reward(std::span<const double> action) const = 0;

    virtual std::unique_ptr<ContinuousCmdpEnv> clone() const = 0;
};

/// One learner-visible transition. Exogenous noise is never stored.
struct TransitionRecord {
    std::uint64_t episode = 0;
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Offline dataset plus the metadata needed to interpret it.
struct TransitionDataset {
    std::string env_id;
    std::uint64_t seed = 0;
    std::size_t observation_dim = 0;
    std::size_t action_dim = 0;
    double reward_min = 0.0;
    double reward_max = 0.0;
    std::uint64_t episodes = 0;
    bool discrete = false;
    std::size_t n_states = 0;   // discrete datasets only
    std::size_t n_actions = 0;  // discrete datasets only
    bool bootstrap_masked_at_done = true;
    std::vector<TransitionRecord> records;

    std::size_t size() const { return records.size(); }
};

/**
Estimated observational quantities: conditional transition frequencies,
conditional mean rewards and the behavior marginal. Unvisited (s, x) pairs
are flagged and carry mu(x|s) = 0.
*/
struct NominalModel {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition;        // T~[s][x][s']
    std::vector<double> mean_reward;       // R~[s][x]
    std::vector<double> behavior_marginal; // mu[s][x]
    std::vector<std::uint64_t> visit_count;
    std::vector<std::uint8_t> defined;     // (s, x) has data / positive analytic mass

    double trans(std::size_t s, std::size_t x, std::size_t s2) const {
        return transition[(s * n_actions + x) * n_states + s2];
    }
    double rew(std::size_t s, std::size_t x) const { return mean_reward[s * n_actions + x]; }
    double mu(std::size_t s, std::size_t x) const { return behavior_marginal[s * n_actions + x]; }
    bool is_defined(std::size_t s, std::size_t x) const { return defined[s * n_actions + x] != 0; }
};

// -------------------------------------------------------------------------
// Sampling and estimation
// -------------------------------------------------------------------------

/// Roll out the behavioral policy of a tabular CMDP. Episodes are truncated
/// at `steps_per_episode` (no terminal states in tabular instances, so done
/// stays false). Per-episode RNG streams derive from (seed, episode).
TransitionDataset sample_trajectories(const TabularCmdp& model, std::size_t episodes,
                                      std::size_t steps_per_episode, std::uint64_t seed);

/// Roll out the demonstrator of a continuous environment.
TransitionDataset sample_trajectories(const ContinuousCmdpEnv& env, std::size_t episodes,
                                      std::uint64_t seed);

/// Maximum-likelihood frequency/mean estimates from a discrete-encoded
/// dataset. Throws on an empty dataset.
NominalModel estimate_nominal(const TransitionDataset& data, std::size_t n_states,
                              std::size_t n_actions);

/// Exact nominal model computed by marginalizing the exogenous noise.
NominalModel analytic_nominal(const TabularCmdp& model);

// -------------------------------------------------------------------------
// Interventional oracles
// -------------------------------------------------------------------------

/// Interventional transition kernel T(s, x, s') = sum_u 1{f_S = s'} P(u).
std::vector<double> interventional_transition(const TabularCmdp& model);

/// Interventional mean reward R(s, x) = sum_u f_Y(s, x, u) P(u).
std::vector<double> interventional_reward(const TabularCmdp& model);

/**
Exact V_pi under do(pi): solves the linear Bellman system with the
interventional transition and reward. This is the oracle other modules
test against.
*/
std::vector<double> true_policy_value(const TabularCmdp& model, const TabularPolicy& policy);

/// Monte-Carlo estimate of the discounted value from state `s0` under
/// do(pi), for cross-checking true_policy_value.
double rollout_policy_value(const TabularCmdp& model, const TabularPolicy& policy, std::size_t s0,
                            std::size_t n_rollouts, std::size_t rollout_length, std::uint64_t seed);

}  // namespace cfql
