#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cfql/cmdp.hpp"

namespace cfql {

/// Registry entry describing a benchmark instance.
struct EnvSpec {
    std::string id;
    bool tabular = false;
    std::size_t observation_dim = 0;
    std::size_t action_dim = 0;
    std::size_t horizon = 0;
    double reward_min = 0.0;
    double reward_max = 1.0;
    std::string confounder;  // what the hidden variable does
    std::string expert;      // how the demonstrator behaves
    std::string success;     // success predicate
    std::size_t default_episodes = 0;
};

/// All shipped benchmark instances.
const std::vector<EnvSpec>& env_registry();

/// Lookup by id; throws on unknown ids.
const EnvSpec& env_spec(const std::string& id);

bool is_tabular_env(const std::string& id);

/// Instantiate a continuous environment. Same (id, seed) gives an identical
/// instance; episode randomness comes from the Rng passed to reset/step.
std::unique_ptr<ContinuousCmdpEnv> make_env(const std::string& id, std::uint64_t seed);

/// Instantiate a shipped tabular CMDP.
TabularCmdp make_tabular_env(const std::string& id);

/**
Random tabular CMDP generator for property suites: mechanisms drawn
uniformly over deterministic function tables, P(U) ~ Dirichlet(1), rewards
uniform in [reward_min, reward_max], uniform initial distribution.
*/
TabularCmdp random_cmdp(std::size_t n_states, std::size_t n_actions, std::size_t n_noise,
                        std::uint64_t seed, double reward_min = 0.0, double reward_max = 1.0,
                        double discount = 0.9);

/// Random row-stochastic policy (Dirichlet(1) rows).
TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, std::uint64_t seed);

}  // namespace cfql
