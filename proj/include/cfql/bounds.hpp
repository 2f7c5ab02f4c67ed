#pragma once

#include <cstdint>
#include <vector>

#include "cfql/cmdp.hpp"

namespace cfql {

/// Which side of the partial-identification interval to compute. The upper
/// bound swaps the reward floor for the ceiling and the min over next
/// states for a max.
enum class BoundDirection { kLower, kUpper };

/// Inputs of the causal Bellman bound recursion.
struct BoundProblem {
    NominalModel nominal;
    TabularPolicy policy;
    double reward_floor = 0.0;    // a
    double reward_ceiling = 1.0;  // b (upper bound direction only)
    double discount = 0.9;
    double tolerance = 1e-10;
    std::size_t max_sweeps = 100000;
    BoundDirection direction = BoundDirection::kLower;

    void validate() const;
};

/// Fixed-point bound tables.
struct BoundTables {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> q;  // Q_bound[s][x]
    std::vector<double> v;  // V_bound[s]
    std::size_t sweeps = 0;
    double residual = 0.0;
    std::vector<double> residual_trace;  // sup-norm residual per sweep

    double q_at(std::size_t s, std::size_t x) const { return q[s * n_actions + x]; }
};

/**
One synchronous sweep of the causal Bellman bound operator:

  Q(s,x) = mu(!x|s) * (a + gamma * min_{s*} V(s*))
         + mu(x|s)  * (R~(s,x) + gamma * sum_{s'} T~(s,x,s') V(s'))
  V(s)   = sum_x pi(x|s) Q(s,x)

reading V from `current`. Throws when mu(x|s) > 0 but the nominal model
has no estimate for (s,x).
*/
BoundTables apply_lower_bellman(const BoundProblem& problem, const BoundTables& current);

/**
Iterate apply_lower_bellman from V = a/(1-gamma) (or b/(1-gamma) for the
upper direction) until the sup-norm residual drops below the tolerance.
Throws a non-convergence error reporting the residual when max_sweeps is
exceeded.
*/
BoundTables solve_lower_bound(const BoundProblem& problem);

/// Per-state result of the Monte-Carlo check of the expectation form.
struct ExpectationCheck {
    std::vector<double> analytic;       // bound fixed point per state
    std::vector<double> estimate;       // MC estimate per state
    std::vector<double> standard_error; // per state
    double max_deviation = 0.0;         // max_s |estimate - analytic|
    double max_se_ratio = 0.0;          // max_s |dev| / SE (0 when SE = 0 and dev ~ 0)
};

/**
Monte-Carlo estimator of the sampled form of the bound: per draw take
x ~ mu(.|s), x' ~ pi(.|s); the mismatch branch contributes
a + gamma*Q(s*, x*) with s* the worst next state and x* ~ pi(.|s*); the
match branch contributes R~(s,x) + gamma*sum_{s'} T~(s,x,s') Q(s', x*')
with x*' ~ pi(.|s') per successor. The estimator is unbiased for the
summation-form fixed point, which verifies the two forms agree.
*/
ExpectationCheck expectation_form_check(const BoundProblem& problem, const BoundTables& solved,
                                        std::size_t samples, std::uint64_t seed);

/// Result of robust policy improvement on the lower bound.
struct RobustImprovement {
    TabularPolicy policy;
    BoundTables tables;
    std::size_t outer_iterations = 0;
    bool converged = true;  // false when the outer loop hit its cap
};

/**
Alternate solve_lower_bound and a per-state argmax over Q until the policy
no longer changes. Ties break toward the lowest action index. If the outer
loop exceeds `max_outer` the best policy seen so far is returned with
converged = false.
*/
RobustImprovement robust_greedy_improve(const BoundProblem& problem, std::size_t max_outer = 100);

}  // namespace cfql
