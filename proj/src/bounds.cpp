#include "cfql/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cfql {

namespace {

double extreme_value(const std::vector<double>& v, BoundDirection dir) {
    return dir == BoundDirection::kLower ? *std::min_element(v.begin(), v.end())
                                         : *std::max_element(v.begin(), v.end());
}

std::size_t extreme_state(const std::vector<double>& v, BoundDirection dir) {
    if (dir == BoundDirection::kLower)
        return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

void BoundProblem::validate() const {
    if (!(discount >= 0.0 && discount < 1.0))
        throw std::invalid_argument("BoundProblem: discount must lie in [0, 1)");
    if (!(tolerance > 0.0)) throw std::invalid_argument("BoundProblem: tolerance must be positive");
    if (nominal.n_states == 0 || nominal.n_actions == 0)
        throw std::invalid_argument("BoundProblem: empty nominal model");
    policy.validate();
    if (policy.n_states != nominal.n_states || policy.n_actions != nominal.n_actions)
        throw std::invalid_argument("BoundProblem: policy shape does not match nominal model");
    if (direction == BoundDirection::kUpper && reward_ceiling < reward_floor)
        throw std::invalid_argument("BoundProblem: reward ceiling below floor");
}

BoundTables apply_lower_bellman(const BoundProblem& problem, const BoundTables& current) {
    const NominalModel& nm = problem.nominal;
    const std::size_t ns = nm.n_states, nx = nm.n_actions;
    if (current.v.size() != ns)
        throw std::invalid_argument("apply_lower_bellman: tables not shaped to problem");

    const double bound_reward =
        problem.direction == BoundDirection::kLower ? problem.reward_floor : problem.reward_ceiling;
    const double extreme_v = extreme_value(current.v, problem.direction);
    const double counterfactual = bound_reward + problem.discount * extreme_v;

    BoundTables next;
    next.n_states = ns;
    next.n_actions = nx;
    next.q.assign(ns * nx, 0.0);
    next.v.assign(ns, 0.0);
    next.sweeps = current.sweeps + 1;
    next.residual_trace = current.residual_trace;

    for (std::size_t s = 0; s < ns; ++s) {
        double v_new = 0.0;
        for (std::size_t x = 0; x < nx; ++x) {
            const double mu = nm.mu(s, x);
            double factual = 0.0;
            if (mu > 0.0) {
                if (!nm.is_defined(s, x))
                    throw std::runtime_error(
                        "apply_lower_bellman: nominal model inconsistent: mu(x|s) > 0 with undefined "
                        "T~/R~ at (s=" +
                        std::to_string(s) + ", x=" + std::to_string(x) + ")");
                double bootstrap = 0.0;
                for (std::size_t s2 = 0; s2 < ns; ++s2) {
                    const double t = nm.trans(s, x, s2);
                    if (t > 0.0) bootstrap += t * current.v[s2];
                }
                factual = nm.rew(s, x) + problem.discount * bootstrap;
            }
            const double q = (1.0 - mu) * counterfactual + mu * factual;
            next.q[s * nx + x] = q;
            v_new += problem.policy(s, x) * q;
        }
        next.v[s] = v_new;
    }

    double res = 0.0;
    for (std::size_t s = 0; s < ns; ++s) res = std::max(res, std::fabs(next.v[s] - current.v[s]));
    next.residual = res;
    next.residual_trace.push_back(res);
    return next;
}

BoundTables solve_lower_bound(const BoundProblem& problem) {
    problem.validate();
    const std::size_t ns = problem.nominal.n_states, nx = problem.nominal.n_actions;
    const double bound_reward =
        problem.direction == BoundDirection::kLower ? problem.reward_floor : problem.reward_ceiling;

    BoundTables tables;
    tables.n_states = ns;
    tables.n_actions = nx;
    tables.q.assign(ns * nx, bound_reward / (1.0 - problem.discount));
    tables.v.assign(ns, bound_reward / (1.0 - problem.discount));

    for (std::size_t sweep = 0; sweep < problem.max_sweeps; ++sweep) {
        tables = apply_lower_bellman(problem, tables);
        if (tables.residual < problem.tolerance) return tables;
    }
    throw std::runtime_error("solve_lower_bound: no convergence after " +
                             std::to_string(problem.max_sweeps) +
                             " sweeps, residual = " + std::to_string(tables.residual));
}

ExpectationCheck expectation_form_check(const BoundProblem& problem, const BoundTables& solved,
                                        std::size_t samples, std::uint64_t seed) {
    problem.validate();
    if (samples == 0) throw std::invalid_argument("expectation_form_check: samples must be positive");
    const NominalModel& nm = problem.nominal;
    const std::size_t ns = nm.n_states, nx = nm.n_actions;

    const double bound_reward =
        problem.direction == BoundDirection::kLower ? problem.reward_floor : problem.reward_ceiling;
    const std::size_t s_star = extreme_state(solved.v, problem.direction);

    ExpectationCheck check;
    check.analytic = solved.v;
    check.estimate.assign(ns, 0.0);
    check.standard_error.assign(ns, 0.0);

    std::vector<double> mu_row(nx), pi_row(nx);
    for (std::size_t s = 0; s < ns; ++s) {
        Rng rng = Rng::derive(seed, s);
        for (std::size_t x = 0; x < nx; ++x) {
            mu_row[x] = nm.mu(s, x);
            pi_row[x] = problem.policy(s, x);
        }
        // Welford accumulation: the naive sum-of-squares form cancels
        // catastrophically when the estimator has (near) zero variance.
        double run_mean = 0.0, run_m2 = 0.0;
        for (std::size_t k = 0; k < samples; ++k) {
            const std::size_t x = rng.categorical(mu_row);
            const std::size_t x_pi = rng.categorical(pi_row);
            double value;
            if (x != x_pi) {
                // mismatch branch: worst (best) next state, next action from pi there
                std::vector<double> pi_star(nx);
                for (std::size_t a = 0; a < nx; ++a) pi_star[a] = problem.policy(s_star, a);
                const std::size_t x_star = rng.categorical(pi_star);
                value = bound_reward + problem.discount * solved.q_at(s_star, x_star);
            } else {
                double bootstrap = 0.0;
                for (std::size_t s2 = 0; s2 < ns; ++s2) {
                    const double t = nm.trans(s, x, s2);
                    if (t <= 0.0) continue;
                    std::vector<double> pi_next(nx);
                    for (std::size_t a = 0; a < nx; ++a) pi_next[a] = problem.policy(s2, a);
                    const std::size_t x_star = rng.categorical(pi_next);
                    bootstrap += t * solved.q_at(s2, x_star);
                }
                value = nm.rew(s, x) + problem.discount * bootstrap;
            }
            const double delta = value - run_mean;
            run_mean += delta / static_cast<double>(k + 1);
            run_m2 += delta * (value - run_mean);
        }
        const double n = static_cast<double>(samples);
        const double mean = run_mean;
        const double var = samples > 1 ? std::max(0.0, run_m2 / (n - 1.0)) : 0.0;
        check.estimate[s] = mean;
        check.standard_error[s] = std::sqrt(var / n);

        const double dev = std::fabs(mean - solved.v[s]);
        check.max_deviation = std::max(check.max_deviation, dev);
        if (check.standard_error[s] > 0.0)
            check.max_se_ratio = std::max(check.max_se_ratio, dev / check.standard_error[s]);
        else if (dev > 1e-9)
            check.max_se_ratio = std::numeric_limits<double>::infinity();
    }
    return check;
}

RobustImprovement robust_greedy_improve(const BoundProblem& problem, std::size_t max_outer) {
    problem.validate();
    const std::size_t ns = problem.nominal.n_states, nx = problem.nominal.n_actions;

    RobustImprovement best;
    double best_score = -std::numeric_limits<double>::infinity();

    BoundProblem current = problem;
    for (std::size_t iter = 0; iter < max_outer; ++iter) {
        BoundTables tables = solve_lower_bound(current);

        double score = 0.0;
        for (double v : tables.v) score += v;
        if (score > best_score) {
            best_score = score;
            best.policy = current.policy;
            best.tables = tables;
        }

        // per-state argmax over Q, ties to the lowest action index
        std::vector<int> greedy(ns, 0);
        for (std::size_t s = 0; s < ns; ++s) {
            std::size_t arg = 0;
            double bestq = tables.q_at(s, 0);
            for (std::size_t x = 1; x < nx; ++x) {
                if (tables.q_at(s, x) > bestq) {
                    bestq = tables.q_at(s, x);
                    arg = x;
                }
            }
            greedy[s] = static_cast<int>(arg);
        }
        TabularPolicy improved = TabularPolicy::deterministic(ns, nx, greedy);
        if (improved.prob == current.policy.prob) {
            best.policy = improved;
            best.tables = tables;
            best.outer_iterations = iter + 1;
            best.converged = true;
            return best;
        }
        current.policy = improved;
        best.outer_iterations = iter + 1;
    }
    best.converged = false;  // oscillation: report best-so-far with warning flag
    return best;
}

}  // namespace cfql
