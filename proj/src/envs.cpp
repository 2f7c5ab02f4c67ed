#include "cfql/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfql {

namespace {

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

// -------------------------------------------------------------------------
// confounded-bandit-v0
//
// Horizon-1, one continuous action. A hidden sign u flips which arm region
// pays; the demonstrator always plays the paying side around |x| = 0.8.
// The observed reward profile rises toward the edge of the demonstrator's
// support (|x| = 0.92), while the never-demonstrated wrong side charges a
// penalty that grows with |x|. The conditional means therefore rank bold
// actions above the mode core, while the interventional means rank them
// below it.
// -------------------------------------------------------------------------
class ConfoundedBandit final : public ContinuousCmdpEnv {
  public:
    static constexpr double kRewardMin = -0.25;
    static constexpr double kRewardMax = 0.65;
    static constexpr double kSuccessReward = 0.45;

    const std::string& id() const override {
        static const std::string name = "confounded-bandit-v0";
        return name;
    }
    std::size_t observation_dim() const override { return 1; }
    std::size_t action_dim() const override { return 1; }
    std::size_t horizon() const override { return 1; }
    double reward_lower() const override { return kRewardMin; }
    double reward_upper() const override { return kRewardMax; }

    void reset(Rng& rng) override {
        side_ = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        succeeded_ = false;
        done_ = false;
    }

    std::vector<double> observation() const override { return {0.0}; }

    static double payoff(double x, double side) {
        const double m = std::fabs(x);
        const bool correct = (x >= 0.0 ? 1.0 : -1.0) == side;
        if (correct) {
            if (m <= 0.92) return 0.55 + 0.6 * (m - 0.8);
            return 0.622 + 0.3 * (m - 0.92);
        }
        return -1.5 * std::max(0.0, m - 0.85);
    }

    StepResult step(std::span<const double> action, Rng&) override {
        if (action.size() != 1) throw std::invalid_argument("confounded-bandit-v0: action dim must be 1");
        const double y = payoff(clamp1(action[0]), side_);
        succeeded_ = y >= kSuccessReward;
        done_ = true;
        return {y, true};
    }

    std::vector<double> expert_action(Rng& rng) const override {
        // sign(u) * 0.8 with truncated jitter; support stops at |x| = 0.92,
        // short of the region where the observed profile keeps rising.
        const double eps = std::clamp(rng.normal(), -1.0, 1.2);
        return {side_ * (0.8 + 0.1 * eps)};
    }

    bool succeeded() const override { return succeeded_; }

    double interventional_reward(std::span<const double> action) const override {
        const double x = clamp1(action[0]);
        return 0.5 * payoff(x, 1.0) + 0.5 * payoff(x, -1.0);
    }

    std::unique_ptr<ContinuousCmdpEnv> clone() const override {
        return std::make_unique<ConfoundedBandit>(*this);
    }

  private:
    double side_ = 1.0;
    bool succeeded_ = false;
    bool done_ = false;
};

// -------------------------------------------------------------------------
// two-goal-reacher-v0
//
// 2-D point mass. The hidden confounder selects one of two goals at
// (+-0.7, 0); the demonstrator steers toward it at full speed with
// sigma = 0.1 jitter. Rewards are the (scaled, negated) distance to the
// hidden goal, so they are confounded; observations carry only the
// position.
// -------------------------------------------------------------------------
class TwoGoalReacher final : public ContinuousCmdpEnv {
  public:
    static constexpr double kStep = 0.08;
    static constexpr double kGoalX = 0.7;
    static constexpr double kSuccessRadius = 0.15;
    static constexpr double kScale = 2.2;
    static constexpr std::size_t kHorizon = 40;

    const std::string& id() const override {
        static const std::string name = "two-goal-reacher-v0";
        return name;
    }
    std::size_t observation_dim() const override { return 2; }
    std::size_t action_dim() const override { return 2; }
    std::size_t horizon() const override { return kHorizon; }
    double reward_lower() const override { return -1.0; }
    double reward_upper() const override { return 0.0; }

    void reset(Rng& rng) override {
        goal_right_ = rng.uniform01() < 0.5;
        px_ = 0.05 * rng.normal();
        py_ = 0.05 * rng.normal();
        succeeded_ = false;
    }

    std::vector<double> observation() const override { return {px_, py_}; }

    StepResult step(std::span<const double> action, Rng&) override {
        if (action.size() != 2) throw std::invalid_argument("two-goal-reacher-v0: action dim must be 2");
        px_ = std::clamp(px_ + kStep * clamp1(action[0]), -1.1, 1.1);
        py_ = std::clamp(py_ + kStep * clamp1(action[1]), -1.1, 1.1);
        const double dist = distance_to_goal(px_, py_, goal_right_);
        const double reward = -dist / kScale;
        const bool reached = dist < kSuccessRadius;
        if (reached) succeeded_ = true;
        return {reward, reached};
    }

    std::vector<double> expert_action(Rng& rng) const override {
        const double gx = goal_right_ ? kGoalX : -kGoalX;
        const double dx = gx - px_, dy = 0.0 - py_;
        const double dist = std::sqrt(dx * dx + dy * dy);
        double ax = 0.0, ay = 0.0;
        if (dist > 1e-9) {
            const double speed = std::min(1.0, dist / (2.0 * kStep));
            ax = speed * dx / dist;
            ay = speed * dy / dist;
        }
        return {clamp1(ax + 0.1 * rng.normal()), clamp1(ay + 0.1 * rng.normal())};
    }

    bool succeeded() const override { return succeeded_; }

    double interventional_reward(std::span<const double> action) const override {
        double total = 0.0;
        for (bool right : {false, true}) {
            const double nx = std::clamp(px_ + kStep * clamp1(action[0]), -1.1, 1.1);
            const double ny = std::clamp(py_ + kStep * clamp1(action[1]), -1.1, 1.1);
            total += -distance_to_goal(nx, ny, right) / kScale;
        }
        return 0.5 * total;
    }

    std::unique_ptr<ContinuousCmdpEnv> clone() const override {
        return std::make_unique<TwoGoalReacher>(*this);
    }

  private:
    static double distance_to_goal(double x, double y, bool right) {
        const double gx = right ? kGoalX : -kGoalX;
        return std::sqrt((x - gx) * (x - gx) + y * y);
    }

    bool goal_right_ = false;
    double px_ = 0.0, py_ = 0.0;
    bool succeeded_ = false;
};

TabularCmdp confounded_chain() {
    // 4-state chain. The behavior copies the noise bit; moving right
    // requires matching it, so conditioning on the action leaks u and
    // T~(s, x, .) concentrates while the interventional kernel mixes.
    TabularCmdp m;
    m.n_states = 4;
    m.n_actions = 2;
    m.n_noise = 2;
    m.noise_prob = {0.5, 0.5};
    m.behavior.assign(m.n_states * m.n_noise, 0);
    m.transition.assign(m.n_states * m.n_actions * m.n_noise, 0);
    m.reward.assign(m.n_states * m.n_actions * m.n_noise, 0.0);
    for (std::size_t s = 0; s < 4; ++s) {
        for (std::size_t u = 0; u < 2; ++u) m.behavior[s * 2 + u] = static_cast<int>(u);
        for (std::size_t x = 0; x < 2; ++x) {
            for (std::size_t u = 0; u < 2; ++u) {
                const std::size_t idx = (s * 2 + x) * 2 + u;
                const bool match = (x == u);
                m.transition[idx] = static_cast<int>(match ? std::min<std::size_t>(s + 1, 3) : s);
                m.reward[idx] = (s == 3) ? 1.0 : (match ? 0.1 : 0.0);
            }
        }
    }
    m.reward_min = 0.0;
    m.reward_max = 1.0;
    m.initial_dist = {1.0, 0.0, 0.0, 0.0};
    m.discount = 0.9;
    m.validate();
    return m;
}

TabularCmdp inverted_bandit() {
    // Single state, two arms. The behavior plays arm 1 exactly when the
    // rare noise u = 1 makes it pay, so the conditional mean of arm 1 is
    // 1.0 while its interventional mean is only 0.2. Arm 0 pays 0.55
    // regardless. The observational ranking and the true ranking invert.
    TabularCmdp m;
    m.n_states = 1;
    m.n_actions = 2;
    m.n_noise = 2;
    m.noise_prob = {0.8, 0.2};
    m.behavior = {0, 1};
    m.transition = {0, 0, 0, 0};
    m.reward = {0.55, 0.55,  // arm 0
                0.0, 1.0};   // arm 1: pays only under u = 1
    m.reward_min = 0.0;
    m.reward_max = 1.0;
    m.initial_dist = {1.0};
    m.discount = 0.0;
    m.validate();
    return m;
}

}  // namespace

const std::vector<EnvSpec>& env_registry() {
    static const std::vector<EnvSpec> registry = {
        {"confounded-bandit-v0", false, 1, 1, 1, ConfoundedBandit::kRewardMin,
         ConfoundedBandit::kRewardMax,
         "hidden sign flips which arm region pays; the wrong side penalizes bold actions",
         "plays sign(u) * 0.8 with truncated sigma=0.1 jitter, support ending at |x| = 0.92",
         "reward >= 0.45", 1500},
        {"two-goal-reacher-v0", false, 2, 2, TwoGoalReacher::kHorizon, -1.0, 0.0,
         "hidden bit selects the goal at (+-0.7, 0); rewards are distances to the hidden goal",
         "full-speed pursuit of the selected goal with sigma=0.1 jitter",
         "distance to the selected goal < 0.15 within the horizon", 600},
        {"tabular-confounded-chain-v0", true, 1, 1, 0, 0.0, 1.0,
         "behavior copies the noise bit; progress requires matching it",
         "behavioral mechanism f_X(s, u) = u", "n/a (policy-value oracle available)", 500},
        {"tabular-inverted-bandit-v0", true, 1, 1, 0, 0.0, 1.0,
         "rare noise makes arm 1 pay; behavior plays arm 1 exactly then",
         "behavioral mechanism f_X(u) = u", "n/a (policy-value oracle available)", 500},
    };
    return registry;
}

const EnvSpec& env_spec(const std::string& id) {
    for (const EnvSpec& spec : env_registry())
        if (spec.id == id) return spec;
    throw std::invalid_argument("unknown environment id: " + id);
}

bool is_tabular_env(const std::string& id) { return env_spec(id).tabular; }

std::unique_ptr<ContinuousCmdpEnv> make_env(const std::string& id, std::uint64_t) {
    const EnvSpec& spec = env_spec(id);
    if (spec.tabular)
        throw std::invalid_argument("make_env: " + id + " is tabular; use make_tabular_env");
    if (id == "confounded-bandit-v0") return std::make_unique<ConfoundedBandit>();
    return std::make_unique<TwoGoalReacher>();
}

TabularCmdp make_tabular_env(const std::string& id) {
    const EnvSpec& spec = env_spec(id);
    if (!spec.tabular) throw std::invalid_argument("make_tabular_env: " + id + " is continuous");
    if (id == "tabular-confounded-chain-v0") return confounded_chain();
    return inverted_bandit();
}

TabularCmdp random_cmdp(std::size_t n_states, std::size_t n_actions, std::size_t n_noise,
                        std::uint64_t seed, double reward_min, double reward_max, double discount) {
    if (n_states == 0 || n_actions == 0 || n_noise == 0)
        throw std::invalid_argument("random_cmdp: sizes must be >= 1");
    Rng rng = Rng::derive(seed, 0x7ab);

    TabularCmdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.n_noise = n_noise;
    m.reward_min = reward_min;
    m.reward_max = reward_max;
    m.discount = discount;

    // Dirichlet(1) via normalized exponentials
    m.noise_prob.resize(n_noise);
    double total = 0.0;
    for (double& p : m.noise_prob) {
        p = -std::log(1.0 - rng.uniform01());
        total += p;
    }
    for (double& p : m.noise_prob) p /= total;
    // renormalize exactly
    double sum = 0.0;
    for (double p : m.noise_prob) sum += p;
    m.noise_prob.back() += 1.0 - sum;

    m.behavior.resize(n_states * n_noise);
    for (int& x : m.behavior) x = static_cast<int>(rng.uniform_index(n_actions));
    m.transition.resize(n_states * n_actions * n_noise);
    for (int& s : m.transition) s = static_cast<int>(rng.uniform_index(n_states));
    m.reward.resize(n_states * n_actions * n_noise);
    for (double& y : m.reward) y = rng.uniform(reward_min, reward_max);
    m.initial_dist.assign(n_states, 1.0 / static_cast<double>(n_states));

    m.validate();
    return m;
}

TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, std::uint64_t seed) {
    Rng rng = Rng::derive(seed, 0x9c1);
    TabularPolicy pi;
    pi.n_states = n_states;
    pi.n_actions = n_actions;
    pi.prob.resize(n_states * n_actions);
    for (std::size_t s = 0; s < n_states; ++s) {
        double total = 0.0;
        for (std::size_t x = 0; x < n_actions; ++x) {
            pi.at(s, x) = -std::log(1.0 - rng.uniform01());
            total += pi(s, x);
        }
        for (std::size_t x = 0; x < n_actions; ++x) pi.at(s, x) /= total;
    }
    return pi;
}

}  // namespace cfql
