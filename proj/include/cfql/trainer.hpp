#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfql/cmdp.hpp"
#include "cfql/critic.hpp"
#include "cfql/discriminator.hpp"
#include "cfql/flow.hpp"

namespace cfql {

enum class TrainMode { kCfql, kFql, kBc };
enum class OnlineObjective { kFqlFull, kBalanced };

const char* to_string(TrainMode mode);
const char* to_string(OnlineObjective objective);
TrainMode train_mode_from_string(const std::string& name);
OnlineObjective online_objective_from_string(const std::string& name);

/// Everything that shapes a run. Every field lands in the run manifest.
struct TrainConfig {
    std::string env_id = "two-goal-reacher-v0";
    TrainMode mode = TrainMode::kCfql;
    std::uint64_t seed = 0;

    double discount = 0.99;
    double alpha = 0.3;            // distillation coefficient
    double disc_coef = 10.0;       // lambda_D, scales the discriminator loss
    double disc_coef_decay = 0.0;  // optional exponential decay per step
    std::size_t ensemble_size = 2;
    std::size_t euler_steps = 10;  // M
    std::size_t batch_size = 128;
    std::size_t grad_steps = 6000;
    std::vector<std::size_t> hidden = {32, 32};

    double lr_critic = 1e-3;
    double lr_flow = 1e-3;
    double lr_policy = 1e-3;
    double lr_disc = 1e-3;
    double polyak_tau = 0.005;

    std::size_t eval_episodes = 50;
    std::size_t eval_every = 0;  // 0 = final evaluation only

    // online fine-tuning
    std::size_t online_steps = 0;  // environment steps
    std::size_t online_updates_per_step = 1;
    OnlineObjective online_objective = OnlineObjective::kBalanced;

    // ablation pins; mode = fql implies both
    std::optional<double> pin_factual_weight;
    bool skip_discriminator_updates = false;

    void validate() const;
    /// Factual weight forced by the mode/pins, or nullopt for the live
    /// discriminator. mode = fql pins the weight to 1.
    std::optional<double> effective_pinned_weight() const;
    bool discriminator_enabled() const;
};

/// Per-step training diagnostics; one CSV row each.
struct StepMetrics {
    std::uint64_t step = 0;
    std::vector<double> critic_losses;  // per member
    double flow_loss = 0.0;
    double disc_loss = 0.0;
    double policy_loss = 0.0;
    double distill_loss = 0.0;
    double mean_robust_q = 0.0;
    double disc_mean_bc = 0.0;
    double disc_mean_policy = 0.0;
};

struct EvalMetrics {
    std::uint64_t step = 0;
    double success_rate = 0.0;
    double mean_return = 0.0;
    double se_return = 0.0;
    std::size_t episodes = 0;
};

struct RunMetrics {
    std::size_t ensemble_size = 0;
    std::vector<StepMetrics> steps;
    std::vector<EvalMetrics> evals;

    void write_csv(std::ostream& out) const;
};

/// All learnable state of one run: the four networks, targets, and the
/// optimizer moments.
struct NetworkBundle {
    std::size_t obs_dim = 0;
    std::size_t action_dim = 0;
    std::uint64_t trained_steps = 0;
    VelocityField velocity;
    OneStepPolicy policy;
    CriticEnsemble critics;
    Discriminator discriminator;
    AdamState opt_velocity;
    AdamState opt_policy;
    AdamState opt_discriminator;
    std::vector<AdamState> opt_critics;

    static NetworkBundle create(std::size_t obs_dim, std::size_t action_dim,
                                const TrainConfig& config);
    void save(const std::string& path) const;
    /// Rebuilds the architecture from the config, then loads the tensors;
    /// shape mismatches throw.
    static NetworkBundle load(const std::string& path, std::size_t obs_dim, std::size_t action_dim,
                              const TrainConfig& config);
};

struct PolicyLossResult {
    double total = 0.0;
    double q_term = 0.0;      // E[-robust_q]
    double distill = 0.0;     // mean squared distance to the BC flow sample
    double mean_robust_q = 0.0;
    MlpGrads grads;           // for the policy parameters only
};

/**
Policy objective E[-robust_q(s, pi(s, z))] + alpha * ||pi(s, z) - mu(s, z)||^2
under one shared noise draw. Critic, discriminator and flow parameters are
frozen; gradients flow to the policy alone.
*/
PolicyLossResult policy_loss(const OneStepPolicy& policy, const CriticEnsemble& critics,
                             const Discriminator* disc, const VelocityField& velocity,
                             const DenseArray& obs, double alpha, std::size_t euler_steps, Rng& rng,
                             std::optional<double> pinned_weight);

/**
One run's training loop. Construction resolves the dataset into batch
tensors; step() performs one Algorithm-lockstep iteration (critic, BC
flow, discriminator, policy) on a fresh batch.
*/
class Trainer {
  public:
    Trainer(const TrainConfig& config, const TransitionDataset& data);

    StepMetrics step();

    const TrainConfig& config() const { return config_; }
    NetworkBundle& bundle() { return bundle_; }
    const NetworkBundle& bundle() const { return bundle_; }

    /// Appends online records for fine-tuning batches.
    void add_online_record(const TransitionRecord& rec);
    std::size_t online_size() const { return online_.size(); }
    /// Offline/online row split used by balanced sampling.
    static std::pair<std::size_t, std::size_t> balanced_split(std::size_t batch_size);
    /// Switches step() to the online objective given by the config.
    void enter_online_phase();

  private:
    struct Batch {
        DenseArray obs, act, next_obs;
        std::vector<double> reward, done;
        std::size_t offline_rows = 0;  // prefix drawn from the offline data
    };
    Batch sample_batch();
    StepMetrics run_step(const Batch& batch);

    TrainConfig config_;
    std::vector<TransitionRecord> offline_;
    std::vector<TransitionRecord> online_;
    NetworkBundle bundle_;
    Rng rng_;
    std::uint64_t step_count_ = 0;
    bool online_phase_ = false;
};

struct EvalResult {
    double success_rate = 0.0;
    double mean_return = 0.0;
    double se_return = 0.0;
    std::size_t episodes = 0;
};

/// Frozen-parameter rollouts with per-step policy noise from the eval
/// stream. `use_bc_flow` rolls out the Euler sampler instead of the
/// one-step policy (for bc-mode diagnostics).
EvalResult evaluate(const NetworkBundle& bundle, const ContinuousCmdpEnv& env, std::size_t episodes,
                    std::uint64_t seed, bool use_bc_flow = false, std::size_t euler_steps = 10);

struct TrainResult {
    NetworkBundle bundle;
    RunMetrics metrics;
};

/// Offline training per the printed update order; evaluations per
/// config.eval_every plus one final evaluation.
TrainResult train_offline(const TrainConfig& config, const TransitionDataset& data);

/**
Online fine-tuning from an offline-trained bundle: collects environment
steps with the one-step policy and interleaves gradient updates. The
objective per batch follows config.online_objective: either the plain FQL
objective on the mixed buffer, or balanced offline/online half-batches
with the confounding-robust objective on the offline half only.
*/
TrainResult train_online(const TrainConfig& config, NetworkBundle bundle,
                         const TransitionDataset& offline_data);

}  // namespace cfql
