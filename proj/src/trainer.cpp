#include "cfql/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "cfql/envs.hpp"
#include "cfql/serialize.hpp"

namespace cfql {

namespace {

void require_finite(double value, std::uint64_t step, const char* component) {
    if (!std::isfinite(value))
        throw std::runtime_error("train step " + std::to_string(step) + ": " + component +
                                 " loss is not finite");
}

void append_mlp(TensorContainer& c, const MlpParams& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        c.tensors.push_back(net.weights[l]);
        c.tensors.push_back(net.biases[l]);
    }
}

void read_mlp(const TensorContainer& c, std::size_t& idx, MlpParams& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (idx + 2 > c.tensors.size()) throw std::runtime_error("checkpoint: too few tensors");
        const DenseArray& w = c.tensors.at(idx++);
        const DenseArray& b = c.tensors.at(idx++);
        if (w.shape != net.weights[l].shape || b.shape != net.biases[l].shape)
            throw std::runtime_error("checkpoint: tensor shape does not match the configured model");
        net.weights[l] = w;
        net.biases[l] = b;
    }
}

void append_adam(TensorContainer& c, const AdamState& st) {
    c.tensors.push_back(DenseArray({1}, {static_cast<double>(st.step)}));
    for (std::size_t l = 0; l < st.first_moment.weights.size(); ++l) {
        c.tensors.push_back(st.first_moment.weights[l]);
        c.tensors.push_back(st.first_moment.biases[l]);
        c.tensors.push_back(st.second_moment.weights[l]);
        c.tensors.push_back(st.second_moment.biases[l]);
    }
}

void read_adam(const TensorContainer& c, std::size_t& idx, AdamState& st) {
    st.step = static_cast<std::uint64_t>(c.tensors.at(idx++)[0]);
    for (std::size_t l = 0; l < st.first_moment.weights.size(); ++l) {
        st.first_moment.weights[l] = c.tensors.at(idx++);
        st.first_moment.biases[l] = c.tensors.at(idx++);
        st.second_moment.weights[l] = c.tensors.at(idx++);
        st.second_moment.biases[l] = c.tensors.at(idx++);
    }
}

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

}  // namespace

const char* to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::kCfql: return "cfql";
        case TrainMode::kFql: return "fql";
        case TrainMode::kBc: return "bc";
    }
    return "?";
}

const char* to_string(OnlineObjective objective) {
    return objective == OnlineObjective::kFqlFull ? "fql" : "balanced";
}

TrainMode train_mode_from_string(const std::string& name) {
    if (name == "cfql") return TrainMode::kCfql;
    if (name == "fql") return TrainMode::kFql;
    if (name == "bc") return TrainMode::kBc;
    throw std::invalid_argument("unknown train mode: " + name);
}

OnlineObjective online_objective_from_string(const std::string& name) {
    if (name == "fql") return OnlineObjective::kFqlFull;
    if (name == "balanced") return OnlineObjective::kBalanced;
    throw std::invalid_argument("unknown online objective: " + name);
}

void TrainConfig::validate() const {
    if (!(discount >= 0.0 && discount < 1.0))
        throw std::invalid_argument("TrainConfig: discount must lie in [0, 1)");
    if (alpha < 0.0) throw std::invalid_argument("TrainConfig: alpha must be >= 0");
    if (ensemble_size < 2) throw std::invalid_argument("TrainConfig: ensemble_size must be >= 2");
    if (euler_steps < 1) throw std::invalid_argument("TrainConfig: euler_steps must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
    if (hidden.empty()) throw std::invalid_argument("TrainConfig: hidden layer list is empty");
    if (!(polyak_tau > 0.0 && polyak_tau <= 1.0))
        throw std::invalid_argument("TrainConfig: polyak_tau must be in (0, 1]");
    if (pin_factual_weight && (*pin_factual_weight < 0.0 || *pin_factual_weight > 1.0))
        throw std::invalid_argument("TrainConfig: pinned factual weight must lie in [0, 1]");
}

std::optional<double> TrainConfig::effective_pinned_weight() const {
    if (mode == TrainMode::kFql) return 1.0;
    return pin_factual_weight;
}

bool TrainConfig::discriminator_enabled() const {
    return mode == TrainMode::kCfql && !skip_discriminator_updates;
}

void RunMetrics::write_csv(std::ostream& out) const {
    out << "step";
    for (std::size_t i = 0; i < ensemble_size; ++i) out << ",critic" << i;
    out << ",flow,disc,policy,distill,robust_q,disc_bc,disc_pi,eval_success,eval_return,eval_se\n";
    std::size_t ei = 0;
    auto write_eval_row = [&](const EvalMetrics& ev) {
        out << ev.step;
        for (std::size_t i = 0; i < ensemble_size + 8; ++i) out << ",";
        out << format_double(ev.success_rate) << "," << format_double(ev.mean_return) << ","
            << format_double(ev.se_return) << "\n";
    };
    for (const StepMetrics& row : steps) {
        while (ei < evals.size() && evals[ei].step <= row.step) write_eval_row(evals[ei++]);
        out << row.step;
        for (std::size_t i = 0; i < ensemble_size; ++i)
            out << "," << format_double(i < row.critic_losses.size() ? row.critic_losses[i] : 0.0);
        out << "," << format_double(row.flow_loss) << "," << format_double(row.disc_loss) << ","
            << format_double(row.policy_loss) << "," << format_double(row.distill_loss) << ","
            << format_double(row.mean_robust_q) << "," << format_double(row.disc_mean_bc) << ","
            << format_double(row.disc_mean_policy);
        out << ",,,\n";
    }
    while (ei < evals.size()) write_eval_row(evals[ei++]);
}

NetworkBundle NetworkBundle::create(std::size_t obs_dim, std::size_t action_dim,
                                    const TrainConfig& config) {
    config.validate();
    NetworkBundle b;
    b.obs_dim = obs_dim;
    b.action_dim = action_dim;
    Rng rng = Rng::derive(config.seed, 0x11);
    b.velocity = VelocityField::create(obs_dim, action_dim, config.hidden, rng);
    b.policy = OneStepPolicy::create(obs_dim, action_dim, config.hidden, rng);
    b.critics = CriticEnsemble::create(obs_dim, action_dim, config.hidden, config.ensemble_size,
                                       config.polyak_tau, rng);
    b.discriminator = Discriminator::create(obs_dim, action_dim, config.hidden, rng);
    b.discriminator.loss_coef = config.disc_coef;
    b.discriminator.coef_decay = config.disc_coef_decay;
    b.opt_velocity = AdamState::init(b.velocity.net, {config.lr_flow});
    b.opt_policy = AdamState::init(b.policy.net, {config.lr_policy});
    b.opt_discriminator = AdamState::init(b.discriminator.net, {config.lr_disc});
    for (const MlpParams& member : b.critics.members)
        b.opt_critics.push_back(AdamState::init(member, {config.lr_critic}));
    return b;
}

void NetworkBundle::save(const std::string& path) const {
    TensorContainer c;
    c.tensors.push_back(DenseArray({3}, {static_cast<double>(obs_dim), static_cast<double>(action_dim),
                                         static_cast<double>(trained_steps)}));
    append_mlp(c, velocity.net);
    append_mlp(c, policy.net);
    for (const MlpParams& m : critics.members) append_mlp(c, m);
    for (const MlpParams& t : critics.targets) append_mlp(c, t);
    append_mlp(c, discriminator.net);
    append_adam(c, opt_velocity);
    append_adam(c, opt_policy);
    append_adam(c, opt_discriminator);
    for (const AdamState& st : opt_critics) append_adam(c, st);
    c.save(path);
}

NetworkBundle NetworkBundle::load(const std::string& path, std::size_t obs_dim,
                                  std::size_t action_dim, const TrainConfig& config) {
    NetworkBundle b = create(obs_dim, action_dim, config);
    TensorContainer c = TensorContainer::load(path);
    std::size_t idx = 0;
    const DenseArray& meta = c.tensors.at(idx++);
    if (meta.size() != 3 || static_cast<std::size_t>(meta[0]) != obs_dim ||
        static_cast<std::size_t>(meta[1]) != action_dim)
        throw std::runtime_error("checkpoint: dimension metadata does not match the requested model");
    b.trained_steps = static_cast<std::uint64_t>(meta[2]);
    read_mlp(c, idx, b.velocity.net);
    read_mlp(c, idx, b.policy.net);
    for (MlpParams& m : b.critics.members) read_mlp(c, idx, m);
    for (MlpParams& t : b.critics.targets) read_mlp(c, idx, t);
    read_mlp(c, idx, b.discriminator.net);
    read_adam(c, idx, b.opt_velocity);
    read_adam(c, idx, b.opt_policy);
    read_adam(c, idx, b.opt_discriminator);
    for (AdamState& st : b.opt_critics) read_adam(c, idx, st);
    if (idx != c.tensors.size()) throw std::runtime_error("checkpoint: trailing tensors");
    return b;
}

PolicyLossResult policy_loss(const OneStepPolicy& policy, const CriticEnsemble& critics,
                             const Discriminator* disc, const VelocityField& velocity,
                             const DenseArray& obs, double alpha, std::size_t euler_steps, Rng& rng,
                             std::optional<double> pinned_weight) {
    const std::size_t batch = obs.rows();
    const std::size_t d = policy.action_dim;
    DenseArray z = DenseArray::zeros({batch, d});
    rng.fill_normal(z.data);

    // distillation target under the shared noise; constant w.r.t. theta
    DenseArray bc = euler_sample(velocity, obs, z, euler_steps);

    DenseArray input = DenseArray::zeros({batch, policy.obs_dim + d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < policy.obs_dim; ++i) input(b, i) = obs(b, i);
        for (std::size_t i = 0; i < d; ++i) input(b, policy.obs_dim + i) = z(b, i);
    }
    MlpTrace trace = mlp_forward_trace(policy.net, input);
    DenseArray actions = DenseArray::zeros({batch, d});
    for (std::size_t i = 0; i < actions.size(); ++i) actions[i] = std::tanh(trace.output()[i]);

    RobustQBatch rq = robust_q_with_action_grad(critics, disc, obs, actions, pinned_weight);

    PolicyLossResult result;
    result.mean_robust_q = rq.mean_value;
    result.q_term = -rq.mean_value;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    DenseArray upstream = DenseArray::zeros({batch, d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t k = 0; k < d; ++k) {
            const double a = actions(b, k);
            const double resid = a - bc(b, k);
            result.distill += resid * resid * inv_batch;
            const double da = (-rq.action_grad(b, k) + alpha * 2.0 * resid) * inv_batch;
            upstream(b, k) = da * (1.0 - a * a);  // through the tanh squash
        }
    }
    result.total = result.q_term + alpha * result.distill;
    result.grads = mlp_backward(policy.net, trace, upstream).grads;
    return result;
}

Trainer::Trainer(const TrainConfig& config, const TransitionDataset& data)
    : config_(config), rng_(Rng::derive(config.seed, 0xfeed)) {
    config_.validate();
    if (data.records.empty()) throw std::invalid_argument("Trainer: empty dataset");
    if (data.env_id != config.env_id)
        throw std::invalid_argument("Trainer: dataset env '" + data.env_id +
                                    "' does not match config env '" + config.env_id + "'");
    offline_ = data.records;
    bundle_ = NetworkBundle::create(data.observation_dim, data.action_dim, config_);
}

std::pair<std::size_t, std::size_t> Trainer::balanced_split(std::size_t batch_size) {
    return {(batch_size + 1) / 2, batch_size / 2};
}

void Trainer::enter_online_phase() { online_phase_ = true; }

void Trainer::add_online_record(const TransitionRecord& rec) { online_.push_back(rec); }

Trainer::Batch Trainer::sample_batch() {
    const std::size_t batch_size = config_.batch_size;
    std::vector<const TransitionRecord*> rows;
    rows.reserve(batch_size);
    std::size_t offline_rows = batch_size;

    if (!online_phase_) {
        for (std::size_t b = 0; b < batch_size; ++b)
            rows.push_back(&offline_[rng_.uniform_index(offline_.size())]);
    } else if (config_.online_objective == OnlineObjective::kFqlFull) {
        // uniform over the merged buffer; the whole batch trains the plain
        // FQL objective
        offline_rows = 0;
        const std::size_t total = offline_.size() + online_.size();
        for (std::size_t b = 0; b < batch_size; ++b) {
            const std::size_t k = rng_.uniform_index(total);
            rows.push_back(k < offline_.size() ? &offline_[k] : &online_[k - offline_.size()]);
        }
    } else {
        const auto [n_off, n_on] = balanced_split(batch_size);
        if (online_.empty()) throw std::logic_error("Trainer: balanced sampling with no online data");
        offline_rows = n_off;
        for (std::size_t b = 0; b < n_off; ++b)
            rows.push_back(&offline_[rng_.uniform_index(offline_.size())]);
        for (std::size_t b = 0; b < n_on; ++b)
            rows.push_back(&online_[rng_.uniform_index(online_.size())]);
    }

    const std::size_t od = bundle_.obs_dim, ad = bundle_.action_dim;
    Batch batch;
    batch.obs = DenseArray::zeros({batch_size, od});
    batch.act = DenseArray::zeros({batch_size, ad});
    batch.next_obs = DenseArray::zeros({batch_size, od});
    batch.reward.resize(batch_size);
    batch.done.resize(batch_size);
    batch.offline_rows = offline_rows;
    for (std::size_t b = 0; b < batch_size; ++b) {
        const TransitionRecord& rec = *rows[b];
        for (std::size_t i = 0; i < od; ++i) {
            batch.obs(b, i) = rec.state[i];
            batch.next_obs(b, i) = rec.next_state[i];
        }
        for (std::size_t i = 0; i < ad; ++i) batch.act(b, i) = rec.action[i];
        batch.reward[b] = rec.reward;
        batch.done[b] = rec.done ? 1.0 : 0.0;
    }
    return batch;
}

StepMetrics Trainer::step() { return run_step(sample_batch()); }

StepMetrics Trainer::run_step(const Batch& batch) {
    StepMetrics metrics;
    metrics.step = bundle_.trained_steps;
    metrics.critic_losses.assign(config_.ensemble_size, 0.0);

    const bool bc_only = config_.mode == TrainMode::kBc;

    // checksums guard update isolation between the four blocks
    auto policy_sum = [&] { return parameter_checksum(bundle_.policy.net); };
    auto flow_sum = [&] { return parameter_checksum(bundle_.velocity.net); };
    auto disc_sum = [&] { return parameter_checksum(bundle_.discriminator.net); };

    // --- critic block -----------------------------------------------------
    if (!bc_only) {
        const auto theta = policy_sum();
        const auto omega = flow_sum();
        const auto psi = disc_sum();
        CriticBatch cb{batch.obs, batch.act, batch.reward, batch.next_obs, batch.done};
        CriticLossResult cl = critic_loss(bundle_.critics, cb, bundle_.policy, config_.discount, rng_);
        for (std::size_t i = 0; i < cl.member_losses.size(); ++i) {
            require_finite(cl.member_losses[i], metrics.step, "critic");
            metrics.critic_losses[i] = cl.member_losses[i];
            adam_step(bundle_.opt_critics[i], bundle_.critics.members[i], cl.member_grads[i]);
        }
        polyak_update(bundle_.critics, config_.polyak_tau);
        if (policy_sum() != theta || flow_sum() != omega || disc_sum() != psi)
            throw std::logic_error("critic update touched foreign parameters");
    }

    // --- BC flow block ----------------------------------------------------
    {
        FlowLoss fl = flow_matching_loss(bundle_.velocity, batch.obs, batch.act, rng_);
        require_finite(fl.loss, metrics.step, "flow");
        metrics.flow_loss = fl.loss;
        adam_step(bundle_.opt_velocity, bundle_.velocity.net, fl.grads);
    }

    // --- discriminator block ----------------------------------------------
    if (!bc_only && config_.discriminator_enabled()) {
        const auto theta = policy_sum();
        const auto omega = flow_sum();
        // offline rows only: online experience is confounding-free
        const std::size_t n = online_phase_ ? batch.offline_rows : batch.obs.rows();
        if (n > 0) {
            DenseArray obs = DenseArray::zeros({n, bundle_.obs_dim});
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < bundle_.obs_dim; ++i) obs(b, i) = batch.obs(b, i);
            DenseArray z = DenseArray::zeros({n, bundle_.action_dim});
            rng_.fill_normal(z.data);
            DenseArray flow_actions = euler_sample(bundle_.velocity, obs, z, config_.euler_steps);
            DenseArray target_actions = policy_actions(bundle_.policy, obs, z);
            DiscriminatorLoss dl =
                discriminator_loss(bundle_.discriminator, obs, flow_actions, target_actions);
            require_finite(dl.loss, metrics.step, "discriminator");
            metrics.disc_loss = dl.loss;
            metrics.disc_mean_bc = dl.mean_output_bc;
            metrics.disc_mean_policy = dl.mean_output_policy;
            dl.grads.scale(bundle_.discriminator.coefficient_at(metrics.step));
            adam_step(bundle_.opt_discriminator, bundle_.discriminator.net, dl.grads);
        }
        if (policy_sum() != theta || flow_sum() != omega)
            throw std::logic_error("discriminator update touched foreign parameters");
    }

    // --- policy block -----------------------------------------------------
    if (!bc_only) {
        const auto omega = flow_sum();
        const auto psi = disc_sum();
        const std::optional<double> pinned = config_.effective_pinned_weight();
        const Discriminator* disc = pinned ? nullptr : &bundle_.discriminator;

        MlpGrads grads = MlpGrads::zeros_like(bundle_.policy.net);
        const std::size_t batch_size = batch.obs.rows();
        const std::size_t n_off = online_phase_ ? batch.offline_rows : batch_size;

        auto run_rows = [&](std::size_t begin, std::size_t end, const Discriminator* d,
                            std::optional<double> pin) {
            const std::size_t n = end - begin;
            DenseArray obs = DenseArray::zeros({n, bundle_.obs_dim});
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < bundle_.obs_dim; ++i) obs(b, i) = batch.obs(begin + b, i);
            PolicyLossResult pl = policy_loss(bundle_.policy, bundle_.critics, d, bundle_.velocity,
                                              obs, config_.alpha, config_.euler_steps, rng_, pin);
            const double w = static_cast<double>(n) / static_cast<double>(batch_size);
            metrics.policy_loss += w * pl.total;
            metrics.distill_loss += w * pl.distill;
            metrics.mean_robust_q += w * pl.mean_robust_q;
            grads.accumulate(pl.grads, w);
        };

        if (!online_phase_ || config_.online_objective == OnlineObjective::kFqlFull || n_off == 0 ||
            n_off == batch_size) {
            run_rows(0, batch_size, disc, pinned);
        } else {
            // balanced: robust objective on the offline half, plain FQL
            // objective on the online half
            run_rows(0, n_off, disc, pinned);
            run_rows(n_off, batch_size, nullptr, 1.0);
        }
        require_finite(metrics.policy_loss, metrics.step, "policy");
        adam_step(bundle_.opt_policy, bundle_.policy.net, grads);
        if (flow_sum() != omega || disc_sum() != psi)
            throw std::logic_error("policy update touched foreign parameters");
    }

    bundle_.trained_steps += 1;
    step_count_ += 1;
    return metrics;
}

EvalResult evaluate(const NetworkBundle& bundle, const ContinuousCmdpEnv& env, std::size_t episodes,
                    std::uint64_t seed, bool use_bc_flow, std::size_t euler_steps) {
    if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be >= 1");
    std::unique_ptr<ContinuousCmdpEnv> inst = env.clone();
    double successes = 0.0;
    std::vector<double> returns;
    returns.reserve(episodes);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        Rng rng = Rng::derive(seed, 0xe7a1 + ep);
        inst->reset(rng);
        double ret = 0.0;
        for (std::size_t t = 0; t < inst->horizon(); ++t) {
            DenseArray obs({1, bundle.obs_dim}, inst->observation());
            DenseArray z = DenseArray::zeros({1, bundle.action_dim});
            rng.fill_normal(z.data);
            DenseArray act = use_bc_flow ? euler_sample(bundle.velocity, obs, z, euler_steps)
                                         : policy_actions(bundle.policy, obs, z);
            auto result = inst->step(std::span<const double>(act.data), rng);
            ret += result.reward;
            if (result.done) break;
        }
        if (inst->succeeded()) successes += 1.0;
        returns.push_back(ret);
    }
    EvalResult result;
    result.episodes = episodes;
    result.success_rate = successes / static_cast<double>(episodes);
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(episodes);
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    var /= std::max<double>(1.0, static_cast<double>(episodes - 1));
    result.mean_return = mean;
    result.se_return = std::sqrt(var / static_cast<double>(episodes));
    return result;
}

TrainResult train_offline(const TrainConfig& config, const TransitionDataset& data) {
    Trainer trainer(config, data);
    RunMetrics metrics;
    metrics.ensemble_size = config.ensemble_size;

    std::unique_ptr<ContinuousCmdpEnv> env;
    if (!is_tabular_env(config.env_id)) env = make_env(config.env_id, config.seed);

    auto run_eval = [&](std::uint64_t step) {
        if (!env || config.eval_episodes == 0) return;
        EvalResult ev = evaluate(trainer.bundle(), *env, config.eval_episodes, config.seed ^ 0xeba1,
                                 config.mode == TrainMode::kBc, config.euler_steps);
        metrics.evals.push_back({step, ev.success_rate, ev.mean_return, ev.se_return, ev.episodes});
    };

    for (std::size_t k = 0; k < config.grad_steps; ++k) {
        metrics.steps.push_back(trainer.step());
        if (config.eval_every > 0 && (k + 1) % config.eval_every == 0 && k + 1 < config.grad_steps)
            run_eval(k + 1);
    }
    run_eval(config.grad_steps);
    return {std::move(trainer.bundle()), std::move(metrics)};
}

TrainResult train_online(const TrainConfig& config, NetworkBundle bundle,
                         const TransitionDataset& offline_data) {
    config.validate();
    RunMetrics metrics;
    metrics.ensemble_size = config.ensemble_size;
    if (config.online_steps == 0) return {std::move(bundle), std::move(metrics)};

    if (is_tabular_env(config.env_id))
        throw std::invalid_argument("train_online: tabular environments have no online phase");
    std::unique_ptr<ContinuousCmdpEnv> env = make_env(config.env_id, config.seed);
    if (env->observation_dim() != bundle.obs_dim || env->action_dim() != bundle.action_dim)
        throw std::invalid_argument("train_online: env dims do not match the bundle");

    Trainer trainer(config, offline_data);
    trainer.bundle() = std::move(bundle);
    trainer.enter_online_phase();

    const std::size_t min_online = Trainer::balanced_split(config.batch_size).second;
    std::uint64_t episode = 0;
    std::size_t steps_in_episode = 0;
    Rng episode_rng = Rng::derive(config.seed, 0x0a11 + episode);
    env->reset(episode_rng);
    std::vector<double> obs = env->observation();

    for (std::size_t t = 0; t < config.online_steps; ++t) {
        DenseArray obs_row({1, bundle.obs_dim}, obs);
        DenseArray z = DenseArray::zeros({1, bundle.action_dim});
        episode_rng.fill_normal(z.data);
        DenseArray act = policy_actions(trainer.bundle().policy, obs_row, z);
        auto step_result = env->step(std::span<const double>(act.data), episode_rng);
        steps_in_episode += 1;

        TransitionRecord rec;
        rec.episode = episode;
        rec.state = obs;
        rec.action = std::vector<double>(act.data.begin(), act.data.end());
        rec.reward = step_result.reward;
        rec.next_state = env->observation();
        rec.done = step_result.done;
        trainer.add_online_record(rec);

        if (step_result.done || steps_in_episode >= env->horizon()) {
            episode += 1;
            steps_in_episode = 0;
            episode_rng = Rng::derive(config.seed, 0x0a11 + episode);
            env->reset(episode_rng);
        }
        obs = env->observation();

        if (trainer.online_size() >= std::max<std::size_t>(min_online, 1)) {
            for (std::size_t u = 0; u < config.online_updates_per_step; ++u)
                metrics.steps.push_back(trainer.step());
        }
    }

    EvalResult ev = evaluate(trainer.bundle(), *env, std::max<std::size_t>(config.eval_episodes, 1),
                             Rng::derive(config.seed, 0xeba2).next_u64());
    metrics.evals.push_back(
        {trainer.bundle().trained_steps, ev.success_rate, ev.mean_return, ev.se_return, ev.episodes});
    return {std::move(trainer.bundle()), std::move(metrics)};
}

}  // namespace cfql
