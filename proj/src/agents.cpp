#include "mosopi/agents.hpp"

#include "mosopi/evaluation.hpp"
#include "mosopi/nn.hpp"
#include "mosopi/policy.hpp"
#include "mosopi/protocol.hpp"
#include "mosopi/replay_buffer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace mosopi {

namespace {

using Clock = std::chrono::steady_clock;

// Evaluation episodes use their own seeds so that they never consume the
// training random stream.
std::uint64_t eval_seed(std::uint64_t seed, long index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void check_dims(const Environment& env, const MoppoConfig& config) {
    config.validate();
    if (env.spec().state_dim < 1) throw std::invalid_argument("environment has no state dimensions");
}

/// Bookkeeping shared by both agents: episode returns, observation
/// statistics and the periodic evaluations.
class Recorder {
public:
    Recorder(const Environment& env, const MoppoConfig& config, std::uint64_t seed, const std::string& algo)
        : env_(env), config_(config), seed_(seed), stats_(env.spec().state_dim) {
        log_.algo = algo;
        log_.env = env.spec().name;
        log_.seed = seed;
        start_ = Clock::now();
    }

    RunningStats& stats() { return stats_; }
    const RunningStats* stats_ptr() const { return config_.normalize_obs ? &stats_ : nullptr; }
    RunLog& log() { return log_; }

    Eigen::VectorXd input(const Eigen::VectorXd& state) const {
        return config_.normalize_obs ? stats_.normalize(state) : state;
    }

    void observe(const Eigen::VectorXd& state) {
        if (config_.normalize_obs) stats_.update(state);
    }

    void record_step(long t, const StepResult& r) {
        log_.steps = t;
        log_.step_rewards.push_back(r.reward);
        episode_return_ += r.reward;
        if (r.done()) {
            log_.episodes.push_back({t, episode_return_});
            episode_return_ = 0.0;
        }
    }

    /// Evaluates on schedule; returns true when the target return is reached.
    bool maybe_evaluate(long t, const StochasticPolicy& policy) {
        if (t % config_.eval_every != 0) return false;
        const long index = t / config_.eval_every;
        const double score =
            evaluate_mean_action(policy, env_, stats_ptr(), config_.eval_episodes, eval_seed(seed_, index));
        const double top = top10_.add(score, t, &policy, stats_ptr());
        log_.evaluations.push_back({t, score, top});
        if (score >= config_.stop_at_return) {
            log_.reached_target = true;
            return true;
        }
        return false;
    }

    RunLog finish() {
        log_.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start_).count();
        return std::move(log_);
    }

private:
    const Environment& env_;
    const MoppoConfig& config_;
    std::uint64_t seed_;
    RunningStats stats_;
    Top10Tracker top10_;
    RunLog log_;
    double episode_return_ = 0.0;
    Clock::time_point start_;
};

Eigen::VectorXd maybe_clip(const Eigen::VectorXd& grad, const MoppoConfig& config) {
    return config.grad_clip ? clip_gradients(grad, config.grad_clip_norm) : grad;
}

void policy_step(StochasticPolicy& policy, Adam& adam, const Eigen::VectorXd& grad, const MoppoConfig& config) {
    Eigen::VectorXd params = policy.parameters();
    adam.step(params, maybe_clip(grad, config));
    policy.set_parameters(params);
}

CriticSet make_critics(const Environment& env, const MoppoConfig& config, std::mt19937_64& rng) {
    std::vector<QCritic> members;
    const int count = config.dual_q ? 2 : 1;
    for (int i = 0; i < count; ++i) {
        members.push_back(QCritic::make(env.spec().state_dim, env.spec().actions, config.critic_hidden, rng));
    }
    return CriticSet(std::move(members));
}

/// Advantages and phase-start log-probabilities, computed on first use of a
/// buffer index and reused for the rest of the phase (both depend only on the
/// frozen target critic and the frozen phase-start policy).
class PhaseCache {
public:
    PhaseCache(const ReplayBuffer& buffer, const CriticSet& q, const StochasticPolicy& old_policy,
               const RunningStats* stats, int n_pol)
        : buffer_(buffer), q_(q), old_(old_policy), stats_(stats), n_pol_(n_pol) {}

    void fill(const std::vector<std::size_t>& indices, std::mt19937_64& rng) {
        std::vector<std::size_t> missing;
        for (const std::size_t i : indices) {
            if (!known_.count(i) && std::find(missing.begin(), missing.end(), i) == missing.end()) missing.push_back(i);
        }
        if (missing.empty()) return;
        const TransitionBatch batch = buffer_.gather(missing, stats_);
        const Eigen::VectorXd adv = mc_advantage(q_, old_, batch.states, batch.actions, n_pol_, rng);
        const Eigen::VectorXd logp = old_.log_prob_batch(batch.states, batch.actions);
        for (std::size_t k = 0; k < missing.size(); ++k) {
            known_[missing[k]] = {adv(static_cast<Eigen::Index>(k)), logp(static_cast<Eigen::Index>(k))};
        }
    }

    double advantage(std::size_t i) const { return known_.at(i).first; }
    double old_log_prob(std::size_t i) const { return known_.at(i).second; }

private:
    const ReplayBuffer& buffer_;
    const CriticSet& q_;
    const StochasticPolicy& old_;
    const RunningStats* stats_;
    int n_pol_;
    std::unordered_map<std::size_t, std::pair<double, double>> known_;
};

} // namespace

Eigen::VectorXd normalize_obs(const Eigen::VectorXd& state, const RunningStats& stats) { return stats.normalize(state); }

double resolved_entropy_threshold(const MoppoConfig& config, const ActionSpace& actions) {
    if (!std::isnan(config.entropy_stop_threshold)) return config.entropy_stop_threshold;
    // Categorical entropies are non-negative; only an explicit threshold applies.
    return actions.discrete ? -std::numeric_limits<double>::infinity() : -1.0 * actions.n;
}

RunLog run_moppo(const Environment& env_prototype, const MoppoConfig& config, std::uint64_t seed,
                 const UpdateHook& hook) {
    check_dims(env_prototype, config);
    std::unique_ptr<Environment> env = env_prototype.clone();
    env->seed(seed);
    std::mt19937_64 rng(seed);
    const EnvSpec& spec = env->spec();

    std::unique_ptr<StochasticPolicy> policy =
        make_policy(spec.state_dim, spec.actions, config.actor_hidden, config.initial_log_std, rng);
    std::unique_ptr<StochasticPolicy> pi_old = policy->clone();
    CriticSet online = make_critics(*env, config, rng);
    CriticSet target = online;
    const double clip_norm = config.grad_clip ? config.grad_clip_norm : 0.0;
    CriticOptimizer critic_opt(online.size(), config.critic_lr, clip_norm);
    Adam actor_opt(config.actor_lr);
    ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_size));
    const double entropy_stop = resolved_entropy_threshold(config, spec.actions);

    RegressionSettings settings;
    settings.q_steps = config.q_steps;
    settings.batch_size = config.batch_size;
    settings.n_expect = config.n_expect;
    settings.gamma = config.gamma;

    Recorder rec(env_prototype, config, seed, "moppo");
    long version = 0;
    long phase = 0;

    try {
        Eigen::VectorXd state = env->reset();
        rec.observe(state);
        for (long t = 1; t <= config.max_steps; ++t) {
            const StochasticPolicy::Sample sample = policy->sample(rec.input(state), rng);
            const StepResult r = env->step(sample.action);
            Transition tr;
            tr.state = state;
            tr.action = sample.action;
            tr.reward = r.reward;
            tr.next_state = r.next_state;
            tr.terminal = r.terminated;
            tr.episode_end = r.done();
            tr.behavior_log_prob = sample.log_prob;
            tr.policy_version = version;
            buffer.push(std::move(tr));
            rec.record_step(t, r);
            // The next state is carried forward as the new current state.
            state = r.done() ? env->reset() : r.next_state;
            rec.observe(state);

            bool stop = false;
            if (t % config.train_freq == 0 && buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
                const RunningStats frozen = rec.stats();
                const RunningStats* stats = config.normalize_obs ? &frozen : nullptr;
                UpdateEvent event;
                event.step = t;
                event.phase = phase;
                if (hook) event.policy_before = policy->parameters();

                if (config.evaluation == EvaluationMode::Regressions) {
                    partial_eval_m_regressions(online, target, *policy, buffer, config.m, settings, critic_opt, rng,
                                               stats);
                } else {
                    RegressionSettings budget = settings;
                    budget.q_steps = config.q_steps * config.m;
                    fit_q_mstep(online, target, *policy, buffer, config.m, budget, critic_opt, rng, stats);
                }

                PhaseCache cache(buffer, target, *pi_old, stats, config.n_pol);
                const auto batch_n = static_cast<std::size_t>(config.batch_size);
                for (int step = 0; step < config.pol_steps; ++step) {
                    const std::vector<std::size_t> idx = buffer.sample_indices(batch_n, rng);
                    cache.fill(idx, rng);
                    const TransitionBatch batch = buffer.gather(idx, stats);
                    Eigen::VectorXd adv(static_cast<Eigen::Index>(batch_n));
                    Eigen::VectorXd old_logp(static_cast<Eigen::Index>(batch_n));
                    for (std::size_t k = 0; k < batch_n; ++k) {
                        adv(static_cast<Eigen::Index>(k)) = cache.advantage(idx[k]);
                        old_logp(static_cast<Eigen::Index>(k)) = cache.old_log_prob(idx[k]);
                        event.max_lag = std::max(event.max_lag, version - batch.policy_versions[k]);
                    }
                    const ClipLossResult loss =
                        ppo_clip_loss(*policy, old_logp, batch.states, batch.actions, adv, config.clip_ratio);
                    policy_step(*policy, actor_opt, loss.gradient, config);
                }
                rec.log().max_policy_lag = std::max(rec.log().max_policy_lag, event.max_lag);

                pi_old = policy->clone();
                ++version;
                ++phase;
                rec.log().update_steps.push_back(t);

                const TransitionBatch probe = buffer.sample(batch_n, rng, stats);
                const double entropy = policy->entropy_batch(probe.states).mean();
                rec.log().entropy.push_back({t, entropy});
                if (hook) {
                    event.policy_after = policy->parameters();
                    hook(event);
                }
                if (entropy < entropy_stop) {
                    rec.log().stopped_on_entropy = true;
                    stop = true;
                }
            }
            if (rec.maybe_evaluate(t, *policy)) stop = true;
            if (stop) break;
        }
    } catch (const NonFiniteError& e) {
        rec.log().failure = std::string("non-finite value: ") + e.what();
    }
    return rec.finish();
}

RunLog run_ppo(const Environment& env_prototype, const MoppoConfig& config, std::uint64_t seed) {
    check_dims(env_prototype, config);
    std::unique_ptr<Environment> env = env_prototype.clone();
    env->seed(seed);
    std::mt19937_64 rng(seed);
    const EnvSpec& spec = env->spec();
    const PpoSettings& ppo = config.ppo;

    std::unique_ptr<StochasticPolicy> policy =
        make_policy(spec.state_dim, spec.actions, config.actor_hidden, config.initial_log_std, rng);
    Mlp value = Mlp::make(spec.state_dim, config.critic_hidden, 1, Activation::Relu);
    value.initialize(rng);
    Adam actor_opt(ppo.actor_lr);
    Adam value_opt(ppo.value_lr);

    Recorder rec(env_prototype, config, seed, "ppo");
    const int rows = policy->action_rows();
    const int dim = spec.state_dim;

    try {
        Eigen::VectorXd state = env->reset();
        rec.observe(state);
        long t = 0;
        bool stop = false;
        while (!stop && t < config.max_steps) {
            const int horizon = static_cast<int>(std::min<long>(ppo.horizon, config.max_steps - t));
            Eigen::MatrixXd states(dim, horizon);
            Eigen::MatrixXd next_states(dim, horizon);
            Eigen::MatrixXd actions(rows, horizon);
            GaeSegment seg;
            seg.rewards.resize(horizon);
            seg.terminal.assign(static_cast<std::size_t>(horizon), 0);
            seg.episode_end.assign(static_cast<std::size_t>(horizon), 0);
            int collected = 0;
            for (int i = 0; i < horizon; ++i) {
                ++t;
                const StochasticPolicy::Sample sample = policy->sample(rec.input(state), rng);
                const StepResult r = env->step(sample.action);
                states.col(i) = state;
                actions.col(i) = sample.action;
                next_states.col(i) = r.next_state;
                seg.rewards(i) = r.reward;
                seg.terminal[static_cast<std::size_t>(i)] = r.terminated;
                seg.episode_end[static_cast<std::size_t>(i)] = r.done();
                rec.record_step(t, r);
                state = r.done() ? env->reset() : r.next_state;
                rec.observe(state);
                ++collected;
                if (rec.maybe_evaluate(t, *policy)) {
                    stop = true;
                    break;
                }
            }
            if (stop) break;
            seg.episode_end.back() = 1;

            const RunningStats* stats = rec.stats_ptr();
            const Eigen::MatrixXd s_in = stats ? stats->normalize_batch(states) : states;
            const Eigen::MatrixXd next_in = stats ? stats->normalize_batch(next_states) : next_states;
            seg.values = value.forward_batch(s_in).row(0).transpose();
            seg.next_values = value.forward_batch(next_in).row(0).transpose();
            const Eigen::VectorXd adv = gae_advantage(seg, config.gamma, ppo.lambda);
            const Eigen::VectorXd returns = adv + seg.values;
            const double adv_mean = adv.mean();
            const double adv_std = std::sqrt((adv.array() - adv_mean).square().mean());
            const Eigen::VectorXd adv_n = (adv.array() - adv_mean) / std::max(adv_std, 1e-8);
            const Eigen::VectorXd old_logp = policy->log_prob_batch(s_in, actions);

            std::vector<Eigen::Index> order(static_cast<std::size_t>(collected));
            std::iota(order.begin(), order.end(), 0);
            for (int epoch = 0; epoch < ppo.epochs; ++epoch) {
                std::shuffle(order.begin(), order.end(), rng);
                for (int begin = 0; begin < collected; begin += ppo.minibatch) {
                    const int n = std::min(ppo.minibatch, collected - begin);
                    Eigen::MatrixXd mb_s(dim, n);
                    Eigen::MatrixXd mb_a(rows, n);
                    Eigen::VectorXd mb_adv(n), mb_old(n), mb_ret(n);
                    for (int k = 0; k < n; ++k) {
                        const Eigen::Index j = order[static_cast<std::size_t>(begin + k)];
                        mb_s.col(k) = s_in.col(j);
                        mb_a.col(k) = actions.col(j);
                        mb_adv(k) = adv_n(j);
                        mb_old(k) = old_logp(j);
                        mb_ret(k) = returns(j);
                    }
                    const ClipLossResult loss = ppo_clip_loss(*policy, mb_old, mb_s, mb_a, mb_adv, ppo.clip_ratio);
                    policy_step(*policy, actor_opt, loss.gradient, config);

                    const ForwardPass pass = value.forward_record(mb_s);
                    const Eigen::RowVectorXd err = pass.output().row(0) - mb_ret.transpose();
                    const double value_loss = err.squaredNorm() / n;
                    if (!std::isfinite(value_loss)) throw NonFiniteError("value loss is not finite");
                    const Eigen::VectorXd grad = value.backward(pass, 2.0 * err / n);
                    value_opt.step(value.parameters(), maybe_clip(grad, config));
                }
            }
            rec.log().update_steps.push_back(t);
            rec.log().entropy.push_back({t, policy->entropy_batch(s_in).mean()});
        }
    } catch (const NonFiniteError& e) {
        rec.log().failure = std::string("non-finite value: ") + e.what();
    }
    return rec.finish();
}

} // namespace mosopi
