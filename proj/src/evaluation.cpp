#include "mosopi/evaluation.hpp"

#include "mosopi/running_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mosopi {

namespace {

Eigen::MatrixXd repeat_columns(const Eigen::MatrixXd& m, int times) {
    Eigen::MatrixXd out(m.rows(), m.cols() * times);
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        for (int j = 0; j < times; ++j) out.col(i * times + j) = m.col(i);
    }
    return out;
}

// Mean of consecutive groups of `group` entries.
Eigen::VectorXd group_means(const Eigen::VectorXd& values, int group) {
    const Eigen::Index n = values.size() / group;
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = values.segment(i * group, group).mean();
    return out;
}

} // namespace

// ---------------------------------------------------------------- critics

QCritic::QCritic(Mlp net, ActionSpace actions, CriticInput input)
    : net_(std::move(net)), actions_(std::move(actions)), input_(input) {
    if (net_.output_dim() != 1) throw std::invalid_argument("critic network must have a scalar output");
}

QCritic QCritic::make(int state_dim, const ActionSpace& actions, const std::vector<int>& hidden, std::mt19937_64& rng) {
    Mlp net = Mlp::make(state_dim + actions.feature_dim(), hidden, 1, Activation::Relu);
    net.initialize(rng);
    return QCritic(std::move(net), actions, CriticInput::Concat);
}

Eigen::MatrixXd QCritic::features(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
    if (states.cols() != actions.cols()) throw std::invalid_argument("critic: state and action batches differ in size");
    const int action_dim = actions_.feature_dim();
    Eigen::MatrixXd encoded;
    if (actions_.discrete) {
        if (actions.rows() != 1) throw std::invalid_argument("critic: discrete actions must be a single row");
        encoded = Eigen::MatrixXd::Zero(action_dim, actions.cols());
        for (Eigen::Index i = 0; i < actions.cols(); ++i) {
            const long index = std::lround(actions(0, i));
            if (index < 0 || index >= action_dim) throw std::invalid_argument("critic: discrete action out of range");
            encoded(index, i) = 1.0;
        }
    } else {
        if (actions.rows() != action_dim) throw std::invalid_argument("critic: action dimension mismatch");
        encoded = actions;
    }
    if (input_ == CriticInput::Concat) {
        Eigen::MatrixXd out(states.rows() + action_dim, states.cols());
        out << states, encoded;
        return out;
    }
    Eigen::MatrixXd out(states.rows() * action_dim, states.cols());
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
        for (int a = 0; a < action_dim; ++a) {
            out.col(i).segment(a * states.rows(), states.rows()) = encoded(a, i) * states.col(i);
        }
    }
    return out;
}

Eigen::VectorXd QCritic::values(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
    return net_.forward_batch(features(states, actions)).row(0).transpose();
}

CriticSet::CriticSet(std::vector<QCritic> members) : members_(std::move(members)) {
    if (members_.empty()) throw std::invalid_argument("critic set needs at least one critic");
}

Eigen::VectorXd CriticSet::values(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
    if (members_.empty()) throw std::logic_error("empty critic set");
    Eigen::VectorXd out = members_.front().values(states, actions);
    for (std::size_t i = 1; i < members_.size(); ++i) out = out.cwiseMin(members_[i].values(states, actions));
    return out;
}

void CriticSet::copy_parameters_from(const CriticSet& other) {
    if (other.size() != size()) throw std::invalid_argument("critic sets differ in size");
    for (std::size_t i = 0; i < members_.size(); ++i) {
        members_[i].net().set_parameters(other.members_[i].net().parameters());
    }
}

CriticOptimizer::CriticOptimizer(std::size_t members, double learning_rate, double grad_clip_norm)
    : adams(members, Adam(learning_rate)), grad_clip_norm(grad_clip_norm) {}

// ---------------------------------------------------------------- regression

Eigen::VectorXd expected_q(const Eigen::MatrixXd& states, const StochasticPolicy& policy, const CriticSet& q,
                           int n_samples, std::mt19937_64& rng) {
    if (policy.discrete()) {
        const Eigen::MatrixXd probs = policy.probabilities(states);
        Eigen::VectorXd out = Eigen::VectorXd::Zero(states.cols());
        for (int a = 0; a < policy.action_dim(); ++a) {
            const Eigen::MatrixXd actions = Eigen::MatrixXd::Constant(1, states.cols(), a);
            out.array() += probs.row(a).transpose().array() * q.values(states, actions).array();
        }
        return out;
    }
    if (n_samples < 1) throw std::invalid_argument("need at least one action sample");
    const Eigen::MatrixXd actions = policy.sample_batch(states, n_samples, rng);
    return group_means(q.values(repeat_columns(states, n_samples), actions), n_samples);
}

Eigen::VectorXd td_target(const TransitionBatch& batch, const StochasticPolicy& policy, const CriticSet& target,
                          double gamma, int n_expect, std::mt19937_64& rng) {
    if (batch.size() == 0) throw std::invalid_argument("td_target: empty batch");
    const Eigen::VectorXd next = expected_q(batch.next_states, policy, target, n_expect, rng);
    Eigen::VectorXd y = batch.rewards;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!batch.terminal[static_cast<std::size_t>(i)]) y(i) += gamma * next(i);
    }
    return y;
}

CriticLoss critic_loss(const QCritic& critic, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                       const Eigen::VectorXd& targets) {
    if (targets.size() != states.cols()) throw std::invalid_argument("critic_loss: target count differs from batch");
    const auto n = static_cast<double>(targets.size());
    const ForwardPass pass = critic.net().forward_record(critic.features(states, actions));
    const Eigen::RowVectorXd error = pass.output().row(0) - targets.transpose();
    CriticLoss out;
    out.loss = error.squaredNorm() / n;
    if (!std::isfinite(out.loss)) throw NonFiniteError("critic regression loss is not finite");
    out.gradient = critic.net().backward(pass, 2.0 * error / n);
    return out;
}

double regression_step(CriticSet& online, CriticOptimizer& optimizer, const TransitionBatch& batch,
                       const Eigen::VectorXd& targets) {
    if (optimizer.adams.size() != online.size()) throw std::invalid_argument("one optimizer per critic is required");
    double total_loss = 0.0;
    for (std::size_t k = 0; k < online.size(); ++k) {
        CriticLoss result = critic_loss(online.member(k), batch.states, batch.actions, targets);
        total_loss += result.loss;
        if (optimizer.grad_clip_norm > 0.0) {
            result.gradient = clip_gradients(std::move(result.gradient), optimizer.grad_clip_norm);
        }
        optimizer.adams[k].step(online.member(k).net().parameters(), result.gradient);
    }
    return total_loss / static_cast<double>(online.size());
}

double fit_q_once(CriticSet& online, const CriticSet& target, const StochasticPolicy& policy, const ReplayBuffer& buffer,
                  const RegressionSettings& settings, CriticOptimizer& optimizer, std::mt19937_64& rng,
                  const RunningStats* stats) {
    if (settings.q_steps < 1 || settings.batch_size < 1) throw std::invalid_argument("q_steps and batch_size must be >= 1");
    if (buffer.size() < static_cast<std::size_t>(settings.batch_size)) {
        throw std::logic_error("fit_q_once: replay buffer holds " + std::to_string(buffer.size()) +
                               " transitions, fewer than the batch size " + std::to_string(settings.batch_size));
    }
    double loss = 0.0;
    if (settings.full_batch) {
        const TransitionBatch batch = buffer.all(stats);
        const Eigen::VectorXd y = td_target(batch, policy, target, settings.gamma, settings.n_expect, rng);
        for (int step = 0; step < settings.q_steps; ++step) loss = regression_step(online, optimizer, batch, y);
        return loss;
    }
    for (int step = 0; step < settings.q_steps; ++step) {
        const TransitionBatch batch = buffer.sample(static_cast<std::size_t>(settings.batch_size), rng, stats);
        const Eigen::VectorXd y = td_target(batch, policy, target, settings.gamma, settings.n_expect, rng);
        loss = regression_step(online, optimizer, batch, y);
    }
    return loss;
}

double partial_eval_m_regressions(CriticSet& online, CriticSet& target, const StochasticPolicy& policy,
                                  const ReplayBuffer& buffer, int m, const RegressionSettings& settings,
                                  CriticOptimizer& optimizer, std::mt19937_64& rng, const RunningStats* stats) {
    if (m < 1) throw std::invalid_argument("m must be at least 1");
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        loss = fit_q_once(online, target, policy, buffer, settings, optimizer, rng, stats);
        target.copy_parameters_from(online);
    }
    return loss;
}

// ---------------------------------------------------------------- m-step returns

Eigen::VectorXd retrace_weights(const Eigen::VectorXd& target_log_probs, const Eigen::VectorXd& behavior_log_probs) {
    if (target_log_probs.size() != behavior_log_probs.size()) throw std::invalid_argument("log-prob vectors differ in size");
    Eigen::VectorXd out(target_log_probs.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double log_ratio = target_log_probs(i) - behavior_log_probs(i);
        out(i) = log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
    }
    return out;
}

Eigen::VectorXd mstep_retrace_targets(const TransitionBatch& trajectory, const StochasticPolicy& policy,
                                      const CriticSet& q, double gamma, int m, int n_expect, std::mt19937_64& rng) {
    if (m < 1) throw std::invalid_argument("m must be at least 1");
    const Eigen::Index n = trajectory.size();
    if (n == 0) throw std::invalid_argument("mstep_retrace_targets: empty trajectory");
    const Eigen::VectorXd next_value = expected_q(trajectory.next_states, policy, q, n_expect, rng);
    const Eigen::VectorXd c =
        retrace_weights(policy.log_prob_batch(trajectory.states, trajectory.actions), trajectory.behavior_log_probs);

    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index last = i;
        while (last - i + 1 < m && !trajectory.boundary[static_cast<std::size_t>(last)] && last + 1 < n) ++last;
        double y = trajectory.rewards(last);
        if (!trajectory.terminal[static_cast<std::size_t>(last)]) y += gamma * next_value(last);
        for (Eigen::Index t = last - 1; t >= i; --t) {
            y = trajectory.rewards(t) + gamma * (c(t + 1) * y + (1.0 - c(t + 1)) * next_value(t));
        }
        out(i) = y;
    }
    return out;
}

double fit_q_mstep(CriticSet& online, CriticSet& target, const StochasticPolicy& policy, const ReplayBuffer& buffer,
                   int m, const RegressionSettings& settings, CriticOptimizer& optimizer, std::mt19937_64& rng,
                   const RunningStats* stats) {
    if (buffer.size() < static_cast<std::size_t>(settings.batch_size)) {
        throw std::logic_error("fit_q_mstep: replay buffer holds fewer transitions than the batch size");
    }
    // The targets depend only on the frozen target critic, the fixed policy and
    // the stored data, so each start index is computed once per regression.
    std::vector<double> cached(buffer.size(), std::numeric_limits<double>::quiet_NaN());
    double loss = 0.0;
    std::vector<Eigen::Index> starts;
    for (int step = 0; step < settings.q_steps; ++step) {
        const auto indices = buffer.sample_indices(static_cast<std::size_t>(settings.batch_size), rng);
        std::vector<std::size_t> missing;
        for (const std::size_t idx : indices) {
            if (std::isnan(cached[idx])) {
                missing.push_back(idx);
                cached[idx] = 0.0; // claimed; duplicates in this batch are computed once
            }
        }
        if (!missing.empty()) {
            const TransitionBatch windows = buffer.gather_windows(missing, m, starts, stats);
            const Eigen::VectorXd all_targets = mstep_retrace_targets(windows, policy, target, settings.gamma, m,
                                                                      settings.n_expect, rng);
            for (std::size_t k = 0; k < missing.size(); ++k) cached[missing[k]] = all_targets(starts[k]);
        }
        const TransitionBatch batch = buffer.gather(indices, stats);
        Eigen::VectorXd y(static_cast<Eigen::Index>(indices.size()));
        for (std::size_t k = 0; k < indices.size(); ++k) y(static_cast<Eigen::Index>(k)) = cached[indices[k]];
        loss = regression_step(online, optimizer, batch, y);
    }
    target.copy_parameters_from(online);
    return loss;
}

// ---------------------------------------------------------------- advantages

Eigen::VectorXd mc_advantage(const CriticSet& q, const StochasticPolicy& policy, const Eigen::MatrixXd& states,
                             const Eigen::MatrixXd& actions, int n_pol, std::mt19937_64& rng) {
    if (n_pol < 1) throw std::invalid_argument("n_pol must be at least 1");
    const Eigen::VectorXd q_taken = q.values(states, actions);
    const Eigen::MatrixXd sampled = policy.sample_batch(states, n_pol, rng);
    const Eigen::VectorXd baseline = group_means(q.values(repeat_columns(states, n_pol), sampled), n_pol);
    return q_taken - baseline;
}

Eigen::VectorXd gae_advantage(const GaeSegment& segment, double gamma, double lambda) {
    const Eigen::Index n = segment.rewards.size();
    if (segment.values.size() != n || segment.next_values.size() != n ||
        segment.terminal.size() != static_cast<std::size_t>(n) || segment.episode_end.size() != static_cast<std::size_t>(n)) {
        throw std::invalid_argument("gae_advantage: segment arrays differ in length");
    }
    Eigen::VectorXd adv(n);
    double running = 0.0;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        const auto idx = static_cast<std::size_t>(i);
        const double bootstrap = segment.terminal[idx] ? 0.0 : gamma * segment.next_values(i);
        const double delta = segment.rewards(i) + bootstrap - segment.values(i);
        const bool cut = segment.episode_end[idx] || i == n - 1;
        running = delta + (cut ? 0.0 : gamma * lambda * running);
        adv(i) = running;
    }
    return adv;
}

} // namespace mosopi
