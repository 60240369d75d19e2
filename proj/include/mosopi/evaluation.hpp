#pragma once

#include "mosopi/envs.hpp"
#include "mosopi/nn.hpp"
#include "mosopi/policy.hpp"
#include "mosopi/replay_buffer.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace mosopi {

class RunningStats;

/// How (state, action) pairs are fed to a critic network.
enum class CriticInput {
    Concat,      ///< [state; action features]
    OuterProduct ///< state (x) action features; with one-hot states this is a table
};

/// Q(s, a) network. Discrete actions are one-hot encoded.
class QCritic {
public:
    QCritic(Mlp net, ActionSpace actions, CriticInput input = CriticInput::Concat);

    /// Relu hidden layers, linear scalar output.
    static QCritic make(int state_dim, const ActionSpace& actions, const std::vector<int>& hidden, std::mt19937_64& rng);

    Eigen::MatrixXd features(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;
    Eigen::VectorXd values(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;

    const Mlp& net() const { return net_; }
    Mlp& net() { return net_; }
    const ActionSpace& action_space() const { return actions_; }
    CriticInput input() const { return input_; }

private:
    Mlp net_;
    ActionSpace actions_;
    CriticInput input_;
};

/// One critic, or two whose estimates are combined by an elementwise minimum.
class CriticSet {
public:
    CriticSet() = default;
    explicit CriticSet(std::vector<QCritic> members);

    Eigen::VectorXd values(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;

    /// Whole-copy assignment of every member's parameters.
    void copy_parameters_from(const CriticSet& other);

    std::size_t size() const { return members_.size(); }
    QCritic& member(std::size_t i) { return members_.at(i); }
    const QCritic& member(std::size_t i) const { return members_.at(i); }

private:
    std::vector<QCritic> members_;
};

/// Optimizer state for a CriticSet: one Adam per member.
struct CriticOptimizer {
    CriticOptimizer(std::size_t members, double learning_rate, double grad_clip_norm);

    std::vector<Adam> adams;
    double grad_clip_norm; ///< <= 0 disables clipping
};

/// Minibatch regression settings for one approximate Bellman application.
struct RegressionSettings {
    int q_steps = 50;
    int batch_size = 250;
    int n_expect = 8;       ///< next-action samples for continuous policies
    double gamma = 0.99;
    bool full_batch = false; ///< use the whole buffer, in order, at every step
};

/// y_i = r_i + gamma E_{a'~pi(.|s'_i)} targetQ(s'_i, a'); y_i = r_i when terminal.
/// Continuous policies average `n_expect` samples; discrete policies use the
/// exact expectation over actions.
Eigen::VectorXd td_target(const TransitionBatch& batch, const StochasticPolicy& policy, const CriticSet& target,
                          double gamma, int n_expect, std::mt19937_64& rng);

/// E_{a~pi(.|s)} Q(s, a) per column of `states` (MC for continuous policies).
Eigen::VectorXd expected_q(const Eigen::MatrixXd& states, const StochasticPolicy& policy, const CriticSet& q,
                           int n_samples, std::mt19937_64& rng);

/// Mean squared error of one critic against fixed targets, and its gradient
/// with respect to the critic parameters.
struct CriticLoss {
    double loss = 0.0;
    Eigen::VectorXd gradient;
};

CriticLoss critic_loss(const QCritic& critic, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                       const Eigen::VectorXd& targets);

/// Mean squared error gradient step of every member toward `targets`.
/// Returns the mean loss over members.
double regression_step(CriticSet& online, CriticOptimizer& optimizer, const TransitionBatch& batch,
                       const Eigen::VectorXd& targets);

/// q_steps regressions toward td_target with pi and the target held fixed.
/// Throws std::logic_error when the buffer holds fewer than batch_size items.
/// Returns the loss of the last step.
double fit_q_once(CriticSet& online, const CriticSet& target, const StochasticPolicy& policy, const ReplayBuffer& buffer,
                  const RegressionSettings& settings, CriticOptimizer& optimizer, std::mt19937_64& rng,
                  const RunningStats* stats = nullptr);

/// m successive regressions with the policy fixed; the target is overwritten
/// with the online parameters after each one.
double partial_eval_m_regressions(CriticSet& online, CriticSet& target, const StochasticPolicy& policy,
                                  const ReplayBuffer& buffer, int m, const RegressionSettings& settings,
                                  CriticOptimizer& optimizer, std::mt19937_64& rng, const RunningStats* stats = nullptr);

/// Truncated importance weights c_i = min(1, pi(a_i|s_i) / mu(a_i|s_i)).
Eigen::VectorXd retrace_weights(const Eigen::VectorXd& target_log_probs, const Eigen::VectorXd& behavior_log_probs);

/**
 * m-step targets with truncated importance weights over consecutive runs.
 *
 * For every index i of `trajectory`, looks ahead at most m steps without
 * crossing a boundary and evaluates, backwards from the last step,
 *   y_t = r_t                                              if terminal,
 *   y_t = r_t + gamma EQ(s_{t+1})                          at the last step,
 *   y_t = r_t + gamma [c_{t+1} y_{t+1} + (1 - c_{t+1}) EQ(s_{t+1})] otherwise,
 * with EQ(s) = E_{a~pi} q(s, a). With every c = 1 this is the plain m-step
 * return; with m = 1 it is td_target.
 */
Eigen::VectorXd mstep_retrace_targets(const TransitionBatch& trajectory, const StochasticPolicy& policy,
                                      const CriticSet& q, double gamma, int m, int n_expect, std::mt19937_64& rng);

/// One regression of q_steps minibatch steps toward Retrace-corrected m-step
/// targets (the target network is refreshed once at the end).
double fit_q_mstep(CriticSet& online, CriticSet& target, const StochasticPolicy& policy, const ReplayBuffer& buffer,
                   int m, const RegressionSettings& settings, CriticOptimizer& optimizer, std::mt19937_64& rng,
                   const RunningStats* stats = nullptr);

/// A(s,a) = Q(s,a) - (1/n_pol) sum_j Q(s, a_j), a_j ~ pi(.|s).
Eigen::VectorXd mc_advantage(const CriticSet& q, const StochasticPolicy& policy, const Eigen::MatrixXd& states,
                             const Eigen::MatrixXd& actions, int n_pol, std::mt19937_64& rng);

/// Inputs of the eligibility-trace advantage over one collected segment.
struct GaeSegment {
    Eigen::VectorXd rewards;
    Eigen::VectorXd values;      ///< v(s_i)
    Eigen::VectorXd next_values; ///< v(s'_i)
    std::vector<char> terminal;  ///< no bootstrap from s'_i
    std::vector<char> episode_end; ///< the trace stops after step i
};

/// delta_i = r_i + gamma v(s'_i) - v(s_i); A_i = sum_t (gamma lambda)^t delta_{i+t}
/// up to the end of the episode or segment.
Eigen::VectorXd gae_advantage(const GaeSegment& segment, double gamma, double lambda);

} // namespace mosopi
