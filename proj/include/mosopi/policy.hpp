#pragma once

#include "mosopi/envs.hpp"
#include "mosopi/nn.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <vector>

namespace mosopi {

/**
 * Parameterized stochastic policy pi(a|s; w).
 *
 * Batches are column-major. Actions are stored as columns of an action matrix:
 * continuous policies use one row per action dimension, discrete policies a
 * single row holding the action index.
 */
class StochasticPolicy {
public:
    struct Sample {
        Action action;
        double log_prob = 0.0;
    };

    virtual ~StochasticPolicy() = default;

    virtual bool discrete() const = 0;
    virtual int state_dim() const = 0;
    /// Continuous dimension, or the number of discrete actions.
    virtual int action_dim() const = 0;
    /// Rows of the action matrix (1 for discrete policies).
    int action_rows() const { return discrete() ? 1 : action_dim(); }

    virtual Sample sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const = 0;
    /// `per_state` draws for every column of `states`; draws of state i occupy
    /// columns [i * per_state, (i + 1) * per_state).
    virtual Eigen::MatrixXd sample_batch(const Eigen::MatrixXd& states, int per_state, std::mt19937_64& rng) const = 0;

    virtual Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const = 0;
    double log_prob(const Eigen::VectorXd& state, const Action& action) const;

    /// Gradient w.r.t. parameters() of sum_i weights_i * log pi(a_i|s_i).
    virtual Eigen::VectorXd log_prob_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                              const Eigen::VectorXd& weights) const = 0;

    /// Gaussian mean, or the most probable action (lowest index on ties).
    virtual Action mean_action(const Eigen::VectorXd& state) const = 0;
    virtual Eigen::VectorXd entropy_batch(const Eigen::MatrixXd& states) const = 0;

    /// Action probabilities, (n_actions x batch). Discrete policies only.
    virtual Eigen::MatrixXd probabilities(const Eigen::MatrixXd& states) const;

    virtual Eigen::VectorXd parameters() const = 0;
    virtual void set_parameters(const Eigen::VectorXd& params) = 0;
    virtual std::unique_ptr<StochasticPolicy> clone() const = 0;

    virtual void save(std::ostream& out) const = 0;
};

/// Diagonal Gaussian with an Mlp mean and state-independent log-std clamped
/// to [-20, 2]. Parameters are [mean net parameters, raw log-std].
class GaussianPolicy final : public StochasticPolicy {
public:
    static constexpr double kLogStdMin = -20.0;
    static constexpr double kLogStdMax = 2.0;

    GaussianPolicy(Mlp mean_net, Eigen::VectorXd log_std);

    bool discrete() const override { return false; }
    int state_dim() const override { return mean_net_.input_dim(); }
    int action_dim() const override { return mean_net_.output_dim(); }

    Sample sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const override;
    Eigen::MatrixXd sample_batch(const Eigen::MatrixXd& states, int per_state, std::mt19937_64& rng) const override;
    Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const override;
    Eigen::VectorXd log_prob_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                      const Eigen::VectorXd& weights) const override;
    Action mean_action(const Eigen::VectorXd& state) const override;
    Eigen::VectorXd entropy_batch(const Eigen::MatrixXd& states) const override;

    Eigen::VectorXd parameters() const override;
    void set_parameters(const Eigen::VectorXd& params) override;
    std::unique_ptr<StochasticPolicy> clone() const override { return std::make_unique<GaussianPolicy>(*this); }
    void save(std::ostream& out) const override;

    const Mlp& mean_net() const { return mean_net_; }
    Mlp& mean_net() { return mean_net_; }
    /// Effective (clamped) log standard deviations.
    Eigen::VectorXd log_std() const;
    void set_log_std(const Eigen::VectorXd& log_std) { raw_log_std_ = log_std; }

private:
    Mlp mean_net_;
    Eigen::VectorXd raw_log_std_;
};

/// Softmax over Mlp logits.
class CategoricalPolicy final : public StochasticPolicy {
public:
    explicit CategoricalPolicy(Mlp logit_net);

    bool discrete() const override { return true; }
    int state_dim() const override { return logit_net_.input_dim(); }
    int action_dim() const override { return logit_net_.output_dim(); }

    Sample sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const override;
    Eigen::MatrixXd sample_batch(const Eigen::MatrixXd& states, int per_state, std::mt19937_64& rng) const override;
    Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const override;
    Eigen::VectorXd log_prob_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                      const Eigen::VectorXd& weights) const override;
    Action mean_action(const Eigen::VectorXd& state) const override;
    Eigen::VectorXd entropy_batch(const Eigen::MatrixXd& states) const override;
    Eigen::MatrixXd probabilities(const Eigen::MatrixXd& states) const override;

    Eigen::VectorXd parameters() const override { return logit_net_.parameters(); }
    void set_parameters(const Eigen::VectorXd& params) override { logit_net_.set_parameters(params); }
    std::unique_ptr<StochasticPolicy> clone() const override { return std::make_unique<CategoricalPolicy>(*this); }
    void save(std::ostream& out) const override;

    const Mlp& logit_net() const { return logit_net_; }
    Mlp& logit_net() { return logit_net_; }

private:
    Mlp logit_net_;
};

std::unique_ptr<StochasticPolicy> load_policy(std::istream& in);

/// Builds the actor for an action space: tanh hidden layers, linear head.
std::unique_ptr<StochasticPolicy> make_policy(int state_dim, const ActionSpace& actions, const std::vector<int>& hidden,
                                              double initial_log_std, std::mt19937_64& rng);

/// Output of the clipped surrogate.
struct ClipLossResult {
    double loss = 0.0;            ///< -mean_i min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
    Eigen::VectorXd gradient;     ///< w.r.t. policy parameters
    Eigen::VectorXd ratios;
    double clipped_fraction = 0.0;
};

/// Clipped importance-weighted surrogate. Gradients flow through pi_new only;
/// samples on the saturated branch, (A > 0 and rho > 1+eps) or (A < 0 and
/// rho < 1-eps), contribute none. Throws NonFiniteError when a log-ratio
/// exceeds 50 in magnitude.
ClipLossResult ppo_clip_loss(const StochasticPolicy& policy, const Eigen::VectorXd& old_log_probs,
                             const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                             const Eigen::VectorXd& advantages, double epsilon);

} // namespace mosopi
