#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace mosopi {

/// State values, one entry per state (discounted return).
using VTable = Eigen::VectorXd;
/// State-action values, shape (n_states, n_actions).
using QTable = Eigen::MatrixXd;

/// Tolerance used for every row-stochastic check on the tabular side.
inline constexpr double kStochasticTolerance = 1e-12;

/**
 * Finite MDP {S, A, P, r, gamma}.
 *
 * Transitions are stored per action: transition(a) is an (n_states x n_states)
 * row-stochastic matrix with entry (s, s') = P(s'|s, a).
 * Construction validates every invariant and throws std::invalid_argument.
 */
class TabularMdp {
public:
    TabularMdp(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd reward, double gamma);

    int n_states() const { return static_cast<int>(reward_.rows()); }
    int n_actions() const { return static_cast<int>(reward_.cols()); }
    double gamma() const { return gamma_; }

    const Eigen::MatrixXd& transition(int action) const { return transitions_.at(static_cast<std::size_t>(action)); }
    const Eigen::MatrixXd& reward() const { return reward_; }

    /// Copy of this MDP with another discount factor.
    TabularMdp with_gamma(double gamma) const;

private:
    std::vector<Eigen::MatrixXd> transitions_;
    Eigen::MatrixXd reward_;
    double gamma_;
};

/// Row-stochastic (n_states x n_actions) action distribution.
class TabularPolicy {
public:
    explicit TabularPolicy(Eigen::MatrixXd probs);

    static TabularPolicy uniform(int n_states, int n_actions);
    static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);

    int n_states() const { return static_cast<int>(probs_.rows()); }
    int n_actions() const { return static_cast<int>(probs_.cols()); }
    const Eigen::MatrixXd& probs() const { return probs_; }
    double operator()(int state, int action) const { return probs_(state, action); }

    bool is_deterministic() const;
    /// Highest-probability action per state (lowest index on ties).
    std::vector<int> argmax_actions() const;

    friend bool operator==(const TabularPolicy& a, const TabularPolicy& b) { return a.probs_ == b.probs_; }

private:
    Eigen::MatrixXd probs_;
};

/// Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) v(s').
QTable q_from_v(const TabularMdp& mdp, const VTable& v);

/// A(s,a) = Q(s,a) - sum_b pi(b|s) Q(s,b).
QTable advantage(const QTable& q, const TabularPolicy& policy);

/// [T_pi v](s) = sum_a pi(a|s) (r(s,a) + gamma sum_s' P(s'|s,a) v(s')).
VTable bellman_eval(const TabularMdp& mdp, const TabularPolicy& policy, const VTable& v);

/// (T_pi)^n v, applying bellman_eval n times.
VTable bellman_eval_power(const TabularMdp& mdp, const TabularPolicy& policy, const VTable& v, long n);

/// [T v](s) = max_a (r(s,a) + gamma sum_s' P(s'|s,a) v(s')).
VTable bellman_opt(const TabularMdp& mdp, const VTable& v);

/// Deterministic greedy policy w.r.t. v. Ties go to the lowest action index,
/// and T_{greedy(v)} v == T v holds bitwise.
TabularPolicy greedy(const TabularMdp& mdp, const VTable& v);

/// Greedy policy from precomputed backups (same tie-break as greedy()).
TabularPolicy greedy_from_q(const QTable& q);

/// Exact v_pi from a direct solve of (I - gamma P_pi) v = r_pi.
/// Throws std::runtime_error when the fixed-point residual exceeds 1e-10.
VTable policy_value(const TabularMdp& mdp, const TabularPolicy& policy);

/// Policy-averaged reward vector r_pi and transition matrix P_pi.
Eigen::VectorXd policy_reward(const TabularMdp& mdp, const TabularPolicy& policy);
Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const TabularPolicy& policy);

inline double sup_norm(const Eigen::VectorXd& x) { return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff(); }

// Plain-text matrix format:
//   line 1: n_states n_actions gamma
//   then n_states rows of n_actions rewards
//   then one block per action: n_states rows of n_states probabilities P(s'|s,a)
// Blank lines and lines starting with '#' are ignored.
void write_mdp(std::ostream& out, const TabularMdp& mdp);
TabularMdp read_mdp(std::istream& in);
void save_mdp(const std::string& path, const TabularMdp& mdp);
TabularMdp load_mdp(const std::string& path);

} // namespace mosopi
