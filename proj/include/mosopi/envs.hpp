#pragma once

#include "mosopi/mdp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mosopi {

using Rng = std::mt19937_64;

/// Discrete actions carry the index in element 0.
using Action = Eigen::VectorXd;

struct ActionSpace {
    bool discrete = false;
    int n = 0;                 ///< number of discrete actions, or continuous dimension
    Eigen::VectorXd low;       ///< continuous bounds (empty when discrete)
    Eigen::VectorXd high;

    static ActionSpace discrete_space(int n_actions);
    static ActionSpace box(Eigen::VectorXd low, Eigen::VectorXd high);

    /// Width of the action encoding fed to a critic: one-hot size or dimension.
    int feature_dim() const { return n; }
};

struct EnvSpec {
    std::string name;
    int state_dim = 0;
    ActionSpace actions;
    int max_episode_steps = 0;
    double reward_min = 0.0; ///< per-step reward range
    double reward_max = 0.0;
};

/// Physical termination is `terminated`; hitting the step cap is `truncated`.
struct StepResult {
    Eigen::VectorXd next_state;
    double reward = 0.0;
    bool terminated = false;
    bool truncated = false;

    bool done() const { return terminated || truncated; }
};

/// Episodic environment. Deterministic given the seed and the action sequence.
class Environment {
public:
    virtual ~Environment() = default;

    virtual const EnvSpec& spec() const = 0;
    virtual void seed(std::uint64_t seed) = 0;
    virtual Eigen::VectorXd reset() = 0;
    /// Throws std::logic_error when called before reset() or after an episode ended.
    virtual StepResult step(const Action& action) = 0;
    virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Classic cart-pole balancing task with two push actions (-10 N, +10 N).
/// State: (x, x_dot, theta, theta_dot). Euler step of 0.02 s, +1 reward per
/// step, terminates when |x| > 2.4 or |theta| > 12 degrees, capped at 500 steps.
class CartPole final : public Environment {
public:
    static constexpr double kGravity = 9.8;
    static constexpr double kCartMass = 1.0;
    static constexpr double kPoleMass = 0.1;
    static constexpr double kHalfPoleLength = 0.5;
    static constexpr double kForceMagnitude = 10.0;
    static constexpr double kTau = 0.02;
    static constexpr double kXThreshold = 2.4;
    static constexpr double kThetaThreshold = 12.0 * 3.14159265358979323846 / 180.0;
    static constexpr int kMaxSteps = 500;

    explicit CartPole(std::uint64_t seed = 0);

    /// One Euler step of the cart-pole ODE under an arbitrary horizontal force.
    static Eigen::Vector4d integrate(const Eigen::Vector4d& state, double force, double tau = kTau);

    const EnvSpec& spec() const override { return spec_; }
    void seed(std::uint64_t seed) override { rng_.seed(seed); }
    Eigen::VectorXd reset() override;
    StepResult step(const Action& action) override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<CartPole>(*this); }

    /// Puts the system in a given state (tests and diagnostics).
    void set_state(const Eigen::Vector4d& state);

private:
    EnvSpec spec_;
    Rng rng_;
    Eigen::Vector4d state_ = Eigen::Vector4d::Zero();
    int steps_ = 0;
    bool active_ = false;
};

/// Torque-controlled pendulum swing-up. theta = 0 is upright.
/// Observation: (cos theta, sin theta, theta_dot). Torque in [-2, 2],
/// step 0.05 s, horizon 200, reward -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2)
/// with theta wrapped to [-pi, pi). Never terminates, only truncates.
class Pendulum final : public Environment {
public:
    static constexpr double kGravity = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;
    static constexpr double kTau = 0.05;
    static constexpr double kMaxTorque = 2.0;
    static constexpr double kMaxSpeed = 8.0;
    static constexpr int kMaxSteps = 200;

    explicit Pendulum(std::uint64_t seed = 0);

    /// Semi-implicit Euler step on (theta, theta_dot). `clip_speed` applies the
    /// +-8 rad/s velocity limit of the environment.
    static Eigen::Vector2d integrate(const Eigen::Vector2d& state, double torque, double tau = kTau,
                                     bool clip_speed = true);
    /// Mechanical energy of the rod (uniform, pivot at one end, theta = 0 upright).
    static double energy(const Eigen::Vector2d& state);
    static double reward(const Eigen::Vector2d& state, double torque);
    static double wrap_angle(double theta);

    const EnvSpec& spec() const override { return spec_; }
    void seed(std::uint64_t seed) override { rng_.seed(seed); }
    Eigen::VectorXd reset() override;
    StepResult step(const Action& action) override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<Pendulum>(*this); }

    void set_state(const Eigen::Vector2d& state);

private:
    Eigen::VectorXd observe() const;

    EnvSpec spec_;
    Rng rng_;
    Eigen::Vector2d state_ = Eigen::Vector2d::Zero();
    int steps_ = 0;
    bool active_ = false;
};

/// n-state walk. Starts at state 0; action 1 moves right, action 0 moves left
/// (clamped at 0). Reaching state n-1 pays +1 and terminates. Observation is
/// the one-hot state. Truncated after max_steps.
class Chain final : public Environment {
public:
    explicit Chain(int n_states = 10, int max_steps = 0, std::uint64_t seed = 0);

    /// The same walk as a tabular MDP; the goal state is absorbing with zero reward.
    static TabularMdp as_mdp(int n_states, double gamma);

    const EnvSpec& spec() const override { return spec_; }
    void seed(std::uint64_t) override {}
    Eigen::VectorXd reset() override;
    StepResult step(const Action& action) override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<Chain>(*this); }

    int position() const { return position_; }

private:
    EnvSpec spec_;
    int n_states_;
    int position_ = 0;
    int steps_ = 0;
    bool active_ = false;
};

/// Samples a TabularMdp; observations are one-hot states.
class TabularMdpEnv final : public Environment {
public:
    TabularMdpEnv(TabularMdp mdp, int start_state, int max_steps, std::uint64_t seed = 0);

    const EnvSpec& spec() const override { return spec_; }
    void seed(std::uint64_t seed) override { rng_.seed(seed); }
    Eigen::VectorXd reset() override;
    StepResult step(const Action& action) override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularMdpEnv>(*this); }

    const TabularMdp& mdp() const { return mdp_; }

private:
    TabularMdp mdp_;
    EnvSpec spec_;
    Rng rng_;
    int start_state_;
    int state_ = 0;
    int steps_ = 0;
    bool active_ = false;
};

/// Builds an environment by name: "cartpole", "pendulum", "chain".
std::unique_ptr<Environment> make_environment(const std::string& name, std::uint64_t seed);
std::vector<std::string> environment_names();

Eigen::VectorXd one_hot(int index, int size);

enum class RewardDistribution { Uniform01, StandardNormal };

struct RandomMdpParams {
    int n_states = 10;
    int n_actions = 3;
    int branching = 3;
    RewardDistribution rewards = RewardDistribution::Uniform01;
    double gamma = 0.9;
    std::uint64_t seed = 0;
};

/// Garnet-style MDP: every (s,a) reaches `branching` distinct successors drawn
/// uniformly, with Dirichlet(1) probabilities. Deterministic in the seed.
TabularMdp generate_random_mdp(const RandomMdpParams& params);

} // namespace mosopi
