#include "mosopi/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mosopi {

namespace {

void require_active(bool active, const std::string& name) {
    if (!active) throw std::logic_error(name + ": step() called before reset() or after the episode ended");
}

int discrete_action(const Action& action, int n_actions, const std::string& name) {
    if (action.size() != 1) throw std::invalid_argument(name + ": discrete action must have one element");
    const double raw = action(0);
    const int index = static_cast<int>(std::lround(raw));
    if (index < 0 || index >= n_actions || std::abs(raw - index) > 1e-9) {
        throw std::invalid_argument(name + ": action index out of range");
    }
    return index;
}

} // namespace

ActionSpace ActionSpace::discrete_space(int n_actions) {
    if (n_actions < 1) throw std::invalid_argument("discrete action space needs at least one action");
    ActionSpace space;
    space.discrete = true;
    space.n = n_actions;
    return space;
}

ActionSpace ActionSpace::box(Eigen::VectorXd low, Eigen::VectorXd high) {
    if (low.size() != high.size() || low.size() < 1 || (low.array() > high.array()).any()) {
        throw std::invalid_argument("invalid box bounds");
    }
    ActionSpace space;
    space.discrete = false;
    space.n = static_cast<int>(low.size());
    space.low = std::move(low);
    space.high = std::move(high);
    return space;
}

Eigen::VectorXd one_hot(int index, int size) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(size);
    v(index) = 1.0;
    return v;
}

// ---------------------------------------------------------------- CartPole

CartPole::CartPole(std::uint64_t seed) : rng_(seed) {
    spec_.name = "cartpole";
    spec_.state_dim = 4;
    spec_.actions = ActionSpace::discrete_space(2);
    spec_.max_episode_steps = kMaxSteps;
    spec_.reward_min = 1.0;
    spec_.reward_max = 1.0;
}

Eigen::Vector4d CartPole::integrate(const Eigen::Vector4d& state, double force, double tau) {
    const double x = state(0), x_dot = state(1), theta = state(2), theta_dot = state(3);
    const double total_mass = kCartMass + kPoleMass;
    const double pole_mass_length = kPoleMass * kHalfPoleLength;
    const double cos_theta = std::cos(theta);
    const double sin_theta = std::sin(theta);
    const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_theta) / total_mass;
    const double theta_acc = (kGravity * sin_theta - cos_theta * temp) /
                             (kHalfPoleLength * (4.0 / 3.0 - kPoleMass * cos_theta * cos_theta / total_mass));
    const double x_acc = temp - pole_mass_length * theta_acc * cos_theta / total_mass;
    return {x + tau * x_dot, x_dot + tau * x_acc, theta + tau * theta_dot, theta_dot + tau * theta_acc};
}

Eigen::VectorXd CartPole::reset() {
    std::uniform_real_distribution<double> init(-0.05, 0.05);
    for (int i = 0; i < 4; ++i) state_(i) = init(rng_);
    steps_ = 0;
    active_ = true;
    return state_;
}

void CartPole::set_state(const Eigen::Vector4d& state) {
    state_ = state;
    steps_ = 0;
    active_ = true;
}

StepResult CartPole::step(const Action& action) {
    require_active(active_, spec_.name);
    const int index = discrete_action(action, 2, spec_.name);
    state_ = integrate(state_, index == 1 ? kForceMagnitude : -kForceMagnitude);
    ++steps_;
    StepResult out;
    out.next_state = state_;
    out.reward = 1.0;
    out.terminated = std::abs(state_(0)) > kXThreshold || std::abs(state_(2)) > kThetaThreshold;
    out.truncated = !out.terminated && steps_ >= kMaxSteps;
    active_ = !out.done();
    return out;
}

// ---------------------------------------------------------------- Pendulum

Pendulum::Pendulum(std::uint64_t seed) : rng_(seed) {
    spec_.name = "pendulum";
    spec_.state_dim = 3;
    spec_.actions = ActionSpace::box(Eigen::VectorXd::Constant(1, -kMaxTorque), Eigen::VectorXd::Constant(1, kMaxTorque));
    spec_.max_episode_steps = kMaxSteps;
    spec_.reward_min = -(std::numbers::pi * std::numbers::pi + 0.1 * kMaxSpeed * kMaxSpeed + 0.001 * kMaxTorque * kMaxTorque);
    spec_.reward_max = 0.0;
}

double Pendulum::wrap_angle(double theta) {
    const double two_pi = 2.0 * std::numbers::pi;
    double wrapped = std::fmod(theta + std::numbers::pi, two_pi);
    if (wrapped < 0.0) wrapped += two_pi;
    return wrapped - std::numbers::pi;
}

Eigen::Vector2d Pendulum::integrate(const Eigen::Vector2d& state, double torque, double tau, bool clip_speed) {
    const double theta_acc =
        3.0 * kGravity / (2.0 * kLength) * std::sin(state(0)) + 3.0 / (kMass * kLength * kLength) * torque;
    double theta_dot = state(1) + theta_acc * tau;
    if (clip_speed) theta_dot = std::clamp(theta_dot, -kMaxSpeed, kMaxSpeed);
    return {state(0) + theta_dot * tau, theta_dot};
}

double Pendulum::energy(const Eigen::Vector2d& state) {
    const double inertia = kMass * kLength * kLength / 3.0;
    return 0.5 * inertia * state(1) * state(1) + kMass * kGravity * 0.5 * kLength * std::cos(state(0));
}

double Pendulum::reward(const Eigen::Vector2d& state, double torque) {
    const double theta = wrap_angle(state(0));
    return -(theta * theta + 0.1 * state(1) * state(1) + 0.001 * torque * torque);
}

Eigen::VectorXd Pendulum::observe() const {
    Eigen::VectorXd obs(3);
    obs << std::cos(state_(0)), std::sin(state_(0)), state_(1);
    return obs;
}

Eigen::VectorXd Pendulum::reset() {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    state_(0) = angle(rng_);
    state_(1) = speed(rng_);
    steps_ = 0;
    active_ = true;
    return observe();
}

void Pendulum::set_state(const Eigen::Vector2d& state) {
    state_ = state;
    steps_ = 0;
    active_ = true;
}

StepResult Pendulum::step(const Action& action) {
    require_active(active_, spec_.name);
    if (action.size() != 1 || !std::isfinite(action(0))) throw std::invalid_argument("pendulum: bad action");
    const double torque = std::clamp(action(0), -kMaxTorque, kMaxTorque);
    StepResult out;
    out.reward = reward(state_, torque);
    state_ = integrate(state_, torque);
    ++steps_;
    out.next_state = observe();
    out.terminated = false;
    out.truncated = steps_ >= kMaxSteps;
    active_ = !out.done();
    return out;
}

// ---------------------------------------------------------------- Chain

Chain::Chain(int n_states, int max_steps, std::uint64_t) : n_states_(n_states) {
    if (n_states < 2) throw std::invalid_argument("chain needs at least two states");
    spec_.name = "chain";
    spec_.state_dim = n_states;
    spec_.actions = ActionSpace::discrete_space(2);
    spec_.max_episode_steps = max_steps > 0 ? max_steps : 4 * n_states;
    spec_.reward_min = 0.0;
    spec_.reward_max = 1.0;
}

TabularMdp Chain::as_mdp(int n_states, double gamma) {
    if (n_states < 2) throw std::invalid_argument("chain needs at least two states");
    std::vector<Eigen::MatrixXd> p(2, Eigen::MatrixXd::Zero(n_states, n_states));
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n_states, 2);
    const int goal = n_states - 1;
    for (int s = 0; s < n_states; ++s) {
        if (s == goal) {
            p[0](s, s) = p[1](s, s) = 1.0;
            continue;
        }
        p[0](s, std::max(0, s - 1)) = 1.0;
        p[1](s, s + 1) = 1.0;
        if (s + 1 == goal) r(s, 1) = 1.0;
    }
    return TabularMdp(std::move(p), std::move(r), gamma);
}

Eigen::VectorXd Chain::reset() {
    position_ = 0;
    steps_ = 0;
    active_ = true;
    return one_hot(position_, n_states_);
}

StepResult Chain::step(const Action& action) {
    require_active(active_, spec_.name);
    const int index = discrete_action(action, 2, spec_.name);
    position_ = index == 1 ? position_ + 1 : std::max(0, position_ - 1);
    ++steps_;
    StepResult out;
    out.next_state = one_hot(position_, n_states_);
    out.terminated = position_ == n_states_ - 1;
    out.reward = out.terminated ? 1.0 : 0.0;
    out.truncated = !out.terminated && steps_ >= spec_.max_episode_steps;
    active_ = !out.done();
    return out;
}

// ---------------------------------------------------------------- TabularMdpEnv

TabularMdpEnv::TabularMdpEnv(TabularMdp mdp, int start_state, int max_steps, std::uint64_t seed)
    : mdp_(std::move(mdp)), rng_(seed), start_state_(start_state) {
    if (start_state < 0 || start_state >= mdp_.n_states()) throw std::invalid_argument("start state out of range");
    if (max_steps < 1) throw std::invalid_argument("max_steps must be positive");
    spec_.name = "tabular";
    spec_.state_dim = mdp_.n_states();
    spec_.actions = ActionSpace::discrete_space(mdp_.n_actions());
    spec_.max_episode_steps = max_steps;
    spec_.reward_min = mdp_.reward().minCoeff();
    spec_.reward_max = mdp_.reward().maxCoeff();
}

Eigen::VectorXd TabularMdpEnv::reset() {
    state_ = start_state_;
    steps_ = 0;
    active_ = true;
    return one_hot(state_, mdp_.n_states());
}

StepResult TabularMdpEnv::step(const Action& action) {
    require_active(active_, spec_.name);
    const int a = discrete_action(action, mdp_.n_actions(), spec_.name);
    StepResult out;
    out.reward = mdp_.reward()(state_, a);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double draw = u(rng_);
    const auto row = mdp_.transition(a).row(state_);
    double cumulative = 0.0;
    int next = mdp_.n_states() - 1;
    for (int t = 0; t < mdp_.n_states(); ++t) {
        cumulative += row(t);
        if (draw < cumulative) {
            next = t;
            break;
        }
    }
    state_ = next;
    ++steps_;
    out.next_state = one_hot(state_, mdp_.n_states());
    out.truncated = steps_ >= spec_.max_episode_steps;
    active_ = !out.done();
    return out;
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Environment> make_environment(const std::string& name, std::uint64_t seed) {
    if (name == "cartpole") return std::make_unique<CartPole>(seed);
    if (name == "pendulum") return std::make_unique<Pendulum>(seed);
    if (name == "chain") return std::make_unique<Chain>(10, 0, seed);
    throw std::invalid_argument("unknown environment '" + name + "'");
}

std::vector<std::string> environment_names() { return {"cartpole", "pendulum", "chain"}; }

// ---------------------------------------------------------------- Garnet

TabularMdp generate_random_mdp(const RandomMdpParams& params) {
    if (params.n_states < 1 || params.n_actions < 1) throw std::invalid_argument("random MDP needs states and actions");
    if (params.branching < 1 || params.branching > params.n_states) {
        throw std::invalid_argument("branching must lie in [1, n_states]");
    }
    Rng rng(params.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::exponential_distribution<double> gamma1(1.0); // Gamma(1,1); normalized gives Dirichlet(1)

    const int n = params.n_states;
    std::vector<Eigen::MatrixXd> transitions(static_cast<std::size_t>(params.n_actions), Eigen::MatrixXd::Zero(n, n));
    Eigen::MatrixXd reward(n, params.n_actions);
    std::vector<int> states(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        for (int a = 0; a < params.n_actions; ++a) {
            // partial Fisher-Yates for `branching` distinct successors
            for (int i = 0; i < n; ++i) states[static_cast<std::size_t>(i)] = i;
            for (int i = 0; i < params.branching; ++i) {
                std::uniform_int_distribution<int> pick(i, n - 1);
                std::swap(states[static_cast<std::size_t>(i)], states[static_cast<std::size_t>(pick(rng))]);
            }
            Eigen::VectorXd weights(params.branching);
            for (int i = 0; i < params.branching; ++i) weights(i) = gamma1(rng);
            weights /= weights.sum();
            auto& p = transitions[static_cast<std::size_t>(a)];
            for (int i = 0; i < params.branching; ++i) p(s, states[static_cast<std::size_t>(i)]) = weights(i);
            reward(s, a) = params.rewards == RewardDistribution::Uniform01 ? unit(rng) : normal(rng);
        }
    }
    return TabularMdp(std::move(transitions), std::move(reward), params.gamma);
}

} // namespace mosopi
