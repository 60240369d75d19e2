#include "mosopi/envs.hpp"
#include "mosopi/schemes.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace mosopi;

namespace {

Action push(int index) { return Eigen::VectorXd::Constant(1, index); }

Action torque(double u) { return Eigen::VectorXd::Constant(1, u); }

// Closed-form rod energy with theta = 0 upright.
double rod_energy(double theta, double theta_dot) {
    const double inertia = Pendulum::kMass * Pendulum::kLength * Pendulum::kLength / 3.0;
    return 0.5 * inertia * theta_dot * theta_dot +
           Pendulum::kMass * Pendulum::kGravity * 0.5 * Pendulum::kLength * std::cos(theta);
}

// Largest per-step energy change over `steps` zero-torque steps without the speed clip.
double max_energy_step(double tau, int steps) {
    Eigen::Vector2d state(2.0, 0.5);
    double worst = 0.0;
    for (int i = 0; i < steps; ++i) {
        const Eigen::Vector2d next = Pendulum::integrate(state, 0.0, tau, false);
        worst = std::max(worst, std::abs(rod_energy(next(0), next(1)) - rod_energy(state(0), state(1))));
        state = next;
    }
    return worst;
}

std::vector<double> rollout(Environment& env, std::uint64_t seed, int steps) {
    std::mt19937_64 actions(seed + 1000);
    env.seed(seed);
    std::vector<double> trace;
    Eigen::VectorXd obs = env.reset();
    trace.insert(trace.end(), obs.data(), obs.data() + obs.size());
    for (int i = 0; i < steps; ++i) {
        Action a(1);
        if (env.spec().actions.discrete) {
            a(0) = static_cast<double>(actions() % static_cast<std::uint64_t>(env.spec().actions.n));
        } else {
            a(0) = std::uniform_real_distribution<double>(-3.0, 3.0)(actions);
        }
        const StepResult r = env.step(a);
        trace.push_back(r.reward);
        trace.insert(trace.end(), r.next_state.data(), r.next_state.data() + r.next_state.size());
        if (r.done()) {
            obs = env.reset();
            trace.insert(trace.end(), obs.data(), obs.data() + obs.size());
        }
    }
    return trace;
}

} // namespace

TEST(Garnet, BranchingOneIsDeterministic) {
    RandomMdpParams params;
    params.branching = 1;
    params.seed = 3;
    const TabularMdp mdp = generate_random_mdp(params);
    for (int a = 0; a < mdp.n_actions(); ++a) {
        for (int s = 0; s < mdp.n_states(); ++s) {
            EXPECT_EQ(mdp.transition(a).row(s).maxCoeff(), 1.0);
            EXPECT_EQ((mdp.transition(a).row(s).array() > 0.0).count(), 1);
        }
    }
}

TEST(Garnet, SameSeedSameMdp) {
    RandomMdpParams params;
    params.seed = 42;
    params.rewards = RewardDistribution::StandardNormal;
    const TabularMdp a = generate_random_mdp(params);
    const TabularMdp b = generate_random_mdp(params);
    EXPECT_EQ(a.reward(), b.reward());
    for (int k = 0; k < a.n_actions(); ++k) EXPECT_EQ(a.transition(k), b.transition(k));
    params.seed = 43;
    EXPECT_NE(generate_random_mdp(params).reward(), a.reward());
}

TEST(Garnet, BranchingAndRewardRange) {
    RandomMdpParams params;
    params.n_states = 15;
    params.n_actions = 4;
    params.branching = 5;
    params.seed = 8;
    const TabularMdp mdp = generate_random_mdp(params);
    EXPECT_GE(mdp.reward().minCoeff(), 0.0);
    EXPECT_LE(mdp.reward().maxCoeff(), 1.0);
    for (int a = 0; a < 4; ++a) {
        for (int s = 0; s < 15; ++s) EXPECT_EQ((mdp.transition(a).row(s).array() > 0.0).count(), 5);
    }
    params.branching = 16;
    EXPECT_THROW(generate_random_mdp(params), std::invalid_argument);
    params.branching = 0;
    EXPECT_THROW(generate_random_mdp(params), std::invalid_argument);
}

TEST(Garnet, PolicyIterationAgreesWithValueIteration) {
    RandomMdpParams params;
    params.seed = 9;
    const TabularMdp mdp = generate_random_mdp(params);
    const SchemeTrace trace = run_pi(mdp, VTable::Zero(10));
    EXPECT_LT(sup_norm(trace.final_value() - oracle::value_iteration(mdp)), 1e-8);
}

TEST(CartPole, EquilibriumIsFixedPoint) {
    const Eigen::Vector4d rest = Eigen::Vector4d::Zero();
    Eigen::Vector4d state = rest;
    for (int i = 0; i < 100; ++i) state = CartPole::integrate(state, 0.0);
    EXPECT_LT((state - rest).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(CartPole, PushAcceleratesCartAndTipsPole) {
    const Eigen::Vector4d next = CartPole::integrate(Eigen::Vector4d::Zero(), CartPole::kForceMagnitude);
    // Hand-derived first step from rest: x_acc = F / (M + m) corrected by the pole
    // coupling; theta_acc = -cos(0) * F/(M+m) / (l (4/3 - m/(M+m))).
    const double total = CartPole::kCartMass + CartPole::kPoleMass;
    const double temp = CartPole::kForceMagnitude / total;
    const double theta_acc = -temp / (CartPole::kHalfPoleLength * (4.0 / 3.0 - CartPole::kPoleMass / total));
    const double x_acc = temp - CartPole::kPoleMass * CartPole::kHalfPoleLength * theta_acc / total;
    EXPECT_NEAR(next(1), CartPole::kTau * x_acc, 1e-15);
    EXPECT_NEAR(next(3), CartPole::kTau * theta_acc, 1e-15);
    EXPECT_EQ(next(0), 0.0); // Euler: position moves with the old velocity
}

TEST(CartPole, TerminationAndRewards) {
    CartPole env(1);
    env.reset();
    env.set_state(Eigen::Vector4d(2.39, 5.0, 0.0, 0.0));
    const StepResult r = env.step(push(1));
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_TRUE(r.terminated);
    EXPECT_FALSE(r.truncated);
    EXPECT_THROW(env.step(push(0)), std::logic_error);

    CartPole fresh(1);
    EXPECT_THROW(fresh.step(push(0)), std::logic_error);
    fresh.reset();
    EXPECT_THROW(fresh.step(push(2)), std::invalid_argument);
}

TEST(CartPole, ResetDrawsSmallState) {
    CartPole env(5);
    for (int i = 0; i < 50; ++i) {
        const Eigen::VectorXd obs = env.reset();
        ASSERT_EQ(obs.size(), 4);
        EXPECT_LE(obs.cwiseAbs().maxCoeff(), 0.05);
    }
}

TEST(CartPole, TruncatesAtCap) {
    // A linear state-feedback controller keeps the pole up for the whole episode.
    CartPole env(2);
    Eigen::VectorXd obs = env.reset();
    StepResult r;
    int steps = 0;
    do {
        const double score = 0.1 * obs(0) + 0.5 * obs(1) + 10.0 * obs(2) + 2.0 * obs(3);
        r = env.step(push(score > 0.0 ? 1 : 0));
        obs = r.next_state;
        ++steps;
    } while (!r.done());
    EXPECT_EQ(steps, CartPole::kMaxSteps);
    EXPECT_TRUE(r.truncated);
    EXPECT_FALSE(r.terminated);
}

TEST(Pendulum, UprightAtRestHasMaximalReward) {
    EXPECT_EQ(Pendulum::reward(Eigen::Vector2d(0.0, 0.0), 0.0), 0.0);
    Pendulum env(0);
    env.reset();
    env.set_state(Eigen::Vector2d(0.0, 0.0));
    const StepResult r = env.step(torque(0.0));
    EXPECT_EQ(r.reward, 0.0);
    EXPECT_EQ(r.next_state(0), 1.0);
    EXPECT_EQ(r.next_state(1), 0.0);
}

TEST(Pendulum, EnergyAccessorMatchesClosedForm) {
    for (const double theta : {0.0, 0.7, 2.5, -1.2}) {
        for (const double speed : {0.0, 1.5, -3.0}) {
            EXPECT_NEAR(Pendulum::energy(Eigen::Vector2d(theta, speed)), rod_energy(theta, speed), 1e-12);
        }
    }
}

TEST(Pendulum, EnergyDriftIsFirstOrderInStep) {
    const double tau = Pendulum::kTau;
    const double coarse = max_energy_step(tau, 200);
    const double fine = max_energy_step(tau / 2.0, 400);
    // Per-step change bounded by tau times the scale m g l (1 + max speed).
    const double scale = Pendulum::kMass * Pendulum::kGravity * Pendulum::kLength * (1.0 + 8.0);
    EXPECT_LE(coarse, tau * scale);
    // Halving the step at least halves the per-step error, up to a small margin.
    EXPECT_LE(fine, 0.55 * coarse);
}

TEST(Pendulum, TorqueIsClippedAndSpeedBounded) {
    Pendulum a(0);
    Pendulum b(0);
    a.reset();
    b.reset();
    a.set_state(Eigen::Vector2d(1.0, 0.0));
    b.set_state(Eigen::Vector2d(1.0, 0.0));
    const StepResult ra = a.step(torque(7.0));
    const StepResult rb = b.step(torque(2.0));
    EXPECT_EQ(ra.next_state, rb.next_state);
    EXPECT_EQ(ra.reward, rb.reward);

    const Eigen::Vector2d fast = Pendulum::integrate(Eigen::Vector2d(1.5, 7.9), 2.0);
    EXPECT_EQ(fast(1), Pendulum::kMaxSpeed);
}

TEST(Pendulum, TruncatesAfterHorizonWithoutTermination) {
    Pendulum env(4);
    env.reset();
    int steps = 0;
    StepResult r;
    do {
        r = env.step(torque(0.3));
        ++steps;
        EXPECT_FALSE(r.terminated);
        EXPECT_GE(r.reward, env.spec().reward_min);
        EXPECT_LE(r.reward, env.spec().reward_max);
    } while (!r.done());
    EXPECT_EQ(steps, Pendulum::kMaxSteps);
    EXPECT_TRUE(r.truncated);
}

TEST(Pendulum, WrapAngleRange) {
    EXPECT_NEAR(Pendulum::wrap_angle(3.0 * std::numbers::pi / 2.0), -std::numbers::pi / 2.0, 1e-12);
    EXPECT_NEAR(Pendulum::wrap_angle(-3.0 * std::numbers::pi / 2.0), std::numbers::pi / 2.0, 1e-12);
    EXPECT_EQ(Pendulum::wrap_angle(0.25), 0.25);
}

TEST(Chain, WalkReachesGoal) {
    Chain env(5);
    Eigen::VectorXd obs = env.reset();
    EXPECT_EQ(obs, one_hot(0, 5));
    StepResult r = env.step(push(0));
    EXPECT_EQ(env.position(), 0);
    for (int i = 0; i < 3; ++i) {
        r = env.step(push(1));
        EXPECT_EQ(r.reward, 0.0);
    }
    r = env.step(push(1));
    EXPECT_EQ(r.reward, 1.0);
    EXPECT_TRUE(r.terminated);
    EXPECT_EQ(r.next_state, one_hot(4, 5));
}

TEST(Chain, TruncatesAtStepCap) {
    Chain env(5, 3);
    env.reset();
    StepResult r;
    for (int i = 0; i < 3; ++i) r = env.step(push(0));
    EXPECT_TRUE(r.truncated);
    EXPECT_FALSE(r.terminated);
}

TEST(Chain, TabularFormMatchesWalk) {
    const TabularMdp mdp = Chain::as_mdp(6, 0.9);
    Chain env(6, 100);
    for (int start = 0; start < 5; ++start) {
        for (int a = 0; a < 2; ++a) {
            env.reset();
            for (int i = 0; i < start; ++i) env.step(push(1));
            const StepResult r = env.step(push(a));
            const int next = env.position();
            EXPECT_EQ(mdp.transition(a)(start, next), 1.0);
            EXPECT_EQ(mdp.reward()(start, a), r.reward);
        }
    }
    // Goal state is absorbing and pays nothing.
    EXPECT_EQ(mdp.transition(0)(5, 5), 1.0);
    EXPECT_EQ(mdp.reward()(5, 1), 0.0);
}

TEST(TabularMdpEnv, EmpiricalTransitionsMatchMatrix) {
    RandomMdpParams params;
    params.n_states = 4;
    params.n_actions = 2;
    params.seed = 10;
    const TabularMdp mdp = generate_random_mdp(params);
    TabularMdpEnv env(mdp, 2, 1, 11);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        env.reset();
        const StepResult r = env.step(push(1));
        Eigen::Index next = 0;
        r.next_state.maxCoeff(&next);
        counts(next) += 1.0;
        EXPECT_EQ(r.reward, mdp.reward()(2, 1));
        EXPECT_TRUE(r.truncated);
    }
    for (int t = 0; t < 4; ++t) {
        const double p = mdp.transition(1)(2, t);
        const double sd = std::sqrt(p * (1.0 - p) / draws);
        EXPECT_NEAR(counts(t) / draws, p, 5.0 * sd + 1e-12);
    }
}

TEST(Environments, DeterministicGivenSeedAndActions) {
    for (const std::string& name : environment_names()) {
        auto a = make_environment(name, 0);
        auto b = make_environment(name, 0);
        EXPECT_EQ(rollout(*a, 17, 600), rollout(*b, 17, 600)) << name;
        auto c = a->clone();
        EXPECT_EQ(rollout(*c, 17, 50), rollout(*b, 17, 50)) << name;
    }
    EXPECT_THROW(make_environment("hopper", 0), std::invalid_argument);
}

TEST(Environments, RewardsWithinDeclaredRange) {
    for (const std::string& name : environment_names()) {
        auto env = make_environment(name, 3);
        std::mt19937_64 rng(3);
        env->reset();
        for (int i = 0; i < 2000; ++i) {
            Action act(1);
            act(0) = env->spec().actions.discrete ? static_cast<double>(rng() % 2) : 2.0 * std::sin(0.1 * i);
            const StepResult r = env->step(act);
            EXPECT_GE(r.reward, env->spec().reward_min) << name;
            EXPECT_LE(r.reward, env->spec().reward_max) << name;
            EXPECT_EQ(r.next_state.size(), env->spec().state_dim);
            if (r.done()) env->reset();
        }
    }
}
