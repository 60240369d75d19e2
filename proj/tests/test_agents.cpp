#include "mosopi/agents.hpp"
#include "mosopi/config.hpp"
#include "mosopi/policy.hpp"
#include "mosopi/protocol.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace mosopi;

namespace {

// Small enough to run in well under a second per test.
MoppoConfig tiny_config() {
    MoppoConfig c;
    c.train_freq = 50;
    c.m = 2;
    c.q_steps = 3;
    c.pol_steps = 4;
    c.batch_size = 32;
    c.buffer_size = 500;
    c.actor_hidden = {8};
    c.critic_hidden = {16};
    c.n_expect = 2;
    c.n_pol = 2;
    c.max_steps = 400;
    c.eval_every = 200;
    c.eval_episodes = 1;
    return c;
}

} // namespace

TEST(Config, HopperPresetMatchesTable) {
    const MoppoConfig c = hopper_preset();
    EXPECT_EQ(c.train_freq, 150);
    EXPECT_EQ(c.m, 5);
    EXPECT_EQ(c.q_steps, 50);
    EXPECT_EQ(c.pol_steps, 500);
    EXPECT_EQ(c.clip_ratio, 0.005);
    EXPECT_EQ(c.buffer_size, 20000);
    EXPECT_EQ(c.batch_size, 250);
    EXPECT_TRUE(c.normalize_obs);
    EXPECT_FALSE(c.dual_q);
    EXPECT_EQ(c.critic_lr, 1e-3);
    EXPECT_EQ(c.actor_lr, 1e-4);
    EXPECT_EQ(c.gamma, 0.99);
    EXPECT_TRUE(c.grad_clip);
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesTableRowNames) {
    const std::string text = R"(train_freq: 250
m: 1
q_steps: 500
pol_steps: 500
clip ratio: 0.00005
buffer size: 20k
batch size: 250
normalized obs.: Yes
dual Q-Networks: Yes
optimizer(Q): Adam(1e-3)
optimizer(Policy): Adam(1e-4)
discount factor: 0.99
gradient clipping: No
critic_hidden: [32, 16]
evaluation: mstep_retrace
)";
    const MoppoConfig c = parse_config(text);
    EXPECT_EQ(c.train_freq, 250);
    EXPECT_EQ(c.m, 1);
    EXPECT_EQ(c.q_steps, 500);
    EXPECT_EQ(c.clip_ratio, 0.00005);
    EXPECT_EQ(c.buffer_size, 20000);
    EXPECT_TRUE(c.dual_q);
    EXPECT_FALSE(c.grad_clip);
    EXPECT_EQ(c.critic_lr, 1e-3);
    EXPECT_EQ(c.actor_lr, 1e-4);
    EXPECT_EQ(c.critic_hidden, (std::vector<int>{32, 16}));
    EXPECT_EQ(c.evaluation, EvaluationMode::MstepRetrace);
}

TEST(Config, YamlRoundTripAndErrors) {
    MoppoConfig c = hopper_preset();
    c.entropy_stop_threshold = -2.5;
    c.actor_hidden = {400, 300};
    c.ppo.lambda = 0.9;
    const MoppoConfig back = parse_config(config_to_yaml(c));
    EXPECT_EQ(config_to_yaml(back), config_to_yaml(c));
    EXPECT_TRUE(std::isnan(parse_config(config_to_yaml(MoppoConfig{})).entropy_stop_threshold));

    EXPECT_THROW(parse_config("no_such_key: 1\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("m: 0\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("clip ratio: 0\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("discount factor: 1.0\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("m: three\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("normalized obs.: maybe\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("[1, 2]\n"), std::invalid_argument);
    EXPECT_THROW(parse_config("m: [1\n"), std::invalid_argument);
    EXPECT_THROW(load_config("/nonexistent/config.yaml"), std::runtime_error);

    MoppoConfig d;
    set_config_value(d, "optimizer(Q)", "3e-4");
    EXPECT_EQ(d.critic_lr, 3e-4);
    EXPECT_EQ(get_config_value(d, "optimizer(Q)"), "Adam(0.00029999999999999997)");
    EXPECT_TRUE(has_config_key("train_freq"));
    EXPECT_FALSE(has_config_key("train freq"));
}

TEST(NormalizeObs, ConstantStreamAndFirstObservation) {
    RunningStats fresh(2);
    const Eigen::VectorXd x = Eigen::Vector2d(0.7, -3.0);
    EXPECT_EQ(normalize_obs(x, fresh), x);

    RunningStats stats(2);
    for (int i = 0; i < 100; ++i) stats.update(x);
    EXPECT_EQ(normalize_obs(x, stats), Eigen::VectorXd::Zero(2));
}

TEST(NormalizeObs, GaussianStream) {
    RunningStats stats(1);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal(3.0, 2.0);
    for (int i = 0; i < 10000; ++i) stats.update(Eigen::VectorXd::Constant(1, normal(rng)));
    EXPECT_NEAR(stats.mean()(0), 3.0, 0.1);
    EXPECT_NEAR(stats.std_dev()(0), 2.0, 0.1);
}

TEST(Moppo, UpdatePhasesFollowTrainFreq) {
    MoppoConfig c = tiny_config();
    c.train_freq = 150;
    c.batch_size = 100;
    c.max_steps = 300;
    const Pendulum env;
    const RunLog log = run_moppo(env, c, 1);
    EXPECT_EQ(log.update_steps, (std::vector<long>{150, 300}));
    EXPECT_EQ(log.steps, 300);
    EXPECT_EQ(log.step_rewards.size(), 300u);
    ASSERT_EQ(log.evaluations.size(), 1u);
    EXPECT_EQ(log.evaluations[0].step, 200);
    EXPECT_TRUE(log.failure.empty());
}

TEST(Moppo, NoUpdateBeforeBufferHoldsABatch) {
    MoppoConfig c = tiny_config();
    c.train_freq = 10;
    c.batch_size = 35;
    c.max_steps = 60;
    const RunLog log = run_moppo(Pendulum(), c, 2);
    EXPECT_EQ(log.update_steps, (std::vector<long>{40, 50, 60}));
}

TEST(Moppo, ZeroPolicyStepsLeavePolicyBitwiseUnchanged) {
    MoppoConfig c = tiny_config();
    c.pol_steps = 0;
    int phases = 0;
    run_moppo(Pendulum(), c, 3, [&](const UpdateEvent& e) {
        ++phases;
        EXPECT_TRUE(e.policy_before.size() > 0);
        EXPECT_EQ(e.policy_before, e.policy_after);
    });
    EXPECT_EQ(phases, 8);

    c.pol_steps = 2;
    bool moved = false;
    run_moppo(Pendulum(), c, 3, [&](const UpdateEvent& e) { moved = moved || e.policy_before != e.policy_after; });
    EXPECT_TRUE(moved);
}

TEST(Moppo, PolicyMinibatchesAreOffPolicy) {
    MoppoConfig c = tiny_config();
    const RunLog log = run_moppo(Pendulum(), c, 4);
    EXPECT_GE(log.max_policy_lag, 1);

    // A buffer holding exactly one phase of data is purely on-policy.
    c.buffer_size = c.train_freq;
    c.batch_size = c.train_freq;
    EXPECT_EQ(run_moppo(Pendulum(), c, 4).max_policy_lag, 0);
}

TEST(Moppo, DeterministicGivenSeed) {
    const MoppoConfig c = tiny_config();
    const RunLog a = run_moppo(CartPole(), c, 5);
    const RunLog b = run_moppo(CartPole(), c, 5);
    EXPECT_EQ(a.step_rewards, b.step_rewards);
    ASSERT_EQ(a.evaluations.size(), b.evaluations.size());
    for (std::size_t i = 0; i < a.evaluations.size(); ++i) {
        EXPECT_EQ(a.evaluations[i].mean_action_return, b.evaluations[i].mean_action_return);
    }
    ASSERT_EQ(a.entropy.size(), b.entropy.size());
    for (std::size_t i = 0; i < a.entropy.size(); ++i) EXPECT_EQ(a.entropy[i].entropy, b.entropy[i].entropy);

    const RunLog other = run_moppo(Pendulum(), c, 6);
    const RunLog same_env = run_moppo(Pendulum(), c, 7);
    EXPECT_NE(other.step_rewards, same_env.step_rewards);
}

TEST(Moppo, EntropyStopHaltsLearning) {
    MoppoConfig c = tiny_config();
    c.entropy_stop_threshold = 100.0;
    const RunLog log = run_moppo(Pendulum(), c, 8);
    EXPECT_TRUE(log.stopped_on_entropy);
    EXPECT_EQ(log.update_steps.size(), 1u);
    EXPECT_EQ(log.steps, log.update_steps.front());

    EXPECT_EQ(resolved_entropy_threshold(MoppoConfig{}, ActionSpace::box(Eigen::VectorXd::Constant(3, -1.0),
                                                                           Eigen::VectorXd::Constant(3, 1.0))),
              -3.0);
}

TEST(Moppo, StopsAtTargetReturn) {
    MoppoConfig c = tiny_config();
    c.stop_at_return = -1e9;
    const RunLog log = run_moppo(Pendulum(), c, 9);
    EXPECT_TRUE(log.reached_target);
    EXPECT_EQ(log.steps, c.eval_every);
}

TEST(Moppo, RetraceModeAndDualCriticsRun) {
    MoppoConfig c = tiny_config();
    c.evaluation = EvaluationMode::MstepRetrace;
    c.dual_q = true;
    const RunLog log = run_moppo(CartPole(), c, 10);
    EXPECT_TRUE(log.failure.empty());
    EXPECT_EQ(log.update_steps.size(), 8u);
}

TEST(Moppo, DivergenceIsReportedNotThrown) {
    MoppoConfig c = tiny_config();
    c.actor_lr = 1e6;
    c.grad_clip = false;
    c.clip_ratio = 1e6;
    c.pol_steps = 50;
    const RunLog log = run_moppo(Pendulum(), c, 12);
    EXPECT_FALSE(log.failure.empty());
    EXPECT_LT(log.steps, c.max_steps);
}

TEST(Ppo, CollectsFixedHorizonsAndIsDeterministic) {
    MoppoConfig c = tiny_config();
    c.ppo.horizon = 128;
    c.ppo.epochs = 2;
    c.ppo.minibatch = 32;
    c.max_steps = 400;
    const RunLog a = run_ppo(CartPole(), c, 13);
    EXPECT_EQ(a.update_steps, (std::vector<long>{128, 256, 384, 400}));
    EXPECT_EQ(a.algo, "ppo");
    const RunLog b = run_ppo(CartPole(), c, 13);
    EXPECT_EQ(a.step_rewards, b.step_rewards);
    ASSERT_EQ(a.evaluations.size(), 2u);
    EXPECT_EQ(a.evaluations[1].mean_action_return, b.evaluations[1].mean_action_return);
}

TEST(Protocol, DeterministicPolicyOnDeterministicEnv) {
    std::mt19937_64 rng(14);
    const auto policy = make_policy(6, ActionSpace::discrete_space(2), {8}, 0.0, rng);
    const Chain env(6, 30);
    const double one = evaluate_mean_action(*policy, env, nullptr, 1, 1);
    EXPECT_EQ(evaluate_mean_action(*policy, env, nullptr, 7, 99), one);
}

TEST(Protocol, EvaluationLeavesStatisticsAlone) {
    std::mt19937_64 rng(15);
    const auto policy = make_policy(3, ActionSpace::box(Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)),
                                    {8}, 0.0, rng);
    RunningStats stats(3);
    stats.update(Eigen::Vector3d(1.0, 0.0, 0.5));
    stats.update(Eigen::Vector3d(0.0, 1.0, -0.5));
    const RunningStats before = stats;
    const Pendulum env(3);
    const double a = evaluate_mean_action(*policy, env, &stats, 2, 5);
    EXPECT_EQ(stats.count(), before.count());
    EXPECT_EQ(stats.mean(), before.mean());
    EXPECT_EQ(evaluate_mean_action(*policy, env, &stats, 2, 5), a);
}

TEST(Protocol, Top10EdgeCasesAndMonotonicity) {
    Top10Tracker t;
    EXPECT_TRUE(std::isnan(t.mean()));
    EXPECT_EQ(t.add(3.0, 1000), 3.0);
    EXPECT_EQ(t.add(-1.0, 2000), 1.0);
    EXPECT_EQ(t.add(4.0, 3000), 2.0);

    std::mt19937_64 rng(16);
    std::normal_distribution<double> normal(0.0, 10.0);
    for (int stream = 0; stream < 50; ++stream) {
        Top10Tracker tracker;
        std::vector<double> seen;
        double previous = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 60; ++i) {
            const double s = normal(rng);
            seen.push_back(s);
            const double mean = tracker.add(s, i);
            // A partial set averages everything seen, so only a full set is monotone.
            if (i >= 10) EXPECT_GE(mean, previous);
            previous = mean;
            std::vector<double> sorted = seen;
            std::sort(sorted.rbegin(), sorted.rend());
            sorted.resize(std::min<std::size_t>(sorted.size(), 10));
            double expect = 0.0;
            for (const double v : sorted) expect += v;
            EXPECT_NEAR(mean, expect / static_cast<double>(sorted.size()), 1e-12);
        }
        EXPECT_EQ(tracker.entries().size(), 10u);
    }
}

TEST(Protocol, Top10KeepsPolicySnapshots) {
    std::mt19937_64 rng(17);
    auto policy = make_policy(2, ActionSpace::discrete_space(2), {4}, 0.0, rng);
    Top10Tracker t;
    const Eigen::VectorXd first = policy->parameters();
    t.add(5.0, 1000, policy.get());
    policy->set_parameters(first * 2.0);
    t.add(1.0, 2000, policy.get());
    ASSERT_EQ(t.entries().size(), 2u);
    EXPECT_EQ(t.entries()[0].policy->parameters(), first);
    EXPECT_EQ(t.entries()[1].policy->parameters(), first * 2.0);

    EvalProtocol top{ProtocolKind::Top10Average, 1};
    EXPECT_THROW(evaluate(*policy, Chain(4, 10), nullptr, top, 0), std::invalid_argument);
    EXPECT_EQ(parse_protocol(protocol_name(ProtocolKind::Top10Average)), ProtocolKind::Top10Average);
    EXPECT_THROW(parse_protocol("best"), std::invalid_argument);
}
