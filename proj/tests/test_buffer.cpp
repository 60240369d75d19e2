#include "mosopi/replay_buffer.hpp"
#include "mosopi/running_stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mosopi;

namespace {

Transition numbered(int id, bool episode_end = false) {
    Transition t;
    t.state = Eigen::VectorXd::Constant(2, id);
    t.action = Eigen::VectorXd::Constant(1, id % 3);
    t.reward = id;
    t.next_state = Eigen::VectorXd::Constant(2, id + 1);
    t.episode_end = episode_end;
    t.terminal = episode_end;
    t.behavior_log_prob = -0.1 * id;
    t.policy_version = id / 10;
    return t;
}

// Chi-square critical value at p = 0.001 for 99 degrees of freedom.
constexpr double kChiSquare99 = 148.23035916510173;

} // namespace

TEST(ReplayBuffer, EvictsOldestFirst) {
    ReplayBuffer buffer(5);
    for (int i = 0; i < 8; ++i) buffer.push(numbered(i));
    EXPECT_EQ(buffer.size(), 5u);
    EXPECT_EQ(buffer.insert_count(), 8u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(buffer.at(i).reward, static_cast<double>(i + 3));
    EXPECT_THROW(buffer.at(5), std::out_of_range);
    buffer.clear();
    EXPECT_TRUE(buffer.empty());
    EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
    std::mt19937_64 rng(0);
    EXPECT_THROW(buffer.sample_indices(1, rng), std::logic_error);
}

TEST(ReplayBuffer, UniformSamplingPassesChiSquare) {
    ReplayBuffer buffer(100);
    for (int i = 0; i < 250; ++i) buffer.push(numbered(i));
    std::mt19937_64 rng(1);
    const int draws = 100000;
    std::vector<int> counts(100, 0);
    for (const std::size_t idx : buffer.sample_indices(draws, rng)) ++counts[idx];
    const double expected = draws / 100.0;
    double stat = 0.0;
    for (const int c : counts) stat += (c - expected) * (c - expected) / expected;
    EXPECT_LT(stat, kChiSquare99);
    for (const int c : counts) EXPECT_GT(c, 0);
}

TEST(ReplayBuffer, GatherCopiesFieldsAndNormalizes) {
    ReplayBuffer buffer(10);
    for (int i = 0; i < 4; ++i) buffer.push(numbered(i, i == 1));
    const TransitionBatch batch = buffer.gather({3, 1});
    EXPECT_EQ(batch.size(), 2);
    EXPECT_EQ(batch.rewards(0), 3.0);
    EXPECT_EQ(batch.states(0, 1), 1.0);
    EXPECT_EQ(batch.next_states(1, 0), 4.0);
    EXPECT_EQ(batch.actions(0, 0), 0.0);
    EXPECT_TRUE(batch.terminal[1]);
    EXPECT_FALSE(batch.terminal[0]);
    EXPECT_DOUBLE_EQ(batch.behavior_log_probs(0), -0.3);

    RunningStats stats(2);
    stats.update(Eigen::Vector2d(0.0, 0.0));
    stats.update(Eigen::Vector2d(2.0, 4.0));
    const TransitionBatch norm = buffer.gather({3}, &stats);
    EXPECT_DOUBLE_EQ(norm.states(0, 0), (3.0 - 1.0) / 1.0);
    EXPECT_DOUBLE_EQ(norm.states(1, 0), (3.0 - 2.0) / 2.0);
    EXPECT_EQ(buffer.all().size(), 4);
}

TEST(ReplayBuffer, WindowsStopAtEpisodeEndsAndNewestItem) {
    ReplayBuffer buffer(20);
    for (int i = 0; i < 10; ++i) buffer.push(numbered(i, i == 4));
    std::vector<Eigen::Index> starts;
    const TransitionBatch w = buffer.gather_windows({0, 3, 8, 5}, 3, starts);
    ASSERT_EQ(starts.size(), 4u);
    EXPECT_EQ(starts, (std::vector<Eigen::Index>{0, 3, 5, 7}));
    // windows: [0,1,2] [3,4] [8,9] [5,6,7]
    const std::vector<double> rewards{0, 1, 2, 3, 4, 8, 9, 5, 6, 7};
    ASSERT_EQ(w.size(), 10);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(w.rewards(i), rewards[static_cast<std::size_t>(i)]);
    const std::vector<char> boundary{0, 0, 1, 0, 1, 0, 1, 0, 0, 1};
    EXPECT_EQ(w.boundary, boundary);
    EXPECT_THROW(buffer.gather_windows({0}, 0, starts), std::invalid_argument);
}

TEST(RunningStats, ConvergesToDistributionMoments) {
    RunningStats stats(1);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(3.0, 2.0);
    for (int i = 0; i < 100000; ++i) stats.update(Eigen::VectorXd::Constant(1, normal(rng)));
    EXPECT_NEAR(stats.mean()(0), 3.0, 0.02);
    EXPECT_NEAR(stats.std_dev()(0), 2.0, 0.02);
}

TEST(RunningStats, MatchesTwoPassMoments) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 50.0);
    std::vector<Eigen::VectorXd> xs;
    RunningStats stats(3);
    for (int i = 0; i < 500; ++i) {
        xs.emplace_back(Eigen::Vector3d(u(rng), u(rng), 1e3 + u(rng)));
        stats.update(xs.back());
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
    for (const auto& x : xs) mean += x;
    mean /= 500.0;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(3);
    for (const auto& x : xs) var.array() += (x - mean).array().square();
    var /= 500.0;
    EXPECT_LT((stats.mean() - mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((stats.std_dev() - var.cwiseSqrt()).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::VectorXd z = stats.normalize(xs.front());
    EXPECT_LT((z - ((xs.front() - mean).array() / var.cwiseSqrt().array()).matrix()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RunningStats, IdentityBeforeDataAndFlooredStd) {
    RunningStats stats(2);
    const Eigen::VectorXd x = Eigen::Vector2d(1.5, -2.0);
    EXPECT_EQ(stats.normalize(x), x);
    stats.update(Eigen::Vector2d(4.0, 4.0));
    stats.update(Eigen::Vector2d(4.0, 4.0));
    EXPECT_TRUE(stats.normalize(x).allFinite());
    EXPECT_THROW(stats.update(Eigen::VectorXd::Zero(3)), std::invalid_argument);
}
