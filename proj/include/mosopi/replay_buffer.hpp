#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <vector>

namespace mosopi {

class RunningStats;

/// One environment step. `terminal` means physical termination (no bootstrap);
/// `episode_end` is also set on time-limit truncation.
struct Transition {
    Eigen::VectorXd state;
    Eigen::VectorXd action;
    double reward = 0.0;
    Eigen::VectorXd next_state;
    bool terminal = false;
    bool episode_end = false;
    double behavior_log_prob = 0.0; ///< log pi_behavior(a|s) at collection time
    long policy_version = 0;        ///< index of the policy that generated the step
};

/// Column-major minibatch. `boundary[i]` marks the last element of a
/// consecutive run (episode end, or the end of a gathered window).
struct TransitionBatch {
    Eigen::MatrixXd states;
    Eigen::MatrixXd actions;
    Eigen::VectorXd rewards;
    Eigen::MatrixXd next_states;
    std::vector<char> terminal;
    std::vector<char> boundary;
    Eigen::VectorXd behavior_log_probs;
    std::vector<long> policy_versions;

    Eigen::Index size() const { return rewards.size(); }
};

/// Fixed-capacity FIFO store of transitions. Index 0 is the oldest item.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition transition);

    std::size_t size() const { return items_.size() < capacity_ ? items_.size() : capacity_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t insert_count() const { return inserted_; }
    bool empty() const { return size() == 0; }
    void clear();

    /// Chronological access, 0 = oldest.
    const Transition& at(std::size_t index) const;

    /// Uniform indices with replacement.
    std::vector<std::size_t> sample_indices(std::size_t n, std::mt19937_64& rng) const;

    /// Builds a batch; states are normalized with `stats` when given.
    TransitionBatch gather(const std::vector<std::size_t>& indices, const RunningStats* stats = nullptr) const;
    TransitionBatch sample(std::size_t n, std::mt19937_64& rng, const RunningStats* stats = nullptr) const;
    TransitionBatch all(const RunningStats* stats = nullptr) const;

    /// For each start index, the run of up to `length` consecutive transitions
    /// that stays inside one episode and inside the stored data. The runs are
    /// concatenated; `starts` receives the offset of every run in the batch.
    TransitionBatch gather_windows(const std::vector<std::size_t>& start_indices, int length,
                                   std::vector<Eigen::Index>& starts, const RunningStats* stats = nullptr) const;

private:
    std::size_t capacity_;
    std::size_t inserted_ = 0;
    std::vector<Transition> items_;
};

} // namespace mosopi
