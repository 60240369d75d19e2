#pragma once

#include "mosopi/config.hpp"
#include "mosopi/envs.hpp"
#include "mosopi/running_stats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mosopi {

struct EpisodeRecord {
    long end_step = 0;
    double episode_return = 0.0;
};

struct EvalRecord {
    long step = 0;
    double mean_action_return = 0.0; ///< current policy, mean action
    double top10_average = 0.0;      ///< mean of the best (up to) ten scores so far
};

struct EntropyRecord {
    long step = 0;
    double entropy = 0.0;
};

/// Everything a training run reports. Entries are only ever appended.
struct RunLog {
    std::string algo;
    std::string env;
    std::uint64_t seed = 0;

    std::vector<double> step_rewards;
    std::vector<EpisodeRecord> episodes;
    std::vector<EvalRecord> evaluations;
    std::vector<EntropyRecord> entropy;
    std::vector<long> update_steps;

    long steps = 0;
    /// Largest (current version - generating version) over transitions used in
    /// policy-gradient minibatches.
    long max_policy_lag = 0;
    bool stopped_on_entropy = false;
    bool reached_target = false;
    std::string failure; ///< non-empty when the run was aborted
    double wall_clock_seconds = 0.0;
};

/// Parameters of the actor around one update phase.
struct UpdateEvent {
    long step = 0;
    long phase = 0;
    Eigen::VectorXd policy_before;
    Eigen::VectorXd policy_after;
    long max_lag = 0; ///< lag of the oldest transition used by this phase's policy steps
};

using UpdateHook = std::function<void(const UpdateEvent&)>;

/// Entropy threshold actually used for a run (resolves the NaN default).
double resolved_entropy_threshold(const MoppoConfig& config, const ActionSpace& actions);

/// MoPPO. Each environment step is stored in a FIFO buffer; whenever
/// t % train_freq == 0 and the buffer holds at least batch_size transitions,
/// the critic is partially evaluated for the current policy, then pol_steps
/// clipped-surrogate steps are taken against Monte-Carlo advantages from the
/// target critic and the phase-start policy, which is then replaced.
RunLog run_moppo(const Environment& env, const MoppoConfig& config, std::uint64_t seed,
                 const UpdateHook& hook = nullptr);

/// On-policy PPO: fixed-horizon rollouts, lambda-return value regression,
/// GAE advantages, clipped-surrogate epochs, data discarded after use.
RunLog run_ppo(const Environment& env, const MoppoConfig& config, std::uint64_t seed);

/// (s - mean) / max(std, 1e-8) with the given running statistics.
Eigen::VectorXd normalize_obs(const Eigen::VectorXd& state, const RunningStats& stats);

} // namespace mosopi
