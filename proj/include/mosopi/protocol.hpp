#pragma once

#include "mosopi/envs.hpp"
#include "mosopi/policy.hpp"
#include "mosopi/running_stats.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mosopi {

enum class ProtocolKind { MeanActionEvery1000, Top10Average };

std::string protocol_name(ProtocolKind kind);
ProtocolKind parse_protocol(const std::string& name);

struct EvalProtocol {
    ProtocolKind kind = ProtocolKind::MeanActionEvery1000;
    int episodes = 5;
};

/// Mean undiscounted return of `episodes` mean-action episodes on a private
/// copy of `env` seeded with `seed`. `stats` (may be null) is read, never updated.
double evaluate_mean_action(const StochasticPolicy& policy, const Environment& env, const RunningStats* stats,
                            int episodes, std::uint64_t seed);

/// Keeps the ten best evaluation scores seen so far together with a snapshot
/// of the policy (and normalization statistics) that produced each of them.
class Top10Tracker {
public:
    static constexpr std::size_t kCapacity = 10;

    struct Entry {
        double score = 0.0;
        long step = 0;
        std::shared_ptr<const StochasticPolicy> policy;
        RunningStats stats;
    };

    /// Records a score and returns the mean of the retained best scores.
    double add(double score, long step, const StochasticPolicy* policy = nullptr, const RunningStats* stats = nullptr);
    /// Mean of the retained scores; NaN before the first one.
    double mean() const;
    const std::vector<Entry>& entries() const { return best_; }

private:
    std::vector<Entry> best_; ///< sorted by descending score
};

/// Applies `protocol` at one evaluation point: the mean-action return, or the
/// updated top-10 mean.
double evaluate(const StochasticPolicy& policy, const Environment& env, const RunningStats* stats,
                const EvalProtocol& protocol, std::uint64_t seed, Top10Tracker* tracker = nullptr, long step = 0);

} // namespace mosopi
