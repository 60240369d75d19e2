#include "mosopi/protocol.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace mosopi {

std::string protocol_name(ProtocolKind kind) {
    return kind == ProtocolKind::MeanActionEvery1000 ? "mean_action_every_1000" : "top10_average";
}

ProtocolKind parse_protocol(const std::string& name) {
    if (name == "mean_action_every_1000") return ProtocolKind::MeanActionEvery1000;
    if (name == "top10_average") return ProtocolKind::Top10Average;
    throw std::invalid_argument("unknown evaluation protocol '" + name + "'");
}

double evaluate_mean_action(const StochasticPolicy& policy, const Environment& env, const RunningStats* stats,
                            int episodes, std::uint64_t seed) {
    if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
    std::unique_ptr<Environment> copy = env.clone();
    copy->seed(seed);
    double total = 0.0;
    for (int e = 0; e < episodes; ++e) {
        Eigen::VectorXd state = copy->reset();
        for (;;) {
            const Eigen::VectorXd input = stats != nullptr ? stats->normalize(state) : state;
            const StepResult r = copy->step(policy.mean_action(input));
            total += r.reward;
            if (r.done()) break;
            state = r.next_state;
        }
    }
    return total / episodes;
}

double Top10Tracker::add(double score, long step, const StochasticPolicy* policy, const RunningStats* stats) {
    const bool qualifies = best_.size() < kCapacity || score > best_.back().score;
    if (qualifies) {
        Entry entry;
        entry.score = score;
        entry.step = step;
        if (policy != nullptr) entry.policy = policy->clone();
        if (stats != nullptr) entry.stats = *stats;
        // Stable: among equal scores the earlier policy stays ahead.
        const auto pos = std::upper_bound(best_.begin(), best_.end(), score,
                                          [](double s, const Entry& e) { return s > e.score; });
        best_.insert(pos, std::move(entry));
        if (best_.size() > kCapacity) best_.pop_back();
    }
    return mean();
}

double Top10Tracker::mean() const {
    if (best_.empty()) return std::numeric_limits<double>::quiet_NaN();
    double sum = 0.0;
    for (const Entry& e : best_) sum += e.score;
    return sum / static_cast<double>(best_.size());
}

double evaluate(const StochasticPolicy& policy, const Environment& env, const RunningStats* stats,
                const EvalProtocol& protocol, std::uint64_t seed, Top10Tracker* tracker, long step) {
    const double score = evaluate_mean_action(policy, env, stats, protocol.episodes, seed);
    if (protocol.kind == ProtocolKind::MeanActionEvery1000) return score;
    if (tracker == nullptr) throw std::invalid_argument("top10_average evaluation needs a tracker");
    return tracker->add(score, step, &policy, stats);
}

} // namespace mosopi
