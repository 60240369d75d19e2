#include "mosopi/replay_buffer.hpp"

#include "mosopi/running_stats.hpp"

#include <stdexcept>

namespace mosopi {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
    items_.reserve(capacity);
}

void ReplayBuffer::push(Transition transition) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(transition));
    } else {
        items_[inserted_ % capacity_] = std::move(transition);
    }
    ++inserted_;
}

void ReplayBuffer::clear() {
    items_.clear();
    inserted_ = 0;
}

const Transition& ReplayBuffer::at(std::size_t index) const {
    if (index >= size()) throw std::out_of_range("replay buffer index out of range");
    if (items_.size() < capacity_) return items_[index];
    return items_[(inserted_ + index) % capacity_];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, std::mt19937_64& rng) const {
    if (empty()) throw std::logic_error("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pick(rng);
    return out;
}

TransitionBatch ReplayBuffer::gather(const std::vector<std::size_t>& indices, const RunningStats* stats) const {
    if (indices.empty()) throw std::invalid_argument("cannot gather an empty batch");
    const Transition& first = at(indices.front());
    const auto n = static_cast<Eigen::Index>(indices.size());
    TransitionBatch batch;
    batch.states.resize(first.state.size(), n);
    batch.actions.resize(first.action.size(), n);
    batch.next_states.resize(first.next_state.size(), n);
    batch.rewards.resize(n);
    batch.behavior_log_probs.resize(n);
    batch.terminal.resize(indices.size());
    batch.boundary.resize(indices.size());
    batch.policy_versions.resize(indices.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const Transition& t = at(indices[idx]);
        batch.states.col(i) = t.state;
        batch.actions.col(i) = t.action;
        batch.next_states.col(i) = t.next_state;
        batch.rewards(i) = t.reward;
        batch.behavior_log_probs(i) = t.behavior_log_prob;
        batch.terminal[idx] = t.terminal;
        batch.boundary[idx] = t.episode_end;
        batch.policy_versions[idx] = t.policy_version;
    }
    if (stats != nullptr) {
        batch.states = stats->normalize_batch(batch.states);
        batch.next_states = stats->normalize_batch(batch.next_states);
    }
    return batch;
}

TransitionBatch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng, const RunningStats* stats) const {
    return gather(sample_indices(n, rng), stats);
}

TransitionBatch ReplayBuffer::all(const RunningStats* stats) const {
    std::vector<std::size_t> indices(size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    return gather(indices, stats);
}

TransitionBatch ReplayBuffer::gather_windows(const std::vector<std::size_t>& start_indices, int length,
                                             std::vector<Eigen::Index>& starts, const RunningStats* stats) const {
    if (length < 1) throw std::invalid_argument("window length must be positive");
    std::vector<std::size_t> indices;
    std::vector<char> window_end;
    starts.clear();
    for (const std::size_t start : start_indices) {
        starts.push_back(static_cast<Eigen::Index>(indices.size()));
        for (int k = 0; k < length; ++k) {
            const std::size_t idx = start + static_cast<std::size_t>(k);
            indices.push_back(idx);
            const bool last = k + 1 == length || at(idx).episode_end || idx + 1 >= size();
            window_end.push_back(last);
            if (last) break;
        }
    }
    TransitionBatch batch = gather(indices, stats);
    batch.boundary = std::move(window_end);
    return batch;
}

} // namespace mosopi
