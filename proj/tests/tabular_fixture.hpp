#pragma once

// A small MDP whose transition probabilities are multiples of 1/K, stored in a
// replay buffer with K transitions per (s, a). A table-capacity critic fitted
// by full-batch least squares on that buffer therefore solves exactly
// Q(s,a) = r(s,a) + gamma sum_s' P(s'|s,a) E_pi Q_target(s', .).

#include "mosopi/evaluation.hpp"
#include "mosopi/mdp.hpp"
#include "mosopi/policy.hpp"
#include "mosopi/replay_buffer.hpp"

#include <random>

namespace mosopi::fixture {

struct TabularSetup {
    TabularMdp mdp;
    ReplayBuffer buffer;
    CategoricalPolicy policy;
    CriticSet online;
    CriticSet target;
};

inline int table_index(int n_states, int s, int a) { return a * n_states + s; }

inline Eigen::MatrixXd read_table(const QCritic& critic, int n_states, int n_actions) {
    Eigen::MatrixXd q(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            q(s, a) = critic.net().weight(0)(0, table_index(n_states, s, a)) + critic.net().bias(0)(0);
        }
    }
    return q;
}

inline void write_table(QCritic& critic, const Eigen::MatrixXd& q) {
    critic.net().bias(0)(0) = 0.0;
    for (int s = 0; s < q.rows(); ++s) {
        for (int a = 0; a < q.cols(); ++a) critic.net().weight(0)(0, table_index(static_cast<int>(q.rows()), s, a)) = q(s, a);
    }
}

inline TabularSetup make_tabular(int n_states, int n_actions, int copies, double gamma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n_states - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<std::vector<std::vector<int>>> successors(
        static_cast<std::size_t>(n_states), std::vector<std::vector<int>>(static_cast<std::size_t>(n_actions)));
    std::vector<Eigen::MatrixXd> p(static_cast<std::size_t>(n_actions), Eigen::MatrixXd::Zero(n_states, n_states));
    Eigen::MatrixXd r(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            r(s, a) = unit(rng);
            for (int k = 0; k < copies; ++k) {
                const int next = pick(rng);
                successors[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)].push_back(next);
                p[static_cast<std::size_t>(a)](s, next) += 1.0 / copies;
            }
        }
    }
    // Rows of 1/K increments may miss 1 by rounding; renormalize.
    for (auto& m : p) {
        for (int s = 0; s < n_states; ++s) m.row(s) /= m.row(s).sum();
    }
    TabularMdp mdp(std::move(p), r, gamma);

    ReplayBuffer buffer(static_cast<std::size_t>(n_states * n_actions * copies));
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            for (const int next : successors[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) {
                Transition t;
                t.state = Eigen::VectorXd::Unit(n_states, s);
                t.action = Eigen::VectorXd::Constant(1, a);
                t.reward = r(s, a);
                t.next_state = Eigen::VectorXd::Unit(n_states, next);
                buffer.push(std::move(t));
            }
        }
    }

    Mlp logits({n_states, n_actions}, {Activation::Linear});
    logits.initialize(rng);
    CategoricalPolicy policy(std::move(logits));

    Mlp table({n_states * n_actions, 1}, {Activation::Linear});
    table.initialize(rng);
    QCritic critic(std::move(table), ActionSpace::discrete_space(n_actions), CriticInput::OuterProduct);
    CriticSet online(std::vector<QCritic>{critic});
    CriticSet target(std::vector<QCritic>{critic});
    return TabularSetup{std::move(mdp), std::move(buffer), std::move(policy), std::move(online), std::move(target)};
}

inline TabularPolicy tabular_policy(const CategoricalPolicy& policy, int n_states) {
    const Eigen::MatrixXd states = Eigen::MatrixXd::Identity(n_states, n_states);
    return TabularPolicy(policy.probabilities(states).transpose());
}

} // namespace mosopi::fixture
