#include "mosopi/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mosopi {

namespace {

void check_row_stochastic(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index row = 0; row < m.rows(); ++row) {
        double sum = 0.0;
        for (Eigen::Index col = 0; col < m.cols(); ++col) {
            const double p = m(row, col);
            if (!std::isfinite(p) || p < 0.0) {
                throw std::invalid_argument(what + ": negative or non-finite probability in row " + std::to_string(row));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kStochasticTolerance) {
            std::ostringstream msg;
            msg << what << ": row " << row << " sums to " << std::setprecision(17) << sum;
            throw std::invalid_argument(msg.str());
        }
    }
}

void check_value_shape(const TabularMdp& mdp, const VTable& v) {
    if (v.size() != mdp.n_states()) {
        throw std::invalid_argument("value vector has " + std::to_string(v.size()) + " entries, MDP has " +
                                    std::to_string(mdp.n_states()) + " states");
    }
}

void check_policy_shape(const TabularMdp& mdp, const TabularPolicy& policy) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions()) {
        throw std::invalid_argument("policy shape does not match MDP");
    }
}

} // namespace

TabularMdp::TabularMdp(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd reward, double gamma)
    : transitions_(std::move(transitions)), reward_(std::move(reward)), gamma_(gamma) {
    if (reward_.rows() < 1 || reward_.cols() < 1) {
        throw std::invalid_argument("MDP needs at least one state and one action");
    }
    if (!(gamma_ > 0.0 && gamma_ < 1.0)) {
        throw std::invalid_argument("gamma must lie strictly inside (0,1)");
    }
    if (!reward_.allFinite()) {
        throw std::invalid_argument("reward contains non-finite entries");
    }
    if (static_cast<Eigen::Index>(transitions_.size()) != reward_.cols()) {
        throw std::invalid_argument("one transition matrix per action is required");
    }
    for (std::size_t a = 0; a < transitions_.size(); ++a) {
        const auto& p = transitions_[a];
        if (p.rows() != reward_.rows() || p.cols() != reward_.rows()) {
            throw std::invalid_argument("transition matrix for action " + std::to_string(a) + " has wrong shape");
        }
        check_row_stochastic(p, "transition[" + std::to_string(a) + "]");
    }
}

TabularMdp TabularMdp::with_gamma(double gamma) const { return TabularMdp(transitions_, reward_, gamma); }

TabularPolicy::TabularPolicy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
    if (probs_.rows() < 1 || probs_.cols() < 1) {
        throw std::invalid_argument("policy needs at least one state and one action");
    }
    check_row_stochastic(probs_, "policy");
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
    return TabularPolicy(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
    Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actions.size()), n_actions);
    for (std::size_t s = 0; s < actions.size(); ++s) {
        if (actions[s] < 0 || actions[s] >= n_actions) {
            throw std::invalid_argument("action index out of range");
        }
        probs(static_cast<Eigen::Index>(s), actions[s]) = 1.0;
    }
    return TabularPolicy(std::move(probs));
}

bool TabularPolicy::is_deterministic() const {
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
        if (probs_.row(s).maxCoeff() != 1.0) return false;
    }
    return true;
}

std::vector<int> TabularPolicy::argmax_actions() const {
    std::vector<int> out(static_cast<std::size_t>(probs_.rows()));
    for (Eigen::Index s = 0; s < probs_.rows(); ++s) {
        int best = 0;
        for (Eigen::Index a = 1; a < probs_.cols(); ++a) {
            if (probs_(s, a) > probs_(s, best)) best = static_cast<int>(a);
        }
        out[static_cast<std::size_t>(s)] = best;
    }
    return out;
}

QTable q_from_v(const TabularMdp& mdp, const VTable& v) {
    check_value_shape(mdp, v);
    QTable q(mdp.n_states(), mdp.n_actions());
    for (int a = 0; a < mdp.n_actions(); ++a) {
        const Eigen::VectorXd expected_next = mdp.transition(a) * v;
        q.col(a) = mdp.reward().col(a) + mdp.gamma() * expected_next;
    }
    return q;
}

QTable advantage(const QTable& q, const TabularPolicy& policy) {
    if (q.rows() != policy.n_states() || q.cols() != policy.n_actions()) {
        throw std::invalid_argument("Q table shape does not match policy");
    }
    QTable adv = q;
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        double baseline = 0.0;
        for (Eigen::Index a = 0; a < q.cols(); ++a) baseline += policy(static_cast<int>(s), static_cast<int>(a)) * q(s, a);
        adv.row(s).array() -= baseline;
    }
    return adv;
}

VTable bellman_eval(const TabularMdp& mdp, const TabularPolicy& policy, const VTable& v) {
    check_policy_shape(mdp, policy);
    const QTable q = q_from_v(mdp, v);
    VTable out(mdp.n_states());
    for (int s = 0; s < mdp.n_states(); ++s) {
        double acc = 0.0;
        for (int a = 0; a < mdp.n_actions(); ++a) acc += policy(s, a) * q(s, a);
        out(s) = acc;
    }
    return out;
}

VTable bellman_eval_power(const TabularMdp& mdp, const TabularPolicy& policy, const VTable& v, long n) {
    VTable out = v;
    for (long i = 0; i < n; ++i) out = bellman_eval(mdp, policy, out);
    return out;
}

VTable bellman_opt(const TabularMdp& mdp, const VTable& v) {
    const QTable q = q_from_v(mdp, v);
    return q.rowwise().maxCoeff();
}

TabularPolicy greedy_from_q(const QTable& q) {
    std::vector<int> actions(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        int best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a) {
            if (q(s, a) > q(s, best)) best = static_cast<int>(a);
        }
        actions[static_cast<std::size_t>(s)] = best;
    }
    return TabularPolicy::deterministic(actions, static_cast<int>(q.cols()));
}

TabularPolicy greedy(const TabularMdp& mdp, const VTable& v) { return greedy_from_q(q_from_v(mdp, v)); }

Eigen::VectorXd policy_reward(const TabularMdp& mdp, const TabularPolicy& policy) {
    check_policy_shape(mdp, policy);
    return mdp.reward().cwiseProduct(policy.probs()).rowwise().sum();
}

Eigen::MatrixXd policy_transition(const TabularMdp& mdp, const TabularPolicy& policy) {
    check_policy_shape(mdp, policy);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(mdp.n_states(), mdp.n_states());
    for (int a = 0; a < mdp.n_actions(); ++a) {
        p += policy.probs().col(a).asDiagonal() * mdp.transition(a);
    }
    return p;
}

VTable policy_value(const TabularMdp& mdp, const TabularPolicy& policy) {
    const Eigen::VectorXd r = policy_reward(mdp, policy);
    const Eigen::MatrixXd system =
        Eigen::MatrixXd::Identity(mdp.n_states(), mdp.n_states()) - mdp.gamma() * policy_transition(mdp, policy);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    VTable v = lu.solve(r);
    // one step of iterative refinement
    v += lu.solve(r - system * v);

    const double residual = sup_norm(v - bellman_eval(mdp, policy, v));
    if (!(residual < 1e-10)) {
        std::ostringstream msg;
        msg << "policy_value: fixed-point residual " << residual << " exceeds 1e-10";
        throw std::runtime_error(msg.str());
    }
    return v;
}

void write_mdp(std::ostream& out, const TabularMdp& mdp) {
    const auto precision = out.precision(std::numeric_limits<double>::max_digits10);
    out << "# n_states n_actions gamma\n";
    out << mdp.n_states() << ' ' << mdp.n_actions() << ' ' << mdp.gamma() << '\n';
    out << "# reward (n_states rows x n_actions)\n";
    for (int s = 0; s < mdp.n_states(); ++s) {
        for (int a = 0; a < mdp.n_actions(); ++a) out << (a ? " " : "") << mdp.reward()(s, a);
        out << '\n';
    }
    for (int a = 0; a < mdp.n_actions(); ++a) {
        out << "# transition action " << a << " (row s, column s')\n";
        for (int s = 0; s < mdp.n_states(); ++s) {
            for (int t = 0; t < mdp.n_states(); ++t) out << (t ? " " : "") << mdp.transition(a)(s, t);
            out << '\n';
        }
    }
    out.precision(precision);
}

TabularMdp read_mdp(std::istream& in) {
    std::stringstream numbers;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        numbers << line << '\n';
    }
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.0;
    if (!(numbers >> n_states >> n_actions >> gamma) || n_states < 1 || n_actions < 1) {
        throw std::invalid_argument("MDP file: malformed header");
    }
    Eigen::MatrixXd reward(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) {
            if (!(numbers >> reward(s, a))) throw std::invalid_argument("MDP file: truncated reward block");
        }
    }
    std::vector<Eigen::MatrixXd> transitions(static_cast<std::size_t>(n_actions), Eigen::MatrixXd(n_states, n_states));
    for (auto& p : transitions) {
        for (int s = 0; s < n_states; ++s) {
            for (int t = 0; t < n_states; ++t) {
                if (!(numbers >> p(s, t))) throw std::invalid_argument("MDP file: truncated transition block");
            }
        }
    }
    double extra = 0.0;
    if (numbers >> extra) throw std::invalid_argument("MDP file: trailing data");
    return TabularMdp(std::move(transitions), std::move(reward), gamma);
}

void save_mdp(const std::string& path, const TabularMdp& mdp) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_mdp(out, mdp);
}

TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_mdp(in);
}

} // namespace mosopi
