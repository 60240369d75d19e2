#include "mosopi/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

namespace mosopi {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836; // log(2 pi)
constexpr double kMaxLogRatio = 50.0;

void check_states(const StochasticPolicy& policy, const Eigen::MatrixXd& states) {
    if (states.rows() != policy.state_dim()) throw std::invalid_argument("state dimension does not match the policy");
}

void check_actions(const StochasticPolicy& policy, const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) {
    check_states(policy, states);
    if (actions.rows() != policy.action_rows() || actions.cols() != states.cols()) {
        throw std::invalid_argument("action batch does not match the policy or the state batch");
    }
}

// Column-wise log-softmax.
Eigen::MatrixXd log_softmax(const Eigen::MatrixXd& logits) {
    if (!logits.allFinite()) throw NonFiniteError("policy network produced non-finite logits");
    Eigen::MatrixXd out = logits;
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double top = out.col(j).maxCoeff();
        const double lse = top + std::log((out.col(j).array() - top).exp().sum());
        out.col(j).array() -= lse;
    }
    return out;
}

int action_index(double raw, int n_actions) {
    const int index = static_cast<int>(std::lround(raw));
    if (index < 0 || index >= n_actions) throw std::invalid_argument("discrete action out of range");
    return index;
}

const char kGaussianTag[4] = {'P', 'G', 'S', '1'};
const char kCategoricalTag[4] = {'P', 'C', 'T', '1'};

} // namespace

double StochasticPolicy::log_prob(const Eigen::VectorXd& state, const Action& action) const {
    return log_prob_batch(state, action)(0);
}

Eigen::MatrixXd StochasticPolicy::probabilities(const Eigen::MatrixXd&) const {
    throw std::logic_error("action probabilities are only defined for discrete policies");
}

// ---------------------------------------------------------------- Gaussian

GaussianPolicy::GaussianPolicy(Mlp mean_net, Eigen::VectorXd log_std)
    : mean_net_(std::move(mean_net)), raw_log_std_(std::move(log_std)) {
    if (raw_log_std_.size() != mean_net_.output_dim()) throw std::invalid_argument("log-std size must match action dim");
    if (!raw_log_std_.allFinite()) throw std::invalid_argument("log-std must be finite");
}

Eigen::VectorXd GaussianPolicy::log_std() const { return raw_log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

GaussianPolicy::Sample GaussianPolicy::sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const {
    check_states(*this, state);
    const Eigen::VectorXd mean = mean_net_.forward(state);
    if (!mean.allFinite()) throw NonFiniteError("policy network produced a non-finite mean");
    const Eigen::VectorXd ls = log_std();
    std::normal_distribution<double> normal(0.0, 1.0);
    Sample out;
    out.action.resize(mean.size());
    double log_prob = 0.0;
    for (Eigen::Index d = 0; d < mean.size(); ++d) {
        const double z = normal(rng);
        out.action(d) = mean(d) + std::exp(ls(d)) * z;
        log_prob += -0.5 * z * z - ls(d) - 0.5 * kLogTwoPi;
    }
    out.log_prob = log_prob;
    return out;
}

Eigen::MatrixXd GaussianPolicy::sample_batch(const Eigen::MatrixXd& states, int per_state, std::mt19937_64& rng) const {
    check_states(*this, states);
    const Eigen::MatrixXd means = mean_net_.forward_batch(states);
    if (!means.allFinite()) throw NonFiniteError("policy network produced a non-finite mean");
    const Eigen::VectorXd std_dev = log_std().array().exp();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd out(means.rows(), means.cols() * per_state);
    for (Eigen::Index i = 0; i < means.cols(); ++i) {
        for (int j = 0; j < per_state; ++j) {
            for (Eigen::Index d = 0; d < means.rows(); ++d) {
                out(d, i * per_state + j) = means(d, i) + std_dev(d) * normal(rng);
            }
        }
    }
    return out;
}

Eigen::VectorXd GaussianPolicy::log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
    check_actions(*this, states, actions);
    const Eigen::MatrixXd means = mean_net_.forward_batch(states);
    if (!means.allFinite()) throw NonFiniteError("policy network produced a non-finite mean");
    const Eigen::VectorXd ls = log_std();
    const Eigen::ArrayXd inv_var = (-2.0 * ls.array()).exp();
    const double constant = -ls.sum() - 0.5 * static_cast<double>(ls.size()) * kLogTwoPi;
    Eigen::VectorXd out(states.cols());
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
        const Eigen::ArrayXd diff = (actions.col(i) - means.col(i)).array();
        out(i) = constant - 0.5 * (diff.square() * inv_var).sum();
    }
    return out;
}

Eigen::VectorXd GaussianPolicy::log_prob_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                                  const Eigen::VectorXd& weights) const {
    check_actions(*this, states, actions);
    if (weights.size() != states.cols()) throw std::invalid_argument("one weight per sample is required");
    const ForwardPass pass = mean_net_.forward_record(states);
    const Eigen::MatrixXd& means = pass.output();
    const Eigen::VectorXd ls = log_std();
    const Eigen::VectorXd inv_var = (-2.0 * ls.array()).exp();

    Eigen::MatrixXd standardized = actions - means; // (a - mu)
    Eigen::MatrixXd mean_grad = inv_var.asDiagonal() * standardized;
    mean_grad = mean_grad * weights.asDiagonal();
    Eigen::VectorXd log_std_grad = Eigen::VectorXd::Zero(ls.size());
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
        log_std_grad.array() +=
            weights(i) * (standardized.col(i).array().square() * inv_var.array() - 1.0);
    }
    for (Eigen::Index d = 0; d < ls.size(); ++d) {
        if (raw_log_std_(d) < kLogStdMin || raw_log_std_(d) > kLogStdMax) log_std_grad(d) = 0.0;
    }
    Eigen::VectorXd grads(mean_net_.n_parameters() + ls.size());
    grads.head(mean_net_.n_parameters()) = mean_net_.backward(pass, mean_grad);
    grads.tail(ls.size()) = log_std_grad;
    return grads;
}

Action GaussianPolicy::mean_action(const Eigen::VectorXd& state) const {
    check_states(*this, state);
    Eigen::VectorXd mean = mean_net_.forward(state);
    if (!mean.allFinite()) throw NonFiniteError("policy network produced a non-finite mean");
    return mean;
}

Eigen::VectorXd GaussianPolicy::entropy_batch(const Eigen::MatrixXd& states) const {
    check_states(*this, states);
    const double per_state = (log_std().array() + 0.5 * (1.0 + kLogTwoPi)).sum();
    return Eigen::VectorXd::Constant(states.cols(), per_state);
}

Eigen::VectorXd GaussianPolicy::parameters() const {
    Eigen::VectorXd out(mean_net_.n_parameters() + raw_log_std_.size());
    out << mean_net_.parameters(), raw_log_std_;
    return out;
}

void GaussianPolicy::set_parameters(const Eigen::VectorXd& params) {
    const Eigen::Index n = mean_net_.n_parameters();
    if (params.size() != n + raw_log_std_.size()) throw std::invalid_argument("policy parameter vector has the wrong size");
    mean_net_.set_parameters(params.head(n));
    raw_log_std_ = params.tail(raw_log_std_.size());
}

void GaussianPolicy::save(std::ostream& out) const {
    out.write(kGaussianTag, 4);
    mean_net_.save(out);
    write_vector(out, raw_log_std_);
}

// ---------------------------------------------------------------- Categorical

CategoricalPolicy::CategoricalPolicy(Mlp logit_net) : logit_net_(std::move(logit_net)) {
    if (logit_net_.output_dim() < 1) throw std::invalid_argument("categorical policy needs at least one action");
}

Eigen::MatrixXd CategoricalPolicy::probabilities(const Eigen::MatrixXd& states) const {
    check_states(*this, states);
    return log_softmax(logit_net_.forward_batch(states)).array().exp();
}

CategoricalPolicy::Sample CategoricalPolicy::sample(const Eigen::VectorXd& state, std::mt19937_64& rng) const {
    check_states(*this, state);
    const Eigen::VectorXd logp = log_softmax(logit_net_.forward(state));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double draw = unit(rng);
    double cumulative = 0.0;
    int chosen = static_cast<int>(logp.size()) - 1;
    for (Eigen::Index a = 0; a < logp.size(); ++a) {
        cumulative += std::exp(logp(a));
        if (draw < cumulative) {
            chosen = static_cast<int>(a);
            break;
        }
    }
    return {Eigen::VectorXd::Constant(1, chosen), logp(chosen)};
}

Eigen::MatrixXd CategoricalPolicy::sample_batch(const Eigen::MatrixXd& states, int per_state, std::mt19937_64& rng) const {
    const Eigen::MatrixXd probs = probabilities(states);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd out(1, states.cols() * per_state);
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
        for (int j = 0; j < per_state; ++j) {
            const double draw = unit(rng);
            double cumulative = 0.0;
            Eigen::Index chosen = probs.rows() - 1;
            for (Eigen::Index a = 0; a < probs.rows(); ++a) {
                cumulative += probs(a, i);
                if (draw < cumulative) {
                    chosen = a;
                    break;
                }
            }
            out(0, i * per_state + j) = static_cast<double>(chosen);
        }
    }
    return out;
}

Eigen::VectorXd CategoricalPolicy::log_prob_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const {
    check_actions(*this, states, actions);
    const Eigen::MatrixXd logp = log_softmax(logit_net_.forward_batch(states));
    Eigen::VectorXd out(states.cols());
    for (Eigen::Index i = 0; i < states.cols(); ++i) out(i) = logp(action_index(actions(0, i), action_dim()), i);
    return out;
}

Eigen::VectorXd CategoricalPolicy::log_prob_gradient(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                                     const Eigen::VectorXd& weights) const {
    check_actions(*this, states, actions);
    if (weights.size() != states.cols()) throw std::invalid_argument("one weight per sample is required");
    const ForwardPass pass = logit_net_.forward_record(states);
    Eigen::MatrixXd grad = -log_softmax(pass.output()).array().exp().matrix();
    for (Eigen::Index i = 0; i < states.cols(); ++i) {
        grad(action_index(actions(0, i), action_dim()), i) += 1.0;
        grad.col(i) *= weights(i);
    }
    return logit_net_.backward(pass, grad);
}

Action CategoricalPolicy::mean_action(const Eigen::VectorXd& state) const {
    check_states(*this, state);
    const Eigen::VectorXd logits = logit_net_.forward(state);
    if (!logits.allFinite()) throw NonFiniteError("policy network produced non-finite logits");
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < logits.size(); ++a) {
        if (logits(a) > logits(best)) best = a;
    }
    return Eigen::VectorXd::Constant(1, static_cast<double>(best));
}

Eigen::VectorXd CategoricalPolicy::entropy_batch(const Eigen::MatrixXd& states) const {
    check_states(*this, states);
    const Eigen::MatrixXd logp = log_softmax(logit_net_.forward_batch(states));
    return -(logp.array().exp() * logp.array()).colwise().sum().transpose();
}

void CategoricalPolicy::save(std::ostream& out) const {
    out.write(kCategoricalTag, 4);
    logit_net_.save(out);
}

std::unique_ptr<StochasticPolicy> load_policy(std::istream& in) {
    char tag[4] = {};
    in.read(tag, 4);
    if (!in) throw std::runtime_error("checkpoint: missing policy tag");
    if (std::equal(tag, tag + 4, kGaussianTag)) {
        Mlp net = Mlp::load(in);
        Eigen::VectorXd log_std = read_vector(in);
        return std::make_unique<GaussianPolicy>(std::move(net), std::move(log_std));
    }
    if (std::equal(tag, tag + 4, kCategoricalTag)) return std::make_unique<CategoricalPolicy>(Mlp::load(in));
    throw std::runtime_error("checkpoint: unknown policy tag");
}

std::unique_ptr<StochasticPolicy> make_policy(int state_dim, const ActionSpace& actions, const std::vector<int>& hidden,
                                              double initial_log_std, std::mt19937_64& rng) {
    Mlp net = Mlp::make(state_dim, hidden, actions.n, Activation::Tanh);
    net.initialize(rng);
    if (actions.discrete) return std::make_unique<CategoricalPolicy>(std::move(net));
    return std::make_unique<GaussianPolicy>(std::move(net), Eigen::VectorXd::Constant(actions.n, initial_log_std));
}

// ---------------------------------------------------------------- clipped surrogate

ClipLossResult ppo_clip_loss(const StochasticPolicy& policy, const Eigen::VectorXd& old_log_probs,
                             const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                             const Eigen::VectorXd& advantages, double epsilon) {
    const Eigen::Index n = states.cols();
    if (n == 0) throw std::invalid_argument("ppo_clip_loss: empty batch");
    if (old_log_probs.size() != n || advantages.size() != n) throw std::invalid_argument("ppo_clip_loss: misaligned batch");
    if (!(epsilon > 0.0)) throw std::invalid_argument("ppo_clip_loss: epsilon must be positive");

    const Eigen::VectorXd new_log_probs = policy.log_prob_batch(states, actions);
    ClipLossResult out;
    out.ratios.resize(n);
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(n);
    double objective = 0.0;
    Eigen::Index clipped = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double log_ratio = new_log_probs(i) - old_log_probs(i);
        if (!std::isfinite(log_ratio) || std::abs(log_ratio) > kMaxLogRatio) {
            throw NonFiniteError("ppo_clip_loss: probability ratio diverged (policy collapse)");
        }
        const double rho = std::exp(log_ratio);
        out.ratios(i) = rho;
        const double adv = advantages(i);
        const double clipped_rho = std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon);
        const bool saturated = (adv > 0.0 && rho > 1.0 + epsilon) || (adv < 0.0 && rho < 1.0 - epsilon);
        if (saturated) {
            objective += clipped_rho * adv;
            ++clipped;
        } else {
            objective += rho * adv;
            // d(rho A)/dw = A rho dlog pi/dw; the loss is the negated mean
            weights(i) = -adv * rho / static_cast<double>(n);
        }
    }
    out.loss = -objective / static_cast<double>(n);
    out.gradient = policy.log_prob_gradient(states, actions, weights);
    out.clipped_fraction = static_cast<double>(clipped) / static_cast<double>(n);
    return out;
}

} // namespace mosopi
