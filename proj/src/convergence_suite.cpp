#include "mosopi/convergence_suite.hpp"

#include "mosopi/envs.hpp"
#include "mosopi/schemes.hpp"

#include <algorithm>
#include <random>
#include <sstream>

namespace mosopi {

namespace {

constexpr std::size_t kMaxMessages = 20;

TabularPolicy random_policy(int n_states, int n_actions, std::mt19937_64& rng) {
    std::exponential_distribution<double> exp1(1.0);
    Eigen::MatrixXd probs(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        for (int a = 0; a < n_actions; ++a) probs(s, a) = exp1(rng);
        probs.row(s) /= probs.row(s).sum();
    }
    return TabularPolicy(probs);
}

} // namespace

ConvergenceSuiteResult run_convergence_suite(const ConvergenceSuiteOptions& options) {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<int> states(options.min_states, options.max_states);
    std::uniform_int_distribution<int> actions(options.min_actions, options.max_actions);
    std::uniform_real_distribution<double> init(-10.0, 10.0);

    ConvergenceSuiteResult result;
    const auto fail = [&](const std::string& text) {
        ++result.failures;
        if (result.messages.size() < kMaxMessages) result.messages.push_back(text);
    };

    for (int i = 0; i < options.n_mdps; ++i) {
        RandomMdpParams params;
        params.n_states = states(rng);
        params.n_actions = actions(rng);
        params.branching = std::uniform_int_distribution<int>(1, params.n_states)(rng);
        params.gamma = options.gamma;
        params.seed = rng();
        const TabularMdp mdp = generate_random_mdp(params);
        const VTable v_star = policy_value(mdp, run_pi(mdp, VTable::Zero(mdp.n_states())).final_policy());

        const TabularPolicy pi0 = random_policy(mdp.n_states(), mdp.n_actions(), rng);
        VTable raw(mdp.n_states());
        for (int s = 0; s < mdp.n_states(); ++s) raw(s) = init(rng);
        const VTable v0 = shift_init(mdp, pi0, raw);

        SchemeOptions opts;
        opts.max_iter = options.max_iter;
        opts.optimal_value = v_star;
        opts.improvement_slack = options.slack;
        for (const long m : options.ms) {
            ++result.runs;
            SchemeTrace trace;
            try {
                trace = run_mosopi(mdp, pi0, v0, m, CpiMixture{constant_alpha(options.alpha)}, opts);
            } catch (const std::exception& e) {
                std::ostringstream msg;
                msg << "mdp " << i << " m=" << m << ": " << e.what();
                fail(msg.str());
                continue;
            }
            for (std::size_t k = 0; k < trace.size(); ++k) {
                const IterationRecord& rec = trace.iterations[k];
                ++result.iterations;
                const double excess = (rec.value - v_star).maxCoeff();
                result.worst_excess = std::max(result.worst_excess, excess);
                if (excess > options.slack) {
                    std::ostringstream msg;
                    msg << "mdp " << i << " m=" << m << " k=" << k << ": v_k exceeds v_* by " << excess;
                    fail(msg.str());
                }
                if (k + 1 == trace.size()) continue;
                const IterationRecord& next = trace.iterations[k + 1];
                const double self = (bellman_eval(mdp, next.policy, rec.value) - rec.value).minCoeff();
                const double mono = (next.value - rec.value).minCoeff();
                result.worst_self_improvement = std::min(result.worst_self_improvement, self);
                result.worst_monotone = std::min(result.worst_monotone, mono);
                if (self < -options.slack || mono < -options.slack) {
                    std::ostringstream msg;
                    msg << "mdp " << i << " m=" << m << " k=" << k << ": T_pi' v - v >= " << self
                        << ", v_{k+1} - v_k >= " << mono;
                    fail(msg.str());
                }
            }
        }
    }
    return result;
}

} // namespace mosopi
