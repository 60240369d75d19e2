#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mosopi {

/// Random-MDP check of the ideal-case guarantees of MoSoPI with the CPI
/// mixture rule: for every iteration k, T_{pi_{k+1}} v_k >= v_k,
/// v_{k+1} >= v_k and v_k <= v_*, each up to -slack.
struct ConvergenceSuiteOptions {
    int n_mdps = 100;
    int min_states = 2;
    int max_states = 20;
    int min_actions = 2;
    int max_actions = 4;
    double gamma = 0.9;
    std::vector<long> ms{1, 3, 10};
    double alpha = 0.5;
    double slack = 1e-12;
    std::size_t max_iter = 400;
    std::uint64_t seed = 0;
};

struct ConvergenceSuiteResult {
    int runs = 0;
    int iterations = 0;
    int failures = 0;
    double worst_self_improvement = 0.0; ///< min over iterations of min_s [T_{pi_{k+1}} v_k - v_k](s)
    double worst_monotone = 0.0;         ///< min over iterations of min_s [v_{k+1} - v_k](s)
    double worst_excess = 0.0;           ///< max over iterations of max_s [v_k - v_*](s)
    std::vector<std::string> messages;   ///< one per failing iteration (capped)

    bool passed() const { return failures == 0; }
};

ConvergenceSuiteResult run_convergence_suite(const ConvergenceSuiteOptions& options = {});

} // namespace mosopi
