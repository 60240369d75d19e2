#pragma once

#include "mosopi/mdp.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mosopi {

/// Mixing rate alpha_k as a function of the iteration index k (starting at 0).
using AlphaSchedule = std::function<double(std::size_t)>;

AlphaSchedule constant_alpha(double alpha);
/// alpha_k = initial * ratio^k.
AlphaSchedule geometric_alpha(double initial, double ratio);

/// pi_{k+1} = greedy(v_k).
struct ExactGreedy {};

/// pi_{k+1} = (1 - alpha_k) pi_k + alpha_k greedy(v_k).
struct CpiMixture {
    AlphaSchedule alpha = constant_alpha(0.1);
};

/// Per-state maximization of the one-step backup over distributions whose
/// probability ratios to pi_k stay in [1 - epsilon, 1 + epsilon].
///
/// This is a tabular stand-in for the clipped-ratio greedy step: it is solved
/// exactly by water-filling the free mass toward the best actions. Actions with
/// zero probability under pi_k stay at zero.
struct ClipLike {
    double epsilon = 0.2;
};

using SoftGreedyRule = std::variant<ExactGreedy, CpiMixture, ClipLike>;

std::string rule_name(const SoftGreedyRule& rule);

/// Apply a softened greedy step. `iteration` selects alpha_k for CPI.
TabularPolicy soft_greedy_step(const TabularMdp& mdp, const SoftGreedyRule& rule, const TabularPolicy& current,
                               const VTable& v, std::size_t iteration);

/// Thrown when a rule fails to produce pi_{k+1} with T_{pi_{k+1}} v_k >= T_{pi_k} v_k.
class ImprovementFailure : public std::runtime_error {
public:
    ImprovementFailure(std::size_t iteration, int state, double gap);
    std::size_t iteration() const { return iteration_; }
    int state() const { return state_; }
    double gap() const { return gap_; }

private:
    std::size_t iteration_;
    int state_;
    double gap_;
};

/// One iteration k of a scheme. Quantities involving pi_{k+1} are NaN on the
/// final record, where no further policy was produced.
struct IterationRecord {
    std::size_t iteration = 0;
    VTable value;                 ///< v_k
    TabularPolicy policy;         ///< pi_k
    double improvement_gap;       ///< min_s [T_{pi_{k+1}} v_k - T_{pi_k} v_k](s)
    double self_improvement_gap;  ///< min_s [T_{pi_{k+1}} v_k - v_k](s)
    double monotone_gap;          ///< min_s [v_{k+1} - v_k](s)
    double step_size;             ///< ||v_{k+1} - v_k||_inf
    double bellman_residual;      ///< ||v_k - v_*||_inf, NaN when v_* is unknown
    double optimality_excess;     ///< max_s [v_k - v_*](s), NaN when v_* is unknown
};

struct SchemeTrace {
    std::vector<IterationRecord> iterations;
    bool converged = false;

    const VTable& final_value() const { return iterations.back().value; }
    const TabularPolicy& final_policy() const { return iterations.back().policy; }
    std::size_t size() const { return iterations.size(); }
};

/// Options shared by every scheme.
struct SchemeOptions {
    std::size_t max_iter = 1000;
    double tolerance = 1e-10;            ///< stop once ||v_{k+1} - v_k||_inf < tolerance
    std::optional<VTable> optimal_value; ///< v_*, enables the residual columns
    double improvement_slack = 1e-12;
};

/// Value iteration v_{k+1} = T v_k. Policies recorded are greedy(v_k).
SchemeTrace run_vi(const TabularMdp& mdp, const VTable& v0, const SchemeOptions& options = {});

/// Policy iteration; stops when the greedy policy repeats.
SchemeTrace run_pi(const TabularMdp& mdp, const VTable& v0, const SchemeOptions& options = {});

/// Modified policy iteration with m applications of T_{pi_{k+1}} per step.
SchemeTrace run_mpi(const TabularMdp& mdp, const VTable& v0, long m, const SchemeOptions& options = {});

/// Softened greedy step followed by m applications of T_{pi_{k+1}}.
/// Requires check_init(mdp, pi0, v0); every step is checked for improvement
/// and ImprovementFailure is thrown when a rule does not deliver it.
SchemeTrace run_mosopi(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0, long m,
                       const SoftGreedyRule& rule, const SchemeOptions& options = {});

/// T_{pi0} v0 >= v0 elementwise.
bool check_init(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0);

/// Smallest constant c >= 0 such that v0 - c clears check_init.
double init_shift_constant(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0);

/// v0 - c * 1 with c from init_shift_constant.
VTable shift_init(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0);

/// CSV with columns iteration,improvement_gap,bellman_residual,step_size.
void write_trace_csv(std::ostream& out, const SchemeTrace& trace);

} // namespace mosopi
