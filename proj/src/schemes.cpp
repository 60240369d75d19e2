#include "mosopi/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mosopi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

VTable policy_backup(const QTable& q, const TabularPolicy& policy) {
    VTable out(q.rows());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        double acc = 0.0;
        for (Eigen::Index a = 0; a < q.cols(); ++a) acc += policy(static_cast<int>(s), static_cast<int>(a)) * q(s, a);
        out(s) = acc;
    }
    return out;
}

TabularPolicy cpi_mix(const TabularPolicy& current, const TabularPolicy& greedy_policy, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("CPI mixing rate must lie in (0,1], got " + std::to_string(alpha));
    }
    Eigen::MatrixXd mixed = (1.0 - alpha) * current.probs() + alpha * greedy_policy.probs();
    // keep rows exactly normalized against accumulated rounding
    for (Eigen::Index s = 0; s < mixed.rows(); ++s) mixed.row(s) /= mixed.row(s).sum();
    return TabularPolicy(std::move(mixed));
}

TabularPolicy clip_like_step(const QTable& q, const TabularPolicy& current, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("clip epsilon must be positive");
    const Eigen::Index n_actions = q.cols();
    Eigen::MatrixXd out(q.rows(), n_actions);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_actions));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        double assigned = 0.0;
        for (Eigen::Index a = 0; a < n_actions; ++a) {
            out(s, a) = std::max(0.0, 1.0 - epsilon) * current.probs()(s, a);
            assigned += out(s, a);
        }
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return q(s, a) > q(s, b); });
        double free_mass = 1.0 - assigned;
        for (const Eigen::Index a : order) {
            if (free_mass <= 0.0) break;
            const double cap = (1.0 + epsilon) * current.probs()(s, a) - out(s, a);
            const double add = std::min(cap, free_mass);
            out(s, a) += add;
            free_mass -= add;
        }
        out.row(s) /= out.row(s).sum();
    }
    return TabularPolicy(std::move(out));
}

void fill_optimality(IterationRecord& rec, const std::optional<VTable>& v_star) {
    if (v_star) {
        rec.bellman_residual = sup_norm(rec.value - *v_star);
        rec.optimality_excess = (rec.value - *v_star).maxCoeff();
    } else {
        rec.bellman_residual = kNaN;
        rec.optimality_excess = kNaN;
    }
}

IterationRecord make_record(std::size_t k, const VTable& v, const TabularPolicy& pi, const SchemeOptions& options) {
    IterationRecord rec{k, v, pi, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
    fill_optimality(rec, options.optimal_value);
    return rec;
}

// Shared loop for MPI and MoSoPI. `check` enables the improvement assertion.
SchemeTrace run_modified(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0, long m,
                         const SoftGreedyRule& rule, const SchemeOptions& options, bool check) {
    if (m < 1) throw std::invalid_argument("m must be at least 1");
    if (options.max_iter < 1) throw std::invalid_argument("max_iter must be at least 1");
    SchemeTrace trace;
    VTable v = v0;
    TabularPolicy pi = pi0;
    for (std::size_t k = 0; k < options.max_iter; ++k) {
        const QTable q = q_from_v(mdp, v);
        TabularPolicy next = std::holds_alternative<ExactGreedy>(rule) ? greedy_from_q(q)
                                                                        : soft_greedy_step(mdp, rule, pi, v, k);
        const VTable t_next = policy_backup(q, next);
        const VTable t_current = policy_backup(q, pi);

        IterationRecord rec = make_record(k, v, pi, options);
        const Eigen::VectorXd gain = t_next - t_current;
        Eigen::Index worst = 0;
        rec.improvement_gap = gain.minCoeff(&worst);
        rec.self_improvement_gap = (t_next - v).minCoeff();
        if (check && rec.improvement_gap < -options.improvement_slack) {
            throw ImprovementFailure(k, static_cast<int>(worst), rec.improvement_gap);
        }

        VTable v_next = t_next;
        for (long i = 1; i < m; ++i) v_next = bellman_eval(mdp, next, v_next);

        rec.monotone_gap = (v_next - v).minCoeff();
        rec.step_size = sup_norm(v_next - v);
        trace.iterations.push_back(std::move(rec));

        v = std::move(v_next);
        pi = std::move(next);
        if (trace.iterations.back().step_size < options.tolerance) {
            trace.converged = true;
            break;
        }
    }
    trace.iterations.push_back(make_record(trace.iterations.size(), v, pi, options));
    return trace;
}

} // namespace

AlphaSchedule constant_alpha(double alpha) {
    return [alpha](std::size_t) { return alpha; };
}

AlphaSchedule geometric_alpha(double initial, double ratio) {
    return [initial, ratio](std::size_t k) { return initial * std::pow(ratio, static_cast<double>(k)); };
}

std::string rule_name(const SoftGreedyRule& rule) {
    if (std::holds_alternative<ExactGreedy>(rule)) return "exact";
    if (std::holds_alternative<CpiMixture>(rule)) return "cpi_mixture";
    return "clip_like";
}

TabularPolicy soft_greedy_step(const TabularMdp& mdp, const SoftGreedyRule& rule, const TabularPolicy& current,
                               const VTable& v, std::size_t iteration) {
    const QTable q = q_from_v(mdp, v);
    if (std::holds_alternative<ExactGreedy>(rule)) return greedy_from_q(q);
    if (const auto* cpi = std::get_if<CpiMixture>(&rule)) {
        return cpi_mix(current, greedy_from_q(q), cpi->alpha(iteration));
    }
    return clip_like_step(q, current, std::get<ClipLike>(rule).epsilon);
}

ImprovementFailure::ImprovementFailure(std::size_t iteration, int state, double gap)
    : std::runtime_error([&] {
          std::ostringstream msg;
          msg << "softened greedy step failed to improve at iteration " << iteration << ", state " << state
              << ": min_s [T_next v - T_current v] = " << gap;
          return msg.str();
      }()),
      iteration_(iteration), state_(state), gap_(gap) {}

SchemeTrace run_vi(const TabularMdp& mdp, const VTable& v0, const SchemeOptions& options) {
    SchemeTrace trace;
    VTable v = v0;
    for (std::size_t k = 0; k < options.max_iter; ++k) {
        const QTable q = q_from_v(mdp, v);
        IterationRecord rec = make_record(k, v, greedy_from_q(q), options);
        VTable v_next = q.rowwise().maxCoeff();
        rec.improvement_gap = 0.0;
        rec.self_improvement_gap = (v_next - v).minCoeff();
        rec.monotone_gap = rec.self_improvement_gap;
        rec.step_size = sup_norm(v_next - v);
        trace.iterations.push_back(std::move(rec));
        v = std::move(v_next);
        if (trace.iterations.back().step_size < options.tolerance) {
            trace.converged = true;
            break;
        }
    }
    trace.iterations.push_back(make_record(trace.iterations.size(), v, greedy(mdp, v), options));
    return trace;
}

SchemeTrace run_pi(const TabularMdp& mdp, const VTable& v0, const SchemeOptions& options) {
    SchemeTrace trace;
    VTable v = v0;
    TabularPolicy pi = greedy(mdp, v0);
    for (std::size_t k = 0; k < options.max_iter; ++k) {
        const QTable q = q_from_v(mdp, v);
        TabularPolicy next = greedy_from_q(q);
        if (k > 0 && next == pi) {
            trace.converged = true;
            break;
        }
        IterationRecord rec = make_record(k, v, pi, options);
        const VTable t_next = policy_backup(q, next);
        rec.improvement_gap = (t_next - policy_backup(q, pi)).minCoeff();
        rec.self_improvement_gap = (t_next - v).minCoeff();
        VTable v_next = policy_value(mdp, next);
        rec.monotone_gap = (v_next - v).minCoeff();
        rec.step_size = sup_norm(v_next - v);
        trace.iterations.push_back(std::move(rec));
        v = std::move(v_next);
        pi = std::move(next);
    }
    trace.iterations.push_back(make_record(trace.iterations.size(), v, pi, options));
    return trace;
}

SchemeTrace run_mpi(const TabularMdp& mdp, const VTable& v0, long m, const SchemeOptions& options) {
    return run_modified(mdp, greedy(mdp, v0), v0, m, ExactGreedy{}, options, false);
}

SchemeTrace run_mosopi(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0, long m,
                       const SoftGreedyRule& rule, const SchemeOptions& options) {
    if (!check_init(mdp, pi0, v0)) {
        throw std::invalid_argument("run_mosopi: (pi0, v0) violate T_pi0 v0 >= v0; use shift_init");
    }
    return run_modified(mdp, pi0, v0, m, rule, options, true);
}

bool check_init(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0) {
    const VTable t = bellman_eval(mdp, pi0, v0);
    return (t.array() >= v0.array()).all();
}

double init_shift_constant(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0) {
    const double violation = (v0 - bellman_eval(mdp, pi0, v0)).maxCoeff();
    double c = std::max(0.0, violation) / (1.0 - mdp.gamma());
    // The bound is exact in real arithmetic; nudge upward until the rounded
    // check agrees.
    const VTable ones = VTable::Ones(v0.size());
    double bump = std::max(std::abs(c), 1.0) * std::numeric_limits<double>::epsilon();
    for (int attempt = 0; attempt < 64 && !check_init(mdp, pi0, v0 - c * ones); ++attempt) {
        c += bump;
        bump *= 2.0;
    }
    // Then step down one ulp at a time while the check still holds, so c is
    // the smallest passing double near the bound.
    for (int step = 0; step < 64 && c > 0.0; ++step) {
        const double lower = std::nextafter(c, 0.0);
        if (!check_init(mdp, pi0, v0 - lower * ones)) break;
        c = lower;
    }
    return c;
}

VTable shift_init(const TabularMdp& mdp, const TabularPolicy& pi0, const VTable& v0) {
    return v0 - init_shift_constant(mdp, pi0, v0) * VTable::Ones(v0.size());
}

void write_trace_csv(std::ostream& out, const SchemeTrace& trace) {
    const auto cell = [](double x) {
        std::ostringstream s;
        if (!std::isnan(x)) s.precision(17), s << x;
        return s.str();
    };
    out << "iteration,improvement_gap,bellman_residual,step_size\n";
    for (const auto& rec : trace.iterations) {
        out << rec.iteration << ',' << cell(rec.improvement_gap) << ',' << cell(rec.bellman_residual) << ','
            << cell(rec.step_size) << '\n';
    }
}

} // namespace mosopi
