// Command-line driver: exact tabular schemes, training, sweeps, plots and the
// convergence check suite.

#include "mosopi/config.hpp"
#include "mosopi/convergence_suite.hpp"
#include "mosopi/envs.hpp"
#include "mosopi/harness.hpp"
#include "mosopi/mdp.hpp"
#include "mosopi/schemes.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace mosopi;

namespace {

/// "clip ratio" -> "clip-ratio", "optimizer(Q)" -> "optimizer-q".
std::string flag_name(const std::string& key) {
    std::string out;
    for (const char c : key) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!out.empty() && out.back() != '-') {
            out += '-';
        }
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

/// Config assembled from defaults, an optional preset, an optional file and
/// per-field flags, in that order of precedence (later wins).
struct ConfigOptions {
    std::string preset;
    std::string file;
    std::map<std::string, std::string> flags; ///< config key -> value given on the command line
    std::vector<std::string> assignments;     ///< key=value
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
    cmd->add_option("--preset", opts.preset, "Start from a named preset (hopper)");
    cmd->add_option("--config", opts.file, "YAML file keyed by config names")->check(CLI::ExistingFile);
    cmd->add_option("--set", opts.assignments, "Override any config key: --set 'clip ratio=0.01'");
    for (const std::string& key : config_keys()) {
        cmd->add_option_function<std::string>(
            "--" + flag_name(key), [&opts, key](const std::string& v) { opts.flags[key] = v; },
            "Config field '" + key + "'");
    }
}

MoppoConfig build_config(const ConfigOptions& opts) {
    MoppoConfig config;
    if (opts.preset == "hopper") {
        config = hopper_preset();
    } else if (!opts.preset.empty()) {
        throw std::invalid_argument("unknown preset '" + opts.preset + "'");
    }
    if (!opts.file.empty()) config = load_config(opts.file, config);
    for (const auto& [key, value] : opts.flags) set_config_value(config, key, value);
    for (const std::string& a : opts.assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + a + "'");
        set_config_value(config, a.substr(0, eq), a.substr(eq + 1));
    }
    config.validate();
    return config;
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& given) {
    return given.empty() ? default_seeds() : given;
}

int solve_exact(const std::string& mdp_path, const std::vector<int>& garnet, double gamma, const std::string& scheme,
                long m, const std::string& rule, double alpha, double epsilon, double tolerance, std::size_t max_iter,
                const std::string& trace_path, const std::string& save_path) {
    std::optional<TabularMdp> mdp;
    if (!mdp_path.empty()) {
        mdp = load_mdp(mdp_path);
    } else {
        RandomMdpParams p;
        p.n_states = garnet.at(0);
        p.n_actions = garnet.at(1);
        p.branching = garnet.at(2);
        p.seed = static_cast<std::uint64_t>(garnet.at(3));
        p.gamma = gamma;
        mdp = generate_random_mdp(p);
    }
    if (!save_path.empty()) save_mdp(save_path, *mdp);

    const VTable zero = VTable::Zero(mdp->n_states());
    const VTable v_star = policy_value(*mdp, run_pi(*mdp, zero).final_policy());
    SchemeOptions options;
    options.tolerance = tolerance;
    options.max_iter = max_iter;
    options.optimal_value = v_star;

    SchemeTrace trace;
    if (scheme == "vi") {
        trace = run_vi(*mdp, zero, options);
    } else if (scheme == "pi") {
        trace = run_pi(*mdp, zero, options);
    } else if (scheme == "mpi") {
        trace = run_mpi(*mdp, zero, m, options);
    } else if (scheme == "mosopi") {
        SoftGreedyRule r;
        if (rule == "exact") {
            r = ExactGreedy{};
        } else if (rule == "cpi") {
            r = CpiMixture{constant_alpha(alpha)};
        } else if (rule == "clip") {
            r = ClipLike{epsilon};
        } else {
            throw std::invalid_argument("unknown rule '" + rule + "' (exact, cpi, clip)");
        }
        const TabularPolicy pi0 = TabularPolicy::uniform(mdp->n_states(), mdp->n_actions());
        trace = run_mosopi(*mdp, pi0, shift_init(*mdp, pi0, zero), m, r, options);
    } else {
        throw std::invalid_argument("unknown scheme '" + scheme + "' (vi, pi, mpi, mosopi)");
    }

    std::cout << "scheme " << scheme << ": " << trace.size() << " iterations, converged " << (trace.converged ? "yes" : "no")
              << ", ||v - v*|| = " << sup_norm(trace.final_value() - v_star) << "\n";
    std::cout << "v_final:";
    for (int s = 0; s < mdp->n_states(); ++s) std::cout << " " << trace.final_value()(s);
    std::cout << "\ngreedy actions:";
    for (const int a : trace.final_policy().argmax_actions()) std::cout << " " << a;
    std::cout << "\n";
    if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        if (!out) throw std::runtime_error("cannot write " + trace_path);
        write_trace_csv(out, trace);
    }
    return 0;
}

void print_sweep(const SweepResult& result) {
    for (const SweepRow& r : result.rows) {
        std::cout << r.value << " seed " << r.seed << ": ";
        if (!r.ok) {
            std::cout << "FAILED " << r.failure << "\n";
            continue;
        }
        std::cout << "final " << r.final_return << ", steps " << r.steps;
        if (r.steps_to_target) std::cout << ", target at " << *r.steps_to_target;
        std::cout << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MoSoPI / MoPPO experiment driver"};
    app.require_subcommand(1);

    // solve-exact
    auto* solve = app.add_subcommand("solve-exact", "Run an exact tabular scheme on a stored or random MDP");
    std::string mdp_path, scheme = "mpi", rule = "cpi", trace_path, save_path;
    std::vector<int> garnet{10, 3, 3, 0};
    double gamma = 0.9, alpha = 0.5, epsilon = 0.2, tolerance = 1e-10;
    long m = 5;
    std::size_t max_iter = 1000;
    solve->add_option("--mdp", mdp_path, "MDP text file")->check(CLI::ExistingFile);
    solve->add_option("--garnet", garnet, "states actions branching seed")->expected(4);
    solve->add_option("--gamma", gamma, "Discount for generated MDPs");
    solve->add_option("--scheme", scheme, "vi | pi | mpi | mosopi");
    solve->add_option("-m", m, "Partial evaluation depth");
    solve->add_option("--rule", rule, "mosopi greedy rule: exact | cpi | clip");
    solve->add_option("--alpha", alpha, "CPI mixture rate");
    solve->add_option("--epsilon", epsilon, "clip rule ratio bound");
    solve->add_option("--tolerance", tolerance);
    solve->add_option("--max-iter", max_iter);
    solve->add_option("--trace", trace_path, "Write the per-iteration trace CSV");
    solve->add_option("--save-mdp", save_path, "Write the MDP in text form");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train MoPPO or PPO over seeds and write CSV files");
    std::string algo = "moppo", env = "pendulum", out_dir = "runs";
    std::vector<std::uint64_t> seeds;
    int workers = 1;
    bool dump_config = false;
    ConfigOptions train_opts;
    train_cmd->add_option("--algo", algo, "moppo | ppo");
    train_cmd->add_option("--env", env, "cartpole | pendulum | chain");
    train_cmd->add_option("--seeds", seeds, "Seeds (default 1000 2000 3000 4000 5000)");
    train_cmd->add_option("--out", out_dir, "Output directory");
    train_cmd->add_option("--workers", workers, "Runs in parallel");
    train_cmd->add_flag("--print-config", dump_config, "Print the resolved config as YAML");
    add_config_options(train_cmd, train_opts);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one config field over values and seeds");
    SweepSpec spec;
    std::vector<std::uint64_t> sweep_seeds;
    std::string sweep_out = "sweep";
    ConfigOptions sweep_opts;
    sweep_cmd->add_option("--param", spec.parameter, "Config key to vary")->required();
    sweep_cmd->add_option("--values", spec.values, "Values to try")->required()->delimiter(',');
    sweep_cmd->add_option("--fixed-budget", spec.total_q_steps, "Hold m x q_steps at this total");
    sweep_cmd->add_option("--target-return", spec.target_return, "Report steps to reach this return");
    sweep_cmd->add_option("--algo", spec.algo);
    sweep_cmd->add_option("--env", spec.env);
    sweep_cmd->add_option("--seeds", sweep_seeds);
    sweep_cmd->add_option("--workers", spec.workers);
    sweep_cmd->add_option("--out", sweep_out);
    add_config_options(sweep_cmd, sweep_opts);

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "Render aggregate CSV files as SVG learning curves");
    std::vector<std::string> plot_inputs;
    std::string plot_out = "plots";
    plot_cmd->add_option("aggregates", plot_inputs, "Aggregate CSV files");
    plot_cmd->add_option("--out", plot_out);

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "Check monotone improvement and v_k <= v_* on random MDPs");
    ConvergenceSuiteOptions suite;
    verify_cmd->add_option("--mdps", suite.n_mdps);
    verify_cmd->add_option("--max-states", suite.max_states);
    verify_cmd->add_option("--max-actions", suite.max_actions);
    verify_cmd->add_option("--gamma", suite.gamma);
    verify_cmd->add_option("--alpha", suite.alpha);
    verify_cmd->add_option("--m", suite.ms)->delimiter(',');
    verify_cmd->add_option("--slack", suite.slack);
    verify_cmd->add_option("--seed", suite.seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            return solve_exact(mdp_path, garnet, gamma, scheme, m, rule, alpha, epsilon, tolerance, max_iter, trace_path,
                               save_path);
        }
        if (train_cmd->parsed()) {
            const MoppoConfig config = build_config(train_opts);
            if (dump_config) std::cout << config_to_yaml(config);
            const ExperimentResult r = run_experiment(config, env, algo, parse_seeds(seeds), out_dir, workers);
            for (const RunLog& log : r.logs) {
                const double last = log.evaluations.empty() ? 0.0 : log.evaluations.back().mean_action_return;
                std::cout << algo << " " << env << " seed " << log.seed << ": " << log.steps << " steps, last eval " << last
                          << (log.stopped_on_entropy ? " (entropy stop)" : "") << ", " << log.wall_clock_seconds << " s\n";
            }
            for (const std::string& f : r.failures) std::cout << "FAILED " << f << "\n";
            std::cout << "aggregate: " << r.aggregate_csv.string() << "\n";
            return r.failures.empty() ? 0 : 1;
        }
        if (sweep_cmd->parsed()) {
            spec.base = build_config(sweep_opts);
            spec.seeds = parse_seeds(sweep_seeds);
            const SweepResult r = run_sweep(spec, sweep_out);
            write_sweep_csv(r, spec.parameter, fs::path(sweep_out) / "sweep.csv");
            print_sweep(r);
            return 0;
        }
        if (plot_cmd->parsed()) {
            std::vector<fs::path> files(plot_inputs.begin(), plot_inputs.end());
            for (const fs::path& image : emit_plots(files, plot_out)) std::cout << image.string() << "\n";
            return 0;
        }
        if (verify_cmd->parsed()) {
            const ConvergenceSuiteResult r = run_convergence_suite(suite);
            std::cout << r.runs << " runs, " << r.iterations << " iterations, " << r.failures << " failures\n"
                      << "worst T_pi' v - v: " << r.worst_self_improvement << "\n"
                      << "worst v_{k+1} - v_k: " << r.worst_monotone << "\n"
                      << "worst v_k - v_*: " << r.worst_excess << "\n";
            for (const std::string& msg : r.messages) std::cout << "  " << msg << "\n";
            return r.passed() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
