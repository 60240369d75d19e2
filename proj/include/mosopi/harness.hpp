#pragma once

#include "mosopi/agents.hpp"
#include "mosopi/config.hpp"
#include "mosopi/protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mosopi {

/// Column header of every per-run CSV file.
inline constexpr const char* kRunCsvHeader = "step,eval_return,protocol,seed,algo,env";
inline constexpr const char* kAggregateCsvHeader = "step,protocol,algo,env,median,min,max,n_seeds";

std::vector<std::uint64_t> default_seeds();

/// Trains with `algo` ("moppo" or "ppo") on a fresh environment built from its name.
RunLog train(const std::string& algo, const std::string& env_name, const MoppoConfig& config, std::uint64_t seed);

/// One line per evaluation point and protocol, header kRunCsvHeader.
std::string run_csv(const RunLog& log);
void write_run_csv(const RunLog& log, const std::filesystem::path& path);

/// Episode returns and entropy, as "step,kind,value" rows.
void write_training_log_csv(const RunLog& log, const std::filesystem::path& path);

struct RunRow {
    long step = 0;
    double eval_return = 0.0;
    std::string protocol;
    std::uint64_t seed = 0;
    std::string algo;
    std::string env;
};

/// Parses a per-run CSV; throws std::runtime_error on a missing or malformed
/// header or row.
std::vector<RunRow> read_run_csv(const std::filesystem::path& path);

struct AggregateRow {
    long step = 0;
    std::string protocol;
    std::string algo;
    std::string env;
    double median = 0.0;
    double min = 0.0;
    double max = 0.0;
    int n_seeds = 0;
};

/// Median, min and max across runs for every (protocol, algo, env, step).
/// Points are aligned by step; a run that stopped early simply contributes to
/// fewer points.
std::vector<AggregateRow> aggregate(const std::vector<RunRow>& rows);
std::vector<AggregateRow> aggregate_files(const std::vector<std::filesystem::path>& run_csvs);
void write_aggregate_csv(const std::vector<AggregateRow>& rows, const std::filesystem::path& path);
std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& path);

struct ExperimentResult {
    std::vector<std::filesystem::path> run_csvs;
    std::filesystem::path aggregate_csv;
    std::vector<RunLog> logs;        ///< successful runs, in seed order
    std::vector<std::string> failures;
};

/// Runs every seed (in parallel up to `workers`), writes
/// <out_dir>/<algo>_<env>_seed<seed>.csv per run and
/// <out_dir>/<algo>_<env>_aggregate.csv built from the files just written.
ExperimentResult run_experiment(const MoppoConfig& config, const std::string& env_name, const std::string& algo,
                                const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir,
                                int workers = 1);

struct SweepSpec {
    std::string parameter;          ///< a config key, e.g. "m" or "train_freq"
    std::vector<std::string> values;
    MoppoConfig base;
    std::vector<std::uint64_t> seeds = default_seeds();
    std::string env = "pendulum";
    std::string algo = "moppo";
    /// When positive, q_steps is set to total_q_steps / m for every run
    /// (m x q_steps held fixed).
    int total_q_steps = 0;
    int workers = 1;
    /// Threshold used for the steps-to-threshold column.
    double target_return = std::numeric_limits<double>::quiet_NaN();
};

struct SweepRow {
    std::string value;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string failure;
    double final_return = std::numeric_limits<double>::quiet_NaN(); ///< last mean-action evaluation
    std::optional<long> steps_to_target;
    long steps = 0;
    double wall_clock_seconds = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows; ///< value-major, then seed
    std::vector<std::filesystem::path> aggregate_csvs; ///< one per value
};

/// Config for one sweep point (parameter assignment and budget rule applied).
MoppoConfig sweep_config(const SweepSpec& spec, const std::string& value);

/// Cross product of values and seeds. A failing run is recorded in its row and
/// the sweep continues. Files go to <out_dir>/<parameter>_<value>/.
SweepResult run_sweep(const SweepSpec& spec, const std::filesystem::path& out_dir);

/// Writes the sweep table as CSV.
void write_sweep_csv(const SweepResult& result, const std::string& parameter, const std::filesystem::path& path);

/// First evaluation step whose mean-action return reaches `threshold`.
std::optional<long> steps_to_reach(const RunLog& log, double threshold);

double median(std::vector<double> values);

/// One SVG learning curve per aggregate CSV (median line, min-max band per
/// algo/protocol series), written next to `out_dir`/<stem>.svg. Throws
/// std::invalid_argument on an empty list.
std::vector<std::filesystem::path> emit_plots(const std::vector<std::filesystem::path>& aggregate_csvs,
                                              const std::filesystem::path& out_dir);

/// Axis extents of a plot: exactly the min and max of the plotted data.
struct PlotRange {
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
};
PlotRange plot_range(const std::vector<AggregateRow>& rows);

} // namespace mosopi
