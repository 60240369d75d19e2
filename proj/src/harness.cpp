#include "mosopi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace mosopi {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss(line);
    while (std::getline(ss, item, sep)) parts.push_back(item);
    if (!line.empty() && line.back() == sep) parts.emplace_back();
    return parts;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// Maps header names to column positions; throws when one is missing.
std::vector<std::size_t> locate_columns(const std::string& header, const std::vector<std::string>& wanted,
                                        const fs::path& path) {
    const std::vector<std::string> names = split(header, ',');
    std::vector<std::size_t> positions;
    for (const std::string& w : wanted) {
        const auto it = std::find(names.begin(), names.end(), w);
        if (it == names.end()) throw std::runtime_error(path.string() + ": missing column '" + w + "'");
        positions.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    return positions;
}

double to_double(const std::string& s, const fs::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::runtime_error(path.string() + ": malformed number '" + s + "'");
}

std::string run_stem(const std::string& algo, const std::string& env, std::uint64_t seed) {
    return algo + "_" + env + "_seed" + std::to_string(seed);
}

/// Runs `count` jobs on up to `workers` threads.
template <typename Job>
void parallel_for(std::size_t count, int workers, Job job) {
    const std::size_t n_threads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) job(i);
        });
    }
    for (auto& th : threads) th.join();
}

} // namespace

std::vector<std::uint64_t> default_seeds() { return {1000, 2000, 3000, 4000, 5000}; }

RunLog train(const std::string& algo, const std::string& env_name, const MoppoConfig& config, std::uint64_t seed) {
    const std::unique_ptr<Environment> env = make_environment(env_name, seed);
    if (algo == "moppo") return run_moppo(*env, config, seed);
    if (algo == "ppo") return run_ppo(*env, config, seed);
    throw std::invalid_argument("unknown algorithm '" + algo + "' (expected moppo or ppo)");
}

std::string run_csv(const RunLog& log) {
    std::string out = std::string(kRunCsvHeader) + "\n";
    const std::string suffix = "," + std::to_string(log.seed) + "," + log.algo + "," + log.env + "\n";
    for (const EvalRecord& e : log.evaluations) {
        out += std::to_string(e.step) + "," + format_double(e.mean_action_return) + "," +
               protocol_name(ProtocolKind::MeanActionEvery1000) + suffix;
        out += std::to_string(e.step) + "," + format_double(e.top10_average) + "," +
               protocol_name(ProtocolKind::Top10Average) + suffix;
    }
    return out;
}

void write_run_csv(const RunLog& log, const fs::path& path) { write_text(path, run_csv(log)); }

void write_training_log_csv(const RunLog& log, const fs::path& path) {
    std::string out = "step,kind,value\n";
    for (const EpisodeRecord& e : log.episodes) {
        out += std::to_string(e.end_step) + ",episode_return," + format_double(e.episode_return) + "\n";
    }
    for (const EntropyRecord& e : log.entropy) {
        out += std::to_string(e.step) + ",entropy," + format_double(e.entropy) + "\n";
    }
    write_text(path, out);
}

std::vector<RunRow> read_run_csv(const fs::path& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path.string() + ": empty file");
    const auto col = locate_columns(lines.front(), {"step", "eval_return", "protocol", "seed", "algo", "env"}, path);
    const std::size_t width = split(lines.front(), ',').size();
    std::vector<RunRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> f = split(lines[i], ',');
        if (f.size() != width) throw std::runtime_error(path.string() + ": row " + std::to_string(i) + " has wrong width");
        RunRow r;
        r.step = static_cast<long>(to_double(f[col[0]], path));
        r.eval_return = to_double(f[col[1]], path);
        r.protocol = f[col[2]];
        r.seed = static_cast<std::uint64_t>(to_double(f[col[3]], path));
        r.algo = f[col[4]];
        r.env = f[col[5]];
        rows.push_back(std::move(r));
    }
    return rows;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AggregateRow> aggregate(const std::vector<RunRow>& rows) {
    using Key = std::tuple<std::string, std::string, std::string, long>;
    std::map<Key, std::vector<double>> groups;
    for (const RunRow& r : rows) groups[{r.protocol, r.algo, r.env, r.step}].push_back(r.eval_return);
    std::vector<AggregateRow> out;
    for (const auto& [key, values] : groups) {
        AggregateRow a;
        std::tie(a.protocol, a.algo, a.env, a.step) = key;
        a.median = median(values);
        a.min = *std::min_element(values.begin(), values.end());
        a.max = *std::max_element(values.begin(), values.end());
        a.n_seeds = static_cast<int>(values.size());
        out.push_back(std::move(a));
    }
    return out;
}

std::vector<AggregateRow> aggregate_files(const std::vector<fs::path>& run_csvs) {
    std::vector<RunRow> all;
    for (const fs::path& p : run_csvs) {
        std::vector<RunRow> rows = read_run_csv(p);
        all.insert(all.end(), rows.begin(), rows.end());
    }
    return aggregate(all);
}

void write_aggregate_csv(const std::vector<AggregateRow>& rows, const fs::path& path) {
    std::string out = std::string(kAggregateCsvHeader) + "\n";
    for (const AggregateRow& a : rows) {
        out += std::to_string(a.step) + "," + a.protocol + "," + a.algo + "," + a.env + "," + format_double(a.median) +
               "," + format_double(a.min) + "," + format_double(a.max) + "," + std::to_string(a.n_seeds) + "\n";
    }
    write_text(path, out);
}

std::vector<AggregateRow> read_aggregate_csv(const fs::path& path) {
    const std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error(path.string() + ": empty file");
    const auto col = locate_columns(lines.front(), {"step", "protocol", "algo", "env", "median", "min", "max", "n_seeds"},
                                    path);
    const std::size_t width = split(lines.front(), ',').size();
    std::vector<AggregateRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> f = split(lines[i], ',');
        if (f.size() != width) throw std::runtime_error(path.string() + ": row " + std::to_string(i) + " has wrong width");
        AggregateRow a;
        a.step = static_cast<long>(to_double(f[col[0]], path));
        a.protocol = f[col[1]];
        a.algo = f[col[2]];
        a.env = f[col[3]];
        a.median = to_double(f[col[4]], path);
        a.min = to_double(f[col[5]], path);
        a.max = to_double(f[col[6]], path);
        a.n_seeds = static_cast<int>(to_double(f[col[7]], path));
        rows.push_back(std::move(a));
    }
    return rows;
}

ExperimentResult run_experiment(const MoppoConfig& config, const std::string& env_name, const std::string& algo,
                                const std::vector<std::uint64_t>& seeds, const fs::path& out_dir, int workers) {
    if (seeds.empty()) throw std::invalid_argument("run_experiment needs at least one seed");
    if (algo != "moppo" && algo != "ppo") throw std::invalid_argument("unknown algorithm '" + algo + "'");
    config.validate();
    fs::create_directories(out_dir);
    std::vector<std::optional<RunLog>> logs(seeds.size());
    std::vector<std::string> errors(seeds.size());
    parallel_for(seeds.size(), workers, [&](std::size_t i) {
        try {
            RunLog log = train(algo, env_name, config, seeds[i]);
            if (!log.failure.empty()) errors[i] = "seed " + std::to_string(seeds[i]) + ": " + log.failure;
            logs[i] = std::move(log);
        } catch (const std::exception& e) {
            errors[i] = "seed " + std::to_string(seeds[i]) + ": " + e.what();
        }
    });

    ExperimentResult result;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!errors[i].empty()) result.failures.push_back(errors[i]);
        if (!logs[i]) continue;
        const fs::path path = out_dir / (run_stem(algo, env_name, seeds[i]) + ".csv");
        write_run_csv(*logs[i], path);
        write_training_log_csv(*logs[i], out_dir / (run_stem(algo, env_name, seeds[i]) + "_log.csv"));
        result.run_csvs.push_back(path);
        if (logs[i]->failure.empty()) result.logs.push_back(std::move(*logs[i]));
    }
    result.aggregate_csv = out_dir / (algo + "_" + env_name + "_aggregate.csv");
    write_aggregate_csv(aggregate_files(result.run_csvs), result.aggregate_csv);
    return result;
}

std::optional<long> steps_to_reach(const RunLog& log, double threshold) {
    for (const EvalRecord& e : log.evaluations) {
        if (e.mean_action_return >= threshold) return e.step;
    }
    return std::nullopt;
}

MoppoConfig sweep_config(const SweepSpec& spec, const std::string& value) {
    if (!has_config_key(spec.parameter)) {
        throw std::invalid_argument("sweep parameter '" + spec.parameter + "' is not a config field");
    }
    MoppoConfig config = spec.base;
    set_config_value(config, spec.parameter, value);
    if (spec.total_q_steps > 0) {
        if (spec.total_q_steps % config.m != 0) {
            throw std::invalid_argument("fixed budget " + std::to_string(spec.total_q_steps) + " is not divisible by m = " +
                                        std::to_string(config.m));
        }
        config.q_steps = spec.total_q_steps / config.m;
    }
    config.validate();
    return config;
}

SweepResult run_sweep(const SweepSpec& spec, const fs::path& out_dir) {
    if (spec.values.empty() || spec.seeds.empty()) throw std::invalid_argument("sweep needs values and seeds");
    std::vector<MoppoConfig> configs;
    for (const std::string& v : spec.values) configs.push_back(sweep_config(spec, v));

    const std::size_t n_seeds = spec.seeds.size();
    const std::size_t total = spec.values.size() * n_seeds;
    std::vector<SweepRow> rows(total);
    std::vector<std::optional<RunLog>> logs(total);
    parallel_for(total, spec.workers, [&](std::size_t job) {
        const std::size_t vi = job / n_seeds;
        SweepRow& row = rows[job];
        row.value = spec.values[vi];
        row.seed = spec.seeds[job % n_seeds];
        try {
            RunLog log = train(spec.algo, spec.env, configs[vi], row.seed);
            row.ok = log.failure.empty();
            row.failure = log.failure;
            row.steps = log.steps;
            row.wall_clock_seconds = log.wall_clock_seconds;
            if (!log.evaluations.empty()) row.final_return = log.evaluations.back().mean_action_return;
            if (!std::isnan(spec.target_return)) row.steps_to_target = steps_to_reach(log, spec.target_return);
            logs[job] = std::move(log);
        } catch (const std::exception& e) {
            row.ok = false;
            row.failure = e.what();
        }
    });

    SweepResult result;
    result.rows = rows;
    for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
        const fs::path dir = out_dir / (spec.parameter + "_" + spec.values[vi]);
        std::vector<fs::path> files;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const std::optional<RunLog>& log = logs[vi * n_seeds + s];
            if (!log) continue;
            const fs::path p = dir / (run_stem(spec.algo, spec.env, spec.seeds[s]) + ".csv");
            write_run_csv(*log, p);
            files.push_back(p);
        }
        if (files.empty()) continue;
        const fs::path agg = dir / (spec.algo + "_" + spec.env + "_aggregate.csv");
        write_aggregate_csv(aggregate_files(files), agg);
        result.aggregate_csvs.push_back(agg);
    }
    return result;
}

void write_sweep_csv(const SweepResult& result, const std::string& parameter, const fs::path& path) {
    std::string out = parameter + ",seed,ok,final_return,steps_to_target,steps,wall_clock_seconds,failure\n";
    for (const SweepRow& r : result.rows) {
        std::string failure = r.failure;
        std::replace(failure.begin(), failure.end(), ',', ';');
        out += r.value + "," + std::to_string(r.seed) + "," + (r.ok ? "1" : "0") + "," + format_double(r.final_return) +
               "," + (r.steps_to_target ? std::to_string(*r.steps_to_target) : "") + "," + std::to_string(r.steps) + "," +
               format_double(r.wall_clock_seconds) + "," + failure + "\n";
    }
    write_text(path, out);
}

// ------------------------------------------------------------------ plotting

PlotRange plot_range(const std::vector<AggregateRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("plot_range: no data");
    PlotRange r{static_cast<double>(rows.front().step), static_cast<double>(rows.front().step), rows.front().min,
                rows.front().max};
    for (const AggregateRow& a : rows) {
        r.x_min = std::min(r.x_min, static_cast<double>(a.step));
        r.x_max = std::max(r.x_max, static_cast<double>(a.step));
        r.y_min = std::min({r.y_min, a.min, a.median});
        r.y_max = std::max({r.y_max, a.max, a.median});
    }
    return r;
}

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 200.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

std::string render_svg(const std::vector<AggregateRow>& rows, const std::string& title) {
    const PlotRange range = plot_range(rows);
    // Degenerate extents are drawn in a unit window; the range itself is not altered.
    const double xs = range.x_max > range.x_min ? range.x_max - range.x_min : 1.0;
    const double ys = range.y_max > range.y_min ? range.y_max - range.y_min : 1.0;
    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - range.x_min) / xs * pw; };
    auto py = [&](double y) { return kTop + ph - (y - range.y_min) / ys * ph; };

    std::map<std::pair<std::string, std::string>, std::vector<AggregateRow>> series;
    for (const AggregateRow& a : rows) series[{a.algo, a.protocol}].push_back(a);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"15\" font-family=\"sans-serif\">" << title << "</text>\n";
    svg << "<g id=\"axes\" stroke=\"black\" fill=\"none\">\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph << "\"/>\n";
    svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph << "\"/>\n";
    svg << "</g>\n";
    svg << "<g font-size=\"11\" font-family=\"sans-serif\">\n";
    for (int k = 0; k <= 4; ++k) {
        const double x = range.x_min + (range.x_max - range.x_min) * k / 4.0;
        const double y = range.y_min + (range.y_max - range.y_min) * k / 4.0;
        svg << "<text x=\"" << px(x) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
        svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
    }
    svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">environment steps</text>\n";
    svg << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 16 " << kTop + ph / 2
        << ")\" text-anchor=\"middle\">return</text>\n";
    svg << "</g>\n";

    std::size_t color = 0;
    for (const auto& [key, points] : series) {
        const char* c = kColors[color++ % (sizeof(kColors) / sizeof(kColors[0]))];
        std::ostringstream band;
        for (const AggregateRow& a : points) band << num(px(static_cast<double>(a.step))) << "," << num(py(a.max)) << " ";
        for (auto it = points.rbegin(); it != points.rend(); ++it) {
            band << num(px(static_cast<double>(it->step))) << "," << num(py(it->min)) << " ";
        }
        svg << "<polygon class=\"band\" points=\"" << band.str() << "\" fill=\"" << c
            << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
        std::ostringstream line;
        for (const AggregateRow& a : points) line << num(px(static_cast<double>(a.step))) << "," << num(py(a.median)) << " ";
        svg << "<polyline class=\"median\" points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << c
            << "\" stroke-width=\"2\"/>\n";
        const double ly = kTop + 16.0 * static_cast<double>(color);
        svg << "<text x=\"" << kLeft + pw + 12 << "\" y=\"" << ly << "\" font-size=\"11\" font-family=\"sans-serif\" fill=\""
            << c << "\">" << key.first << " / " << key.second << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

} // namespace

std::vector<fs::path> emit_plots(const std::vector<fs::path>& aggregate_csvs, const fs::path& out_dir) {
    if (aggregate_csvs.empty()) throw std::invalid_argument("emit_plots: no aggregate files given");
    std::vector<fs::path> images;
    for (const fs::path& csv : aggregate_csvs) {
        const std::vector<AggregateRow> rows = read_aggregate_csv(csv);
        if (rows.empty()) throw std::invalid_argument("emit_plots: " + csv.string() + " has no data rows");
        const fs::path image = out_dir / (csv.stem().string() + ".svg");
        write_text(image, render_svg(rows, csv.stem().string()));
        images.push_back(image);
    }
    return images;
}

} // namespace mosopi
