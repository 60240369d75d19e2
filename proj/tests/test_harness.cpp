#include "mosopi/harness.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace mosopi;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mosopi_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

MoppoConfig quick_config() {
    MoppoConfig c;
    c.train_freq = 50;
    c.m = 1;
    c.q_steps = 2;
    c.pol_steps = 2;
    c.batch_size = 32;
    c.buffer_size = 300;
    c.actor_hidden = {8};
    c.critic_hidden = {8};
    c.n_expect = 2;
    c.n_pol = 2;
    c.max_steps = 300;
    c.eval_every = 100;
    c.eval_episodes = 1;
    c.ppo.horizon = 100;
    c.ppo.epochs = 1;
    c.ppo.minibatch = 50;
    return c;
}

RunLog fake_log(std::uint64_t seed, std::vector<double> scores) {
    RunLog log;
    log.algo = "moppo";
    log.env = "pendulum";
    log.seed = seed;
    Top10Tracker top;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const long step = 1000 * static_cast<long>(i + 1);
        log.evaluations.push_back({step, scores[i], top.add(scores[i], step)});
    }
    return log;
}

} // namespace

TEST(RunCsv, SchemaAndRoundTrip) {
    const RunLog log = fake_log(7, {-10.5, -3.25});
    const std::string text = run_csv(log);
    EXPECT_EQ(text.substr(0, text.find('\n')), "step,eval_return,protocol,seed,algo,env");
    EXPECT_NE(text.find("1000,-10.5,mean_action_every_1000,7,moppo,pendulum\n"), std::string::npos);
    EXPECT_NE(text.find("2000,-6.875,top10_average,7,moppo,pendulum\n"), std::string::npos);

    const fs::path dir = scratch_dir("roundtrip");
    write_run_csv(log, dir / "run.csv");
    const std::vector<RunRow> rows = read_run_csv(dir / "run.csv");
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[2].step, 2000);
    EXPECT_EQ(rows[2].eval_return, -3.25);
    EXPECT_EQ(rows[2].protocol, "mean_action_every_1000");
    EXPECT_EQ(rows[2].seed, 7u);
}

TEST(RunCsv, MissingColumnsAndMalformedRowsAreErrors) {
    const fs::path dir = scratch_dir("malformed");
    write(dir / "a.csv", "step,protocol,seed,algo,env\n1000,x,1,moppo,chain\n");
    EXPECT_THROW(read_run_csv(dir / "a.csv"), std::runtime_error);
    write(dir / "b.csv", "step,eval_return,protocol,seed,algo,env\n1000,abc,x,1,moppo,chain\n");
    EXPECT_THROW(read_run_csv(dir / "b.csv"), std::runtime_error);
    write(dir / "c.csv", "step,eval_return,protocol,seed,algo,env\n1000,1.0,x\n");
    EXPECT_THROW(read_run_csv(dir / "c.csv"), std::runtime_error);
    EXPECT_THROW(read_run_csv(dir / "missing.csv"), std::runtime_error);
    write(dir / "d.csv", "step,median\n1,2\n");
    EXPECT_THROW(read_aggregate_csv(dir / "d.csv"), std::runtime_error);
}

TEST(Aggregate, MedianMinMaxPerPoint) {
    const fs::path dir = scratch_dir("aggregate");
    const std::vector<std::vector<double>> scores{{1.0, 5.0}, {3.0, 2.0}, {2.0}};
    std::vector<fs::path> files;
    for (std::size_t s = 0; s < scores.size(); ++s) {
        files.push_back(dir / ("r" + std::to_string(s) + ".csv"));
        write_run_csv(fake_log(s, scores[s]), files.back());
    }
    const std::vector<AggregateRow> agg = aggregate_files(files);
    const auto find = [&](long step, const std::string& protocol) {
        for (const auto& a : agg) {
            if (a.step == step && a.protocol == protocol) return a;
        }
        ADD_FAILURE() << "missing point";
        return AggregateRow{};
    };
    const AggregateRow first = find(1000, "mean_action_every_1000");
    EXPECT_EQ(first.median, 2.0);
    EXPECT_EQ(first.min, 1.0);
    EXPECT_EQ(first.max, 3.0);
    EXPECT_EQ(first.n_seeds, 3);
    const AggregateRow second = find(2000, "mean_action_every_1000");
    EXPECT_EQ(second.median, 3.5);
    EXPECT_EQ(second.n_seeds, 2);
    EXPECT_EQ(find(2000, "top10_average").median, (3.0 + 2.5) / 2.0);

    write_aggregate_csv(agg, dir / "agg.csv");
    const std::vector<AggregateRow> back = read_aggregate_csv(dir / "agg.csv");
    ASSERT_EQ(back.size(), agg.size());
    for (std::size_t i = 0; i < agg.size(); ++i) {
        EXPECT_EQ(back[i].median, agg[i].median);
        EXPECT_EQ(back[i].protocol, agg[i].protocol);
    }
    EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Experiment, WritesPerRunAndAggregateFilesDeterministically) {
    const fs::path a = scratch_dir("exp_a");
    const fs::path b = scratch_dir("exp_b");
    const MoppoConfig c = quick_config();
    const ExperimentResult ra = run_experiment(c, "pendulum", "moppo", {1, 2}, a, 2);
    const ExperimentResult rb = run_experiment(c, "pendulum", "moppo", {1, 2}, b, 1);
    ASSERT_EQ(ra.run_csvs.size(), 2u);
    EXPECT_TRUE(ra.failures.empty());
    EXPECT_EQ(ra.run_csvs[0].filename(), "moppo_pendulum_seed1.csv");
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(slurp(ra.run_csvs[i]), slurp(rb.run_csvs[i]));
    EXPECT_EQ(slurp(ra.aggregate_csv), slurp(rb.aggregate_csv));
    EXPECT_TRUE(fs::exists(a / "moppo_pendulum_seed1_log.csv"));

    // The aggregate is a function of the per-run files alone.
    write_aggregate_csv(aggregate_files(ra.run_csvs), a / "again.csv");
    EXPECT_EQ(slurp(a / "again.csv"), slurp(ra.aggregate_csv));

    const ExperimentResult ppo = run_experiment(c, "cartpole", "ppo", {3}, a);
    EXPECT_EQ(ppo.logs.size(), 1u);
    EXPECT_THROW(run_experiment(c, "pendulum", "sac", {1}, a), std::invalid_argument);
}

TEST(Sweep, FixedBudgetAndUnknownParameter) {
    SweepSpec spec;
    spec.parameter = "m";
    spec.base = quick_config();
    spec.total_q_steps = 250;
    EXPECT_EQ(sweep_config(spec, "1").q_steps, 250);
    EXPECT_EQ(sweep_config(spec, "5").q_steps, 50);
    EXPECT_EQ(sweep_config(spec, "5").m, 5);
    EXPECT_THROW(sweep_config(spec, "3"), std::invalid_argument);
    spec.total_q_steps = 0;
    EXPECT_EQ(sweep_config(spec, "10").q_steps, spec.base.q_steps);
    spec.parameter = "learning_rate";
    EXPECT_THROW(sweep_config(spec, "1"), std::invalid_argument);
}

TEST(Sweep, CrossProductRecordsFailuresAndContinues) {
    SweepSpec spec;
    spec.parameter = "optimizer(Policy)";
    spec.values = {"1e-4", "1e6"};
    spec.base = quick_config();
    spec.base.grad_clip = false;
    spec.base.clip_ratio = 1e6;
    spec.base.pol_steps = 50;
    spec.seeds = {1, 2};
    spec.workers = 2;
    spec.target_return = -1e9;
    const fs::path dir = scratch_dir("sweep");
    const SweepResult r = run_sweep(spec, dir);
    ASSERT_EQ(r.rows.size(), 4u);
    EXPECT_EQ(r.rows[0].value, "1e-4");
    EXPECT_EQ(r.rows[1].seed, 2u);
    EXPECT_TRUE(r.rows[0].ok);
    EXPECT_TRUE(r.rows[1].ok);
    ASSERT_TRUE(r.rows[0].steps_to_target.has_value());
    EXPECT_EQ(*r.rows[0].steps_to_target, 100);
    EXPECT_FALSE(r.rows[2].ok);
    EXPECT_FALSE(r.rows[2].failure.empty());
    EXPECT_TRUE(fs::exists(dir / "optimizer(Policy)_1e-4" / "moppo_pendulum_aggregate.csv"));
    write_sweep_csv(r, spec.parameter, dir / "sweep.csv");
    EXPECT_NE(slurp(dir / "sweep.csv").find("1e6,1,0,"), std::string::npos);
}

TEST(Plots, EmptyListIsAnError) {
    EXPECT_THROW(emit_plots({}, scratch_dir("plots_empty")), std::invalid_argument);
}

TEST(Plots, SingleSeedBandCollapsesAndRangesAreExact) {
    const fs::path dir = scratch_dir("plots");
    write_run_csv(fake_log(1, {-400.0, -150.0, -200.0}), dir / "run.csv");
    const std::vector<AggregateRow> agg = aggregate_files({dir / "run.csv"});
    for (const AggregateRow& a : agg) {
        EXPECT_EQ(a.min, a.median);
        EXPECT_EQ(a.max, a.median);
    }
    const PlotRange range = plot_range(agg);
    EXPECT_EQ(range.x_min, 1000.0);
    EXPECT_EQ(range.x_max, 3000.0);
    EXPECT_EQ(range.y_min, -400.0);
    EXPECT_EQ(range.y_max, -150.0);

    write_aggregate_csv(agg, dir / "curve.csv");
    const auto images = emit_plots({dir / "curve.csv"}, dir / "img");
    ASSERT_EQ(images.size(), 1u);
    const std::string svg = slurp(images[0]);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("class=\"band\""), std::string::npos);
    EXPECT_NE(svg.find("class=\"median\""), std::string::npos);

    // Band polygon of a single seed traces the median line out and back.
    const auto band_at = svg.find("class=\"band\" points=\"") + 21;
    const std::string band = svg.substr(band_at, svg.find('"', band_at) - band_at);
    const auto line_at = svg.find("class=\"median\" points=\"") + 23;
    const std::string line = svg.substr(line_at, svg.find('"', line_at) - line_at);
    EXPECT_EQ(band.substr(0, line.size()), line);

    write(dir / "bad.csv", "step,median\n1,2\n");
    EXPECT_THROW(emit_plots({dir / "bad.csv"}, dir), std::runtime_error);
    write(dir / "empty.csv", std::string(kAggregateCsvHeader) + "\n");
    EXPECT_THROW(emit_plots({dir / "empty.csv"}, dir), std::invalid_argument);
}

TEST(Harness, StepsToReach) {
    const RunLog log = fake_log(1, {-500.0, -290.0, -100.0});
    EXPECT_EQ(steps_to_reach(log, -300.0), 2000);
    EXPECT_EQ(steps_to_reach(log, -290.0), 2000);
    EXPECT_FALSE(steps_to_reach(log, 0.0).has_value());
    EXPECT_EQ(default_seeds(), (std::vector<std::uint64_t>{1000, 2000, 3000, 4000, 5000}));
}
