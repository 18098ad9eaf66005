#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "forgetlab/errors.hpp"
#include "forgetlab/experiment.hpp"

using namespace forgetlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("forgetlab_exp_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

ExperimentConfig tiny(const fs::path& out) {
    ExperimentConfig cfg = parse_config(
        "D = 60\nD_init = 60\n"
        "tau_dagger = 3\ntau_ddagger = 3\n"
        "dtau = 0.05\nrecord_every = 0.5\nprobe_every = 30\n"
        "similarity = [0, 0.5, 1]\n"
        "[replay]\nperiods = [2]\n");
    cfg.output_dir = out;
    return cfg;
}

}  // namespace

TEST(PlanCells, Counts) {
    ExperimentConfig cfg = parse_config("similarity = [0.5]\n");
    EXPECT_EQ(plan_cells(cfg, SweepKind::ode).size(), 1u);
    cfg = parse_config("similarity = [0, 0.2, 0.4, 0.6, 0.8, 1]\nseeds = [1, 2, 3, 4, 5]\n");
    EXPECT_EQ(plan_cells(cfg, SweepKind::ode).size(), 30u);
    cfg.engine = Engine::both;
    EXPECT_EQ(plan_cells(cfg, SweepKind::ode).size(), 60u);
    cfg = parse_config("similarity = [0, 1]\n[ewc]\nlambdas = [0, 1, 2]\n[replay]\nperiods = [1, 10]\n");
    EXPECT_EQ(plan_cells(cfg, SweepKind::ewc).size(), 6u);
    EXPECT_EQ(plan_cells(cfg, SweepKind::replay).size(), 6u);
    EXPECT_EQ(plan_cells(cfg, SweepKind::slowing).size(), 4u);
    cfg.seed_base = 100;
    for (const auto& c : plan_cells(cfg, SweepKind::sim)) {
        EXPECT_EQ(c.seed, 101u);
        EXPECT_EQ(c.engine, Engine::sim);
    }
}

TEST(CellHash, DependsOnCellOnly) {
    const ExperimentConfig a = parse_config("similarity = [0, 1]\n");
    ExperimentConfig b = parse_config("similarity = [0, 0.5, 1]\nworkers = 3\n");
    const auto ca = plan_cells(a, SweepKind::ode);
    const auto cb = plan_cells(b, SweepKind::ode);
    EXPECT_EQ(cell_hash(a, ca.front()), cell_hash(b, cb.front()));
    EXPECT_NE(cell_hash(a, ca.front()), cell_hash(a, ca.back()));
    b.lr_W = 0.2;
    EXPECT_NE(cell_hash(a, ca.front()), cell_hash(b, cb.front()));
}

TEST(RunSweep, WritesOutputsAndReusesCells) {
    const fs::path out = scratch("reuse");
    const ExperimentConfig cfg = tiny(out);
    std::ostringstream log1;
    const auto first = run_sweep(cfg, SweepKind::ode, &log1);
    ASSERT_EQ(first.size(), 3u);
    const fs::path dir = sweep_dir(cfg, SweepKind::ode);
    EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "index.csv"));
    EXPECT_TRUE(fs::exists(dir / "error_curves.svg"));
    EXPECT_TRUE(fs::exists(dir / "forgetting_vs_similarity.svg"));
    for (const auto& r : first) {
        EXPECT_FALSE(r.reused);
        EXPECT_EQ(r.metrics.status, "ok");
        EXPECT_TRUE(fs::exists(dir / r.trajectory));
        EXPECT_TRUE(std::isfinite(r.metrics.forgetting));
    }
    EXPECT_EQ(count(log1.str(), "done "), 3u);
    const std::string metrics = slurp(dir / "metrics.csv");
    EXPECT_EQ(metrics.substr(0, metrics.find('\n')),
              "scheme,V_or_alpha,seed,forgetting,transfer,reuse_error,importance_dot,engine,intervention,param,"
              "eps_dag_switch,eps_dag_end,eps_ddag_switch,eps_ddag_end,status,config_hash");

    std::ostringstream log2;
    const auto second = run_sweep(cfg, SweepKind::ode, &log2);
    for (const auto& r : second) EXPECT_TRUE(r.reused);
    EXPECT_EQ(count(log2.str(), "skip "), 3u);
    EXPECT_EQ(slurp(dir / "metrics.csv"), metrics);

    // Widening the grid only computes the new cell.
    ExperimentConfig wider = cfg;
    wider.similarity.push_back(0.25);
    std::ostringstream log3;
    run_sweep(wider, SweepKind::ode, &log3);
    EXPECT_EQ(count(log3.str(), "done "), 1u);
    fs::remove_all(out);
}

TEST(RunSweep, WorkerCountDoesNotChangeResults) {
    const fs::path a = scratch("w1"), b = scratch("w3");
    ExperimentConfig cfg = tiny(a);
    cfg.seeds = {1, 2};
    cfg.workers = 1;
    run_sweep(cfg, SweepKind::replay);
    cfg.output_dir = b;
    cfg.workers = 3;
    run_sweep(cfg, SweepKind::replay);
    EXPECT_EQ(slurp(a / "replay-sweep" / "metrics.csv"), slurp(b / "replay-sweep" / "metrics.csv"));
    EXPECT_EQ(slurp(a / "replay-sweep" / "index.csv"), slurp(b / "replay-sweep" / "index.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(RunSweep, DivergenceIsRecordedAndSweepContinues) {
    const fs::path out = scratch("diverge");
    ExperimentConfig cfg = tiny(out);
    cfg.engine = Engine::sim;
    cfg.lr_W = 1e5;
    cfg.lr_h = 1e5;
    cfg.head_variance = 1.0;
    cfg.weight_variance = 1.0;
    const auto recs = run_sweep(cfg, SweepKind::sim);
    ASSERT_EQ(recs.size(), 3u);
    for (const auto& r : recs) EXPECT_EQ(r.metrics.status.rfind("diverged@", 0), 0u) << r.metrics.status;
    EXPECT_TRUE(fs::exists(out / "sim-sweep" / "metrics.csv"));
    fs::remove_all(out);
}

TEST(LoadRecords, RoundTrip) {
    const fs::path out = scratch("load");
    const ExperimentConfig cfg = tiny(out);
    const auto recs = run_sweep(cfg, SweepKind::ewc);
    const auto back = load_records(sweep_dir(cfg, SweepKind::ewc));
    ASSERT_EQ(back.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(back[i].config_hash, recs[i].config_hash);
        EXPECT_EQ(back[i].cell.intervention, recs[i].cell.intervention);
        EXPECT_EQ(back[i].cell.param, recs[i].cell.param);
        EXPECT_EQ(back[i].trajectory, recs[i].trajectory);
        EXPECT_EQ(back[i].metrics.forgetting, recs[i].metrics.forgetting);
    }
    EXPECT_THROW(load_records(out / "nothing-here"), Error);
    fs::remove_all(out);
}

TEST(Plots, ContentAndDeterminism) {
    const fs::path out = scratch("plots");
    ExperimentConfig cfg = tiny(out);
    cfg.similarity = {0.0, 0.25, 0.5, 0.75, 1.0};
    const auto recs = run_sweep(cfg, SweepKind::ode);
    const fs::path dir = sweep_dir(cfg, SweepKind::ode);
    const std::string curves = slurp(dir / "error_curves.svg");
    // Two tasks per similarity.
    EXPECT_EQ(count(curves, "<polyline"), 10u);
    const std::string fvs = slurp(dir / "forgetting_vs_similarity.svg");
    EXPECT_EQ(count(fvs, "<polyline"), 1u);
    EXPECT_EQ(count(fvs, "<circle"), 5u);
    EXPECT_EQ(fvs.rfind("<svg", 0), 0u);

    const fs::path again = emit_plot(recs, PlotKind::forgetting_vs_similarity, dir);
    EXPECT_EQ(slurp(again), fvs);
    EXPECT_THROW(emit_plot({}, PlotKind::error_curves, dir), ArgumentError);
    EXPECT_THROW(emit_plot(recs, PlotKind::importance_dots, dir), ArgumentError);
    fs::remove_all(out);
}

TEST(RunSweep, TinyDataMixing) {
    const fs::path out = scratch("mix");
    ExperimentConfig cfg = parse_config(
        "[mix]\nalphas = [0, 1]\nsteps_first = 400\nsteps_second = 400\nprobe_every = 100\n"
        "synthetic_per_class = 30\n");
    cfg.output_dir = out;
    const auto recs = run_sweep(cfg, SweepKind::mix);
    ASSERT_EQ(recs.size(), 2u);
    for (const auto& r : recs) {
        EXPECT_EQ(r.metrics.status, "ok");
        EXPECT_EQ(r.cell.intervention, "mix");
        EXPECT_TRUE(std::isfinite(r.metrics.importance_dot));
    }
    EXPECT_EQ(recs[1].metrics.similarity, 1.0);
    EXPECT_TRUE(fs::exists(out / "mix-sweep" / "importance_dots.svg"));
    fs::remove_all(out);
}

TEST(ValidateConfig, RunSweepRejectsBadConfig) {
    ExperimentConfig cfg = parse_config("");
    cfg.similarity.clear();
    EXPECT_THROW(run_sweep(cfg, SweepKind::ode), ConfigError);
}
