// Acceptance checks: one PASS/FAIL line per criterion.
//
//   forgetlab_acceptance [--work DIR] [--only 1,4,9]
//
// Sweeps are written below DIR and reused on a second run (cells are keyed
// by config hash), so delete DIR for a from-scratch evaluation.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "forgetlab/csv.hpp"
#include "forgetlab/errors.hpp"
#include "forgetlab/experiment.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/network.hpp"
#include "forgetlab/order_dynamics.hpp"
#include "forgetlab/tasks.hpp"

using namespace forgetlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

fs::path g_work = "acceptance-work";

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string join(const std::vector<double>& v, const char* f = "%.4g") {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(f, v[i]);
    return s + "]";
}

ExperimentConfig base(const std::string& name) {
    ExperimentConfig cfg = parse_config("");
    cfg.output_dir = g_work / name;
    return cfg;
}

// Columns of a trajectory CSV by name; the first present alias wins.
class Table {
public:
    explicit Table(const fs::path& path) {
        std::ifstream is(path);
        if (!is) throw Error("cannot open " + path.string());
        std::string line;
        std::getline(is, line);
        names_ = split_csv_line(line);
        cols_.resize(names_.size());
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto f = split_csv_line(line);
            for (std::size_t i = 0; i < f.size() && i < cols_.size(); ++i)
                cols_[i].push_back(number(f[i]));
        }
    }
    const std::vector<double>& col(std::initializer_list<const char*> aliases) const {
        for (const char* a : aliases) {
            const auto it = std::find(names_.begin(), names_.end(), a);
            if (it != names_.end()) return cols_[static_cast<std::size_t>(it - names_.begin())];
        }
        throw Error(std::string("missing column ") + *aliases.begin());
    }

private:
    // Text columns such as task_active read as NaN.
    static double number(const std::string& field) {
        char* end = nullptr;
        const double v = std::strtod(field.c_str(), &end);
        return end != field.c_str() && *end == '\0' ? v : NAN;
    }

    std::vector<std::string> names_;
    std::vector<std::vector<double>> cols_;
};

ErrorTrace trace(const Table& t, std::initializer_list<const char*> aliases) {
    return {t.col({"tau"}), t.col(aliases)};
}

const RunRecord& find(const std::vector<RunRecord>& rs, double v, const std::string& intervention, double param,
                      Engine engine = Engine::sim, std::uint64_t seed = 1) {
    for (const auto& r : rs)
        if (r.cell.similarity == v && r.cell.intervention == intervention && r.cell.param == param
            && r.cell.engine == engine && r.cell.seed == seed)
            return r;
    throw Error("no cell for V=" + fmt("%g", v) + " " + intervention);
}

bool all_ok(const std::vector<RunRecord>& rs) {
    return std::all_of(rs.begin(), rs.end(), [](const RunRecord& r) { return r.metrics.status == "ok"; });
}

Outcome integral_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    const IntegralReport rep = validate_integrals(100, 1'000'000, 1);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "max |closed - MC| / SE: I2 " << fmt("%.2f", rep.max_z[0]) << ", I3 " << fmt("%.2f", rep.max_z[1])
       << ", I4 " << fmt("%.2f", rep.max_z[2]) << " over 100 blocks x 1e6 samples in " << fmt("%.0f", secs) << " s";
    if (!rep.passed) os << "; failing: " << rep.failures;
    return {rep.passed && secs < 120.0, os.str()};
}

Outcome theory_vs_simulation() {
    ExperimentConfig cfg = base("c2");
    cfg.engine = Engine::both;
    cfg.similarity = {0.5};
    cfg.seeds = {1, 2, 3, 4, 5};
    const auto rs = run_sweep(cfg, SweepKind::sim);
    const fs::path dir = sweep_dir(cfg, SweepKind::sim);
    double worst[2] = {0.0, 0.0};
    double worst_tau = 0.0;
    for (std::uint64_t s : cfg.seeds) {
        const Table ode(dir / find(rs, 0.5, "none", 0.0, Engine::ode, s).trajectory);
        const Table sim(dir / find(rs, 0.5, "none", 0.0, Engine::sim, s).trajectory);
        const ErrorTrace ode_tr[2] = {trace(ode, {"eps_dagger", "eps_dag"}), trace(ode, {"eps_ddagger", "eps_ddag"})};
        const auto& tau = sim.col({"tau"});
        const std::vector<double>* sim_eps[2] = {&sim.col({"eps_dag"}), &sim.col({"eps_ddag"})};
        for (int t = 0; t < 2; ++t) {
            for (std::size_t i = 0; i < tau.size(); ++i) {
                const double d = std::abs((*sim_eps[t])[i] - ode_tr[t].at(tau[i]));
                if (d > worst[t]) {
                    worst[t] = d;
                    worst_tau = tau[i];
                }
            }
        }
    }
    const bool pass = all_ok(rs) && worst[0] <= 0.02 && worst[1] <= 0.02;
    return {pass, "max |eps_sim - eps_ode| over 5 seeds: task 1 " + fmt("%.4f", worst[0]) + ", task 2 "
                      + fmt("%.4f", worst[1]) + " (worst at tau " + fmt("%.0f", worst_tau) + ")"};
}

Outcome non_monotonic_forgetting() {
    ExperimentConfig cfg = base("c3");
    cfg.similarity = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    const auto rs = run_sweep(cfg, SweepKind::ode);
    std::vector<double> f;
    for (double v : cfg.similarity) f.push_back(find(rs, v, "none", 0.0, Engine::ode).metrics.forgetting);
    const auto arg = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
    const bool pass = all_ok(rs) && arg > 0 && arg + 1 < f.size() && f[arg] > f.front() && f[arg] > f.back();
    return {pass, "forgetting " + join(f) + " at V=" + join(cfg.similarity, "%g") + ", argmax V="
                      + fmt("%g", cfg.similarity[arg])};
}

// Specialisation signatures from the order-parameter ODE. Pre-switch
// specialisation is checked per seed; the post-switch signatures are checked on
// the mean over the specialised seeds, since single initialisations scatter
// around the trend (the per-seed count is reported too).
constexpr int kSpecSeeds = 60;
constexpr double kRateWindow = 20.0;
constexpr double kGrowthWindow = 200.0;

bool increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1])) return false;
    return true;
}

bool decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

Outcome specialisation_signatures() {
    ExperimentConfig cfg = base("c4");
    const double t1 = cfg.tau_dagger;
    const std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
    const DynamicsConfig dyn{cfg.lr_W, cfg.lr_h, cfg.dtau};
    auto start = [&](double V, std::uint64_t seed) {
        const TaskPair pair = make_teachers(cfg, cfg.D_init, V, seed);
        return empirical_order_params(make_initial_student(cfg, cfg.D_init, seed), pair.teacher_dag,
                                      pair.teacher_ddag);
    };
    std::vector<std::uint64_t> specialised;
    for (std::uint64_t seed = 1; seed <= kSpecSeeds; ++seed) {
        const std::array<TaskPhase, 1> phase1{TaskPhase{Task::dagger, t1}};
        const OrderParameterState& s = integrate(start(0.0, seed), phase1, dyn, t1).back().state;
        const int k = specialised_node(s);
        if (normalised_overlap(s, k) > 0.9 && normalised_overlap(s, 1 - k) <= 0.9
            && std::sqrt(s.Q(1 - k, 1 - k)) < 0.1)
            specialised.push_back(seed);
    }
    std::vector<double> rate(grid.size()), growth(grid.size()), reuse(grid.size());
    int per_seed = 0;
    for (std::uint64_t seed : specialised) {
        std::vector<double> r, g, e;
        for (double V : grid) {
            const std::array<TaskPhase, 2> sched{TaskPhase{Task::dagger, t1},
                                                 TaskPhase{Task::ddagger, t1 + kGrowthWindow}};
            const Trajectory tr = integrate(start(V, seed), sched, dyn, 1.0);
            const auto at = [&](double tau) -> const OrderParameterState& {
                for (const auto& p : tr)
                    if (std::abs(p.tau - tau) < 1e-9) return p.state;
                throw Error("no trajectory point at tau " + fmt("%g", tau));
            };
            const OrderParameterState& sw = at(t1);
            const int k = specialised_node(sw);
            r.push_back(std::abs(at(t1 + kRateWindow).Q(k, k) - sw.Q(k, k)) / kRateWindow);
            g.push_back(at(t1 + kGrowthWindow).Q(1 - k, 1 - k) - sw.Q(1 - k, 1 - k));
            e.push_back(reuse_error(sw.T(0, 0), sw.S(0, 0), sw.V(0, 0), sw.v_dag(0), reuse_head_component(sw)));
        }
        per_seed += increasing(r) && decreasing(g) && decreasing(e);
        const double n = static_cast<double>(specialised.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            rate[i] += r[i] / n;
            growth[i] += g[i] / n;
            reuse[i] += e[i] / n;
        }
    }
    const bool pass = !specialised.empty() && increasing(rate) && decreasing(growth) && decreasing(reuse);
    return {pass, "clean pre-switch specialisation in " + std::to_string(specialised.size()) + "/"
                      + std::to_string(kSpecSeeds) + " seeds; seed means over V=" + join(grid, "%g")
                      + ": |dq/dtau| " + join(rate, "%.3g") + ", dormant growth " + join(growth, "%.3g")
                      + ", reuse_error " + join(reuse, "%.3g") + "; all three monotone on "
                      + std::to_string(per_seed) + "/" + std::to_string(specialised.size()) + " single seeds"};
}

Outcome ewc_behaviour() {
    ExperimentConfig cfg = base("c5");
    cfg.similarity = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    cfg.ewc_lambdas = {0.0, 1e3, 1e4};
    const auto rs = run_sweep(cfg, SweepKind::ewc);
    bool monotone = true;
    std::string per_v;
    for (double v : cfg.similarity) {
        if (v == 1.0) continue;
        std::vector<double> f;
        for (double l : cfg.ewc_lambdas) f.push_back(find(rs, v, "ewc", l).metrics.forgetting);
        for (std::size_t i = 1; i < f.size(); ++i) monotone = monotone && f[i] <= f[i - 1];
        per_v += " V=" + fmt("%g", v) + join(f, "%.3g");
    }
    const double lmax = cfg.ewc_lambdas.back();
    std::vector<double> end;
    for (double v : cfg.similarity) end.push_back(find(rs, v, "ewc", lmax).metrics.eps_dag_end);
    double gap = 0.0, sep = INFINITY;
    for (std::size_t i = 0; i + 1 < end.size(); ++i) {
        for (std::size_t j = i + 1; j + 1 < end.size(); ++j) gap = std::max(gap, std::abs(end[i] - end[j]));
        sep = std::min(sep, std::abs(end.back() - end[i]));
    }
    const bool pass = all_ok(rs) && monotone && gap < 0.02 && sep > gap;
    return {pass, "forgetting over lambda " + join(cfg.ewc_lambdas, "%g") + ":" + per_v + "; at lambda "
                      + fmt("%g", lmax) + " eps1_end " + join(end, "%.3g") + ", max gap V<1 " + fmt("%.4f", gap)
                      + ", V=1 separation " + fmt("%.4f", sep)};
}

// Phase-2 length (task steps, in tau) for the interleaving comparisons.
constexpr double kReplayTau = 500.0;
constexpr double kSlowingTau = 500.0;

Outcome interleaving_behaviour() {
    ExperimentConfig cfg = base("c6");
    cfg.similarity = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    cfg.replay_periods = {1};
    cfg.tau_ddagger = kReplayTau;
    const auto rs = run_sweep(cfg, SweepKind::replay);
    std::vector<double> vanilla, t1;
    for (double v : cfg.similarity) {
        vanilla.push_back(find(rs, v, "none", 0.0).metrics.forgetting);
        t1.push_back(find(rs, v, "replay", 1.0).metrics.forgetting);
    }
    const bool ends = t1.front() < 0.1 * vanilla.front() && t1.back() < 0.1 * vanilla.back();
    const auto arg = static_cast<std::size_t>(std::max_element(t1.begin(), t1.end()) - t1.begin());
    const bool interior = arg > 0 && arg + 1 < t1.size();
    return {all_ok(rs) && ends && interior,
            "vanilla " + join(vanilla, "%.3g") + ", T=1 " + join(t1, "%.3g") + ", T=1 argmax V="
                + fmt("%g", cfg.similarity[arg])};
}

// Four student units against two-unit teachers. With single-unit teachers and
// two student units replay from the old solution wins at every V.
void wide_topology(ExperimentConfig& cfg) {
    cfg.K = 4;
    cfg.M = 2;
    cfg.P = 2;
    cfg.scheme = SimilarityScheme::interpolation;
}

Outcome catastrophic_slowing() {
    ExperimentConfig cfg = base("c7");
    wide_topology(cfg);
    cfg.similarity = {0.0, 0.6, 1.0};
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.slowing_period = 1;
    cfg.tau_ddagger = kSlowingTau;
    const auto rs = run_sweep(cfg, SweepKind::slowing);
    auto mean = [&](double v, const char* iv, double MetricsRow::*field) {
        double sum = 0.0;
        for (std::uint64_t s : cfg.seeds) sum += find(rs, v, iv, 1.0, Engine::sim, s).metrics.*field;
        return sum / static_cast<double>(cfg.seeds.size());
    };
    std::string detail;
    bool pass = all_ok(rs);
    for (double v : cfg.similarity) {
        const double c1 = mean(v, "continue", &MetricsRow::eps_dag_end);
        const double c2 = mean(v, "continue", &MetricsRow::eps_ddag_end);
        const double r1 = mean(v, "reinit", &MetricsRow::eps_dag_end);
        const double r2 = mean(v, "reinit", &MetricsRow::eps_ddag_end);
        if (v == 0.6) pass = pass && r1 < c1 && r2 < c2;
        else pass = pass && c1 < r1;
        detail += "V=" + fmt("%g", v) + " continue (" + fmt("%.3e", c1) + ", " + fmt("%.3e", c2) + ") reinit ("
                  + fmt("%.3e", r1) + ", " + fmt("%.3e", r2) + "); ";
    }
    return {pass, detail + "mean (eps1, eps2) over 5 seeds at end of phase 2, K=4 M=2"};
}

Outcome importance_trend() {
    ExperimentConfig cfg = base("c8");
    cfg.seeds.clear();
    for (std::uint64_t s = 1; s <= 50; ++s) cfg.seeds.push_back(s);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rs = run_sweep(cfg, SweepKind::mix);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<double> mean;
    for (double a : cfg.mix.alphas) {
        double sum = 0.0;
        int n = 0;
        for (const auto& r : rs) {
            if (r.cell.similarity == a && std::isfinite(r.metrics.importance_dot)) {
                sum += r.metrics.importance_dot;
                ++n;
            }
        }
        mean.push_back(n ? sum / n : NAN);
    }
    const double rho = spearman(cfg.mix.alphas, mean);
    return {all_ok(rs) && rho > 0.0,
            "mean I1.I2 over 50 seeds " + join(mean, "%.4f") + " at alpha " + join(cfg.mix.alphas, "%g")
                + ", Spearman " + fmt("%.3f", rho) + ", " + fmt("%.0f", secs) + " s"};
}

Outcome exactness() {
    std::vector<std::string> failed;
    auto check = [&](bool ok, const char* what) {
        if (!ok) failed.push_back(what);
    };
    ExperimentConfig cfg = base("c9");
    const int D = 200;
    const TaskPair pair = make_teachers(cfg, D, 0.5, 3);
    const TwoLayerNet student = make_initial_student(cfg, D, 3);
    const TaskSet tasks{std::make_shared<TeacherSource>(pair.teacher_dag),
                        std::make_shared<TeacherSource>(pair.teacher_ddag)};
    TrainPlan vanilla;
    vanilla.phases = {{Task::dagger, 20 * D}, {Task::ddagger, 20 * D}};
    vanilla.seed = 5;
    ProbeSettings probes;
    probes.every = D;
    const RunResult base_run = train_continual(student, tasks, vanilla, probes);
    auto same = [&](const RunResult& r) {
        if (r.records.size() != base_run.records.size() || !(r.final_student == base_run.final_student)) return false;
        for (std::size_t i = 0; i < r.records.size(); ++i)
            if (r.records[i].eps_dag != base_run.records[i].eps_dag
                || r.records[i].eps_ddag != base_run.records[i].eps_ddag)
                return false;
        return true;
    };
    TrainPlan ewc0 = vanilla;
    ewc0.ewc = EwcSettings{0.0, 0};
    check(same(train_continual(student, tasks, ewc0, probes)), "ewc lambda=0");
    TrainPlan long_period = vanilla;
    long_period.replay = ReplaySettings{20 * D + 1, Task::dagger};
    check(same(train_continual(student, tasks, long_period, probes)), "replay T > phase length");

    const OrderParameterState s0 = empirical_order_params(student, pair.teacher_dag, pair.teacher_ddag);
    const std::array<TaskPhase, 2> sched{TaskPhase{Task::dagger, 20.0}, TaskPhase{Task::ddagger, 40.0}};
    const Trajectory tr = integrate(s0, sched, DynamicsConfig{}, 1.0);
    bool frozen = true, head_frozen = true;
    for (const auto& p : tr) {
        frozen = frozen && p.state.T == s0.T && p.state.S == s0.S && p.state.V == s0.V;
        if (p.tau <= 20.0) head_frozen = head_frozen && p.state.h_ddag == s0.h_ddag;
        if (p.tau >= 20.0) head_frozen = head_frozen && p.state.h_dag == tr[20].state.h_dag;
    }
    check(frozen, "frozen T/S/V");
    check(head_frozen, "inactive head");

    const OrderParameterState fixed = empirical_order_params(
        [&] {
            TwoLayerNet n = pair.teacher_dag;
            n.W.conservativeResize(2, Eigen::NoChange);
            n.W.row(1).setZero();
            n.heads[Task::dagger] = VectorX(2);
            n.heads[Task::dagger] << 1.0, 0.0;
            n.heads[Task::ddagger] = VectorX::Zero(2);
            return n;
        }(),
        pair.teacher_dag, pair.teacher_ddag);
    const StateDerivative d = derivatives(fixed, Task::dagger, DynamicsConfig{});
    check(d.dQ.cwiseAbs().maxCoeff() < 1e-12 && d.dR.cwiseAbs().maxCoeff() < 1e-12
              && d.dU.cwiseAbs().maxCoeff() < 1e-12 && d.dh_dag.cwiseAbs().maxCoeff() < 1e-12,
          "fixed point derivatives");
    check(std::abs(generalisation_error(fixed, Task::dagger)) <= 1e-12, "ode eps(student = teacher)");
    check(test_error(pair.teacher_dag, TeacherSource(pair.teacher_dag), Task::dagger, 10000, 1) <= 1e-12,
          "sim eps(student = teacher)");
    std::string detail = "5 exact identities and 2 zero-error checks";
    if (!failed.empty()) {
        detail += "; failing:";
        for (const auto& f : failed) detail += " " + f;
    }
    return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--work" && i + 1 < argc) {
            g_work = argv[++i];
        } else if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else {
            std::cerr << "usage: forgetlab_acceptance [--work DIR] [--only 1,2,...]\n";
            return 2;
        }
    }
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"integral oracle", integral_oracle},
        {"theory vs simulation", theory_vs_simulation},
        {"non-monotonic forgetting", non_monotonic_forgetting},
        {"specialisation signatures", specialisation_signatures},
        {"EWC behaviour", ewc_behaviour},
        {"interleaving behaviour", interleaving_behaviour},
        {"catastrophic slowing", catastrophic_slowing},
        {"data-mixing importance trend", importance_trend},
        {"exactness suite", exactness},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
                  << o.detail << " [" << fmt("%.0f", secs) << " s]" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
