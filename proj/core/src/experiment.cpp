#include "forgetlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "forgetlab/csv.hpp"
#include "forgetlab/errors.hpp"
#include "forgetlab/tasks.hpp"
#include "svg.hpp"

namespace forgetlab {

namespace fs = std::filesystem;

std::string_view to_string(SweepKind k) noexcept {
    switch (k) {
        case SweepKind::ode: return "ode-sweep";
        case SweepKind::sim: return "sim-sweep";
        case SweepKind::ewc: return "ewc-sweep";
        case SweepKind::replay: return "replay-sweep";
        case SweepKind::slowing: return "slowing";
        case SweepKind::mix: return "mix-sweep";
    }
    return "?";
}

std::string_view to_string(PlotKind k) noexcept {
    switch (k) {
        case PlotKind::error_curves: return "error_curves";
        case PlotKind::forgetting_vs_similarity: return "forgetting_vs_similarity";
        case PlotKind::importance_dots: return "importance_dots";
    }
    return "?";
}

namespace {

// Sub-streams of a cell's effective seed.
constexpr std::uint64_t kTeacherStream = 101;
constexpr std::uint64_t kStudentStream = 102;
constexpr std::uint64_t kPlanStream = 103;
constexpr std::uint64_t kSyntheticSeed = 7;

std::vector<Engine> engines_for(Engine e) {
    if (e == Engine::both) return {Engine::ode, Engine::sim};
    return {e};
}

Engine parse_engine(std::string_view s) {
    if (s == "ode") return Engine::ode;
    if (s == "sim") return Engine::sim;
    if (s == "both") return Engine::both;
    throw FormatError("unknown engine '" + std::string(s) + "'");
}

SweepKind parse_sweep(std::string_view s) {
    for (SweepKind k : {SweepKind::ode, SweepKind::sim, SweepKind::ewc, SweepKind::replay, SweepKind::slowing,
                        SweepKind::mix}) {
        if (to_string(k) == s) return k;
    }
    throw FormatError("unknown sweep '" + std::string(s) + "'");
}

double parse_number(const std::string& s) {
    if (s.empty()) return kMissing;
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw FormatError("bad number '" + s + "'");
    }
    if (pos != s.size()) throw FormatError("bad number '" + s + "'");
    return v;
}

std::uint64_t parse_seed(const std::string& s) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw FormatError("bad seed '" + s + "'");
}

CsvCell maybe(double v) {
    if (std::isnan(v)) return std::string();
    return v;
}

bool reuse_applies(const ExperimentConfig& cfg) {
    return cfg.M == 1 && cfg.P == 1 && cfg.activation == ActivationKind::scaled_erf;
}

double reuse_from_state(const ExperimentConfig& cfg, const OrderParameterState& s) {
    if (!reuse_applies(cfg)) return kMissing;
    return reuse_error(s.T(0, 0), s.S(0, 0), s.V(0, 0), s.v_dag(0), reuse_head_component(s));
}

void fill_errors(MetricsRow& row, const ErrorTrace& dag, const ErrorTrace& ddag, double switch_tau,
                 std::optional<double> measure) {
    const double end = std::min(dag.tau.back(), ddag.tau.back());
    const double m = measure ? std::min(*measure, end) : end;
    row.forgetting = forgetting(dag, switch_tau, m);
    row.transfer = transfer(ddag, switch_tau, m);
    row.eps_dag_switch = dag.at(switch_tau);
    row.eps_dag_end = dag.at(m);
    row.eps_ddag_switch = ddag.at(switch_tau);
    row.eps_ddag_end = ddag.at(m);
}

void write_atomically(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw Error("cannot write " + tmp.string());
        os << content;
        if (!os) throw Error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

MetricsRow run_ode_cell(const ExperimentConfig& cfg, const CellSpec& cell, std::ostream& traj) {
    const TaskPair pair = make_teachers(cfg, cfg.D_init, cell.similarity, cell.seed);
    const TwoLayerNet student = make_initial_student(cfg, cfg.D_init, cell.seed);
    const OrderParameterState initial = empirical_order_params(student, pair.teacher_dag, pair.teacher_ddag);
    const std::array<TaskPhase, 2> schedule{TaskPhase{Task::dagger, cfg.tau_dagger},
                                            TaskPhase{Task::ddagger, cfg.tau_dagger + cfg.tau_ddagger}};
    const Trajectory tr = integrate(initial, schedule, {cfg.lr_W, cfg.lr_h, cfg.dtau}, cfg.record_every);
    write_trajectory_csv(traj, tr);

    MetricsRow row;
    fill_errors(row, trace_of(tr, Task::dagger), trace_of(tr, Task::ddagger), cfg.tau_dagger, cfg.measure_tau);
    const auto at_switch = std::find_if(tr.begin(), tr.end(), [&](const TrajectoryPoint& p) {
        return p.tau >= cfg.tau_dagger - 1e-9;
    });
    if (at_switch != tr.end()) row.reuse_error = reuse_from_state(cfg, at_switch->state);
    return row;
}

MetricsRow run_sim_cell(const ExperimentConfig& cfg, const CellSpec& cell, std::ostream& traj) {
    const TaskPair pair = make_teachers(cfg, cfg.D, cell.similarity, cell.seed);
    TwoLayerNet student = make_initial_student(cfg, cfg.D, cell.seed);
    TaskSet tasks{std::make_shared<TeacherSource>(pair.teacher_dag),
                  std::make_shared<TeacherSource>(pair.teacher_ddag)};

    TrainPlan plan;
    plan.phases = {{Task::dagger, cfg.steps_dagger()}, {Task::ddagger, cfg.steps_ddagger()}};
    plan.lr_W = cfg.lr_W;
    plan.lr_h = cfg.lr_h;
    plan.seed = derive_seed(cell.seed, kPlanStream);
    plan.reinit = {cfg.weight_variance, cfg.head_variance};
    if (cell.intervention == "ewc" && cell.param > 0.0) plan.ewc = EwcSettings{cell.param, cfg.fisher_samples};
    if (cell.intervention == "replay") {
        plan.replay = ReplaySettings{static_cast<std::int64_t>(cell.param), Task::dagger};
    }
    if (cell.intervention == "reinit" || cell.intervention == "continue") {
        plan.replay = ReplaySettings{static_cast<std::int64_t>(cell.param), Task::dagger};
        plan.reinit_at_switch = cell.intervention == "reinit";
    }

    ProbeSettings probes;
    probes.every = cfg.probe_every;
    probes.errors = cfg.test_set_errors ? ErrorMode::test_set : ErrorMode::order_parameters;
    probes.n_test = cfg.n_test;

    const RunResult run = train_continual(std::move(student), tasks, plan, probes);
    write_run_csv(traj, run);

    MetricsRow row;
    const double switch_tau = static_cast<double>(run.phase_end_steps.at(0)) / cfg.D;
    fill_errors(row, trace_of(run, Task::dagger), trace_of(run, Task::ddagger), switch_tau, cfg.measure_tau);
    for (auto it = run.records.rbegin(); it != run.records.rend(); ++it) {
        if (it->step == run.phase_end_steps[0]) {
            if (it->order) row.reuse_error = reuse_from_state(cfg, *it->order);
            break;
        }
    }
    return row;
}

struct MixData {
    std::shared_ptr<const LabeledDataset> train1, test1, train2, test2;
};

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& d, int n, double test_fraction) {
    const int n_test = std::clamp(static_cast<int>(std::lround(n * test_fraction)), 1, n - 1);
    const int n_train = n - n_test;
    LabeledDataset train{d.inputs.topRows(n_train), d.labels.head(n_train), d.name + "/train"};
    LabeledDataset test{d.inputs.middleRows(n_train, n_test), d.labels.segment(n_train, n_test), d.name + "/test"};
    return {std::move(train), std::move(test)};
}

std::pair<fs::path, fs::path> mix_sources(const ExperimentConfig& cfg) {
    if (!cfg.mix.images.empty()) return {cfg.mix.images, cfg.mix.labels};
    const fs::path dir = cfg.output_dir / "data";
    const std::string stem = "synthetic-" + std::to_string(cfg.mix.synthetic_per_class);
    fs::path images = dir / (stem + "-images-idx3-ubyte");
    fs::path labels = dir / (stem + "-labels-idx1-ubyte");
    if (!fs::exists(images) || !fs::exists(labels)) {
        fs::create_directories(dir);
        fs::path ti = images, tl = labels;
        ti += ".tmp";
        tl += ".tmp";
        synthesize_idx(ti, tl, cfg.mix.synthetic_per_class, kSyntheticSeed);
        fs::rename(tl, labels);
        fs::rename(ti, images);
    }
    return {images, labels};
}

std::shared_ptr<const MixData> mix_data(const ExperimentConfig& cfg) {
    static std::mutex mu;
    static std::map<std::string, std::shared_ptr<const MixData>> cache;
    const auto& m = cfg.mix;
    std::ostringstream key;
    key << m.images << '|' << m.labels << '|' << m.first_classes.first << ',' << m.first_classes.second << '|'
        << m.second_classes.first << ',' << m.second_classes.second << '|' << m.input_dim << '|'
        << format_double(m.test_fraction) << '|' << m.synthetic_per_class << '|' << cfg.output_dir;
    std::lock_guard lock(mu);
    if (auto it = cache.find(key.str()); it != cache.end()) return it->second;

    const auto [images, labels] = mix_sources(cfg);
    const LabeledDataset d1 = load_idx_pair(images, labels, m.first_classes, m.input_dim);
    const LabeledDataset d2 = load_idx_pair(images, labels, m.second_classes, m.input_dim);
    const int n = std::min(d1.size(), d2.size());
    if (n < 2) throw ArgumentError("mix: too few samples in the selected classes");
    auto [tr1, te1] = split(d1, n, m.test_fraction);
    auto [tr2, te2] = split(d2, n, m.test_fraction);
    auto data = std::make_shared<MixData>();
    data->train1 = std::make_shared<const LabeledDataset>(std::move(tr1));
    data->test1 = std::make_shared<const LabeledDataset>(std::move(te1));
    data->train2 = std::make_shared<const LabeledDataset>(std::move(tr2));
    data->test2 = std::make_shared<const LabeledDataset>(std::move(te2));
    cache.emplace(key.str(), data);
    return data;
}

MetricsRow run_mix_cell(const ExperimentConfig& cfg, const CellSpec& cell, std::ostream& traj) {
    const auto data = mix_data(cfg);
    const double alpha = cell.similarity;
    auto train2 = std::make_shared<const LabeledDataset>(mix_datasets(*data->train1, *data->train2, alpha));
    auto test2 = std::make_shared<const LabeledDataset>(mix_datasets(*data->test1, *data->test2, alpha));
    TaskSet tasks{std::make_shared<DatasetSource>(data->train1, data->test1),
                  std::make_shared<DatasetSource>(train2, test2)};

    const auto& m = cfg.mix;
    const double D = m.input_dim;
    // Conventional uniform fan-in initialisation, expressed in the w / sqrt(D) scaling.
    const InitPolicy init{1.0 / 3.0, 1.0 / (3.0 * m.hidden)};
    Rng rng(derive_seed(cell.seed, kStudentStream));
    const std::array<Task, 2> heads{Task::dagger, Task::ddagger};
    TwoLayerNet student = make_student(m.input_dim, m.hidden, m.activation, heads, init, rng);

    TrainPlan plan;
    plan.phases = {{Task::dagger, m.steps_first}, {Task::ddagger, m.steps_second}};
    plan.lr_W = m.lr * D;
    plan.lr_h = m.lr * D;
    plan.early_stopping = true;
    plan.seed = derive_seed(cell.seed, kPlanStream);

    ProbeSettings probes;
    probes.every = m.probe_every;
    probes.errors = ErrorMode::test_set;
    probes.importance = true;

    const RunResult run = train_continual(std::move(student), tasks, plan, probes);
    write_run_csv(traj, run);

    MetricsRow row;
    const double switch_tau = static_cast<double>(run.phase_end_steps.at(0)) / D;
    fill_errors(row, trace_of(run, Task::dagger), trace_of(run, Task::ddagger), switch_tau, std::nullopt);
    const ProbeRecord* at_switch = nullptr;
    for (const auto& r : run.records) {
        if (r.step == run.phase_end_steps[0] && !r.importance_dag.empty()) at_switch = &r;
    }
    const ProbeRecord& last = run.records.back();
    if (at_switch != nullptr && !last.importance_ddag.empty()) {
        row.importance_dot = importance_dot(at_switch->importance_dag, last.importance_ddag);
    }
    return row;
}

std::string file_stem(const CellSpec& cell, const std::string& hash) {
    return std::string(to_string(cell.engine)) + "_" + cell.intervention + "_" + format_double(cell.similarity)
           + "_p" + format_double(cell.param) + "_s" + std::to_string(cell.seed) + "_" + hash.substr(0, 12);
}

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> cols{
        "scheme",         "V_or_alpha",   "seed",        "forgetting",     "transfer",
        "reuse_error",    "importance_dot", "engine",    "intervention",   "param",
        "eps_dag_switch", "eps_dag_end",  "eps_ddag_switch", "eps_ddag_end", "status",
        "config_hash"};
    return cols;
}

const std::vector<std::string>& index_columns() {
    static const std::vector<std::string> cols{"config_hash", "sweep", "engine",     "V_or_alpha", "intervention",
                                               "param",       "seed",  "trajectory", "status"};
    return cols;
}

std::vector<std::map<std::string, std::string>> read_table(std::istream& is, const std::vector<std::string>& want,
                                                           const std::string& what) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError(what + ": missing header");
    const auto header = split_csv_line(line);
    for (const auto& c : want) {
        if (std::find(header.begin(), header.end(), c) == header.end()) {
            throw FormatError(what + ": missing column " + c);
        }
    }
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) throw FormatError(what + ": ragged row");
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < f.size(); ++i) row[header[i]] = f[i];
        rows.push_back(std::move(row));
    }
    return rows;
}

MetricsRow metrics_from(const std::map<std::string, std::string>& r) {
    MetricsRow m;
    m.scheme = r.at("scheme");
    m.similarity = parse_number(r.at("V_or_alpha"));
    m.seed = parse_seed(r.at("seed"));
    m.forgetting = parse_number(r.at("forgetting"));
    m.transfer = parse_number(r.at("transfer"));
    m.reuse_error = parse_number(r.at("reuse_error"));
    m.importance_dot = parse_number(r.at("importance_dot"));
    m.engine = r.at("engine");
    m.intervention = r.at("intervention");
    m.param = parse_number(r.at("param"));
    m.eps_dag_switch = parse_number(r.at("eps_dag_switch"));
    m.eps_dag_end = parse_number(r.at("eps_dag_end"));
    m.eps_ddag_switch = parse_number(r.at("eps_ddag_switch"));
    m.eps_ddag_end = parse_number(r.at("eps_ddag_end"));
    m.status = r.at("status");
    return m;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot read " + p.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::optional<RunRecord> load_completed(const fs::path& dir, const CellSpec& cell, const std::string& hash) {
    const std::string stem = file_stem(cell, hash);
    const fs::path row_path = dir / "runs" / (stem + ".row.csv");
    const fs::path traj = fs::path("runs") / (stem + ".csv");
    if (!fs::exists(row_path)) return std::nullopt;
    try {
        std::istringstream is(read_file(row_path));
        const auto rows = read_table(is, metrics_columns(), row_path.string());
        if (rows.size() != 1 || rows[0].at("config_hash") != hash) return std::nullopt;
        RunRecord rec{hash, cell, traj, metrics_from(rows[0]), true};
        if (rec.metrics.status == "ok" && !fs::exists(dir / traj)) return std::nullopt;
        return rec;
    } catch (const FormatError&) {
        return std::nullopt;
    }
}

}  // namespace

TaskPair make_teachers(const ExperimentConfig& cfg, int D, double V, std::uint64_t seed) {
    const std::uint64_t s = derive_seed(seed, kTeacherStream);
    if (cfg.scheme == SimilarityScheme::rotation) return make_rotated_pair(D, V, s, cfg.activation);
    return make_interpolated_pair(D, cfg.M, cfg.P, V, s, cfg.activation);
}

TwoLayerNet make_initial_student(const ExperimentConfig& cfg, int D, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kStudentStream));
    const std::array<Task, 2> tasks{Task::dagger, Task::ddagger};
    return make_student(D, cfg.K, cfg.activation, tasks, {cfg.weight_variance, cfg.head_variance}, rng);
}

std::vector<CellSpec> plan_cells(const ExperimentConfig& cfg, SweepKind sweep) {
    std::vector<CellSpec> cells;
    auto add = [&](Engine e, double v, std::string intervention, double param) {
        for (std::uint64_t s : cfg.seeds) {
            cells.push_back({sweep, e, v, intervention, param, cfg.seed_base + s});
        }
    };
    switch (sweep) {
        case SweepKind::ode:
        case SweepKind::sim: {
            const Engine e = cfg.engine == Engine::both ? Engine::both
                             : sweep == SweepKind::ode  ? Engine::ode
                                                        : Engine::sim;
            for (double v : cfg.similarity) {
                for (Engine each : engines_for(e)) add(each, v, "none", 0.0);
            }
            break;
        }
        case SweepKind::ewc:
            for (double v : cfg.similarity) {
                for (double lambda : cfg.ewc_lambdas) add(Engine::sim, v, "ewc", lambda);
            }
            break;
        case SweepKind::replay:
            for (double v : cfg.similarity) {
                add(Engine::sim, v, "none", 0.0);
                for (std::int64_t t : cfg.replay_periods) add(Engine::sim, v, "replay", static_cast<double>(t));
            }
            break;
        case SweepKind::slowing:
            for (double v : cfg.similarity) {
                add(Engine::sim, v, "continue", static_cast<double>(cfg.slowing_period));
                add(Engine::sim, v, "reinit", static_cast<double>(cfg.slowing_period));
            }
            break;
        case SweepKind::mix:
            for (double a : cfg.mix.alphas) add(Engine::sim, a, "mix", 0.0);
            break;
    }
    return cells;
}

std::string cell_hash(const ExperimentConfig& cfg, const CellSpec& cell) {
    std::string text = cfg.canonical_text(false);
    text += "cell.engine = " + std::string(to_string(cell.engine)) + "\n";
    text += "cell.intervention = " + cell.intervention + "\n";
    text += "cell.param = " + format_double(cell.param) + "\n";
    text += "cell.seed = " + std::to_string(cell.seed) + "\n";
    text += "cell.similarity = " + format_double(cell.similarity) + "\n";
    return hex64(fnv1a64(text));
}

fs::path sweep_dir(const ExperimentConfig& cfg, SweepKind sweep) {
    return cfg.output_dir / std::string(to_string(sweep));
}

RunRecord run_cell(const ExperimentConfig& cfg, const CellSpec& cell, const fs::path& dir) {
    if (cell.engine == Engine::both) throw ArgumentError("run_cell: a cell runs a single engine");
    RunRecord rec;
    rec.config_hash = cell_hash(cfg, cell);
    rec.cell = cell;
    const std::string stem = file_stem(cell, rec.config_hash);
    rec.trajectory = fs::path("runs") / (stem + ".csv");
    fs::create_directories(dir / "runs");

    std::ostringstream traj;
    try {
        if (cell.sweep == SweepKind::mix) {
            rec.metrics = run_mix_cell(cfg, cell, traj);
        } else if (cell.engine == Engine::ode) {
            rec.metrics = run_ode_cell(cfg, cell, traj);
        } else {
            rec.metrics = run_sim_cell(cfg, cell, traj);
        }
    } catch (const DivergenceError& e) {
        rec.metrics = MetricsRow{};
        std::ostringstream st;
        st << "diverged@" << format_double(e.at());
        rec.metrics.status = st.str();
    }
    rec.metrics.scheme = cell.sweep == SweepKind::mix ? "mix" : std::string(to_string(cfg.scheme));
    rec.metrics.similarity = cell.similarity;
    rec.metrics.seed = cell.seed;
    rec.metrics.engine = std::string(to_string(cell.engine));
    rec.metrics.intervention = cell.intervention;
    rec.metrics.param = cell.param;

    if (rec.metrics.status == "ok") write_atomically(dir / rec.trajectory, traj.str());
    std::ostringstream row;
    write_metrics_csv(row, {rec});
    write_atomically(dir / "runs" / (stem + ".row.csv"), row.str());
    return rec;
}

std::vector<RunRecord> run_sweep(const ExperimentConfig& cfg, SweepKind sweep, std::ostream* log) {
    cfg.validate();
    const fs::path dir = sweep_dir(cfg, sweep);
    fs::create_directories(dir / "runs");
    const std::vector<CellSpec> cells = plan_cells(cfg, sweep);
    std::vector<RunRecord> records(cells.size());

    std::mutex log_mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                const std::string hash = cell_hash(cfg, cells[i]);
                if (auto done = load_completed(dir, cells[i], hash)) {
                    records[i] = std::move(*done);
                } else {
                    records[i] = run_cell(cfg, cells[i], dir);
                }
                if (log != nullptr) {
                    const auto& r = records[i];
                    std::lock_guard lock(log_mu);
                    *log << (r.reused ? "skip " : "done ") << r.metrics.engine << ' ' << r.cell.intervention
                         << " V=" << format_double(r.cell.similarity) << " p=" << format_double(r.cell.param)
                         << " seed=" << r.cell.seed << " forgetting=" << format_double(r.metrics.forgetting)
                         << ' ' << r.metrics.status << '\n'
                         << std::flush;
                }
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = cells.size();
            }
        }
    };
    const int n_workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(cells.size())));
    {
        std::vector<std::jthread> pool;
        for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);

    std::ostringstream metrics, index;
    write_metrics_csv(metrics, records);
    write_index_csv(index, records);
    write_atomically(dir / "metrics.csv", metrics.str());
    write_atomically(dir / "index.csv", index.str());
    emit_plots(records, dir);
    return records;
}

void write_metrics_csv(std::ostream& os, const std::vector<RunRecord>& records) {
    CsvWriter csv(os);
    csv.header(metrics_columns());
    for (const auto& r : records) {
        const auto& m = r.metrics;
        const std::vector<CsvCell> row{m.scheme,
                                       m.similarity,
                                       static_cast<std::int64_t>(m.seed),
                                       maybe(m.forgetting),
                                       maybe(m.transfer),
                                       maybe(m.reuse_error),
                                       maybe(m.importance_dot),
                                       m.engine,
                                       m.intervention,
                                       m.param,
                                       maybe(m.eps_dag_switch),
                                       maybe(m.eps_dag_end),
                                       maybe(m.eps_ddag_switch),
                                       maybe(m.eps_ddag_end),
                                       m.status,
                                       r.config_hash};
        csv.row(row);
    }
}

void write_index_csv(std::ostream& os, const std::vector<RunRecord>& records) {
    CsvWriter csv(os);
    csv.header(index_columns());
    for (const auto& r : records) {
        const std::vector<CsvCell> row{r.config_hash,
                                       std::string(to_string(r.cell.sweep)),
                                       std::string(to_string(r.cell.engine)),
                                       r.cell.similarity,
                                       r.cell.intervention,
                                       r.cell.param,
                                       static_cast<std::int64_t>(r.cell.seed),
                                       r.trajectory.generic_string(),
                                       r.metrics.status};
        csv.row(row);
    }
}

std::vector<RunRecord> load_records(const fs::path& dir) {
    std::istringstream mis(read_file(dir / "metrics.csv"));
    std::istringstream iis(read_file(dir / "index.csv"));
    const auto metrics = read_table(mis, metrics_columns(), "metrics.csv");
    const auto index = read_table(iis, index_columns(), "index.csv");
    if (metrics.size() != index.size()) throw FormatError("metrics.csv and index.csv disagree in length");
    std::vector<RunRecord> out;
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto& ix = index[i];
        if (ix.at("config_hash") != metrics[i].at("config_hash")) {
            throw FormatError("metrics.csv and index.csv disagree at row " + std::to_string(i + 1));
        }
        RunRecord r;
        r.config_hash = ix.at("config_hash");
        r.cell.sweep = parse_sweep(ix.at("sweep"));
        const Engine e = parse_engine(ix.at("engine"));
        r.cell.engine = e;
        r.cell.similarity = parse_number(ix.at("V_or_alpha"));
        r.cell.intervention = ix.at("intervention");
        r.cell.param = parse_number(ix.at("param"));
        r.cell.seed = parse_seed(ix.at("seed"));
        r.trajectory = ix.at("trajectory");
        r.metrics = metrics_from(metrics[i]);
        r.reused = true;
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

struct Curves {
    std::vector<double> tau, eps_dag, eps_ddag;
};

Curves read_curves(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ArgumentError("cannot read trajectory " + path.string());
    std::string line;
    std::getline(is, line);
    const auto header = split_csv_line(line);
    auto col = [&](std::initializer_list<const char*> names) -> std::size_t {
        for (const char* n : names) {
            auto it = std::find(header.begin(), header.end(), n);
            if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
        }
        throw FormatError(path.string() + ": missing error columns");
    };
    const std::size_t ct = col({"tau"});
    const std::size_t cd = col({"eps_dagger", "eps_dag"});
    const std::size_t cdd = col({"eps_ddagger", "eps_ddag"});
    Curves c;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        c.tau.push_back(parse_number(f.at(ct)));
        c.eps_dag.push_back(parse_number(f.at(cd)));
        c.eps_ddag.push_back(parse_number(f.at(cdd)));
    }
    // Keep the SVG small: at most ~500 points per series, always including the ends.
    const std::size_t n = c.tau.size();
    if (n > 500) {
        const std::size_t stride = (n + 499) / 500;
        Curves t;
        for (std::size_t i = 0; i < n; i += stride) {
            t.tau.push_back(c.tau[i]);
            t.eps_dag.push_back(c.eps_dag[i]);
            t.eps_ddag.push_back(c.eps_ddag[i]);
        }
        if ((n - 1) % stride != 0) {
            t.tau.push_back(c.tau.back());
            t.eps_dag.push_back(c.eps_dag.back());
            t.eps_ddag.push_back(c.eps_ddag.back());
        }
        return t;
    }
    return c;
}

std::string group_label(const RunRecord& r) {
    std::string s = std::string(to_string(r.cell.engine));
    const auto& iv = r.cell.intervention;
    if (iv == "ewc") s += " ewc lambda=" + format_double(r.cell.param);
    else if (iv == "replay") s += " replay T=" + format_double(r.cell.param);
    else if (iv == "reinit" || iv == "continue") s += " " + iv + " T=" + format_double(r.cell.param);
    else if (iv == "none" && r.cell.sweep == SweepKind::replay) s += " no replay";
    return s;
}

using GroupKey = std::tuple<int, std::string, double>;

GroupKey group_key(const RunRecord& r) {
    return {static_cast<int>(r.cell.engine), r.cell.intervention, r.cell.param};
}

bool is_mix(const std::vector<RunRecord>& rs) {
    return std::all_of(rs.begin(), rs.end(), [](const RunRecord& r) { return r.cell.sweep == SweepKind::mix; });
}

std::string sim_name(bool mix) { return mix ? "alpha" : "V"; }

std::vector<svg::Panel> error_curve_panels(const std::vector<RunRecord>& records, const fs::path& dir) {
    const bool mix = is_mix(records);
    std::vector<GroupKey> order;
    std::map<GroupKey, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        if (r.metrics.status != "ok" || r.trajectory.empty()) continue;
        const auto k = group_key(r);
        if (!groups.count(k)) order.push_back(k);
        groups[k].push_back(&r);
    }
    double vmin = INFINITY, vmax = -INFINITY;
    for (const auto& r : records) {
        vmin = std::min(vmin, r.cell.similarity);
        vmax = std::max(vmax, r.cell.similarity);
    }
    auto shade = [&](double v) { return svg::ramp_color(vmax > vmin ? (v - vmin) / (vmax - vmin) : 0.0); };

    std::vector<svg::Panel> panels;
    for (const auto& k : order) {
        const auto& rs = groups[k];
        std::uint64_t seed = rs.front()->cell.seed;
        for (const auto* r : rs) seed = std::min(seed, r->cell.seed);
        svg::Panel p;
        p.title = group_label(*rs.front()) + ", seed " + std::to_string(seed);
        p.x_label = "tau";
        p.y_label = mix ? "test error eps" : "generalisation error eps";
        std::set<double> seen;
        for (const auto* r : rs) {
            if (r->cell.seed != seed || !seen.insert(r->cell.similarity).second) continue;
            const Curves c = read_curves(dir / r->trajectory);
            const std::string v = sim_name(mix) + "=" + format_double(r->cell.similarity);
            p.series.push_back({"task 1, " + v, c.tau, c.eps_dag, shade(r->cell.similarity), false, false});
            p.series.push_back({"task 2, " + v, c.tau, c.eps_ddag, shade(r->cell.similarity), true, false});
        }
        panels.push_back(std::move(p));
    }
    return panels;
}

svg::Panel mean_panel(const std::vector<RunRecord>& records, double MetricsRow::*field, const std::string& y_label) {
    const bool mix = is_mix(records);
    std::vector<GroupKey> order;
    std::map<GroupKey, std::map<double, std::pair<double, int>>> acc;
    std::map<GroupKey, std::string> labels;
    for (const auto& r : records) {
        const double v = r.metrics.*field;
        if (r.metrics.status != "ok" || !std::isfinite(v)) continue;
        const auto k = group_key(r);
        if (!acc.count(k)) {
            order.push_back(k);
            labels[k] = group_label(r);
        }
        auto& cell = acc[k][r.cell.similarity];
        cell.first += v;
        cell.second += 1;
    }
    svg::Panel p;
    p.x_label = mix ? "data mixing alpha" : "teacher similarity V";
    p.y_label = y_label;
    p.title = "mean " + y_label + " over seeds";
    for (std::size_t i = 0; i < order.size(); ++i) {
        svg::Series s;
        s.label = order.size() > 1 ? labels[order[i]] : "";
        s.color = svg::palette_color(i);
        s.markers = true;
        for (const auto& [x, sum] : acc[order[i]]) {
            s.x.push_back(x);
            s.y.push_back(sum.first / sum.second);
        }
        p.series.push_back(std::move(s));
    }
    return p;
}

}  // namespace

fs::path emit_plot(const std::vector<RunRecord>& records, PlotKind kind, const fs::path& dir) {
    std::vector<svg::Panel> panels;
    switch (kind) {
        case PlotKind::error_curves:
            panels = error_curve_panels(records, dir);
            break;
        case PlotKind::forgetting_vs_similarity: {
            auto p = mean_panel(records, &MetricsRow::forgetting, "forgetting");
            if (!p.series.empty()) panels.push_back(std::move(p));
            break;
        }
        case PlotKind::importance_dots: {
            auto p = mean_panel(records, &MetricsRow::importance_dot, "importance dot I1.I2");
            if (!p.series.empty()) panels.push_back(std::move(p));
            break;
        }
    }
    if (panels.empty()) {
        throw ArgumentError("no records to plot for " + std::string(to_string(kind)));
    }
    const fs::path out = dir / (std::string(to_string(kind)) + ".svg");
    write_atomically(out, svg::render(panels, 2));
    return out;
}

std::vector<fs::path> emit_plots(const std::vector<RunRecord>& records, const fs::path& dir) {
    if (records.empty()) throw ArgumentError("emit_plots: no records");
    std::vector<fs::path> out;
    const bool ok = std::any_of(records.begin(), records.end(), [](const RunRecord& r) {
        return r.metrics.status == "ok";
    });
    if (!ok) return out;
    out.push_back(emit_plot(records, PlotKind::error_curves, dir));
    out.push_back(emit_plot(records, PlotKind::forgetting_vs_similarity, dir));
    const bool has_dots = std::any_of(records.begin(), records.end(), [](const RunRecord& r) {
        return std::isfinite(r.metrics.importance_dot);
    });
    if (has_dots) out.push_back(emit_plot(records, PlotKind::importance_dots, dir));
    return out;
}

MatrixX random_covariance(int dim, Rng& rng) {
    if (dim < 1) throw ArgumentError("random_covariance: dim must be positive");
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> diag(0.25, 4.0);
    MatrixX A(dim, dim + 2);
    for (int i = 0; i < A.rows(); ++i) {
        for (int j = 0; j < A.cols(); ++j) A(i, j) = normal(rng);
    }
    const MatrixX G = A * A.transpose();
    VectorX s(dim);
    for (int i = 0; i < dim; ++i) s(i) = std::sqrt(diag(rng));
    MatrixX C(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) C(i, j) = s(i) * s(j) * G(i, j) / std::sqrt(G(i, i) * G(j, j));
    }
    for (int i = 0; i < dim; ++i) C(i, i) = s(i) * s(i);
    return C;
}

IntegralReport validate_integrals(int n_blocks, std::int64_t n_samples, std::uint64_t seed,
                                  const ClosedFormFn& closed, double threshold) {
    if (n_blocks < 1) throw ArgumentError("validate_integrals: n_blocks must be >= 1");
    IntegralReport report;
    std::set<std::string> failing;
    const std::array<IntegralKind, 3> kinds{IntegralKind::I2, IntegralKind::I3, IntegralKind::I4};
    for (int b = 0; b < n_blocks; ++b) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(b)));
        for (std::size_t k = 0; k < kinds.size(); ++k) {
            const int dim = block_dim(kinds[k]);
            const MatrixX m = b == 0 ? MatrixX::Identity(dim, dim) : random_covariance(dim, rng);
            const CovarianceBlock block(m);
            IntegralCheck c;
            c.kind = kinds[k];
            c.block = b;
            c.closed = closed(block, kinds[k]);
            c.mc = mc_integral(block, kinds[k], ActivationKind::scaled_erf, n_samples,
                               derive_seed(seed, 1'000'000 + 3 * static_cast<std::uint64_t>(b) + k));
            const double diff = std::abs(c.closed - c.mc.estimate);
            c.z = c.mc.standard_error > 0.0 ? diff / c.mc.standard_error : (diff == 0.0 ? 0.0 : INFINITY);
            if (!std::isfinite(c.closed)) c.z = INFINITY;
            report.max_z[k] = std::max(report.max_z[k], c.z);
            if (!(c.z <= threshold)) failing.insert("I" + std::to_string(k + 2));
            report.checks.push_back(c);
        }
    }
    report.passed = failing.empty();
    for (const auto& f : failing) {
        if (!report.failures.empty()) report.failures += ",";
        report.failures += f;
    }
    return report;
}

}  // namespace forgetlab
