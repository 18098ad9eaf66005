#pragma once

// Sweep execution: every (similarity x intervention x seed) cell of a config is
// run by the ODE and/or the simulator, written to its own files, and
// summarised in metrics.csv and index.csv.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "forgetlab/config.hpp"
#include "forgetlab/gaussian_integrals.hpp"
#include "forgetlab/metrics.hpp"

namespace forgetlab {

enum class SweepKind { ode, sim, ewc, replay, slowing, mix };

/// Subcommand name, e.g. "ewc-sweep".
std::string_view to_string(SweepKind k) noexcept;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct CellSpec {
    SweepKind sweep = SweepKind::ode;
    Engine engine = Engine::ode;  // ode or sim, never both
    double similarity = 0.0;      // V, or alpha for data mixing
    std::string intervention = "none";  // none, ewc, replay, reinit, continue, mix
    double param = 0.0;           // lambda, replay period, ...
    std::uint64_t seed = 0;       // effective seed (seed_base applied)
};

struct MetricsRow {
    std::string scheme;
    double similarity = 0.0;
    std::uint64_t seed = 0;
    double forgetting = kMissing;
    double transfer = kMissing;
    double reuse_error = kMissing;
    double importance_dot = kMissing;
    std::string engine;
    std::string intervention;
    double param = 0.0;
    double eps_dag_switch = kMissing;
    double eps_dag_end = kMissing;
    double eps_ddag_switch = kMissing;
    double eps_ddag_end = kMissing;
    std::string status = "ok";
};

struct RunRecord {
    std::string config_hash;  // per cell
    CellSpec cell;
    std::filesystem::path trajectory;  // relative to the sweep directory
    MetricsRow metrics;
    bool reused = false;  // loaded from an earlier run instead of computed
};

/// Teachers and initial student of a cell with effective seed `seed`. Cells of
/// the same (V, seed) share them across engines and interventions.
TaskPair make_teachers(const ExperimentConfig& cfg, int D, double V, std::uint64_t seed);
TwoLayerNet make_initial_student(const ExperimentConfig& cfg, int D, std::uint64_t seed);

/// Cells in execution (and output) order.
std::vector<CellSpec> plan_cells(const ExperimentConfig& cfg, SweepKind sweep);

/// Hash identifying one cell's computation.
std::string cell_hash(const ExperimentConfig& cfg, const CellSpec& cell);

/// Directory a sweep writes into: output_dir / to_string(sweep).
std::filesystem::path sweep_dir(const ExperimentConfig& cfg, SweepKind sweep);

/// Runs one cell and writes its trajectory CSV into `dir`.
RunRecord run_cell(const ExperimentConfig& cfg, const CellSpec& cell, const std::filesystem::path& dir);

/// Runs every cell (skipping cells whose results already exist), then writes
/// metrics.csv, index.csv and the SVG plots. Divergent cells are recorded with
/// their status and the sweep continues. `log` receives one line per cell.
std::vector<RunRecord> run_sweep(const ExperimentConfig& cfg, SweepKind sweep, std::ostream* log = nullptr);

/// metrics.csv / index.csv writers and the loader used by the plot command.
void write_metrics_csv(std::ostream& os, const std::vector<RunRecord>& records);
void write_index_csv(std::ostream& os, const std::vector<RunRecord>& records);
std::vector<RunRecord> load_records(const std::filesystem::path& dir);

enum class PlotKind { error_curves, forgetting_vs_similarity, importance_dots };
std::string_view to_string(PlotKind k) noexcept;

/// Writes `dir / <kind>.svg` and returns its path. Trajectory paths in the
/// records are resolved against `dir`. Throws ArgumentError on an empty selection.
std::filesystem::path emit_plot(const std::vector<RunRecord>& records, PlotKind kind,
                                const std::filesystem::path& dir);

/// Every plot that applies to the records' sweep kind.
std::vector<std::filesystem::path> emit_plots(const std::vector<RunRecord>& records,
                                              const std::filesystem::path& dir);

struct IntegralCheck {
    IntegralKind kind = IntegralKind::I2;
    int block = 0;
    double closed = 0.0;
    McEstimate mc;
    double z = 0.0;  // |closed - mc| / standard error
};

struct IntegralReport {
    std::vector<IntegralCheck> checks;
    double max_z[3] = {0.0, 0.0, 0.0};  // per IntegralKind
    bool passed = true;
    std::string failures;  // names of the failing integrals, e.g. "I3"
};

using ClosedFormFn = std::function<double(const CovarianceBlock&, IntegralKind)>;

/// Random PSD blocks with diagonals in [0.25, 4] (block 0 is the identity);
/// each of I2, I3 and I4 is compared against mc_integral. Fails when any
/// deviation exceeds `threshold` standard errors.
IntegralReport validate_integrals(int n_blocks, std::int64_t n_samples, std::uint64_t seed,
                                  const ClosedFormFn& closed = closed_form, double threshold = 4.0);

/// Random covariance block of dimension `dim` with diagonal entries in [0.25, 4].
MatrixX random_covariance(int dim, Rng& rng);

}  // namespace forgetlab
