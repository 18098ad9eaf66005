#pragma once

// Finite-D two-layer networks phi(x) = sum_l h_l g(w_l . x / sqrt D) trained by
// online SGD on a succession of tasks, one head per task and shared features.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "forgetlab/activation.hpp"
#include "forgetlab/order_dynamics.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LabeledDataset;

struct TwoLayerNet {
    RowMatrix W;  // L x D, row l is w_l
    std::map<Task, VectorX> heads;
    ActivationKind activation = ActivationKind::scaled_erf;

    int D() const noexcept { return static_cast<int>(W.cols()); }
    int L() const noexcept { return static_cast<int>(W.rows()); }
    bool has_head(Task t) const { return heads.count(t) != 0; }
    /// Throws ConfigurationError if the head is missing.
    const VectorX& head(Task t) const;
    VectorX& head(Task t);

    bool operator==(const TwoLayerNet&) const = default;
};

/// Normal initialisation: weights ~ N(0, weight_variance), heads ~ N(0, head_variance).
/// A head_variance of 0 gives zero heads.
struct InitPolicy {
    double weight_variance = 1e-3;
    double head_variance = 1e-3;
};

/// Student with `L` hidden units and one head per entry of `tasks`.
TwoLayerNet make_student(int D, int L, ActivationKind activation, std::span<const Task> tasks,
                         const InitPolicy& init, Rng& rng);

double forward(const TwoLayerNet& net, std::span<const double> x, Task task);

/// Prediction with hidden node `masked` removed from the sum.
double forward_masked(const TwoLayerNet& net, std::span<const double> x, Task task, int masked);

struct EwcAnchor {
    RowMatrix theta_star;  // first-layer weights at the end of the anchored task
    RowMatrix fisher;      // diagonal Fisher estimate, same shape
};

struct EwcPenalty {
    const EwcAnchor* anchor = nullptr;
    double lambda = 0.0;
};

/// One online SGD step on (x, y) through head `task`, in place. With an active
/// penalty, each weight additionally moves by -lr_W * (lambda / D) * F * (W - W*).
/// Returns the pre-update error Delta = phi(x) - y.
double sgd_step(TwoLayerNet& net, std::span<const double> x, double y, Task task, double lr_W,
                double lr_h, const EwcPenalty& ewc = {});

/// A supervised stream: inputs plus labels for one task.
class LabelSource {
public:
    virtual ~LabelSource() = default;
    virtual int dim() const = 0;
    /// Fills `x` with a fresh input and returns its label.
    virtual double draw(Rng& rng, std::span<double> x) const = 0;
    /// The generating network, when the task is a teacher.
    virtual const TwoLayerNet* teacher() const { return nullptr; }
    /// Fixed held-out evaluation set, when the task has one.
    virtual const LabeledDataset* held_out() const { return nullptr; }
};

/// Diagonal Fisher of a unit-variance Gaussian likelihood around the prediction of
/// head `task`: the mean of (d phi / dW)^2 over `n_samples` inputs drawn from
/// `source`. theta_star is the current W.
EwcAnchor estimate_fisher(const TwoLayerNet& net, const LabelSource& source, Task task,
                          std::int64_t n_samples, std::uint64_t seed);

/// Overlaps (1/D) w.w' between every pair of rows; heads copied (missing heads are zero).
OrderParameterState empirical_order_params(const TwoLayerNet& student, const TwoLayerNet& teacher_dag,
                                           const TwoLayerNet& teacher_ddag);

/// (1/2) mean (y - phi(x))^2 over `n_test` fresh draws; deterministic in `seed`.
double test_error(const TwoLayerNet& net, const LabelSource& source, Task task, std::int64_t n_test,
                  std::uint64_t seed);

struct EwcSettings {
    double lambda = 0.0;
    std::int64_t fisher_samples = 0;  // 0 means 10 * D
};

struct ReplaySettings {
    std::int64_t period = 1;  // one replay step after every `period` task steps
    Task source = Task::dagger;
};

struct TrainPlan {
    struct Phase {
        Task task = Task::dagger;
        std::int64_t steps = 0;
    };
    std::vector<Phase> phases;
    double lr_W = 0.1;
    double lr_h = 0.1;
    std::optional<EwcSettings> ewc;        // anchored at the first task switch
    std::optional<ReplaySettings> replay;  // active from the second phase on
    bool reinit_at_switch = false;
    InitPolicy reinit;                     // distribution used when reinit_at_switch is set
    bool early_stopping = false;           // restore best phase-1 weights at the switch
    std::uint64_t seed = 0;
};

enum class ErrorMode {
    order_parameters,  // closed-form I2 over empirical overlaps (teacher tasks, scaled_erf)
    test_set,          // fixed held-out sample set per task
};

struct ProbeSettings {
    std::int64_t every = 1000;  // steps between probes
    ErrorMode errors = ErrorMode::order_parameters;
    std::int64_t n_test = 10000;
    bool importance = false;    // node importances at each phase end
};

struct TaskSet {
    std::shared_ptr<const LabelSource> dagger;
    std::shared_ptr<const LabelSource> ddagger;

    const LabelSource& at(Task t) const;
};

struct ProbeRecord {
    std::int64_t step = 0;
    double tau = 0.0;
    Task active = Task::dagger;
    double eps_dag = 0.0;
    double eps_ddag = 0.0;
    std::optional<OrderParameterState> order;  // present when both tasks are teachers
    std::vector<double> importance_dag;        // filled at phase ends when requested
    std::vector<double> importance_ddag;
};

struct RunResult {
    std::vector<ProbeRecord> records;
    std::vector<std::int64_t> phase_end_steps;
    std::int64_t replay_steps = 0;
    TwoLayerNet final_student;
};

/// Runs the phases of `plan` in order. Replay inserts one step on the replay
/// source (through its own head) after every `period` task steps of each later
/// phase; replay steps advance tau like any other step. Throws DivergenceError
/// carrying the step index when a weight becomes non-finite.
RunResult train_continual(TwoLayerNet student, const TaskSet& tasks, const TrainPlan& plan,
                          const ProbeSettings& probes);

/// CSV: step, tau, task_active, eps_dag, eps_ddag, flattened order parameters,
/// then importance_dag_l / importance_ddag_l columns when any record has them.
void write_run_csv(std::ostream& os, const RunResult& run);

}  // namespace forgetlab
