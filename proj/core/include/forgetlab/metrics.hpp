#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "forgetlab/network.hpp"

namespace forgetlab {

struct LabeledDataset;

/// A (tau, value) series, e.g. eps_dagger over a run. Must be sorted by tau.
struct ErrorTrace {
    std::vector<double> tau;
    std::vector<double> value;

    /// Linear interpolation; throws ArgumentError outside [tau.front(), tau.back()].
    double at(double t) const;
};

ErrorTrace trace_of(const Trajectory& trajectory, Task task);
ErrorTrace trace_of(const RunResult& run, Task task);

/// eps(measure_tau) - eps(switch_tau) on the first task's error trace.
double forgetting(const ErrorTrace& eps_dagger, double switch_tau, double measure_tau);

/// eps(measure_tau) - eps(switch_tau) on the second task's trace (negative = progress).
double transfer(const ErrorTrace& eps_ddagger, double switch_tau, double measure_tau);

struct ForgettingRecord {
    double similarity = 0.0;  // V or alpha
    double forgetting = 0.0;
    double transfer = 0.0;
    double tau_measured = 0.0;
};

/// Error of re-using the first teacher's readout on the second teacher's
/// features: (1/2) <[phi(x; W1, v1) - phi(x; W2, h)]^2> in closed form
/// (single-unit teachers, scaled_erf).
double reuse_error(const TwoLayerNet& teacher_dag, const TwoLayerNet& teacher_ddag, double h_component);

/// Same quantity from teacher overlaps alone: t = |w1|^2/D, s = |w2|^2/D, v = w1.w2/D.
double reuse_error(double t, double s, double v, double v_dag, double h_component);

/// Student node k maximising |r_k1| / sqrt(q_kk t_11).
int specialised_node(const OrderParameterState& state);

/// First-head weight of the specialised node, signed so that the node's overlap
/// with the first teacher is positive (g is odd, so (w, h) and (-w, -h) agree).
double reuse_head_component(const OrderParameterState& state);

/// Normalised overlap |r_k1| / sqrt(q_kk t_11) of student node k with the first teacher unit.
double normalised_overlap(const OrderParameterState& state, int k);

/// (1/2) mean over the dataset of (phi(x) - y)^2.
double dataset_error(const TwoLayerNet& net, const LabeledDataset& data, Task task);

/// (1/2) < (masked error)^2 - (full error)^2 > with node `node` removed, over
/// `n_test` draws from `source` (deterministic in `seed`).
double node_importance(const TwoLayerNet& net, const LabelSource& source, Task task, int node,
                       std::int64_t n_test, std::uint64_t seed);
/// Same over a fixed dataset.
double node_importance(const TwoLayerNet& net, const LabeledDataset& data, Task task, int node);

/// Importances of every node from one pass over the samples.
std::vector<double> node_importances(const TwoLayerNet& net, const LabelSource& source, Task task,
                                     std::int64_t n_test, std::uint64_t seed);
std::vector<double> node_importances(const TwoLayerNet& net, const LabeledDataset& data, Task task);

struct ImportanceVector {
    Task task = Task::dagger;
    std::vector<double> values;
};

/// Sum_l a_l b_l; throws ArgumentError on length mismatch.
double importance_dot(std::span<const double> a, std::span<const double> b);
double importance_dot(const ImportanceVector& a, const ImportanceVector& b);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace forgetlab
