#pragma once

// Order-parameter description of a two-layer student trained on two teachers,
// in the limit D -> infinity with tau = step / D.
//
// Field indices in the assembled covariance C run over the K student units,
// then the M teacher-dagger units, then the P teacher-ddagger units:
//
//        | Q   R   U |
//    C = | R'  T   V |
//        | U'  V'  S |

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forgetlab/gaussian_integrals.hpp"

namespace forgetlab {

enum class Task : int { dagger = 0, ddagger = 1 };

constexpr int index_of(Task t) noexcept { return static_cast<int>(t); }
constexpr Task other(Task t) noexcept { return t == Task::dagger ? Task::ddagger : Task::dagger; }
std::string_view to_string(Task t) noexcept;

struct OrderParameterState {
    MatrixX Q;     // K x K student-student
    MatrixX R;     // K x M student-teacher(dagger)
    MatrixX U;     // K x P student-teacher(ddagger)
    MatrixX T;     // M x M
    MatrixX S;     // P x P
    MatrixX V;     // M x P teacher-teacher
    VectorX h_dag;
    VectorX h_ddag;
    VectorX v_dag;
    VectorX v_ddag;

    int K() const noexcept { return static_cast<int>(Q.rows()); }
    int M() const noexcept { return static_cast<int>(T.rows()); }
    int P() const noexcept { return static_cast<int>(S.rows()); }

    const VectorX& student_head(Task t) const noexcept { return t == Task::dagger ? h_dag : h_ddag; }
    VectorX& student_head(Task t) noexcept { return t == Task::dagger ? h_dag : h_ddag; }
    const VectorX& teacher_head(Task t) const noexcept { return t == Task::dagger ? v_dag : v_ddag; }

    /// Throws ArgumentError on inconsistent block shapes or asymmetric Q/T/S.
    void validate_shapes() const;
};

/// Time derivative of an OrderParameterState. Teacher blocks are always zero.
struct StateDerivative {
    MatrixX dQ, dR, dU, dT, dS, dV;
    VectorX dh_dag, dh_ddag;
};

struct DynamicsConfig {
    double lr_W = 0.1;
    double lr_h = 0.1;
    double dtau = 0.01;

    void validate() const;
};

struct TaskPhase {
    Task active = Task::dagger;
    double tau_end = 0.0;
};

struct TrajectoryPoint {
    double tau = 0.0;
    Task active = Task::dagger;
    OrderParameterState state;
    double eps_dag = 0.0;
    double eps_ddag = 0.0;
};

using Trajectory = std::vector<TrajectoryPoint>;

MatrixX assemble_covariance(const OrderParameterState& state);

/// Generalisation error of the student against teacher `task`. Values in
/// [-1e-10, 0) are clipped to zero.
double generalisation_error(const OrderParameterState& state, Task task);

StateDerivative derivatives(const OrderParameterState& state, Task active, const DynamicsConfig& cfg);

/// Explicit Euler integration over `schedule`. Points are recorded at every
/// multiple of `record_every` and at every phase boundary. Throws
/// DivergenceError (carrying tau) on a non-finite state.
Trajectory integrate(const OrderParameterState& initial, std::span<const TaskPhase> schedule,
                     const DynamicsConfig& cfg, double record_every = 1.0);

/// Flattened mutable state: q_kl (k <= l), r_km, u_kp, h_dag_k, h_ddag_k,
/// row-major with 1-based names.
std::vector<std::string> state_column_names(const OrderParameterState& shape);
std::vector<double> flatten_state(const OrderParameterState& state);

/// CSV with columns tau, eps_dagger, eps_ddagger followed by state_column_names.
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);

}  // namespace forgetlab
