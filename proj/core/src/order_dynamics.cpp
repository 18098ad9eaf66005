#include "forgetlab/order_dynamics.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "forgetlab/csv.hpp"
#include "forgetlab/errors.hpp"

namespace forgetlab {

std::string_view to_string(Task t) noexcept {
    return t == Task::dagger ? "dagger" : "ddagger";
}

void OrderParameterState::validate_shapes() const {
    const int k = K(), m = M(), p = P();
    auto fail = [](const char* what) { throw ArgumentError(std::string("order parameters: ") + what); };
    if (Q.cols() != k) fail("Q must be K x K");
    if (T.cols() != m) fail("T must be M x M");
    if (S.cols() != p) fail("S must be P x P");
    if (R.rows() != k || R.cols() != m) fail("R must be K x M");
    if (U.rows() != k || U.cols() != p) fail("U must be K x P");
    if (V.rows() != m || V.cols() != p) fail("V must be M x P");
    if (h_dag.size() != k || h_ddag.size() != k) fail("student heads must have K entries");
    if (v_dag.size() != m) fail("v_dag must have M entries");
    if (v_ddag.size() != p) fail("v_ddag must have P entries");
    auto symmetric = [](const MatrixX& a) {
        return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.cwiseAbs().maxCoeff());
    };
    if (k > 0 && !symmetric(Q)) fail("Q is not symmetric");
    if (m > 0 && !symmetric(T)) fail("T is not symmetric");
    if (p > 0 && !symmetric(S)) fail("S is not symmetric");
}

void DynamicsConfig::validate() const {
    if (!(dtau > 0.0)) throw ArgumentError("dtau must be positive");
    if (!(lr_W > 0.0) || !(lr_h > 0.0)) throw ArgumentError("learning rates must be positive");
}

MatrixX assemble_covariance(const OrderParameterState& s) {
    const int k = s.K(), m = s.M(), p = s.P();
    MatrixX c(k + m + p, k + m + p);
    c.block(0, 0, k, k) = s.Q;
    c.block(0, k, k, m) = s.R;
    c.block(0, k + m, k, p) = s.U;
    c.block(k, 0, m, k) = s.R.transpose();
    c.block(k, k, m, m) = s.T;
    c.block(k, k + m, m, p) = s.V;
    c.block(k + m, 0, p, k) = s.U.transpose();
    c.block(k + m, k, p, m) = s.V.transpose();
    c.block(k + m, k + m, p, p) = s.S;
    return c;
}

namespace {

struct ActiveFields {
    int teacher_offset;
    int teacher_count;
};

ActiveFields active_fields(const OrderParameterState& s, Task t) {
    return t == Task::dagger ? ActiveFields{s.K(), s.M()} : ActiveFields{s.K() + s.M(), s.P()};
}

double pair_i2(const MatrixX& c, int a, int b) { return i2(c(a, a), c(b, b), c(a, b)); }

// <g'(lambda_i) f g(j)> for fields (i, f, j).
double triple_i3(const MatrixX& c, int i, int f, int j) {
    return i3(c(i, i), c(f, f), c(j, j), c(i, f), c(i, j), c(f, j));
}

double quad_i4(const MatrixX& c, int i, int k, int j, int l) {
    return i4(c(i, i), c(k, k), c(j, j), c(l, l),
              c(i, k), c(i, j), c(i, l), c(k, j), c(k, l), c(j, l));
}

}  // namespace

double generalisation_error(const OrderParameterState& s, Task task) {
    const MatrixX c = assemble_covariance(s);
    const auto [off, nt] = active_fields(s, task);
    const VectorX& h = s.student_head(task);
    const VectorX& v = s.teacher_head(task);
    const int k = s.K();

    double student = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) student += h(i) * h(j) * pair_i2(c, i, j);
    double teacher = 0.0;
    for (int m = 0; m < nt; ++m)
        for (int n = 0; n < nt; ++n) teacher += v(m) * v(n) * pair_i2(c, off + m, off + n);
    double cross = 0.0;
    for (int i = 0; i < k; ++i)
        for (int m = 0; m < nt; ++m) cross += h(i) * v(m) * pair_i2(c, i, off + m);

    const double eps = 0.5 * student + 0.5 * teacher - cross;
    if (eps < 0.0 && eps >= -1e-10) return 0.0;
    return eps;
}

StateDerivative derivatives(const OrderParameterState& s, Task active, const DynamicsConfig& cfg) {
    const int k = s.K(), m = s.M(), p = s.P();
    const int n = k + m + p;
    const MatrixX c = assemble_covariance(s);
    const auto [off, nt] = active_fields(s, active);
    const VectorX& h = s.student_head(active);
    const VectorX& v = s.teacher_head(active);

    // a(i, f) = <g'(lambda_i) f Delta>, Delta = sum_j h_j g(lambda_j) - sum_t v_t g(teacher_t).
    // Student and teacher sums are accumulated separately so that a student
    // identical to its teacher cancels exactly.
    MatrixX a(k, n);
    for (int i = 0; i < k; ++i) {
        for (int f = 0; f < n; ++f) {
            double student = 0.0;
            for (int j = 0; j < k; ++j) student += h(j) * triple_i3(c, i, f, j);
            double teacher = 0.0;
            for (int t = 0; t < nt; ++t) teacher += v(t) * triple_i3(c, i, f, off + t);
            a(i, f) = student - teacher;
        }
    }

    StateDerivative d;
    d.dT = MatrixX::Zero(m, m);
    d.dS = MatrixX::Zero(p, p);
    d.dV = MatrixX::Zero(m, p);
    d.dR.resize(k, m);
    d.dU.resize(k, p);
    d.dQ.resize(k, k);
    for (int i = 0; i < k; ++i) {
        for (int t = 0; t < m; ++t) d.dR(i, t) = -cfg.lr_W * h(i) * a(i, k + t);
        for (int t = 0; t < p; ++t) d.dU(i, t) = -cfg.lr_W * h(i) * a(i, k + m + t);
    }

    for (int i = 0; i < k; ++i) {
        for (int l = i; l < k; ++l) {
            // <g'(lambda_i) g'(lambda_l) Delta^2>
            double ss = 0.0, tt = 0.0, st = 0.0;
            for (int j = 0; j < k; ++j)
                for (int jj = 0; jj < k; ++jj) ss += h(j) * h(jj) * quad_i4(c, i, l, j, jj);
            for (int t = 0; t < nt; ++t)
                for (int tt2 = 0; tt2 < nt; ++tt2) tt += v(t) * v(tt2) * quad_i4(c, i, l, off + t, off + tt2);
            for (int j = 0; j < k; ++j)
                for (int t = 0; t < nt; ++t) st += h(j) * v(t) * quad_i4(c, i, l, j, off + t);
            const double second = ss + tt - 2.0 * st;
            const double value = -cfg.lr_W * (h(i) * a(i, l) + h(l) * a(l, i))
                                 + cfg.lr_W * cfg.lr_W * h(i) * h(l) * second;
            d.dQ(i, l) = value;
            d.dQ(l, i) = value;
        }
    }

    VectorX dh(k);
    for (int i = 0; i < k; ++i) {
        double student = 0.0;
        for (int j = 0; j < k; ++j) student += h(j) * pair_i2(c, j, i);
        double teacher = 0.0;
        for (int t = 0; t < nt; ++t) teacher += v(t) * pair_i2(c, off + t, i);
        dh(i) = -cfg.lr_h * (student - teacher);
    }
    if (active == Task::dagger) {
        d.dh_dag = std::move(dh);
        d.dh_ddag = VectorX::Zero(k);
    } else {
        d.dh_ddag = std::move(dh);
        d.dh_dag = VectorX::Zero(k);
    }
    return d;
}

namespace {

bool all_finite(const OrderParameterState& s) {
    return s.Q.allFinite() && s.R.allFinite() && s.U.allFinite() && s.h_dag.allFinite()
           && s.h_ddag.allFinite();
}

[[noreturn]] void diverged(double tau, const char* why) {
    std::ostringstream os;
    os << "order-parameter integration diverged at tau = " << tau << " (" << why << ")";
    throw DivergenceError(os.str(), tau);
}

TrajectoryPoint make_point(double tau, Task active, const OrderParameterState& s) {
    return {tau, active, s, generalisation_error(s, Task::dagger), generalisation_error(s, Task::ddagger)};
}

}  // namespace

Trajectory integrate(const OrderParameterState& initial, std::span<const TaskPhase> schedule,
                     const DynamicsConfig& cfg, double record_every) {
    cfg.validate();
    initial.validate_shapes();
    if (schedule.empty()) throw ArgumentError("integrate: schedule is empty");
    if (!(record_every > 0.0)) throw ArgumentError("integrate: record_every must be positive");
    double prev_end = 0.0;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const double end = schedule[i].tau_end;
        if (end < 0.0 || (i > 0 && !(end > prev_end))) {
            throw ArgumentError("integrate: phase end times must be non-negative and strictly increasing");
        }
        prev_end = end;
    }

    const long long record_stride = std::max(1LL, std::llround(record_every / cfg.dtau));
    OrderParameterState state = initial;
    Trajectory out;
    out.push_back(make_point(0.0, schedule.front().active, state));

    long long step = 0;
    for (std::size_t ph = 0; ph < schedule.size(); ++ph) {
        const TaskPhase& phase = schedule[ph];
        const long long end_step = std::llround(phase.tau_end / cfg.dtau);
        VectorX& head = state.student_head(phase.active);
        while (step < end_step) {
            StateDerivative d;
            try {
                d = derivatives(state, phase.active, cfg);
            } catch (const DegenerateCovarianceError& e) {
                // An overshooting step left the overlaps non-physical.
                diverged(static_cast<double>(step) * cfg.dtau, e.what());
            } catch (const DomainError& e) {
                diverged(static_cast<double>(step) * cfg.dtau, e.what());
            }
            state.Q += cfg.dtau * d.dQ;
            state.R += cfg.dtau * d.dR;
            state.U += cfg.dtau * d.dU;
            head += cfg.dtau * (phase.active == Task::dagger ? d.dh_dag : d.dh_ddag);
            ++step;
            const double tau = static_cast<double>(step) * cfg.dtau;
            if (!all_finite(state)) diverged(tau, "non-finite state");
            if (step % record_stride == 0 || step == end_step) {
                const Task next = (step == end_step && ph + 1 < schedule.size()) ? schedule[ph + 1].active
                                                                                  : phase.active;
                out.push_back(make_point(tau, next, state));
            }
        }
    }
    return out;
}

std::vector<std::string> state_column_names(const OrderParameterState& s) {
    std::vector<std::string> names;
    const int k = s.K(), m = s.M(), p = s.P();
    auto idx = [](const char* prefix, int a, int b) {
        return std::string(prefix) + "_" + std::to_string(a + 1) + std::to_string(b + 1);
    };
    for (int i = 0; i < k; ++i)
        for (int l = i; l < k; ++l) names.push_back(idx("q", i, l));
    for (int i = 0; i < k; ++i)
        for (int t = 0; t < m; ++t) names.push_back(idx("r", i, t));
    for (int i = 0; i < k; ++i)
        for (int t = 0; t < p; ++t) names.push_back(idx("u", i, t));
    for (int i = 0; i < k; ++i) names.push_back("h_dag_" + std::to_string(i + 1));
    for (int i = 0; i < k; ++i) names.push_back("h_ddag_" + std::to_string(i + 1));
    return names;
}

std::vector<double> flatten_state(const OrderParameterState& s) {
    std::vector<double> values;
    const int k = s.K();
    for (int i = 0; i < k; ++i)
        for (int l = i; l < k; ++l) values.push_back(s.Q(i, l));
    for (int i = 0; i < k; ++i)
        for (int t = 0; t < s.M(); ++t) values.push_back(s.R(i, t));
    for (int i = 0; i < k; ++i)
        for (int t = 0; t < s.P(); ++t) values.push_back(s.U(i, t));
    for (int i = 0; i < k; ++i) values.push_back(s.h_dag(i));
    for (int i = 0; i < k; ++i) values.push_back(s.h_ddag(i));
    return values;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory) {
    if (trajectory.empty()) return;
    CsvWriter csv(os);
    std::vector<std::string> header{"tau", "eps_dagger", "eps_ddagger"};
    for (auto& name : state_column_names(trajectory.front().state)) header.push_back(std::move(name));
    csv.header(header);
    for (const auto& pt : trajectory) {
        std::vector<double> row{pt.tau, pt.eps_dag, pt.eps_ddag};
        for (double x : flatten_state(pt.state)) row.push_back(x);
        csv.row(row);
    }
}

}  // namespace forgetlab
