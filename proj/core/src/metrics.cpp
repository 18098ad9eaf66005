#include "forgetlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "forgetlab/errors.hpp"
#include "forgetlab/gaussian_integrals.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

double ErrorTrace::at(double t) const {
    if (tau.empty() || tau.size() != value.size()) throw ArgumentError("error trace is empty or malformed");
    if (!(t >= tau.front() && t <= tau.back())) {
        std::ostringstream os;
        os << "time " << t << " lies outside the trace [" << tau.front() << ", " << tau.back() << "]";
        throw ArgumentError(os.str());
    }
    const auto it = std::lower_bound(tau.begin(), tau.end(), t);
    const auto i = static_cast<std::size_t>(it - tau.begin());
    if (*it == t) return value[i];
    const double t0 = tau[i - 1], t1 = tau[i];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * value[i - 1] + w * value[i];
}

ErrorTrace trace_of(const Trajectory& trajectory, Task task) {
    ErrorTrace out;
    for (const auto& p : trajectory) {
        // Phase ends may repeat a tau already recorded; keep the first.
        if (!out.tau.empty() && p.tau <= out.tau.back()) continue;
        out.tau.push_back(p.tau);
        out.value.push_back(task == Task::dagger ? p.eps_dag : p.eps_ddag);
    }
    return out;
}

ErrorTrace trace_of(const RunResult& run, Task task) {
    ErrorTrace out;
    for (const auto& r : run.records) {
        if (!out.tau.empty() && r.tau <= out.tau.back()) {
            // A re-probe at the same step (early stopping) supersedes the earlier value.
            if (r.tau == out.tau.back()) out.value.back() = task == Task::dagger ? r.eps_dag : r.eps_ddag;
            continue;
        }
        out.tau.push_back(r.tau);
        out.value.push_back(task == Task::dagger ? r.eps_dag : r.eps_ddag);
    }
    return out;
}

double forgetting(const ErrorTrace& eps_dagger, double switch_tau, double measure_tau) {
    return eps_dagger.at(measure_tau) - eps_dagger.at(switch_tau);
}

double transfer(const ErrorTrace& eps_ddagger, double switch_tau, double measure_tau) {
    return eps_ddagger.at(measure_tau) - eps_ddagger.at(switch_tau);
}

double reuse_error(double t, double s, double v, double v_dag, double h_component) {
    return 0.5 * v_dag * v_dag * i2(t, t, t) + 0.5 * h_component * h_component * i2(s, s, s)
           - v_dag * h_component * i2(t, s, v);
}

double reuse_error(const TwoLayerNet& teacher_dag, const TwoLayerNet& teacher_ddag, double h_component) {
    if (teacher_dag.L() != 1 || teacher_ddag.L() != 1) throw ArgumentError("reuse_error needs single-unit teachers");
    if (teacher_dag.D() != teacher_ddag.D()) throw ArgumentError("reuse_error: teacher dimensions differ");
    if (teacher_dag.heads.empty()) throw ConfigurationError("reuse_error: first teacher has no head");
    const double inv_d = 1.0 / static_cast<double>(teacher_dag.D());
    const auto w1 = teacher_dag.W.row(0);
    const auto w2 = teacher_ddag.W.row(0);
    return reuse_error(inv_d * w1.squaredNorm(), inv_d * w2.squaredNorm(), inv_d * w1.dot(w2),
                       teacher_dag.heads.begin()->second(0), h_component);
}

double normalised_overlap(const OrderParameterState& state, int k) {
    if (k < 0 || k >= state.K()) throw ArgumentError("normalised_overlap: node index out of range");
    const double denom = std::sqrt(state.Q(k, k) * state.T(0, 0));
    if (denom == 0.0) return 0.0;
    return std::abs(state.R(k, 0)) / denom;
}

int specialised_node(const OrderParameterState& state) {
    int best = 0;
    for (int k = 1; k < state.K(); ++k) {
        if (normalised_overlap(state, k) > normalised_overlap(state, best)) best = k;
    }
    return best;
}

double reuse_head_component(const OrderParameterState& state) {
    const int k = specialised_node(state);
    const double h = state.h_dag(k);
    return state.R(k, 0) < 0.0 ? -h : h;
}

double dataset_error(const TwoLayerNet& net, const LabeledDataset& data, Task task) {
    data.validate();
    if (data.dim() != net.D()) throw ArgumentError("dataset_error: dimension mismatch");
    double sum = 0.0;
    for (int i = 0; i < data.size(); ++i) {
        const auto row = data.inputs.row(i);
        const double diff = data.labels(i) - forward(net, {row.data(), static_cast<std::size_t>(row.size())}, task);
        sum += diff * diff;
    }
    return 0.5 * sum / data.size();
}

namespace {

// Accumulates (1/2)[(e + h_l g_l)^2 - e^2] per node, where e = y - phi(x):
// masking node l removes h_l g_l from the prediction.
class ImportanceAccumulator {
public:
    ImportanceAccumulator(const TwoLayerNet& net, Task task)
        : net_(net), h_(net.head(task)), sums_(static_cast<std::size_t>(net.L()), 0.0),
          g_(static_cast<std::size_t>(net.L())) {}

    void add(std::span<const double> x, double y) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(net_.D()));
        const Eigen::Map<const VectorX> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        double prediction = 0.0;
        for (int l = 0; l < net_.L(); ++l) {
            g_[static_cast<std::size_t>(l)] = h_(l) * activate(net_.activation, scale * net_.W.row(l).dot(xv.transpose()));
            prediction += g_[static_cast<std::size_t>(l)];
        }
        const double e = y - prediction;
        for (std::size_t l = 0; l < sums_.size(); ++l) {
            const double m = e + g_[l];
            sums_[l] += 0.5 * (m * m - e * e);
        }
        ++count_;
    }

    std::vector<double> result() const {
        std::vector<double> out(sums_);
        for (double& v : out) v /= static_cast<double>(count_);
        return out;
    }

private:
    const TwoLayerNet& net_;
    const VectorX& h_;
    std::vector<double> sums_;
    std::vector<double> g_;
    std::int64_t count_ = 0;
};

void check_node(const TwoLayerNet& net, int node) {
    if (node < 0 || node >= net.L()) throw ArgumentError("node index out of range");
}

}  // namespace

std::vector<double> node_importances(const TwoLayerNet& net, const LabelSource& source, Task task,
                                     std::int64_t n_test, std::uint64_t seed) {
    if (n_test < 1) throw ArgumentError("node_importances needs n_test >= 1");
    if (source.dim() != net.D()) throw ArgumentError("node_importances: dimension mismatch");
    ImportanceAccumulator acc(net, task);
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(net.D()));
    for (std::int64_t n = 0; n < n_test; ++n) {
        const double y = source.draw(rng, x);
        acc.add(x, y);
    }
    return acc.result();
}

std::vector<double> node_importances(const TwoLayerNet& net, const LabeledDataset& data, Task task) {
    data.validate();
    if (data.dim() != net.D()) throw ArgumentError("node_importances: dimension mismatch");
    ImportanceAccumulator acc(net, task);
    for (int i = 0; i < data.size(); ++i) {
        const auto row = data.inputs.row(i);
        acc.add({row.data(), static_cast<std::size_t>(row.size())}, data.labels(i));
    }
    return acc.result();
}

double node_importance(const TwoLayerNet& net, const LabelSource& source, Task task, int node,
                       std::int64_t n_test, std::uint64_t seed) {
    check_node(net, node);
    return node_importances(net, source, task, n_test, seed)[static_cast<std::size_t>(node)];
}

double node_importance(const TwoLayerNet& net, const LabeledDataset& data, Task task, int node) {
    check_node(net, node);
    return node_importances(net, data, task)[static_cast<std::size_t>(node)];
}

double importance_dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ArgumentError("importance vectors differ in length");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double importance_dot(const ImportanceVector& a, const ImportanceVector& b) {
    return importance_dot(std::span<const double>(a.values), std::span<const double>(b.values));
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("spearman: length mismatch");
    if (x.size() < 2) throw ArgumentError("spearman needs at least two points");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace forgetlab
