#include "forgetlab/network.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "forgetlab/csv.hpp"
#include "forgetlab/errors.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

const VectorX& TwoLayerNet::head(Task t) const {
    const auto it = heads.find(t);
    if (it == heads.end()) {
        throw ConfigurationError("network has no head for task " + std::string(to_string(t)));
    }
    return it->second;
}

VectorX& TwoLayerNet::head(Task t) {
    const auto it = heads.find(t);
    if (it == heads.end()) {
        throw ConfigurationError("network has no head for task " + std::string(to_string(t)));
    }
    return it->second;
}

TwoLayerNet make_student(int D, int L, ActivationKind activation, std::span<const Task> tasks,
                         const InitPolicy& init, Rng& rng) {
    if (D < 1 || L < 1) throw ArgumentError("network dimensions must be positive");
    TwoLayerNet net;
    net.activation = activation;
    net.W.resize(L, D);
    fill_normal(rng, {net.W.data(), static_cast<std::size_t>(net.W.size())}, std::sqrt(init.weight_variance));
    for (Task t : tasks) {
        VectorX h = VectorX::Zero(L);
        if (init.head_variance > 0.0) {
            fill_normal(rng, {h.data(), static_cast<std::size_t>(L)}, std::sqrt(init.head_variance));
        }
        net.heads[t] = std::move(h);
    }
    return net;
}

namespace {

void check_input(const TwoLayerNet& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.D()) throw ArgumentError("input dimension does not match network");
}

Eigen::Map<const VectorX> as_vector(std::span<const double> x) {
    return {x.data(), static_cast<Eigen::Index>(x.size())};
}

}  // namespace

double forward(const TwoLayerNet& net, std::span<const double> x, Task task) {
    return forward_masked(net, x, task, -1);
}

double forward_masked(const TwoLayerNet& net, std::span<const double> x, Task task, int masked) {
    check_input(net, x);
    const VectorX& h = net.head(task);
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.D()));
    const auto xv = as_vector(x);
    double out = 0.0;
    for (int l = 0; l < net.L(); ++l) {
        if (l == masked) continue;
        out += h(l) * activate(net.activation, scale * net.W.row(l).dot(xv.transpose()));
    }
    return out;
}

double sgd_step(TwoLayerNet& net, std::span<const double> x, double y, Task task, double lr_W,
                double lr_h, const EwcPenalty& ewc) {
    check_input(net, x);
    VectorX& h = net.head(task);
    const int L = net.L();
    const double d = static_cast<double>(net.D());
    const double scale = 1.0 / std::sqrt(d);
    const auto xv = as_vector(x);

    VectorX g(L), gp(L);
    double prediction = 0.0;
    for (int l = 0; l < L; ++l) {
        const double field = scale * net.W.row(l).dot(xv.transpose());
        g(l) = activate(net.activation, field);
        gp(l) = activate_derivative(net.activation, field);
        prediction += h(l) * g(l);
    }
    const double delta = prediction - y;

    const bool penalised = ewc.anchor != nullptr && ewc.lambda != 0.0;
    const double penalty = penalised ? lr_W * ewc.lambda / d : 0.0;
    for (int l = 0; l < L; ++l) {
        const double coeff = lr_W * scale * h(l) * gp(l) * delta;
        if (penalised) {
            net.W.row(l) = net.W.row(l) - coeff * xv.transpose()
                           - penalty * ewc.anchor->fisher.row(l).cwiseProduct(net.W.row(l) - ewc.anchor->theta_star.row(l));
        } else {
            net.W.row(l) -= coeff * xv.transpose();
        }
    }
    const double head_rate = lr_h / d;
    for (int l = 0; l < L; ++l) h(l) -= head_rate * g(l) * delta;
    return delta;
}

EwcAnchor estimate_fisher(const TwoLayerNet& net, const LabelSource& source, Task task,
                          std::int64_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ArgumentError("estimate_fisher needs at least one sample");
    const VectorX& h = net.head(task);
    const int L = net.L();
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.D()));
    EwcAnchor anchor{net.W, RowMatrix::Zero(L, net.D())};

    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(net.D()));
    const auto xv = as_vector(x);
    VectorX gp(L);
    for (std::int64_t n = 0; n < n_samples; ++n) {
        source.draw(rng, x);
        for (int l = 0; l < L; ++l) {
            gp(l) = activate_derivative(net.activation, scale * net.W.row(l).dot(xv.transpose()));
        }
        for (int l = 0; l < L; ++l) {
            // Unit-variance Gaussian likelihood: E_y[(d log p / dW_ld)^2] = (d phi / dW_ld)^2
            // = (h_l g'(lambda_l) x_d / sqrt D)^2.
            const double c = h(l) * gp(l) * scale;
            anchor.fisher.row(l) += (c * c) * xv.transpose().cwiseAbs2();
        }
    }
    anchor.fisher /= static_cast<double>(n_samples);
    return anchor;
}

namespace {

VectorX head_or_zero(const TwoLayerNet& net, Task t) {
    return net.has_head(t) ? net.head(t) : VectorX::Zero(net.L());
}

// Teachers carry a single head; use it whatever task it is keyed under.
VectorX teacher_head(const TwoLayerNet& teacher) {
    if (teacher.heads.empty()) return VectorX::Zero(teacher.L());
    return teacher.heads.begin()->second;
}

}  // namespace

OrderParameterState empirical_order_params(const TwoLayerNet& student, const TwoLayerNet& teacher_dag,
                                           const TwoLayerNet& teacher_ddag) {
    if (student.D() != teacher_dag.D() || student.D() != teacher_ddag.D()) {
        throw ArgumentError("empirical_order_params: networks must share the input dimension");
    }
    const double inv_d = 1.0 / static_cast<double>(student.D());
    OrderParameterState s;
    s.Q = inv_d * student.W * student.W.transpose();
    s.R = inv_d * student.W * teacher_dag.W.transpose();
    s.U = inv_d * student.W * teacher_ddag.W.transpose();
    s.T = inv_d * teacher_dag.W * teacher_dag.W.transpose();
    s.S = inv_d * teacher_ddag.W * teacher_ddag.W.transpose();
    s.V = inv_d * teacher_dag.W * teacher_ddag.W.transpose();
    // Gram products are symmetric up to rounding; make them exactly so.
    s.Q = 0.5 * (s.Q + s.Q.transpose()).eval();
    s.T = 0.5 * (s.T + s.T.transpose()).eval();
    s.S = 0.5 * (s.S + s.S.transpose()).eval();
    s.h_dag = head_or_zero(student, Task::dagger);
    s.h_ddag = head_or_zero(student, Task::ddagger);
    s.v_dag = teacher_head(teacher_dag);
    s.v_ddag = teacher_head(teacher_ddag);
    return s;
}

double test_error(const TwoLayerNet& net, const LabelSource& source, Task task, std::int64_t n_test,
                  std::uint64_t seed) {
    if (n_test < 1) throw ArgumentError("test_error needs n_test >= 1");
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(net.D()));
    double sum = 0.0;
    for (std::int64_t n = 0; n < n_test; ++n) {
        const double y = source.draw(rng, x);
        const double diff = y - forward(net, x, task);
        sum += diff * diff;
    }
    return 0.5 * sum / static_cast<double>(n_test);
}

const LabelSource& TaskSet::at(Task t) const {
    const auto& p = t == Task::dagger ? dagger : ddagger;
    if (!p) throw ConfigurationError("no label source for task " + std::string(to_string(t)));
    return *p;
}

namespace {

constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kReplayStream = 2;
constexpr std::uint64_t kReinitStream = 3;
constexpr std::uint64_t kFisherStream = 4;
constexpr std::uint64_t kTestStream = 16;

class Trainer {
public:
    Trainer(TwoLayerNet student, const TaskSet& tasks, const TrainPlan& plan, const ProbeSettings& probes)
        : net_(std::move(student)),
          tasks_(tasks),
          plan_(plan),
          probes_(probes),
          train_rng_(derive_seed(plan.seed, kTrainStream)),
          replay_rng_(derive_seed(plan.seed, kReplayStream)),
          x_(static_cast<std::size_t>(net_.D())) {
        const auto* td = tasks.dagger ? tasks.dagger->teacher() : nullptr;
        const auto* tdd = tasks.ddagger ? tasks.ddagger->teacher() : nullptr;
        if (td != nullptr && tdd != nullptr) {
            teacher_dag_ = td;
            teacher_ddag_ = tdd;
        }
        if (probes_.errors == ErrorMode::order_parameters
            && (teacher_dag_ == nullptr || net_.activation != ActivationKind::scaled_erf
                || teacher_dag_->activation != ActivationKind::scaled_erf
                || teacher_ddag_->activation != ActivationKind::scaled_erf)) {
            throw ConfigurationError("order-parameter error probes need two scaled_erf teacher tasks");
        }
        if (probes_.every < 1) throw ArgumentError("probe cadence must be at least one step");
    }

    RunResult run() {
        for (const auto& ph : plan_.phases) {
            tasks_.at(ph.task);
            if (ph.steps < 0) throw ArgumentError("phase step counts must be non-negative");
        }
        if (plan_.replay && plan_.replay->period < 1) throw ArgumentError("replay period must be >= 1");

        RunResult result;
        probe(result, plan_.phases.empty() ? Task::dagger : plan_.phases.front().task, true);
        for (std::size_t ph = 0; ph < plan_.phases.size(); ++ph) {
            const auto& phase = plan_.phases[ph];
            if (ph > 0) on_switch(ph);
            const bool replaying = ph > 0 && plan_.replay.has_value();
            for (std::int64_t s = 1; s <= phase.steps; ++s) {
                const double y = tasks_.at(phase.task).draw(train_rng_, x_);
                const EwcPenalty pen = anchor_ ? EwcPenalty{&*anchor_, plan_.ewc->lambda} : EwcPenalty{};
                const double delta = sgd_step(net_, x_, y, phase.task, plan_.lr_W, plan_.lr_h, pen);
                advance(delta, result, phase.task);
                if (replaying && s % plan_.replay->period == 0) {
                    const Task src = plan_.replay->source;
                    const double yr = tasks_.at(src).draw(replay_rng_, x_);
                    const double dr = sgd_step(net_, x_, yr, src, plan_.lr_W, plan_.lr_h);
                    ++result.replay_steps;
                    advance(dr, result, phase.task);
                }
            }
            if (step_ % probes_.every != 0) probe(result, phase.task, ph == 0);
            if (ph == 0 && plan_.early_stopping && best_ && plan_.phases.size() > 1) {
                // The switch state is the best phase-1 network; re-probe it in place.
                net_ = *best_;
                result.records.pop_back();
                probe(result, phase.task, false);
            }
            if (probes_.importance) add_importance(result.records.back());
            result.phase_end_steps.push_back(step_);
        }
        result.final_student = net_;
        return result;
    }

private:
    void advance(double delta, RunResult& result, Task active) {
        ++step_;
        if (!std::isfinite(delta) || (step_ % 1024 == 0 && !net_.W.allFinite())) {
            std::ostringstream os;
            os << "training diverged at step " << step_;
            throw DivergenceError(os.str(), static_cast<double>(step_));
        }
        if (step_ % probes_.every == 0) probe(result, active, phase_index_ == 0);
    }

    void on_switch(std::size_t ph) {
        phase_index_ = ph;
        if (ph != 1) return;
        const Task first = plan_.phases.front().task;
        if (plan_.ewc) {
            const std::int64_t n = plan_.ewc->fisher_samples > 0 ? plan_.ewc->fisher_samples
                                                                  : 10LL * net_.D();
            anchor_ = estimate_fisher(net_, tasks_.at(first), first, n, derive_seed(plan_.seed, kFisherStream));
        }
        if (plan_.reinit_at_switch) {
            Rng rng(derive_seed(plan_.seed, kReinitStream));
            const Task next = plan_.phases[ph].task;
            const std::array<Task, 1> only{next};
            TwoLayerNet fresh = make_student(net_.D(), net_.L(), net_.activation, only, plan_.reinit, rng);
            net_.W = std::move(fresh.W);
            net_.head(next) = fresh.head(next);
        }
    }

    double error_for(Task t) {
        const LabelSource& src = tasks_.at(t);
        if (const LabeledDataset* ds = src.held_out()) return dataset_error(net_, *ds, t);
        return test_error(net_, src, t, probes_.n_test, derive_seed(plan_.seed, kTestStream + index_of(t)));
    }

    void probe(RunResult& result, Task active, bool track_best) {
        ProbeRecord rec;
        rec.step = step_;
        rec.tau = static_cast<double>(step_) / static_cast<double>(net_.D());
        rec.active = active;
        if (teacher_dag_ != nullptr) {
            rec.order = empirical_order_params(net_, *teacher_dag_, *teacher_ddag_);
        }
        if (probes_.errors == ErrorMode::order_parameters) {
            rec.eps_dag = generalisation_error(*rec.order, Task::dagger);
            rec.eps_ddag = generalisation_error(*rec.order, Task::ddagger);
        } else {
            rec.eps_dag = tasks_.dagger ? error_for(Task::dagger) : 0.0;
            rec.eps_ddag = tasks_.ddagger ? error_for(Task::ddagger) : 0.0;
        }
        if (track_best && plan_.early_stopping) {
            const double e = active == Task::dagger ? rec.eps_dag : rec.eps_ddag;
            if (!best_ || e < best_error_) {
                best_error_ = e;
                best_ = net_;
            }
        }
        result.records.push_back(std::move(rec));
    }

    void add_importance(ProbeRecord& rec) {
        for (Task t : {Task::dagger, Task::ddagger}) {
            const auto& src = t == Task::dagger ? tasks_.dagger : tasks_.ddagger;
            if (!src || !net_.has_head(t)) continue;
            std::vector<double> imp;
            if (const LabeledDataset* ds = src->held_out()) {
                imp = node_importances(net_, *ds, t);
            } else {
                imp = node_importances(net_, *src, t, probes_.n_test,
                                       derive_seed(plan_.seed, kTestStream + index_of(t)));
            }
            (t == Task::dagger ? rec.importance_dag : rec.importance_ddag) = std::move(imp);
        }
    }

    TwoLayerNet net_;
    const TaskSet& tasks_;
    const TrainPlan& plan_;
    const ProbeSettings& probes_;
    Rng train_rng_;
    Rng replay_rng_;
    std::vector<double> x_;
    std::int64_t step_ = 0;
    std::size_t phase_index_ = 0;
    const TwoLayerNet* teacher_dag_ = nullptr;
    const TwoLayerNet* teacher_ddag_ = nullptr;
    std::optional<EwcAnchor> anchor_;
    std::optional<TwoLayerNet> best_;
    double best_error_ = 0.0;
};

}  // namespace

RunResult train_continual(TwoLayerNet student, const TaskSet& tasks, const TrainPlan& plan,
                          const ProbeSettings& probes) {
    Trainer trainer(std::move(student), tasks, plan, probes);
    return trainer.run();
}

void write_run_csv(std::ostream& os, const RunResult& run) {
    if (run.records.empty()) return;
    CsvWriter csv(os);
    std::vector<std::string> header{"step", "tau", "task_active", "eps_dag", "eps_ddag"};
    const auto& first = run.records.front();
    if (first.order) {
        for (auto& n : state_column_names(*first.order)) header.push_back(std::move(n));
    }
    std::size_t n_imp = 0;
    for (const auto& r : run.records) n_imp = std::max({n_imp, r.importance_dag.size(), r.importance_ddag.size()});
    for (std::size_t l = 0; l < n_imp; ++l) header.push_back("importance_dag_" + std::to_string(l + 1));
    for (std::size_t l = 0; l < n_imp; ++l) header.push_back("importance_ddag_" + std::to_string(l + 1));
    csv.header(header);

    for (const auto& r : run.records) {
        std::vector<CsvCell> row{std::int64_t{r.step}, r.tau, std::string(to_string(r.active)), r.eps_dag,
                                 r.eps_ddag};
        if (r.order) {
            for (double v : flatten_state(*r.order)) row.emplace_back(v);
        }
        for (const auto* imp : {&r.importance_dag, &r.importance_ddag}) {
            for (std::size_t l = 0; l < n_imp; ++l) {
                if (l < imp->size()) {
                    row.emplace_back((*imp)[l]);
                } else {
                    row.emplace_back(std::string());
                }
            }
        }
        csv.row(row);
    }
}

}  // namespace forgetlab
