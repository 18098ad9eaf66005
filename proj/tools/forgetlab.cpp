// forgetlab: run forgetting sweeps, check the Gaussian integrals, redraw plots.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "forgetlab/csv.hpp"
#include "forgetlab/errors.hpp"
#include "forgetlab/experiment.hpp"

namespace fs = std::filesystem;
using namespace forgetlab;

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed_base;
};

void add_common(CLI::App& sub, CommonFlags& f) {
    sub.add_option("--config", f.config, "experiment config file")->check(CLI::ExistingFile);
    sub.add_option("--out", f.out, "output directory (default: $FORGETLAB_OUT, then the config's output_dir)");
    sub.add_option("--workers", f.workers, "parallel sweep workers")->check(CLI::PositiveNumber);
    sub.add_option("--seed-base", f.seed_base, "offset added to every seed");
}

ExperimentConfig resolve(const CommonFlags& f) {
    ExperimentConfig cfg = f.config.empty() ? parse_config("") : load_config(f.config);
    if (!f.out.empty()) {
        cfg.output_dir = f.out;
    } else if (const char* env = std::getenv("FORGETLAB_OUT"); env != nullptr && *env != '\0') {
        cfg.output_dir = env;
    }
    if (f.workers) cfg.workers = *f.workers;
    if (f.seed_base) cfg.seed_base = *f.seed_base;
    cfg.validate();
    return cfg;
}

int run_sweep_command(const CommonFlags& f, SweepKind kind) {
    const ExperimentConfig cfg = resolve(f);
    const auto records = run_sweep(cfg, kind, &std::cerr);
    std::size_t failed = 0;
    for (const auto& r : records) failed += r.metrics.status != "ok";
    const fs::path dir = sweep_dir(cfg, kind);
    std::cout << records.size() << " cells, " << failed << " diverged; results in " << dir.string() << '\n';
    return 0;
}

int validate_command(const CommonFlags& f, int blocks, std::int64_t samples, std::uint64_t seed) {
    const ExperimentConfig cfg = resolve(f);
    const IntegralReport rep = validate_integrals(blocks, samples, cfg.seed_base + seed);

    const fs::path dir = cfg.output_dir / "validate-integrals";
    fs::create_directories(dir);
    std::ofstream os(dir / "integrals.csv");
    CsvWriter csv(os);
    const std::vector<std::string> header{"integral", "block", "closed_form", "mc_estimate", "mc_stderr", "z"};
    csv.header(header);
    for (const auto& c : rep.checks) {
        const std::vector<CsvCell> row{"I" + std::to_string(static_cast<int>(c.kind) + 2),
                                       static_cast<std::int64_t>(c.block),
                                       c.closed,
                                       c.mc.estimate,
                                       c.mc.standard_error,
                                       c.z};
        csv.row(row);
    }
    for (int k = 0; k < 3; ++k) {
        std::cout << "I" << k + 2 << " max deviation " << format_double(rep.max_z[k]) << " sigma\n";
    }
    if (!rep.passed) {
        std::cout << "FAIL: " << rep.failures << " exceeds 4 sigma\n";
        return 1;
    }
    std::cout << "PASS (" << blocks << " blocks, " << samples << " samples)\n";
    return 0;
}

int plot_command(const std::string& dir, const std::string& kind) {
    const auto records = load_records(dir);
    std::vector<fs::path> written;
    if (kind.empty() || kind == "all") {
        written = emit_plots(records, dir);
    } else {
        for (PlotKind k : {PlotKind::error_curves, PlotKind::forgetting_vs_similarity, PlotKind::importance_dots}) {
            if (to_string(k) == kind) written.push_back(emit_plot(records, k, dir));
        }
        if (written.empty()) throw ArgumentError("unknown plot kind '" + kind + "'");
    }
    for (const auto& p : written) std::cout << p.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Catastrophic-forgetting experiments in the teacher-student setting"};
    app.require_subcommand(1);

    struct Sweep {
        const char* name;
        SweepKind kind;
        const char* help;
    };
    const Sweep sweeps[] = {
        {"ode-sweep", SweepKind::ode, "similarity sweep with the order-parameter ODE"},
        {"sim-sweep", SweepKind::sim, "similarity sweep with finite-D SGD"},
        {"ewc-sweep", SweepKind::ewc, "EWC strength x similarity sweep"},
        {"replay-sweep", SweepKind::replay, "interleaved replay period x similarity sweep"},
        {"slowing", SweepKind::slowing, "re-initialise vs continue at the switch, with replay"},
        {"mix-sweep", SweepKind::mix, "data-mixing sweep on an image task, node importances"},
    };
    CommonFlags flags;
    std::optional<SweepKind> chosen;
    for (const auto& s : sweeps) {
        auto* sub = app.add_subcommand(s.name, s.help);
        add_common(*sub, flags);
        sub->callback([&chosen, kind = s.kind] { chosen = kind; });
    }

    int blocks = 100;
    std::int64_t samples = 1'000'000;
    std::uint64_t vseed = 1;
    auto* validate = app.add_subcommand("validate-integrals", "closed-form I2/I3/I4 against Monte Carlo");
    add_common(*validate, flags);
    validate->add_option("--blocks", blocks, "random covariance blocks")->check(CLI::PositiveNumber);
    validate->add_option("--samples", samples, "Monte-Carlo samples per integral")->check(CLI::Range(1000, 1 << 30));
    validate->add_option("--seed", vseed, "generator seed");

    std::string plot_dir, plot_kind;
    auto* plot = app.add_subcommand("plot", "redraw SVG plots from a sweep directory");
    plot->add_option("dir", plot_dir, "sweep directory holding metrics.csv and index.csv")
        ->required()
        ->check(CLI::ExistingDirectory);
    plot->add_option("--kind", plot_kind, "error_curves, forgetting_vs_similarity, importance_dots or all");

    CLI11_PARSE(app, argc, argv);

    try {
        if (chosen) return run_sweep_command(flags, *chosen);
        if (validate->parsed()) return validate_command(flags, blocks, samples, vseed);
        if (plot->parsed()) return plot_command(plot_dir, plot_kind);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
