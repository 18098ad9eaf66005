#pragma once

// Experiment configuration: a small key/value text format with [section]
// headers, numbers, booleans, quoted strings and flat arrays.
//
//   engine = "ode"
//   similarity = [0, 0.5, 1]
//   [training]
//   lr_W = 0.1

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "forgetlab/activation.hpp"
#include "forgetlab/tasks.hpp"

namespace forgetlab {

using ConfigScalar = std::variant<bool, double, std::string>;
using ConfigValue = std::variant<bool, double, std::string, std::vector<ConfigScalar>>;

/// Parsed document: fully qualified key ("section.key") to value, in key order.
using ConfigDocument = std::map<std::string, ConfigValue>;

/// Throws ConfigError naming the line on malformed input or a repeated key.
ConfigDocument parse_config_document(std::string_view text);

enum class Engine { ode, sim, both };
std::string_view to_string(Engine e) noexcept;

struct MixConfig {
    std::filesystem::path images;  // IDX files; empty means synthesize fixtures
    std::filesystem::path labels;
    std::pair<int, int> first_classes{0, 5};
    std::pair<int, int> second_classes{2, 7};
    int hidden = 8;
    ActivationKind activation = ActivationKind::sigmoid;
    double lr = 0.001;  // conventional per-parameter rate, before the 1/sqrt(D) scaling
    int input_dim = 1024;
    std::int64_t steps_first = 20000;
    std::int64_t steps_second = 20000;
    std::int64_t probe_every = 500;
    double test_fraction = 0.2;
    int synthetic_per_class = 600;
    std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
};

struct ExperimentConfig {
    Engine engine = Engine::ode;

    int D = 1000;
    int K = 2;
    int M = 1;
    int P = 1;
    int D_init = 1000;
    ActivationKind activation = ActivationKind::scaled_erf;
    double weight_variance = 1e-3;
    double head_variance = 1e-3;

    double lr_W = 0.1;
    double lr_h = 0.1;
    double tau_dagger = 500.0;  // phase lengths in tau; the simulator runs tau * D steps
    double tau_ddagger = 500.0;
    double dtau = 0.01;
    double record_every = 1.0;
    std::int64_t probe_every = 1000;
    std::int64_t n_test = 10000;
    bool test_set_errors = false;  // simulator errors from held-out samples instead of overlaps

    SimilarityScheme scheme = SimilarityScheme::rotation;
    std::vector<double> similarity{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

    std::vector<double> ewc_lambdas{0.0, 1e2, 1e3, 1e4};
    std::int64_t fisher_samples = 0;
    std::vector<std::int64_t> replay_periods{1, 10, 100, 1000};
    std::int64_t slowing_period = 1;

    std::optional<double> measure_tau;  // forgetting/transfer time; default end of phase 2

    std::vector<std::uint64_t> seeds{1};
    std::uint64_t seed_base = 0;
    std::filesystem::path output_dir = "forgetlab-out";
    int workers = 1;

    MixConfig mix;

    std::int64_t steps_dagger() const;
    std::int64_t steps_ddagger() const;

    /// Canonical "key = value" lines sorted by key. output_dir and workers never
    /// appear; sweep grids and seeds are left out when `include_grids` is false.
    std::string canonical_text(bool include_grids = true) const;
    /// FNV-1a 64 over canonical_text(), as 16 lowercase hex digits.
    std::string hash() const;

    /// Throws ConfigError naming the offending key.
    void validate() const;
};

/// Parses a document and fills every missing key with its default. Unknown
/// keys, type mismatches and empty grids raise ConfigError with the key path.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace forgetlab
