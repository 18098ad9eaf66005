#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

namespace forgetlab {

enum class ActivationKind { scaled_erf, relu, sigmoid };

// scaled_erf: g(x) = erf(x / sqrt 2). sigmoid is the logistic 1 / (1 + e^-x).
inline double activate(ActivationKind kind, double x) noexcept {
    switch (kind) {
        case ActivationKind::scaled_erf:
            return std::erf(x * (0.5 * std::numbers::sqrt2));
        case ActivationKind::relu:
            return x > 0.0 ? x : 0.0;
        case ActivationKind::sigmoid:
            return 0.5 * (1.0 + std::tanh(0.5 * x));
    }
    return 0.0;
}

inline double activate_derivative(ActivationKind kind, double x) noexcept {
    switch (kind) {
        case ActivationKind::scaled_erf:
            // sqrt(2/pi) exp(-x^2/2)
            return std::numbers::inv_sqrtpi * std::numbers::sqrt2 * std::exp(-0.5 * x * x);
        case ActivationKind::relu:
            return x > 0.0 ? 1.0 : 0.0;
        case ActivationKind::sigmoid: {
            const double t = std::tanh(0.5 * x);
            return 0.25 * (1.0 - t * t);
        }
    }
    return 0.0;
}

std::string_view to_string(ActivationKind kind) noexcept;

/// Parses "scaled_erf" (alias "erf"), "relu" or "sigmoid"; throws ArgumentError otherwise.
ActivationKind parse_activation(std::string_view name);

}  // namespace forgetlab
