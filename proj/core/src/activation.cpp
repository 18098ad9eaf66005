#include "forgetlab/activation.hpp"

#include "forgetlab/errors.hpp"

namespace forgetlab {

std::string_view to_string(ActivationKind kind) noexcept {
    switch (kind) {
        case ActivationKind::scaled_erf: return "scaled_erf";
        case ActivationKind::relu: return "relu";
        case ActivationKind::sigmoid: return "sigmoid";
    }
    return "unknown";
}

ActivationKind parse_activation(std::string_view name) {
    if (name == "scaled_erf" || name == "erf") return ActivationKind::scaled_erf;
    if (name == "relu") return ActivationKind::relu;
    if (name == "sigmoid") return ActivationKind::sigmoid;
    throw ArgumentError("unknown activation '" + std::string(name) + "'");
}

}  // namespace forgetlab
