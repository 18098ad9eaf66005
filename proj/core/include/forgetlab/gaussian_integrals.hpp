#pragma once

// Averages of products of activations over jointly Gaussian local fields.
//
// For g(x) = erf(x / sqrt 2) the three averages that drive the order-parameter
// dynamics have closed forms in the entries c_ab of a projected covariance:
//
//   I2 = <g(b) g(c)>              = (2/pi) asin(c12 / sqrt((1+c11)(1+c22)))
//   I3 = <g'(z) b g(c)>           = (2/pi) (c23 (1+c11) - c12 c13) / (sqrt(L3) (1+c11))
//   I4 = <g'(z) g'(i) g(b) g(c)>  = 4 / (pi^2 sqrt(L4)) asin(L0 / sqrt(L1 L2))
//
// with L3 = (1+c11)(1+c33) - c13^2 and L4 = (1+c11)(1+c22) - c12^2. The 2/pi
// prefactors on I2 and I3 are the ones that agree with the Monte-Carlo oracle
// (see docs/integrals.md); mc_integral is the reference the closed forms are
// tested against.

#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "forgetlab/activation.hpp"

namespace forgetlab {

using MatrixX = Eigen::MatrixXd;
using VectorX = Eigen::VectorXd;

/// Eigenvalues of a covariance may dip this far below zero and still count as PSD.
inline constexpr double kPsdTolerance = 1e-10;

/// asin arguments within this distance outside [-1, 1] are clamped; further out is a DomainError.
inline constexpr double kAsinClampTolerance = 1e-12;

/// A 2x2, 3x3 or 4x4 symmetric covariance of local fields.
class CovarianceBlock {
public:
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

    /// Throws ArgumentError unless `m` is square, of dimension 2..4 and symmetric.
    explicit CovarianceBlock(const Eigen::Ref<const MatrixX>& m);

    int dim() const noexcept { return static_cast<int>(m_.rows()); }
    double operator()(int a, int b) const { return m_(a, b); }
    const Matrix& matrix() const noexcept { return m_; }

    /// Smallest eigenvalue of the block.
    double min_eigenvalue() const;
    bool is_psd(double tol = kPsdTolerance) const { return min_eigenvalue() >= -tol; }

private:
    Matrix m_;
};

/// Sub-matrix of `full` on `indices` (in the given order). Throws ArgumentError
/// if an index is out of range, `full` is not square and symmetric, or the
/// number of indices is outside 2..4.
CovarianceBlock project_covariance(const Eigen::Ref<const MatrixX>& full,
                                   std::span<const int> indices);

double i2(const CovarianceBlock& c);
double i3(const CovarianceBlock& c);
double i4(const CovarianceBlock& c);

// Scalar entry points used by the ODE hot loop; same semantics as the block
// versions. Indices follow the 1-based c_ab naming of the formulas above.
double i2(double c11, double c22, double c12);
double i3(double c11, double c22, double c33, double c12, double c13, double c23);
double i4(double c11, double c22, double c33, double c44,
          double c12, double c13, double c14, double c23, double c24, double c34);

enum class IntegralKind { I2, I3, I4 };

struct McEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
};

/// Monte-Carlo estimate of the integral `kind` for an arbitrary activation.
/// Samples are drawn through a clipped symmetric eigendecomposition of `c`, so
/// rank-deficient blocks are fine. Deterministic in `seed`.
/// Throws ArgumentError on dimension mismatch or n_samples < 1000 and
/// FactorizationError if `c` is not PSD within tolerance.
McEstimate mc_integral(const CovarianceBlock& c, IntegralKind kind,
                       ActivationKind activation, std::int64_t n_samples,
                       std::uint64_t seed);

/// Closed-form value for `kind` (scaled_erf only).
double closed_form(const CovarianceBlock& c, IntegralKind kind);

int block_dim(IntegralKind kind) noexcept;

}  // namespace forgetlab
