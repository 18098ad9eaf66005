#include "forgetlab/gaussian_integrals.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "forgetlab/errors.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab {

namespace {

constexpr double kInvPi = std::numbers::inv_pi;
constexpr double kSymmetryTolerance = 1e-12;

double checked_asin(double arg, const char* what) {
    if (!std::isfinite(arg)) {
        throw DomainError(std::string(what) + ": non-finite arcsin argument");
    }
    if (arg > 1.0) {
        if (arg - 1.0 > kAsinClampTolerance) {
            std::ostringstream os;
            os << what << ": arcsin argument " << arg << " exceeds 1";
            throw DomainError(os.str());
        }
        arg = 1.0;
    } else if (arg < -1.0) {
        if (-1.0 - arg > kAsinClampTolerance) {
            std::ostringstream os;
            os << what << ": arcsin argument " << arg << " below -1";
            throw DomainError(os.str());
        }
        arg = -1.0;
    }
    return std::asin(arg);
}

bool is_symmetric(const Eigen::Ref<const MatrixX>& m) {
    for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = a + 1; b < m.cols(); ++b)
            if (std::abs(m(a, b) - m(b, a)) > kSymmetryTolerance * (1.0 + std::abs(m(a, b))))
                return false;
    return true;
}

}  // namespace

CovarianceBlock::CovarianceBlock(const Eigen::Ref<const MatrixX>& m) {
    if (m.rows() != m.cols() || m.rows() < 2 || m.rows() > 4) {
        throw ArgumentError("covariance block must be square with dimension 2, 3 or 4");
    }
    if (!is_symmetric(m)) throw ArgumentError("covariance block is not symmetric");
    m_ = m;
}

double CovarianceBlock::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m_, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

CovarianceBlock project_covariance(const Eigen::Ref<const MatrixX>& full,
                                   std::span<const int> indices) {
    if (full.rows() != full.cols()) throw ArgumentError("full covariance must be square");
    if (indices.size() < 2 || indices.size() > 4) {
        throw ArgumentError("projection needs between 2 and 4 indices");
    }
    const auto n = static_cast<int>(full.rows());
    for (int idx : indices) {
        if (idx < 0 || idx >= n) {
            std::ostringstream os;
            os << "field index " << idx << " out of range [0, " << n << ")";
            throw ArgumentError(os.str());
        }
    }
    const auto k = static_cast<Eigen::Index>(indices.size());
    MatrixX sub(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = full(indices[a], indices[b]);
    return CovarianceBlock(sub);
}

double i2(double c11, double c22, double c12) {
    const double denom = (1.0 + c11) * (1.0 + c22);
    if (!(denom > 0.0)) throw DegenerateCovarianceError("I2: (1+c11)(1+c22) must be positive");
    return 2.0 * kInvPi * checked_asin(c12 / std::sqrt(denom), "I2");
}

double i3(double c11, double /*c22*/, double c33, double c12, double c13, double c23) {
    const double one_c11 = 1.0 + c11;
    const double lambda3 = one_c11 * (1.0 + c33) - c13 * c13;
    if (!(lambda3 > 0.0)) throw DegenerateCovarianceError("I3: Lambda3 must be positive");
    return 2.0 * kInvPi * (c23 * one_c11 - c12 * c13) / (std::sqrt(lambda3) * one_c11);
}

double i4(double c11, double c22, double c33, double c44,
          double c12, double c13, double c14, double c23, double c24, double c34) {
    const double one_c11 = 1.0 + c11;
    const double one_c22 = 1.0 + c22;
    const double lambda4 = one_c11 * one_c22 - c12 * c12;
    if (!(lambda4 > 0.0)) throw DegenerateCovarianceError("I4: Lambda4 must be positive");
    const double lambda0 = lambda4 * c34 - c23 * c24 * one_c11 - c13 * c14 * one_c22
                           + c12 * c13 * c24 + c12 * c14 * c23;
    const double lambda1 = lambda4 * (1.0 + c33) - c23 * c23 * one_c11 - c13 * c13 * one_c22
                           + 2.0 * c12 * c13 * c23;
    const double lambda2 = lambda4 * (1.0 + c44) - c24 * c24 * one_c11 - c14 * c14 * one_c22
                           + 2.0 * c12 * c14 * c24;
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) {
        throw DegenerateCovarianceError("I4: Lambda1 and Lambda2 must be positive");
    }
    return 4.0 * kInvPi * kInvPi / std::sqrt(lambda4)
           * checked_asin(lambda0 / std::sqrt(lambda1 * lambda2), "I4");
}

double i2(const CovarianceBlock& c) {
    if (c.dim() != 2) throw ArgumentError("I2 needs a 2x2 block");
    return i2(c(0, 0), c(1, 1), c(0, 1));
}

double i3(const CovarianceBlock& c) {
    if (c.dim() != 3) throw ArgumentError("I3 needs a 3x3 block");
    return i3(c(0, 0), c(1, 1), c(2, 2), c(0, 1), c(0, 2), c(1, 2));
}

double i4(const CovarianceBlock& c) {
    if (c.dim() != 4) throw ArgumentError("I4 needs a 4x4 block");
    return i4(c(0, 0), c(1, 1), c(2, 2), c(3, 3),
              c(0, 1), c(0, 2), c(0, 3), c(1, 2), c(1, 3), c(2, 3));
}

int block_dim(IntegralKind kind) noexcept {
    switch (kind) {
        case IntegralKind::I2: return 2;
        case IntegralKind::I3: return 3;
        case IntegralKind::I4: return 4;
    }
    return 0;
}

double closed_form(const CovarianceBlock& c, IntegralKind kind) {
    switch (kind) {
        case IntegralKind::I2: return i2(c);
        case IntegralKind::I3: return i3(c);
        case IntegralKind::I4: return i4(c);
    }
    return 0.0;
}

McEstimate mc_integral(const CovarianceBlock& c, IntegralKind kind, ActivationKind activation,
                       std::int64_t n_samples, std::uint64_t seed) {
    const int dim = block_dim(kind);
    if (c.dim() != dim) throw ArgumentError("covariance block dimension does not match integral kind");
    if (n_samples < 1000) throw ArgumentError("mc_integral needs at least 1000 samples");

    using Matrix = CovarianceBlock::Matrix;
    Eigen::SelfAdjointEigenSolver<Matrix> solver(c.matrix());
    if (solver.info() != Eigen::Success) throw FactorizationError("eigendecomposition failed");
    auto evals = solver.eigenvalues().eval();
    if (evals.minCoeff() < -kPsdTolerance) {
        std::ostringstream os;
        os << "covariance not PSD: min eigenvalue " << evals.minCoeff();
        throw FactorizationError(os.str());
    }
    for (Eigen::Index i = 0; i < evals.size(); ++i) evals(i) = std::sqrt(std::max(evals(i), 0.0));
    const Matrix factor = solver.eigenvectors() * evals.asDiagonal();

    Rng rng(seed);
    std::normal_distribution<double> normal;
    Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1> z(dim), x(dim);

    // Welford accumulation keeps the variance stable at 1e6+ samples.
    double mean = 0.0;
    double m2 = 0.0;
    for (std::int64_t n = 1; n <= n_samples; ++n) {
        for (int a = 0; a < dim; ++a) z(a) = normal(rng);
        x.noalias() = factor * z;
        double value = 0.0;
        switch (kind) {
            case IntegralKind::I2:
                value = activate(activation, x(0)) * activate(activation, x(1));
                break;
            case IntegralKind::I3:
                value = activate_derivative(activation, x(0)) * x(1) * activate(activation, x(2));
                break;
            case IntegralKind::I4:
                value = activate_derivative(activation, x(0)) * activate_derivative(activation, x(1))
                        * activate(activation, x(2)) * activate(activation, x(3));
                break;
        }
        const double delta = value - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (value - mean);
    }
    const double n = static_cast<double>(n_samples);
    const double variance = n_samples > 1 ? m2 / (n - 1.0) : 0.0;
    return {mean, std::sqrt(variance / n)};
}

}  // namespace forgetlab
