#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace cfsync {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr cplx kJ{0.0, 1.0};
inline constexpr double kPi = std::numbers::pi;

// e^{j angle}
inline cplx rotor(double angle) { return std::polar(1.0, angle); }

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
    return m.size() == 0 ? 0.0 : static_cast<double>(m.cwiseAbs().maxCoeff());
}

// Eigenvalues of a real symmetric matrix in ascending order.
inline RVector symmetric_eigenvalues(const RMatrix& m) {
    Eigen::SelfAdjointEigenSolver<RMatrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

// Neumaier-compensated sum; used where exact zero-sum bookkeeping matters.
template <typename Range>
double compensated_sum(const Range& values) {
    double sum = 0.0;
    double carry = 0.0;
    for (double x : values) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    return sum + carry;
}

}  // namespace cfsync
