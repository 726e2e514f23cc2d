#pragma once

// Fast (synchronization) system: v' = A v with
//   A = j omega0 I + eta e^{j phi} (diag(conj_sigma_eff) - Y),
// its spectrum, the spectral and parametric synchronization conditions, and
// the dominant modal response.

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "controllers.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "network.hpp"

namespace cfsync {

struct FastSystem {
    CMatrix A;
    CVector effective_reference;  // conj_sigma* + shunt shift + alpha e^{-j phi}(u* - u_f)
    CMatrix Y;
    double eta = 0.0;
    double phi = 0.0;
    double omega0 = 0.0;
};

// Shared gains, rejecting heterogeneous eta / phi / omega0.
inline DvocParams uniform_gains(std::span<const DvocParams> params) {
    if (params.empty()) throw ConfigError("no converter parameters");
    const DvocParams& first = params.front();
    auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); };
    for (const auto& p : params) {
        if (!same(p.eta, first.eta) || !same(p.phi, first.phi) || !same(p.omega0, first.omega0)) {
            throw UnsupportedConfig("heterogeneous eta/phi/omega0 across converters are not supported");
        }
    }
    return first;
}

inline FastSystem fast_system_from_reference(const CMatrix& y, double eta, double phi, double omega0,
                                             const CVector& reference) {
    FastSystem fs;
    fs.Y = y;
    fs.eta = eta;
    fs.phi = phi;
    fs.omega0 = omega0;
    fs.effective_reference = reference;
    CMatrix m = -y;
    m.diagonal() += reference;
    fs.A = eta * rotor(phi) * m;
    fs.A.diagonal().array() += kJ * omega0;
    return fs;
}

inline FastSystem build_fast_system(const ReducedNetwork& net, std::span<const DvocParams> params,
                                   std::span<const Setpoints> setpoints, const RVector& u_f) {
    const Eigen::Index n = net.size();
    if (static_cast<Eigen::Index>(params.size()) != n || static_cast<Eigen::Index>(setpoints.size()) != n ||
        u_f.size() != n) {
        throw ConfigError("build_fast_system: per-node inputs do not match network size");
    }
    const DvocParams gains = uniform_gains(params);
    CVector reference(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        setpoints[i].validate();
        reference(k) = setpoints[i].conj_sigma_star() + net.setpoint_shift(k) +
                       params[i].alpha * rotor(-gains.phi) * (setpoints[i].u_star() - u_f(k));
    }
    return fast_system_from_reference(net.Y, gains.eta, gains.phi, gains.omega0, reference);
}

struct Spectrum {
    CVector eigenvalues;   // sorted by descending real part
    CMatrix eigenvectors;  // columns, unit 2-norm, same order
    CVector phi1;          // dominant right eigenvector, unit 2-norm
    CVector psi1;          // dominant left eigenvector, scaled so psi1^T phi1 = 1
    double gap = 0.0;      // Re lambda1 - Re lambda2
    double residual = 0.0; // ||A phi1 - lambda1 phi1||
    double max_residual = 0.0;
    bool left_equals_right = false;

    cplx lambda1() const { return eigenvalues(0); }
    double re_lambda2() const {
        return eigenvalues.size() > 1 ? eigenvalues(1).real() : -std::numeric_limits<double>::infinity();
    }
};

namespace detail {

// Shifted inverse iteration for the eigenpair closest to `shift`.
inline void refine_eigenpair(const CMatrix& a, cplx& lambda, CVector& x, int iterations = 6) {
    const double scale = std::max(1.0, max_abs(a));
    for (int it = 0; it < iterations; ++it) {
        CMatrix shifted = a;
        shifted.diagonal().array() -= lambda + cplx(1e-13 * scale, 0.0);
        const Eigen::PartialPivLU<CMatrix> lu(shifted);
        CVector y = lu.solve(x);
        const double norm = y.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) break;
        x = y / norm;
        lambda = x.dot(a * x);  // Rayleigh quotient x^H A x
        if ((a * x - lambda * x).norm() < 1e-13 * scale) break;
    }
}

}  // namespace detail

inline Spectrum spectrum(const CMatrix& a, double gap_tol = 1e-9) {
    const Eigen::Index n = a.rows();
    if (n == 0 || a.cols() != n) throw ConfigError("spectrum: matrix must be square and nonempty");
    Eigen::ComplexEigenSolver<CMatrix> solver(a, true);
    if (solver.info() != Eigen::Success) throw NumericalError("complex eigendecomposition failed");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const CVector& ev = solver.eigenvalues();
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index i, Eigen::Index j) { return ev(i).real() > ev(j).real(); });

    Spectrum s;
    s.eigenvalues.resize(n);
    s.eigenvectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        s.eigenvalues(k) = ev(src);
        CVector col = solver.eigenvectors().col(src);
        s.eigenvectors.col(k) = col / col.norm();
    }

    s.gap = n > 1 ? s.eigenvalues(0).real() - s.eigenvalues(1).real() : std::numeric_limits<double>::infinity();
    if (!(s.gap > gap_tol)) {
        std::ostringstream os;
        os << "dominance ambiguous: Re(lambda1) - Re(lambda2) = " << s.gap << " <= " << gap_tol;
        throw NumericalError(os.str());
    }

    cplx lambda = s.eigenvalues(0);
    CVector x = s.eigenvectors.col(0);
    detail::refine_eigenpair(a, lambda, x);
    // Fix the arbitrary phase: largest entry real positive.
    Eigen::Index imax = 0;
    x.cwiseAbs().maxCoeff(&imax);
    x *= std::conj(x(imax)) / std::abs(x(imax));
    s.eigenvalues(0) = lambda;
    s.eigenvectors.col(0) = x;
    s.phi1 = x;
    s.residual = (a * x - lambda * x).norm();

    cplx lambda_left = lambda;
    CVector y = x;
    const CMatrix at = a.transpose();
    detail::refine_eigenpair(at, lambda_left, y);
    const cplx pairing = y.transpose() * x;
    if (std::abs(pairing) < 1e-14) throw NumericalError("dominant left/right eigenvectors are nearly orthogonal");
    s.psi1 = y / pairing;
    // Complex symmetric A: the left eigenvector is parallel to the right one.
    const cplx proj = x.dot(y);
    s.left_equals_right = (y - proj * x).norm() < 1e-8;

    s.max_residual = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const CVector v = s.eigenvectors.col(k);
        s.max_residual = std::max(s.max_residual, (a * v - s.eigenvalues(k) * v).norm());
    }
    return s;
}

struct SpectralVerdict {
    bool pass = false;
    double min_entry_ratio = 0.0;  // min_k |phi1_k| / max_k |phi1_k|
    double re_lambda2 = 0.0;
    double gap = 0.0;
    bool multiplicity_one = true;
    std::vector<std::string> reasons;
};

// Spectral condition: all entries of phi1 nonzero (relative to entry_tol) and Re lambda2 < 0.
inline SpectralVerdict check_spectral_condition(const Spectrum& s, double entry_tol = 1e-8) {
    SpectralVerdict v;
    const RVector mags = s.phi1.cwiseAbs();
    v.min_entry_ratio = mags.minCoeff() / mags.maxCoeff();
    v.re_lambda2 = s.re_lambda2();
    v.gap = s.gap;
    v.multiplicity_one = s.gap > 1e-9;
    bool ok = true;
    if (!(v.min_entry_ratio > entry_tol)) {
        ok = false;
        v.reasons.emplace_back("zero eigenvector entry");
    }
    if (!(v.re_lambda2 < 0.0)) {
        ok = false;
        v.reasons.emplace_back("unstable subdominant mode");
    }
    if (!v.multiplicity_one) {
        ok = false;
        v.reasons.emplace_back("dominant eigenvalue not simple");
    }
    v.pass = ok;
    return v;
}

struct SyncBounds {
    double delta = 0.0;  // max pairwise phase difference of phi1 entries
    double gamma = 0.0;  // max pairwise |phi1_k|/|phi1_l| - 1
};

// Phase spread and amplitude-ratio deviation of a synchronous state shaped like phi1.
inline SyncBounds extract_sync_bounds(const CVector& phi1) {
    SyncBounds b;
    const Eigen::Index n = phi1.size();
    const RVector mags = phi1.cwiseAbs();
    b.gamma = mags.maxCoeff() / mags.minCoeff() - 1.0;
    b.delta = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < n; ++r) {
        double lo = 0.0, hi = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
            const double a = std::arg(phi1(k) / phi1(r));
            lo = std::min(lo, a);
            hi = std::max(hi, a);
        }
        b.delta = std::min(b.delta, hi - lo);
    }
    return b;
}

struct ParametricVerdict {
    bool inequality_holds = false;
    double lhs = 0.0;      // max_k Re(e^{j phi} conj_sigma_eff_k)
    double rhs = 0.0;      // (1 + cos delta)/2 (1 - gamma)^2 lambda2
    double margin = 0.0;   // rhs - lhs
    double lambda2 = 0.0;
    double delta_bar = 0.0;
    double gamma_bar = 0.0;
    bool a_posteriori_checked = false;
    bool a_posteriori_ok = false;
    SyncBounds observed;
    bool certified = false;  // inequality and (when checked) a-posteriori bounds
    std::string warning;
};

inline ParametricVerdict check_parametric_condition(const CMatrix& y, double phi, const CVector& reference,
                                                    double delta_bar, double gamma_bar,
                                                    const CVector* phi1 = nullptr) {
    if (!(delta_bar >= 0.0 && delta_bar < kPi / 2)) throw ConfigError("delta_bar must lie in [0, pi/2)");
    if (!(gamma_bar > 0.0 && gamma_bar < 1.0)) throw ConfigError("gamma_bar must lie in (0, 1)");
    ParametricVerdict v;
    v.delta_bar = delta_bar;
    v.gamma_bar = gamma_bar;
    const AlgebraicConnectivity conn = algebraic_connectivity(y, phi);
    v.lambda2 = conn.lambda2;
    v.warning = conn.warning;
    v.lhs = (rotor(phi) * reference.array()).real().maxCoeff();
    v.rhs = 0.5 * (1.0 + std::cos(delta_bar)) * (1.0 - gamma_bar) * (1.0 - gamma_bar) * v.lambda2;
    v.margin = v.rhs - v.lhs;
    v.inequality_holds = conn.laplacian && v.lhs < v.rhs;
    if (phi1 != nullptr) {
        v.a_posteriori_checked = true;
        v.observed = extract_sync_bounds(*phi1);
        v.a_posteriori_ok = v.observed.delta <= delta_bar && v.observed.gamma <= gamma_bar;
    }
    v.certified = v.inequality_holds && (!v.a_posteriori_checked || v.a_posteriori_ok);
    return v;
}

struct SyncVerdict {
    SpectralVerdict condition1;
    ParametricVerdict condition2;
    cplx predicted_sync;  // lambda1
    double re_lambda1 = 0.0;
};

struct ModalPrediction {
    cplx z0;             // psi1^T v0
    CVector coefficients; // phi1 z0
    cplx lambda1;
    bool degenerate = false;

    CVector response(double t) const { return coefficients * std::exp(lambda1 * t); }
};

inline ModalPrediction modal_prediction(const Spectrum& s, const CVector& v0) {
    ModalPrediction m;
    m.lambda1 = s.lambda1();
    m.z0 = s.psi1.transpose() * v0;
    m.coefficients = s.phi1 * m.z0;
    m.degenerate = std::abs(m.z0) < 1e-12 * v0.norm();
    return m;
}

// Half the squared distance of v from span(phi1).
inline double eigenspace_distance(const CVector& v, const CVector& phi1) {
    const double nn = phi1.squaredNorm();
    if (!(nn > 0.0)) throw ConfigError("eigenspace_distance: zero eigenvector");
    const CVector pv = v - phi1 * (phi1.dot(v) / nn);
    return 0.5 * pv.squaredNorm();
}

}  // namespace cfsync
