#pragma once

// Slow (voltage regulation) system in real coordinates:
//   u'     = eta sigma'* - eta G' u + eta B' theta + eta alpha (u* - u_f)
//   theta' = omega0 + eta rho'* - eta B' u - eta G' theta
//   tau u_f' = u - u_f
// with G' + j B' = e^{j phi} Y and sigma'* + j rho'* = e^{j phi} conj_sigma*.

#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "controllers.hpp"
#include "errors.hpp"
#include "fast_analysis.hpp"
#include "linalg.hpp"
#include "network.hpp"

namespace cfsync {

struct SlowSystem {
    RMatrix Gp;
    RMatrix Bp;
    RVector sigma_star;  // Re(e^{j phi} conj_sigma*)
    RVector rho_star;    // Im(e^{j phi} conj_sigma*)
    RVector u_star;
    double alpha = 0.0;
    double tau = 0.0;
    double eta = 0.0;
    double phi = 0.0;
    double omega0 = 0.0;
    bool g_psd = true;
    double g_min_eigenvalue = 0.0;
    std::string warning;

    Eigen::Index size() const { return Gp.rows(); }
};

inline SlowSystem slow_system_from_parts(const CMatrix& y, const CVector& conj_sigma_star, const RVector& u_star,
                                         double eta, double alpha, double tau, double phi, double omega0) {
    SlowSystem s;
    const CMatrix rotated = rotor(phi) * y;
    s.Gp = rotated.real();
    s.Bp = rotated.imag();
    const CVector ref = rotor(phi) * conj_sigma_star;
    s.sigma_star = ref.real();
    s.rho_star = ref.imag();
    s.u_star = u_star;
    s.alpha = alpha;
    s.tau = tau;
    s.eta = eta;
    s.phi = phi;
    s.omega0 = omega0;
    const RMatrix gsym = 0.5 * (s.Gp + s.Gp.transpose());
    const RVector ev = symmetric_eigenvalues(gsym);
    s.g_min_eigenvalue = ev.size() > 0 ? ev(0) : 0.0;
    s.g_psd = s.g_min_eigenvalue >= -1e-10;
    if (!s.g_psd) s.warning = "Lyapunov certificate unavailable for this phi/network: G' is indefinite";
    return s;
}

inline SlowSystem build_slow_system(const ReducedNetwork& net, std::span<const DvocParams> params,
                                    std::span<const Setpoints> setpoints) {
    const Eigen::Index n = net.size();
    if (static_cast<Eigen::Index>(params.size()) != n || static_cast<Eigen::Index>(setpoints.size()) != n) {
        throw ConfigError("build_slow_system: per-node inputs do not match network size");
    }
    const DvocParams gains = uniform_gains(params);
    for (const auto& p : params) {
        if (p.alpha != gains.alpha || p.tau != gains.tau) {
            throw UnsupportedConfig("heterogeneous alpha/tau across converters are not supported");
        }
    }
    CVector ref(n);
    RVector u_star(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& sp = setpoints[static_cast<std::size_t>(k)];
        sp.validate();
        ref(k) = sp.conj_sigma_star() + net.setpoint_shift(k);
        u_star(k) = sp.u_star();
    }
    return slow_system_from_parts(net.Y, ref, u_star, gains.eta, gains.alpha, gains.tau, gains.phi, gains.omega0);
}

struct CenterOfAngle {
    double theta0 = 0.0;
    RVector delta;
};

inline CenterOfAngle to_center_of_angle(const RVector& theta) {
    CenterOfAngle c;
    const auto n = static_cast<double>(theta.size());
    if (theta.size() == 0) return c;
    c.theta0 = compensated_sum(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size()))) / n;
    c.delta = theta.array() - c.theta0;
    // one correction pass removes the rounding left in the mean
    const double rest = compensated_sum(std::span<const double>(c.delta.data(), static_cast<std::size_t>(c.delta.size())));
    c.delta.array() -= rest / n;
    return c;
}

struct Equilibrium {
    RVector u_s;
    RVector delta_s;
    double theta0_rate = 0.0;
    double residual = 0.0;
    double sigma_min = 0.0;  // smallest singular value of the stacked matrix
};

inline double steady_state_frequency(const SlowSystem& sys) {
    const auto n = static_cast<double>(sys.size());
    const double sum = compensated_sum(std::span<const double>(sys.rho_star.data(), static_cast<std::size_t>(sys.size())));
    return sys.omega0 + sys.eta * sum / n;
}

// Unique equilibrium of the center-of-angle slow system, by least squares on
// the stacked (2N+1) x 2N system
//   [G' + alpha I, -B'; B', G'; 0^T, 1^T] [u; delta] = [sigma'* + alpha u*; rho'* - mean(rho'*); 0].
inline Equilibrium solve_equilibrium(const SlowSystem& sys) {
    const Eigen::Index n = sys.size();
    RMatrix m = RMatrix::Zero(2 * n + 1, 2 * n);
    m.block(0, 0, n, n) = sys.Gp + sys.alpha * RMatrix::Identity(n, n);
    m.block(0, n, n, n) = -sys.Bp;
    m.block(n, 0, n, n) = sys.Bp;
    m.block(n, n, n, n) = sys.Gp;
    m.block(2 * n, n, 1, n).setOnes();

    RVector b(2 * n + 1);
    const double mean_rho = sys.rho_star.mean();
    b.head(n) = sys.sigma_star + sys.alpha * sys.u_star;
    b.segment(n, n) = sys.rho_star.array() - mean_rho;
    b(2 * n) = 0.0;

    Eigen::JacobiSVD<RMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const RVector& sv = svd.singularValues();
    Equilibrium eq;
    eq.sigma_min = sv(sv.size() - 1);
    if (!(eq.sigma_min > 1e-8)) {
        // Locate the failing block for the message.
        Eigen::JacobiSVD<RMatrix> top(m.block(0, 0, n, 2 * n));
        const bool top_deficient = top.singularValues()(n - 1) <= 1e-8;
        const RVector gev = symmetric_eigenvalues(0.5 * (sys.Gp + sys.Gp.transpose()));
        std::ostringstream os;
        os << "slow-system equilibrium is not unique (smallest singular value " << eq.sigma_min << "): ";
        if (top_deficient || sys.alpha == 0.0) {
            os << "voltage block [G' + alpha I, -B'] is rank deficient (alpha = " << sys.alpha << ")";
        } else if (n > 1 && std::abs(gev(1)) <= 1e-8) {
            os << "angle block [B', G'] has rank < N-1 (network disconnected)";
        } else {
            os << "stacked matrix rank < 2N";
        }
        throw NumericalError(os.str());
    }
    const RVector x = svd.solve(b);
    eq.u_s = x.head(n);
    eq.delta_s = x.tail(n);
    eq.residual = (m * x - b).norm();
    if (!(eq.residual < 1e-10 * std::max(1.0, b.norm()))) {
        std::ostringstream os;
        os << "slow-system equilibrium residual " << eq.residual << " exceeds tolerance";
        throw NumericalError(os.str());
    }
    eq.theta0_rate = steady_state_frequency(sys);
    return eq;
}

// Linear map of the error dynamics on (u~, delta~, u_f~).
inline RMatrix error_dynamics_matrix(const SlowSystem& sys) {
    const Eigen::Index n = sys.size();
    const double eta = sys.eta;
    RMatrix m = RMatrix::Zero(3 * n, 3 * n);
    m.block(0, 0, n, n) = -eta * sys.Gp;
    m.block(0, n, n, n) = eta * sys.Bp;
    m.block(0, 2 * n, n, n) = -eta * sys.alpha * RMatrix::Identity(n, n);
    m.block(n, 0, n, n) = -eta * sys.Bp;
    m.block(n, n, n, n) = -eta * sys.Gp;
    m.block(2 * n, 0, n, n) = RMatrix::Identity(n, n) / sys.tau;
    m.block(2 * n, 2 * n, n, n) = -RMatrix::Identity(n, n) / sys.tau;
    return m;
}

// Orthonormal basis of the zero-sum subspace {x : 1^T x = 0}, n x (n-1).
inline RMatrix zero_sum_basis(Eigen::Index n) {
    RMatrix ones = RMatrix::Ones(n, 1) / std::sqrt(static_cast<double>(n));
    Eigen::HouseholderQR<RMatrix> qr(ones);
    const RMatrix q = qr.householderQ() * RMatrix::Identity(n, n);
    return q.rightCols(n - 1);
}

struct ErrorSpectrum {
    CVector eigenvalues;             // full 3N spectrum
    CVector restricted_eigenvalues;  // with delta~ restricted to 1^T delta~ = 0
    double max_re = 0.0;             // over the restricted spectrum
    bool stable = false;
};

inline ErrorSpectrum error_spectrum(const SlowSystem& sys) {
    const Eigen::Index n = sys.size();
    const RMatrix m = error_dynamics_matrix(sys);
    ErrorSpectrum out;
    out.eigenvalues = Eigen::EigenSolver<RMatrix>(m, false).eigenvalues();

    RMatrix t = RMatrix::Zero(3 * n, 3 * n - 1);
    t.block(0, 0, n, n).setIdentity();
    if (n > 1) t.block(n, n, n, n - 1) = zero_sum_basis(n);
    t.block(2 * n, 2 * n - 1, n, n).setIdentity();
    const RMatrix restricted = t.transpose() * m * t;
    out.restricted_eigenvalues = Eigen::EigenSolver<RMatrix>(restricted, false).eigenvalues();
    out.max_re = out.restricted_eigenvalues.real().maxCoeff();
    out.stable = out.max_re < -1e-10;
    return out;
}

struct ErrorState {
    RVector u;
    RVector delta;
    RVector u_f;
};

inline ErrorState error_coordinates(const Equilibrium& eq, const RVector& u, const RVector& theta, const RVector& u_f) {
    return {u - eq.u_s, to_center_of_angle(theta).delta - eq.delta_s, u_f - eq.u_s};
}

inline double lyapunov_W(const SlowSystem& sys, const ErrorState& e) {
    return 0.5 * e.u.squaredNorm() + 0.5 * e.delta.squaredNorm() + 0.5 * sys.eta * sys.alpha * sys.tau * e.u_f.squaredNorm();
}

// Analytic derivative of W along the error dynamics.
inline double lyapunov_W_dot(const SlowSystem& sys, const ErrorState& e) {
    const double eta = sys.eta;
    return -eta * e.u.dot(sys.Gp * e.u) - eta * e.delta.dot(sys.Gp * e.delta) - eta * sys.alpha * e.u_f.squaredNorm();
}

struct LyapunovCheck {
    std::vector<double> W;
    std::vector<double> W_dot;
    bool monotone = true;
    double max_increase = 0.0;
};

inline LyapunovCheck lyapunov_W_check(const SlowSystem& sys, std::span<const ErrorState> trajectory, double slack = 1e-12) {
    LyapunovCheck out;
    out.W.reserve(trajectory.size());
    out.W_dot.reserve(trajectory.size());
    for (const auto& e : trajectory) {
        out.W.push_back(lyapunov_W(sys, e));
        out.W_dot.push_back(lyapunov_W_dot(sys, e));
    }
    const double scale = out.W.empty() ? 1.0 : std::max(1.0, out.W.front());
    for (std::size_t i = 1; i < out.W.size(); ++i) {
        const double inc = out.W[i] - out.W[i - 1];
        out.max_increase = std::max(out.max_increase, inc);
        if (inc > slack * scale) out.monotone = false;
    }
    return out;
}

}  // namespace cfsync
