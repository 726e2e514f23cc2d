#pragma once

// Admittance models seen from one converter node, Nyquist contours, winding
// numbers, and the synchronization / voltage criteria built on them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <vector>

#include "controllers.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "network.hpp"
#include "rational.hpp"
#include "slow_analysis.hpp"

namespace cfsync {

// ---------------------------------------------------------------------------
// Dynamic network

enum class BranchDynamics { static_phasor, rl };

// Series impedance z(s) = (r + j x_static) + l s.
struct DynamicBranch {
    std::size_t from = 0;
    std::size_t to = 0;
    double r = 0.0;
    double l = 0.0;
    double x_static = 0.0;

    cplx impedance(cplx s) const { return cplx(r, x_static) + l * s; }
    Polynomial impedance_poly() const { return Polynomial({cplx(r, x_static), cplx(l, 0.0)}); }
};

struct DynamicNetwork {
    std::size_t n = 0;
    std::vector<DynamicBranch> branches;
    CVector shunts;
    std::vector<std::vector<std::size_t>> incident;  // branch indices per node

    CMatrix admittance(cplx s) const {
        CMatrix y = CMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (const auto& b : branches) {
            const cplx yb = 1.0 / b.impedance(s);
            const auto f = static_cast<Eigen::Index>(b.from);
            const auto t = static_cast<Eigen::Index>(b.to);
            y(f, f) += yb;
            y(t, t) += yb;
            y(f, t) -= yb;
            y(t, f) -= yb;
        }
        y.diagonal() += shunts;
        return y;
    }

    // Product of the series impedances of the branches at node k, skipping one.
    cplx impedance_product(std::size_t k, cplx s, std::size_t skip = static_cast<std::size_t>(-1)) const {
        cplx p(1.0, 0.0);
        for (std::size_t b : incident[k]) {
            if (b != skip) p *= branches[b].impedance(s);
        }
        return p;
    }

    Polynomial impedance_product_poly(std::size_t k) const {
        Polynomial p = Polynomial::constant(1.0);
        for (std::size_t b : incident[k]) p = p * branches[b].impedance_poly();
        return p;
    }

    int impedance_degree(std::size_t k) const {
        int d = 0;
        for (std::size_t b : incident[k]) d += branches[b].l != 0.0 ? 1 : 0;
        return d;
    }
};

inline DynamicNetwork dynamic_network(const NetworkModel& model, double omega0, BranchDynamics kind) {
    validate(model);
    DynamicNetwork net;
    net.n = model.size();
    net.shunts.resize(static_cast<Eigen::Index>(net.n));
    net.incident.assign(net.n, {});
    for (std::size_t i = 0; i < net.n; ++i) net.shunts(static_cast<Eigen::Index>(i)) = model.nodes[i].shunt;
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
        const auto& spec = model.branches[b];
        DynamicBranch br{spec.from, spec.to, spec.r, 0.0, 0.0};
        if (kind == BranchDynamics::rl) {
            if (spec.x <= 0.0) {
                throw UnsupportedConfig("RL branch model needs x > 0 on " + detail::branch_label(model, b));
            }
            br.l = spec.x / omega0;
        } else {
            br.x_static = spec.x;
        }
        net.branches.push_back(br);
        net.incident[spec.from].push_back(b);
        net.incident[spec.to].push_back(b);
    }
    return net;
}

// ---------------------------------------------------------------------------
// Fast (complex-coefficient) admittances

// y_equ(s) = (s - j omega0) e^{-j phi} / eta - conj_sigma*
inline RationalTF converter_admittance_fast(const DvocParams& params, cplx conj_sigma_star) {
    if (!(params.eta > 0.0)) throw ConfigError("converter admittance needs eta > 0");
    const cplx g = rotor(-params.phi) / params.eta;
    return {Polynomial({-kJ * params.omega0 * g - conj_sigma_star, g}), Polynomial::constant(1.0)};
}

// Closing admittances for every node; zero for nodes without a converter.
inline std::vector<RationalTF> fast_closures(std::span<const DvocParams> params, const CVector& reference) {
    std::vector<RationalTF> out;
    for (std::size_t k = 0; k < params.size(); ++k) {
        out.push_back(converter_admittance_fast(params[k], reference(static_cast<Eigen::Index>(k))));
    }
    return out;
}

inline cplx aggregated_admittance_value(const DynamicNetwork& net, const std::vector<RationalTF>& closures,
                                        std::size_t k, cplx s) {
    CMatrix m = net.admittance(s);
    const auto n = static_cast<Eigen::Index>(net.n);
    std::vector<Eigen::Index> others;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i == static_cast<Eigen::Index>(k)) continue;
        others.push_back(i);
        if (!closures[static_cast<std::size_t>(i)].is_zero()) m(i, i) += closures[static_cast<std::size_t>(i)](s);
    }
    const auto kk = static_cast<Eigen::Index>(k);
    if (others.empty()) return m(kk, kk);
    const auto no = static_cast<Eigen::Index>(others.size());
    CMatrix moo(no, no);
    CVector mok(no), mko(no);
    for (Eigen::Index a = 0; a < no; ++a) {
        mok(a) = m(others[static_cast<std::size_t>(a)], kk);
        mko(a) = m(kk, others[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < no; ++b) moo(a, b) = m(others[static_cast<std::size_t>(a)], others[static_cast<std::size_t>(b)]);
    }
    return m(kk, kk) - mko.cwiseProduct(moo.partialPivLu().solve(mok)).sum();
}

namespace detail {

inline double fast_radius(const DynamicNetwork& net, const std::vector<RationalTF>& closures) {
    double rho = 1.0;
    for (const auto& b : net.branches) {
        if (b.l != 0.0) rho = std::max(rho, std::abs(cplx(b.r, b.x_static)) / b.l);
    }
    for (const auto& c : closures) {
        for (const cplx& z : c.zeros()) rho = std::max(rho, std::abs(z));
        for (const cplx& p : c.poles()) rho = std::max(rho, std::abs(p));
    }
    return rho;
}

// Relative mismatch between a rational model and direct evaluation at a few
// off-axis points.
inline void check_against(const RationalTF& tf, const std::function<cplx(cplx)>& direct, double radius,
                          const char* what) {
    const cplx probes[] = {radius * cplx(0.31, 0.73), radius * cplx(-0.42, 1.17), radius * cplx(0.9, -0.25)};
    for (const cplx& s : probes) {
        const cplx a = tf(s);
        const cplx b = direct(s);
        if (!(std::abs(a - b) <= 1e-6 * std::max(1e-12, std::abs(b)) + 1e-12)) {
            std::ostringstream os;
            os << what << ": rational model deviates from direct evaluation (" << std::abs(a - b) / std::abs(b)
               << " relative)";
            throw NumericalError(os.str());
        }
    }
}

}  // namespace detail

// Driving-point admittance at node k with every other node terminated by its
// closing admittance, as a rational function. Computed as a ratio of
// polynomial determinants of the row-scaled nodal matrix.
inline RationalTF aggregated_admittance_fast(const DynamicNetwork& net, const std::vector<RationalTF>& closures,
                                             std::size_t k) {
    if (closures.size() != net.n) throw ConfigError("one closing admittance per node is required");
    if (k >= net.n) throw ConfigError("aggregated admittance: node index out of range");
    const std::size_t n = net.n;

    // Row r scaled by f_r(s) = prod z_b(s) * den(closure_r): polynomial entries.
    auto closure_of = [&](std::size_t r) -> const RationalTF* {
        return (r == k || closures[r].is_zero()) ? nullptr : &closures[r];
    };
    auto scaled = [&](const std::vector<std::size_t>& rows, cplx s) {
        const auto m = static_cast<Eigen::Index>(rows.size());
        CMatrix out = CMatrix::Zero(m, m);
        std::vector<Eigen::Index> pos(n, -1);
        for (Eigen::Index i = 0; i < m; ++i) pos[rows[static_cast<std::size_t>(i)]] = i;
        for (Eigen::Index i = 0; i < m; ++i) {
            const std::size_t r = rows[static_cast<std::size_t>(i)];
            const RationalTF* c = closure_of(r);
            const cplx cden = c ? c->denominator()(s) : cplx(1.0, 0.0);
            const cplx zprod = net.impedance_product(r, s);
            cplx diag = (net.shunts(static_cast<Eigen::Index>(r)) * cden) * zprod;
            if (c) diag += c->numerator()(s) * zprod;
            for (std::size_t b : net.incident[r]) {
                const cplx term = cden * net.impedance_product(r, s, b);
                diag += term;
                const auto& br = net.branches[b];
                const std::size_t other = br.from == r ? br.to : br.from;
                if (pos[other] >= 0) out(i, pos[other]) -= term;
            }
            out(i, i) += diag;
        }
        return out;
    };
    auto row_degree = [&](std::size_t r) {
        const RationalTF* c = closure_of(r);
        int d = net.impedance_degree(r);
        if (c) d += std::max(c->denominator().degree(), c->numerator().degree());
        return d;
    };

    std::vector<std::size_t> others;
    for (std::size_t r = 0; r < n; ++r) {
        if (r != k) others.push_back(r);
    }
    std::vector<std::size_t> all = others;
    all.push_back(k);
    int deg_all = 0, deg_others = 0;
    for (std::size_t r : others) deg_others += row_degree(r);
    deg_all = deg_others + row_degree(k);

    const double rho = detail::fast_radius(net, closures);
    const Polynomial num = determinant_polynomial([&](cplx s) { return scaled(all, s); }, deg_all, rho);
    const Polynomial den_o = determinant_polynomial([&](cplx s) { return scaled(others, s); }, deg_others, rho);
    if (den_o.is_zero()) throw NumericalError("degenerate network: eliminated block is singular for all s");
    const Polynomial den = den_o * net.impedance_product_poly(k);
    const RationalTF raw(num, den);
    const RationalTF tf = raw.reduced(1e-6);
    detail::check_against(
        tf, [&](cplx s) { return aggregated_admittance_value(net, closures, k, s); }, rho, "aggregated admittance");
    return tf;
}

// l_k = y_agg / y_equ with all converters closed by their fast admittances.
inline RationalTF sync_return_ratio(const DynamicNetwork& net, std::span<const DvocParams> params,
                                    const CVector& reference, std::size_t k) {
    if (params.size() != net.n || reference.size() != static_cast<Eigen::Index>(net.n)) {
        throw ConfigError("sync return ratio: one converter per node is required");
    }
    const auto closures = fast_closures(params, reference);
    const RationalTF y_agg = aggregated_admittance_fast(net, closures, k);
    return (y_agg / closures[k]).reduced(1e-6);
}

// Linear state matrix of converters plus RL branch currents, states [v; i_b].
inline CMatrix combined_state_matrix(const DynamicNetwork& net, std::span<const DvocParams> params,
                                     const CVector& reference) {
    const auto n = static_cast<Eigen::Index>(net.n);
    const auto nb = static_cast<Eigen::Index>(net.branches.size());
    if (static_cast<Eigen::Index>(params.size()) != n) throw ConfigError("state matrix: one converter per node is required");
    CMatrix a = CMatrix::Zero(n + nb, n + nb);
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& p = params[static_cast<std::size_t>(k)];
        const cplx g = p.eta * p.rotation();
        a(k, k) = kJ * p.omega0 + g * (reference(k) - net.shunts(k));
    }
    for (Eigen::Index b = 0; b < nb; ++b) {
        const auto& br = net.branches[static_cast<std::size_t>(b)];
        if (!(br.l > 0.0)) throw UnsupportedConfig("state matrix needs dynamic (RL) branches");
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        a(f, n + b) -= params[br.from].eta * params[br.from].rotation();
        a(t, n + b) += params[br.to].eta * params[br.to].rotation();
        a(n + b, f) = 1.0 / br.l;
        a(n + b, t) = -1.0 / br.l;
        a(n + b, n + b) = -cplx(br.r, br.x_static) / br.l;
    }
    return a;
}

inline int unstable_mode_count(const CMatrix& a) {
    const CVector ev = Eigen::ComplexEigenSolver<CMatrix>(a, false).eigenvalues();
    int count = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) count += ev(i).real() >= 0.0 ? 1 : 0;
    return count;
}

// ---------------------------------------------------------------------------
// Slow (2x2 real-coefficient) admittances

struct DcAdmittancePair {
    TFMatrix2x2 Y_equ_dc;
    TFMatrix2x2 Y_agg_dc;
};

namespace detail {

// Entry (2a + p, 2b + q) of the rotated network block [[G', -B'], [B', G']].
inline double dc_block(const SlowSystem& sys, Eigen::Index a, int p, Eigen::Index b, int q) {
    if (p == q) return sys.Gp(a, b);
    return p == 0 ? -sys.Bp(a, b) : sys.Bp(a, b);
}

inline Eigen::Matrix2cd dc_equ_value(const SlowSystem& sys, cplx s) {
    Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
    m(0, 0) = (s + sys.eta * sys.alpha / (sys.tau * s + 1.0)) / sys.eta;
    m(1, 1) = s / sys.eta;
    return m;
}

}  // namespace detail

inline Eigen::Matrix2cd dc_aggregated_value(const SlowSystem& sys, std::size_t k, cplx s) {
    const Eigen::Index n = sys.size();
    const auto kk = static_cast<Eigen::Index>(k);
    Eigen::Matrix2cd out;
    if (n == 1) {
        for (int p = 0; p < 2; ++p) {
            for (int q = 0; q < 2; ++q) out(p, q) = detail::dc_block(sys, kk, p, kk, q);
        }
        return out;
    }
    std::vector<Eigen::Index> others;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i != kk) others.push_back(i);
    }
    const Eigen::Index m = 2 * (n - 1);
    CMatrix moo(m, m);
    CMatrix mok(m, 2), mko(2, m);
    const Eigen::Matrix2cd equ = detail::dc_equ_value(sys, s);
    for (Eigen::Index a = 0; a < n - 1; ++a) {
        for (int p = 0; p < 2; ++p) {
            for (Eigen::Index b = 0; b < n - 1; ++b) {
                for (int q = 0; q < 2; ++q) {
                    moo(2 * a + p, 2 * b + q) = detail::dc_block(sys, others[static_cast<std::size_t>(a)], p,
                                                                 others[static_cast<std::size_t>(b)], q);
                }
            }
            moo(2 * a + p, 2 * a + p) += equ(p, p);
            for (int q = 0; q < 2; ++q) {
                mok(2 * a + p, q) = detail::dc_block(sys, others[static_cast<std::size_t>(a)], p, kk, q);
                mko(q, 2 * a + p) = detail::dc_block(sys, kk, q, others[static_cast<std::size_t>(a)], p);
            }
        }
    }
    Eigen::Matrix2cd direct;
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) direct(p, q) = detail::dc_block(sys, kk, p, kk, q);
    }
    return direct - mko * moo.partialPivLu().solve(mok);
}

inline DcAdmittancePair dc_admittance_pair(const SlowSystem& sys, std::size_t k) {
    if (!(sys.alpha > 0.0 && sys.tau > 0.0 && sys.eta > 0.0)) {
        throw ConfigError("dc admittance needs alpha, tau, eta > 0");
    }
    const Eigen::Index n = sys.size();
    if (static_cast<Eigen::Index>(k) >= n) throw ConfigError("dc admittance: node index out of range");
    const double eta = sys.eta, alpha = sys.alpha, tau = sys.tau;

    DcAdmittancePair out;
    // (1/eta) diag(s + eta alpha / (tau s + 1), s)
    out.Y_equ_dc(0, 0) = RationalTF(Polynomial({eta * alpha / eta, 1.0 / eta, tau / eta}), Polynomial({1.0, tau}));
    out.Y_equ_dc(1, 1) = RationalTF(Polynomial({0.0, 1.0 / eta}), Polynomial::constant(1.0));

    const auto kk = static_cast<Eigen::Index>(k);
    if (n == 1) {
        for (int p = 0; p < 2; ++p) {
            for (int q = 0; q < 2; ++q) out.Y_agg_dc(p, q) = RationalTF::constant(detail::dc_block(sys, kk, p, kk, q));
        }
        return out;
    }
    std::vector<Eigen::Index> others;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (i != kk) others.push_back(i);
    }
    const Eigen::Index m = 2 * (n - 1);
    // Voltage rows of the eliminated nodes are multiplied by (tau s + 1).
    auto scaled_block = [&](cplx s) {
        CMatrix b(m, m);
        for (Eigen::Index a = 0; a < n - 1; ++a) {
            for (int p = 0; p < 2; ++p) {
                const cplx row_scale = p == 0 ? tau * s + 1.0 : cplx(1.0, 0.0);
                for (Eigen::Index c = 0; c < n - 1; ++c) {
                    for (int q = 0; q < 2; ++q) {
                        b(2 * a + p, 2 * c + q) = row_scale * detail::dc_block(sys, others[static_cast<std::size_t>(a)],
                                                                               p, others[static_cast<std::size_t>(c)], q);
                    }
                }
                b(2 * a + p, 2 * a + p) += p == 0 ? (tau * s * s + s + eta * alpha) / eta : s / eta;
            }
        }
        return b;
    };
    const int degree = static_cast<int>(3 * (n - 1));
    double rho = std::max({1.0, 1.0 / tau, std::sqrt(eta * alpha / tau)});
    rho = std::max(rho, eta * std::max(max_abs(sys.Gp), max_abs(sys.Bp)));

    const Polynomial den = determinant_polynomial(scaled_block, degree, rho).real_part();
    if (den.is_zero()) throw NumericalError("degenerate network: eliminated dc block is singular for all s");
    // On a Laplacian network a common angle shift draws no current, so the
    // angle column vanishes at s = 0; the zero is imposed exactly so that it
    // cancels the integrator pole of the equivalent admittance.
    const double scale = std::max(1.0, std::max(max_abs(sys.Gp), max_abs(sys.Bp)));
    const bool laplacian = sys.Gp.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * scale * static_cast<double>(n) &&
                           sys.Bp.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * scale * static_cast<double>(n);
    for (int p = 0; p < 2; ++p) {
        for (int q = 0; q < 2; ++q) {
            auto augmented = [&](cplx s) {
                CMatrix b(m + 1, m + 1);
                b.topLeftCorner(m, m) = scaled_block(s);
                for (Eigen::Index a = 0; a < n - 1; ++a) {
                    for (int r = 0; r < 2; ++r) {
                        const cplx row_scale = r == 0 ? tau * s + 1.0 : cplx(1.0, 0.0);
                        b(2 * a + r, m) = row_scale * detail::dc_block(sys, others[static_cast<std::size_t>(a)], r, kk, q);
                        b(m, 2 * a + r) = detail::dc_block(sys, kk, p, others[static_cast<std::size_t>(a)], r);
                    }
                }
                b(m, m) = detail::dc_block(sys, kk, p, kk, q);
                return b;
            };
            Polynomial num = determinant_polynomial(augmented, degree, rho).real_part();
            if (q == 1 && laplacian && !num.is_zero()) {
                std::vector<cplx> c = num.coefficients();
                c[0] = 0.0;
                num = Polynomial(std::move(c));
                out.Y_agg_dc(p, q) = num.is_zero() ? RationalTF::zero() : RationalTF(num, den);
            } else {
                out.Y_agg_dc(p, q) = num.is_zero() ? RationalTF::zero() : RationalTF(num, den).reduced(1e-6).real_part();
            }
            detail::check_against(
                out.Y_agg_dc(p, q), [&](cplx s) { return dc_aggregated_value(sys, k, s)(p, q); }, rho,
                "dc aggregated admittance");
        }
    }
    return out;
}

// L_k = Y_agg_dc Y_equ_dc^{-1}.
inline TFMatrix2x2 voltage_return_ratio(const DcAdmittancePair& pair) {
    const RationalTF inv0 = RationalTF::constant(1.0) / pair.Y_equ_dc(0, 0);
    const RationalTF inv1 = RationalTF::constant(1.0) / pair.Y_equ_dc(1, 1);
    TFMatrix2x2 l;
    for (int i = 0; i < 2; ++i) {
        const RationalTF& a0 = pair.Y_agg_dc(i, 0);
        const RationalTF& a1 = pair.Y_agg_dc(i, 1);
        l(i, 0) = a0.is_zero() ? RationalTF::zero() : (a0 * inv0).reduced(1e-6).real_part();
        if (a1.is_zero()) {
            l(i, 1) = RationalTF::zero();
        } else if (a1.numerator()[0] == cplx(0.0, 0.0)) {
            // Y_equ_dc(1, 1) = s / eta: divide the numerator by s exactly.
            const auto& c = a1.numerator().coefficients();
            const Polynomial shifted(std::vector<cplx>(c.begin() + 1, c.end()));
            const double eta = 1.0 / pair.Y_equ_dc(1, 1).numerator()[1].real();
            l(i, 1) = RationalTF(shifted * cplx(eta, 0.0), a1.denominator()).reduced(1e-6).real_part();
        } else {
            l(i, 1) = (a1 * inv1).reduced(1e-6).real_part();
        }
    }
    return l;
}

// ---------------------------------------------------------------------------
// Nyquist contour

struct NyquistOptions {
    double omega_max = 1e6;
    double indent_radius = 1e-4;
    double max_arg_step = 0.1;
    int initial_points = 400;
    int max_depth = 40;
    std::size_t max_samples = 400000;
    double axis_tol = 1e-8;  // relative; poles closer to the axis are indented
};

struct Indentation {
    cplx center;
    double radius = 0.0;
};

struct NyquistCurve {
    std::vector<cplx> s;
    std::vector<cplx> image;
    std::vector<char> on_axis;
    std::vector<Indentation> indentations;
    cplx test_point{0.0, 0.0};
};

namespace detail {

struct ContourPiece {
    std::function<cplx(double)> path;  // t in [0, 1]
    std::vector<double> seeds;         // initial parameter values, sorted, include 0 and 1
    bool on_axis = false;
};

inline void refine_piece(const ContourPiece& piece, const std::function<cplx(cplx)>& f, cplx point,
                         const NyquistOptions& opt, NyquistCurve& curve) {
    auto needs_split = [&](cplx fa, cplx fb) {
        const cplx da = fa - point, db = fb - point;
        if (!std::isfinite(std::abs(da)) || !std::isfinite(std::abs(db))) return true;
        if (std::abs(std::arg(db / da)) > opt.max_arg_step) return true;
        return std::abs(fb - fa) > 0.5 * std::min(std::abs(da), std::abs(db));
    };
    struct Node {
        double t;
        cplx s, fs;
    };
    std::vector<Node> seeds;
    for (double t : piece.seeds) {
        const cplx s = piece.path(t);
        seeds.push_back({t, s, f(s)});
    }
    auto emit = [&](const Node& nd) {
        curve.s.push_back(nd.s);
        curve.image.push_back(nd.fs);
        curve.on_axis.push_back(piece.on_axis ? 1 : 0);
        if (curve.s.size() > opt.max_samples) throw NumericalError("Nyquist refinement exceeded the sample budget");
    };
    std::function<void(const Node&, const Node&, int)> split = [&](const Node& a, const Node& b, int depth) {
        if (depth < opt.max_depth && needs_split(a.fs, b.fs)) {
            const double tm = 0.5 * (a.t + b.t);
            const cplx sm = piece.path(tm);
            const Node mid{tm, sm, f(sm)};
            split(a, mid, depth + 1);
            split(mid, b, depth + 1);
            return;
        }
        emit(b);
    };
    emit(seeds.front());
    for (std::size_t i = 1; i < seeds.size(); ++i) split(seeds[i - 1], seeds[i], 0);
}

// Axis segment j*omega for omega in [w0, w1], spaced uniformly in asinh(omega).
inline ContourPiece axis_piece(double w0, double w1, const std::vector<double>& hints, const NyquistOptions& opt) {
    const double u0 = std::asinh(w0), u1 = std::asinh(w1);
    ContourPiece piece;
    piece.on_axis = true;
    piece.path = [u0, u1](double t) { return cplx(0.0, std::sinh(u0 + t * (u1 - u0))); };
    const double span = 2.0 * std::asinh(opt.omega_max);
    const int count = std::max(8, static_cast<int>(std::ceil(opt.initial_points * (u1 - u0) / span)));
    for (int i = 0; i <= count; ++i) piece.seeds.push_back(static_cast<double>(i) / count);
    for (double w : hints) {
        if (w > w0 && w < w1) piece.seeds.push_back((std::asinh(w) - u0) / (u1 - u0));
    }
    std::sort(piece.seeds.begin(), piece.seeds.end());
    piece.seeds.erase(std::unique(piece.seeds.begin(), piece.seeds.end()), piece.seeds.end());
    return piece;
}

// Arc center + radius e^{j theta}, theta from a0 to a1.
inline ContourPiece arc_piece(cplx center, double radius, double a0, double a1, int count) {
    ContourPiece piece;
    piece.path = [=](double t) { return center + radius * rotor(a0 + t * (a1 - a0)); };
    for (int i = 0; i <= count; ++i) piece.seeds.push_back(static_cast<double>(i) / count);
    return piece;
}

}  // namespace detail

// Standard contour: up the imaginary axis from -j Omega to +j Omega, closed by
// a clockwise arc through the right half plane. Poles on the axis are passed
// on the right by small semicircles. With conjugate_symmetric only the upper
// half is evaluated and the lower half is mirrored.
inline NyquistCurve nyquist_curve(const std::function<cplx(cplx)>& f, const std::vector<cplx>& poles,
                                  const std::vector<cplx>& zeros, cplx point, bool conjugate_symmetric,
                                  const NyquistOptions& opt = {}) {
    NyquistCurve curve;
    curve.test_point = point;
    const double rho = opt.indent_radius;
    const double big = opt.omega_max;

    std::vector<double> centers;
    std::vector<double> hints;
    auto add_hints = [&](cplx p) {
        const double width = std::max(std::abs(p.real()), 2.0 * rho);
        for (double k : {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0}) hints.push_back(p.imag() + k * width);
    };
    for (const cplx& p : poles) {
        if (std::abs(p.real()) <= opt.axis_tol * std::max(1.0, std::abs(p)) && std::abs(p.imag()) < big) {
            centers.push_back(p.imag());
        }
        add_hints(p);
    }
    for (const cplx& z : zeros) add_hints(z);
    std::sort(centers.begin(), centers.end());
    std::vector<double> merged;
    for (double c : centers) {
        if (!merged.empty() && std::abs(c - merged.back()) <= 1e-9 * std::max(1.0, std::abs(c))) continue;
        if (!merged.empty() && c - merged.back() < 2.0 * rho) {
            throw NumericalError("cannot indent the contour: imaginary-axis poles closer than the indentation diameter");
        }
        merged.push_back(c);
    }

    std::vector<detail::ContourPiece> pieces;
    auto indent = [&](double c, double a0, double a1) {
        pieces.push_back(detail::arc_piece(cplx(0.0, c), rho, a0, a1, 16));
        curve.indentations.push_back({cplx(0.0, c), rho});
    };
    if (conjugate_symmetric) {
        double w = 0.0;
        for (double c : merged) {
            if (c < -rho) continue;
            if (std::abs(c) <= rho) {
                pieces.push_back(detail::arc_piece(cplx(0.0, 0.0), rho, 0.0, kPi / 2, 8));
                curve.indentations.push_back({cplx(0.0, 0.0), rho});
                w = rho;
                continue;
            }
            pieces.push_back(detail::axis_piece(w, c - rho, hints, opt));
            indent(c, -kPi / 2, kPi / 2);
            w = c + rho;
        }
        pieces.push_back(detail::axis_piece(w, big, hints, opt));
        pieces.push_back(detail::arc_piece(cplx(0.0, 0.0), big, kPi / 2, 0.0, 32));
    } else {
        double w = -big;
        for (double c : merged) {
            pieces.push_back(detail::axis_piece(w, c - rho, hints, opt));
            indent(c, -kPi / 2, kPi / 2);
            w = c + rho;
        }
        pieces.push_back(detail::axis_piece(w, big, hints, opt));
        pieces.push_back(detail::arc_piece(cplx(0.0, 0.0), big, kPi / 2, -kPi / 2, 64));
    }
    for (const auto& piece : pieces) detail::refine_piece(piece, f, point, opt, curve);

    if (conjugate_symmetric) {
        const std::size_t half = curve.s.size();
        for (std::size_t i = half; i-- > 0;) {
            curve.s.push_back(std::conj(curve.s[i]));
            curve.image.push_back(std::conj(curve.image[i]));
            curve.on_axis.push_back(curve.on_axis[i]);
        }
    }
    return curve;
}

// Counterclockwise encirclements of point by the closed sampled curve.
inline int winding_number(const NyquistCurve& curve, cplx point) {
    const auto& img = curve.image;
    if (img.size() < 3) throw NumericalError("winding number: curve has fewer than three samples");
    const double scale = std::max(1.0, std::abs(point));
    double nearest = std::numeric_limits<double>::infinity();
    for (const cplx& z : img) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
            throw NumericalError("winding number: curve contains non-finite samples");
        }
        nearest = std::min(nearest, std::abs(z - point));
    }
    if (!(nearest > 1e-9 * scale)) {
        throw PreconditionError("winding number indeterminate: the point lies on the curve; perturb the contour");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        const cplx a = img[i] - point;
        const cplx b = img[(i + 1) % img.size()] - point;
        total += std::arg(b / a);
    }
    const double turns = total / (2.0 * kPi);
    const double rounded = std::round(turns);
    if (std::abs(turns - rounded) > 0.01) {
        std::ostringstream os;
        os << "winding number ambiguous (" << turns << " turns); refine the curve";
        throw NumericalError(os.str());
    }
    return static_cast<int>(rounded);
}

struct SyncCriterion {
    int Z1 = 0;
    int P1 = 0;
    int N1 = 0;
    bool pass = false;
    std::vector<cplx> poles;
    NyquistCurve curve;
};

inline int count_rhp(const std::vector<cplx>& roots, double axis_tol) {
    int count = 0;
    for (const cplx& r : roots) count += r.real() > axis_tol * std::max(1.0, std::abs(r)) ? 1 : 0;
    return count;
}

// Z1 = P1 - N1, pass iff at most one closed-loop pole is unstable.
inline SyncCriterion criterion_sync(const RationalTF& l, const NyquistOptions& opt = {}) {
    SyncCriterion out;
    out.poles = l.poles();
    out.P1 = count_rhp(out.poles, opt.axis_tol);
    out.curve = nyquist_curve([&l](cplx s) { return l(s); }, out.poles, l.zeros(), cplx(-1.0, 0.0), false, opt);
    out.N1 = winding_number(out.curve, cplx(-1.0, 0.0));
    out.Z1 = out.P1 - out.N1;
    out.pass = out.Z1 <= 1;
    return out;
}

struct VoltageCriterion {
    int N2 = 0;
    bool pass = false;
    std::vector<cplx> poles;
    NyquistCurve curve;
};

// N2 = encirclements of the origin by det(I + L_k(s)); pass iff N2 = 0.
inline VoltageCriterion criterion_voltage(const TFMatrix2x2& l, const NyquistOptions& opt = {}) {
    VoltageCriterion out;
    out.poles = l.poles();
    if (count_rhp(out.poles, opt.axis_tol) > 0) {
        std::ostringstream os;
        os << "criterion_voltage precondition violated: L_k has open right-half-plane poles";
        for (const cplx& p : out.poles) {
            if (p.real() > opt.axis_tol * std::max(1.0, std::abs(p))) os << " " << p;
        }
        throw PreconditionError(os.str());
    }
    std::vector<cplx> zeros;
    for (const auto& e : l.e) {
        if (e.is_zero()) continue;
        for (const cplx& z : e.zeros()) zeros.push_back(z);
    }
    auto f = [&l](cplx s) { return (Eigen::Matrix2cd::Identity() + l(s)).determinant(); };
    out.curve = nyquist_curve(f, out.poles, zeros, cplx(0.0, 0.0), true, opt);
    out.N2 = winding_number(out.curve, cplx(0.0, 0.0));
    out.pass = out.N2 == 0;
    return out;
}

// Imaginary-axis samples as `omega,re,im`, ascending in omega.
inline void write_nyquist_csv(std::ostream& os, const NyquistCurve& curve) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < curve.s.size(); ++i) {
        if (curve.on_axis[i]) idx.push_back(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return curve.s[a].imag() < curve.s[b].imag(); });
    os << "omega,re,im\n";
    char buf[96];
    double last = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i : idx) {
        if (curve.s[i].imag() == last) continue;
        last = curve.s[i].imag();
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", last, curve.image[i].real(), curve.image[i].imag());
        os << buf;
    }
}

}  // namespace cfsync
