#pragma once

// Static network models: nodal admittance assembly, Kron reduction with
// shunt absorption, normalized and linear complex power flow.

#include <algorithm>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace cfsync {

enum class NodeKind { converter, load, generator };

inline const char* to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::converter: return "converter";
        case NodeKind::load: return "load";
        case NodeKind::generator: return "generator";
    }
    return "?";
}

struct Node {
    std::string name;
    NodeKind kind = NodeKind::converter;
    cplx shunt{0.0, 0.0};  // per-unit admittance to ground
};

// Series branch; x is the reactance at the nominal frequency (x = omega0 * l).
struct BranchSpec {
    std::size_t from = 0;
    std::size_t to = 0;
    double r = 0.0;
    double x = 0.0;

    cplx impedance() const { return {r, x}; }
    cplx admittance() const { return 1.0 / impedance(); }
};

struct NetworkModel {
    std::vector<Node> nodes;
    std::vector<BranchSpec> branches;

    std::size_t size() const { return nodes.size(); }

    std::vector<std::size_t> indices_of(NodeKind kind) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].kind == kind) out.push_back(i);
        }
        return out;
    }
};

namespace detail {

struct DisjointSets {
    std::vector<std::size_t> parent;
    explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

inline std::string branch_label(const NetworkModel& model, std::size_t b) {
    const BranchSpec& br = model.branches[b];
    std::ostringstream os;
    os << "branch #" << b;
    if (br.from < model.size() && br.to < model.size()) {
        os << " (" << model.nodes[br.from].name << "-" << model.nodes[br.to].name << ")";
    }
    return os.str();
}

}  // namespace detail

inline bool is_connected(const NetworkModel& model) {
    if (model.nodes.empty()) return false;
    detail::DisjointSets sets(model.size());
    for (const auto& br : model.branches) sets.unite(br.from, br.to);
    const std::size_t root = sets.find(0);
    for (std::size_t i = 1; i < model.size(); ++i) {
        if (sets.find(i) != root) return false;
    }
    return true;
}

// Throws ConfigError naming the first offending item.
inline void validate(const NetworkModel& model) {
    if (model.nodes.empty()) throw ConfigError("network has no nodes");
    for (std::size_t b = 0; b < model.branches.size(); ++b) {
        const BranchSpec& br = model.branches[b];
        const std::string label = detail::branch_label(model, b);
        if (br.from >= model.size() || br.to >= model.size()) {
            throw ConfigError(label + ": node index out of range");
        }
        if (br.from == br.to) throw ConfigError(label + ": from and to are the same node");
        if (!(br.r >= 0.0)) throw ConfigError(label + ": negative resistance");
        if (br.r == 0.0 && br.x == 0.0) throw ConfigError(label + ": zero impedance (r = x = 0)");
        if (!std::isfinite(br.r) || !std::isfinite(br.x)) throw ConfigError(label + ": non-finite impedance");
    }
    if (!is_connected(model)) throw ConfigError("network graph is disconnected");
}

// Standard nodal assembly: branch admittance 1/(r + jx), shunts on the diagonal.
inline CMatrix build_admittance(const NetworkModel& model) {
    validate(model);
    const auto n = static_cast<Eigen::Index>(model.size());
    CMatrix y = CMatrix::Zero(n, n);
    for (const auto& br : model.branches) {
        const cplx yb = br.admittance();
        const auto f = static_cast<Eigen::Index>(br.from);
        const auto t = static_cast<Eigen::Index>(br.to);
        y(f, f) += yb;
        y(t, t) += yb;
        y(f, t) -= yb;
        y(t, f) -= yb;
    }
    for (Eigen::Index i = 0; i < n; ++i) y(i, i) += model.nodes[static_cast<std::size_t>(i)].shunt;
    return y;
}

// Complex symmetric Laplacian over the kept nodes. Shunt components left by the
// reduction are moved into `setpoint_shift`, to be added to the normalized
// power setpoints: the original current map is i = (Y + diag(-setpoint_shift)) v.
struct ReducedNetwork {
    CMatrix Y;
    CVector setpoint_shift;
    std::vector<std::size_t> nodes;  // indices into the unreduced matrix

    Eigen::Index size() const { return Y.rows(); }
};

// Turns a symmetric admittance matrix into a zero-row-sum Laplacian plus shift.
inline ReducedNetwork absorb_shunts(CMatrix y, std::vector<std::size_t> nodes) {
    const Eigen::Index n = y.rows();
    y = (0.5 * (y + y.transpose())).eval();
    CVector shift(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> re, im;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            re.push_back(y(i, j).real());
            im.push_back(y(i, j).imag());
        }
        const cplx off{compensated_sum(re), compensated_sum(im)};
        shift(i) = -(y(i, i) + off);
        y(i, i) = -off;
    }
    return {std::move(y), std::move(shift), std::move(nodes)};
}

// Schur complement of `y` onto `keep`; throws NumericalError if the eliminated block is singular.
inline ReducedNetwork kron_reduce(const CMatrix& y, const std::vector<std::size_t>& keep) {
    const Eigen::Index n = y.rows();
    std::vector<bool> kept(static_cast<std::size_t>(n), false);
    for (auto k : keep) {
        if (k >= static_cast<std::size_t>(n)) throw ConfigError("kron_reduce: kept node out of range");
        kept[k] = true;
    }
    std::vector<std::size_t> elim;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        if (!kept[i]) elim.push_back(i);
    }
    const auto ne = static_cast<Eigen::Index>(elim.size());
    auto pick = [&](const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
        CMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < cols.size(); ++j) {
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    y(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
            }
        }
        return out;
    };
    CMatrix reduced = pick(keep, keep);
    if (ne > 0) {
        const CMatrix yee = pick(elim, elim);
        Eigen::JacobiSVD<CMatrix> svd(yee);
        const auto& sv = svd.singularValues();
        const double smax = sv(0);
        const double smin = sv(ne - 1);
        if (!(smin > 1e-12 * std::max(smax, 1.0))) {
            std::ostringstream os;
            os << "kron_reduce: eliminated block is singular (condition number "
               << (smin > 0.0 ? smax / smin : INFINITY) << ")";
            throw NumericalError(os.str());
        }
        const Eigen::PartialPivLU<CMatrix> lu(yee);
        reduced -= pick(keep, elim) * lu.solve(pick(elim, keep));
    }
    return absorb_shunts(std::move(reduced), keep);
}

// Converter-only reduced network of a model (loads eliminated, no generators allowed).
inline ReducedNetwork reduce_to_converters(const NetworkModel& model) {
    if (!model.indices_of(NodeKind::generator).empty()) {
        throw ConfigError("network has generator nodes; use sg_partition");
    }
    const auto conv = model.indices_of(NodeKind::converter);
    if (conv.empty()) throw ConfigError("network has no converter nodes");
    return kron_reduce(build_admittance(model), conv);
}

struct NormalizedPowerFlow {
    CVector conj_sigma;  // sum_l y_kl v_l / v_k
    CVector sigma;       // rho + j sigma
};

inline NormalizedPowerFlow normalized_power_flow(const CMatrix& y, const CVector& v) {
    if (v.size() != y.rows()) throw ConfigError("normalized_power_flow: size mismatch");
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        if (v(k) == cplx(0.0, 0.0)) throw DomainError("normalized power undefined at zero voltage");
    }
    NormalizedPowerFlow out;
    out.conj_sigma = (y * v).cwiseQuotient(v);
    out.sigma = out.conj_sigma.conjugate();
    return out;
}

struct LinearPowerFlow {
    CVector conj_sigma_dc;
    cplx loss_residual;  // 1^T conj_sigma_dc, zero on a Laplacian
};

inline LinearPowerFlow linear_power_flow(const CMatrix& y, const CVector& angle) {
    if (angle.size() != y.rows()) throw ConfigError("linear_power_flow: size mismatch");
    LinearPowerFlow out;
    out.conj_sigma_dc = y * angle;
    out.loss_residual = out.conj_sigma_dc.sum();
    return out;
}

// Converter/generator block partition of the load-free network:
// i_o = Y v + Y_G v_SG,  i_SG = Y_G^T v + Y_SG v_SG.
struct SgPartition {
    CMatrix Y;
    CMatrix Y_G;
    CMatrix Y_SG;
    CVector setpoint_shift;  // shunts of the converter rows, as in ReducedNetwork
    std::vector<std::size_t> converters;
    std::vector<std::size_t> generators;
};

// `y_full` is the unreduced admittance matrix; load nodes (all indices not in
// either group) are Kron-eliminated before partitioning.
inline SgPartition sg_partition(const CMatrix& y_full, const std::vector<std::size_t>& converters,
                                const std::vector<std::size_t>& generators) {
    if (converters.empty()) throw ConfigError("sg_partition: empty converter group");
    std::vector<std::size_t> keep = converters;
    keep.insert(keep.end(), generators.begin(), generators.end());
    const ReducedNetwork red = kron_reduce(y_full, keep);

    const auto nc = static_cast<Eigen::Index>(converters.size());
    const auto ng = static_cast<Eigen::Index>(generators.size());
    SgPartition out;
    out.Y = red.Y.topLeftCorner(nc, nc);
    out.Y_G = red.Y.topRightCorner(nc, ng);
    out.Y_SG = red.Y.bottomRightCorner(ng, ng);
    out.setpoint_shift = red.setpoint_shift.head(nc);
    out.converters = converters;
    out.generators = generators;
    return out;
}

struct AlgebraicConnectivity {
    double lambda2 = 0.0;
    RVector spectrum;  // ascending eigenvalues of Re(e^{j phi} Y)
    bool connected = true;
    bool laplacian = true;
    std::string warning;
};

// Second-smallest eigenvalue of Re(e^{j phi} Y).
inline AlgebraicConnectivity algebraic_connectivity(const CMatrix& y, double phi, double tol = 1e-9) {
    AlgebraicConnectivity out;
    const RMatrix l = (rotor(phi) * y).real();
    const RMatrix sym = 0.5 * (l + l.transpose());
    out.spectrum = symmetric_eigenvalues(sym);
    if (out.spectrum.size() < 2) {
        out.lambda2 = 0.0;
        out.connected = false;
        out.warning = "fewer than two nodes";
        return out;
    }
    const double scale = std::max(1.0, max_abs(sym));
    out.lambda2 = out.spectrum(1);
    if (out.spectrum(0) < -tol * scale || out.lambda2 < -tol * scale) {
        out.laplacian = false;
        out.warning = "Re(e^{j phi} Y) has negative eigenvalues; not a Laplacian for this phi";
    }
    if (std::abs(out.lambda2) <= tol * scale) {
        out.lambda2 = 0.0;
        out.connected = false;
        out.warning = "second eigenvalue is zero: graph of Re(e^{j phi} Y) is disconnected";
    }
    return out;
}

// The in-repo three-converter test network: all nodes are converters,
// deliberately non-uniform r/x ratios, no shunts.
inline NetworkModel canon3() {
    NetworkModel m;
    m.nodes = {{"1", NodeKind::converter, {}}, {"2", NodeKind::converter, {}}, {"3", NodeKind::converter, {}}};
    m.branches = {{0, 1, 0.02, 0.10}, {1, 2, 0.05, 0.05}, {0, 2, 0.01, 0.12}};
    return m;
}

}  // namespace cfsync
