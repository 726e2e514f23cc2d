#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <cfsync/network.hpp>

using namespace cfsync;

namespace {

NetworkModel two_node(double r, double x) {
    NetworkModel m;
    m.nodes = {{"1", NodeKind::converter, {}}, {"2", NodeKind::converter, {}}};
    m.branches = {{0, 1, r, x}};
    return m;
}

CMatrix two_node_y() {
    CMatrix y(2, 2);
    y << cplx(0, -10), cplx(0, 10), cplx(0, 10), cplx(0, -10);
    return y;
}

// Random connected network: a spanning path plus extra edges.
NetworkModel random_network(std::mt19937_64& rng, int n, int loads) {
    std::uniform_real_distribution<double> x(0.05, 0.5), ratio(0.1, 2.0), coin(0.0, 1.0);
    NetworkModel m;
    for (int i = 0; i < n; ++i) {
        m.nodes.push_back({std::to_string(i), i >= n - loads ? NodeKind::load : NodeKind::converter, {}});
    }
    for (int i = 1; i < n; ++i) {
        std::uniform_int_distribution<int> pick(0, i - 1);
        const double xi = x(rng);
        m.branches.push_back({static_cast<std::size_t>(pick(rng)), static_cast<std::size_t>(i), ratio(rng) * xi, xi});
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (coin(rng) < 0.25) {
                const double xi = x(rng);
                m.branches.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), ratio(rng) * xi, xi});
            }
        }
    }
    return m;
}

double max_row_sum(const CMatrix& y) { return y.rowwise().sum().cwiseAbs().maxCoeff(); }

}  // namespace

TEST(BuildAdmittance, TwoNodeReactance) {
    EXPECT_LT(max_abs(build_admittance(two_node(0.0, 0.1)) - two_node_y()), 1e-12);
}

TEST(BuildAdmittance, ShuntOnDiagonal) {
    NetworkModel m = two_node(0.0, 0.1);
    m.nodes[0].shunt = cplx(0.0, 0.01);
    const CMatrix y = build_admittance(m);
    EXPECT_NEAR(std::abs(y(0, 0) - cplx(0.0, -10.0 + 0.01)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(y(1, 1) - cplx(0.0, -10.0)), 0.0, 1e-12);
}

TEST(BuildAdmittance, Canon3AgainstHandAssembly) {
    const cplx y12 = 1.0 / cplx(0.02, 0.10);
    const cplx y23 = 1.0 / cplx(0.05, 0.05);
    const cplx y13 = 1.0 / cplx(0.01, 0.12);
    CMatrix hand(3, 3);
    hand << y12 + y13, -y12, -y13, -y12, y12 + y23, -y23, -y13, -y23, y13 + y23;
    EXPECT_LT(max_abs(build_admittance(canon3()) - hand), 1e-12);
}

TEST(BuildAdmittance, ValidationErrors) {
    NetworkModel m = two_node(0.0, 0.0);
    try {
        build_admittance(m);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("branch #0 (1-2)"), std::string::npos);
    }
    NetworkModel d = two_node(0.01, 0.1);
    d.nodes.push_back({"3", NodeKind::converter, {}});
    EXPECT_THROW(build_admittance(d), ConfigError);
    NetworkModel loop = two_node(0.01, 0.1);
    loop.branches.push_back({1, 1, 0.01, 0.1});
    EXPECT_THROW(build_admittance(loop), ConfigError);
}

TEST(KronReduce, NoEliminationKeepsMatrix) {
    const CMatrix y = build_admittance(canon3());
    const ReducedNetwork red = kron_reduce(y, {0, 1, 2});
    EXPECT_LT(max_abs(red.Y - y), 1e-15);
    EXPECT_LT(red.setpoint_shift.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(KronReduce, StarBecomesTriangle) {
    const cplx yb = 1.0 / cplx(0.03, 0.2);
    NetworkModel m;
    m.nodes = {{"a", NodeKind::converter, {}}, {"b", NodeKind::converter, {}}, {"c", NodeKind::converter, {}},
               {"hub", NodeKind::load, {}}};
    m.branches = {{0, 3, 0.03, 0.2}, {1, 3, 0.03, 0.2}, {2, 3, 0.03, 0.2}};
    const ReducedNetwork red = reduce_to_converters(m);
    for (Eigen::Index i = 0; i < 3; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            const cplx expect = i == j ? 2.0 * yb / 3.0 : -yb / 3.0;
            EXPECT_NEAR(std::abs(red.Y(i, j) - expect), 0.0, 1e-12);
        }
    }
    EXPECT_LT(red.setpoint_shift.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(KronReduce, RowSumsAfterAbsorption) {
    NetworkModel m = canon3();
    m.nodes.push_back({"load", NodeKind::load, cplx(0.4, -0.2)});
    m.nodes[1].shunt = cplx(0.0, 0.05);
    m.branches.push_back({2, 3, 0.03, 0.08});
    const ReducedNetwork red = reduce_to_converters(m);
    EXPECT_LT(max_row_sum(red.Y), 1e-12);
    EXPECT_LT(max_abs(red.Y - red.Y.transpose()), 1e-12);
    EXPECT_GT(red.setpoint_shift.cwiseAbs().maxCoeff(), 1e-3);
}

TEST(KronReduce, PreservesExteriorMap) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        NetworkModel m = random_network(rng, 7, 3);
        for (auto& node : m.nodes) node.shunt = cplx(0.02 * std::abs(nd(rng)), 0.02 * nd(rng));
        const CMatrix y = build_admittance(m);
        const ReducedNetwork red = reduce_to_converters(m);
        CVector vb(4);
        for (Eigen::Index i = 0; i < 4; ++i) vb(i) = cplx(nd(rng), nd(rng));
        // Interior voltages from zero injection at the load nodes.
        const CMatrix yll = y.bottomRightCorner(3, 3);
        const CMatrix ylb = y.bottomLeftCorner(3, 4);
        const CVector vl = -yll.partialPivLu().solve(ylb * vb);
        CVector full(7);
        full << vb, vl;
        const CVector i_full = (y * full).head(4);
        CMatrix y_orig = red.Y;
        y_orig.diagonal() -= red.setpoint_shift;
        const CVector i_red = y_orig * vb;
        EXPECT_LT((i_full - i_red).norm(), 1e-10 * std::max(1.0, i_full.norm()));
    }
}

TEST(KronReduce, SingularBlockReported) {
    CMatrix y = CMatrix::Zero(3, 3);
    y(0, 0) = 1.0;
    y(0, 1) = y(1, 0) = -1.0;
    y(1, 1) = 1.0;
    try {
        kron_reduce(y, {0, 1});
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("condition number"), std::string::npos);
    }
}

TEST(NormalizedPowerFlow, FlatProfileIsZero) {
    const CMatrix y = build_admittance(canon3());
    const auto pf = normalized_power_flow(y, CVector::Ones(3));
    EXPECT_LT(pf.conj_sigma.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizedPowerFlow, TwoNodeValue) {
    CVector v(2);
    v << 1.0, std::exp(cplx(0.0, -0.1));
    const auto pf = normalized_power_flow(two_node_y(), v);
    const cplx oracle = cplx(0, -10) + cplx(0, 10) * std::exp(cplx(0.0, -0.1));
    EXPECT_NEAR(std::abs(pf.conj_sigma(0) - oracle), 0.0, 1e-14);
    EXPECT_NEAR(pf.conj_sigma(0).real(), 0.99833, 1e-5);
    EXPECT_NEAR(pf.conj_sigma(0).imag(), -0.04996, 1e-5);
    EXPECT_NEAR(std::abs(pf.sigma(0) - std::conj(oracle)), 0.0, 1e-14);
}

TEST(NormalizedPowerFlow, ScaleInvariantAndZeroRejected) {
    const CMatrix y = build_admittance(canon3());
    CVector v(3);
    v << cplx(1.0, 0.1), cplx(0.9, -0.2), cplx(1.1, 0.05);
    const auto a = normalized_power_flow(y, v);
    const auto b = normalized_power_flow(y, cplx(-3.0, 2.0) * v);
    EXPECT_LT((a.conj_sigma - b.conj_sigma).norm(), 1e-12);
    v(1) = 0.0;
    EXPECT_THROW(normalized_power_flow(y, v), DomainError);
}

TEST(LinearPowerFlow, ClassicalDcFlow) {
    CVector theta(2);
    theta << 0.0, cplx(0.0, -0.1);
    const auto lf = linear_power_flow(two_node_y(), theta);
    EXPECT_NEAR(std::abs(lf.conj_sigma_dc(0) - 1.0), 0.0, 1e-12);
}

TEST(LinearPowerFlow, LosslessAndShiftInvariant) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 100; ++trial) {
        const ReducedNetwork red = reduce_to_converters(random_network(rng, 6, 0));
        CVector theta(6);
        for (Eigen::Index i = 0; i < 6; ++i) theta(i) = cplx(nd(rng), nd(rng));
        const auto a = linear_power_flow(red.Y, theta);
        EXPECT_LT(std::abs(a.loss_residual), 1e-12);
        const auto b = linear_power_flow(red.Y, (theta.array() + cplx(0.3, -1.7)).matrix());
        EXPECT_LT((a.conj_sigma_dc - b.conj_sigma_dc).norm(), 1e-11);
    }
}

TEST(LinearPowerFlow, FirstOrderAgreement) {
    const CMatrix y = build_admittance(canon3());
    CVector dir(3);
    dir << cplx(0.3, 0.5), cplx(-0.2, 0.1), cplx(0.1, -0.4);
    double prev = 0.0;
    for (double d : {0.1, 0.05, 0.025}) {
        const CVector angle = d * dir;
        const CVector v = angle.array().exp().matrix();
        const double err = (normalized_power_flow(y, v).conj_sigma - linear_power_flow(y, angle).conj_sigma_dc).norm();
        if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.5);
        prev = err;
    }
}

TEST(SgPartition, NoGeneratorsMatchesReduction) {
    const CMatrix y = build_admittance(canon3());
    const SgPartition part = sg_partition(y, {0, 1, 2}, {});
    EXPECT_EQ(part.Y_G.cols(), 0);
    EXPECT_LT(max_abs(part.Y - reduce_to_converters(canon3()).Y), 1e-14);
}

TEST(SgPartition, PathBlocksAndReconstruction) {
    NetworkModel m;
    m.nodes = {{"c1", NodeKind::converter, {}}, {"g", NodeKind::generator, {}}, {"c2", NodeKind::converter, {}}};
    m.branches = {{0, 1, 0.01, 0.1}, {1, 2, 0.02, 0.2}};
    const CMatrix y = build_admittance(m);
    const SgPartition part = sg_partition(y, {0, 2}, {1});
    const cplx ya = 1.0 / cplx(0.01, 0.1), yb = 1.0 / cplx(0.02, 0.2);
    EXPECT_NEAR(std::abs(part.Y(0, 0) - ya), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(part.Y(0, 1)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(part.Y_G(0, 0) + ya), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(part.Y_G(1, 0) + yb), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(part.Y_SG(0, 0) - (ya + yb)), 0.0, 1e-12);
    // Converter block is not a Laplacian on its own; the shift is zero because
    // the full matrix has zero row sums.
    CMatrix rebuilt(3, 3);
    rebuilt << part.Y(0, 0), part.Y_G(0, 0), part.Y(0, 1), part.Y_G(0, 0), part.Y_SG(0, 0), part.Y_G(1, 0), part.Y(1, 0),
        part.Y_G(1, 0), part.Y(1, 1);
    EXPECT_LT(max_abs(rebuilt - y), 1e-12);
    EXPECT_THROW(sg_partition(y, {}, {1}), ConfigError);
}

TEST(AlgebraicConnectivity, TwoNodeClosedForm) {
    const auto c = algebraic_connectivity(two_node_y(), kPi / 2);
    EXPECT_NEAR(c.lambda2, 20.0, 1e-12);
    EXPECT_TRUE(c.connected);
}

TEST(AlgebraicConnectivity, DisconnectedFlagged) {
    CMatrix y = CMatrix::Zero(3, 3);
    y.topLeftCorner(2, 2) = two_node_y();
    const auto c = algebraic_connectivity(y, kPi / 2);
    EXPECT_EQ(c.lambda2, 0.0);
    EXPECT_FALSE(c.connected);
    EXPECT_FALSE(c.warning.empty());
}

TEST(AlgebraicConnectivity, Canon3Positive) {
    const auto c = algebraic_connectivity(reduce_to_converters(canon3()).Y, kPi / 4);
    EXPECT_GT(c.lambda2, 0.0);
    EXPECT_TRUE(c.laplacian);
}

TEST(ReducedNetwork, InvariantsOnRandomNetworks) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const ReducedNetwork red = reduce_to_converters(random_network(rng, 8, 3));
        EXPECT_LT(max_row_sum(red.Y), 1e-12);
        EXPECT_LT(max_abs(red.Y - red.Y.transpose()), 1e-12);
    }
}
