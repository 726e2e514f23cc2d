#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <cfsync/fast_analysis.hpp>

using namespace cfsync;

namespace {

constexpr double kOmega0 = 2 * kPi * 50;

ReducedNetwork two_node() {
    CMatrix y(2, 2);
    y << cplx(0, -10), cplx(0, 10), cplx(0, 10), cplx(0, -10);
    return {y, CVector::Zero(2), {0, 1}};
}

std::vector<DvocParams> gains(std::size_t n, double eta, double phi, double alpha = 0.0) {
    return std::vector<DvocParams>(n, DvocParams{eta, alpha, 0.005, phi, kOmega0});
}

std::vector<Setpoints> canon3_setpoints() { return {{0.6, 0.4, 1.0}, {0.3, 0.1, 1.0}, {0.2, 0.2, 1.0}}; }

}  // namespace

TEST(BuildFastSystem, ZeroReferenceRotatesOnes) {
    const ReducedNetwork net = reduce_to_converters(canon3());
    const auto p = gains(3, 0.04 * kOmega0, kPi / 4);
    const FastSystem fs = build_fast_system(net, p, std::vector<Setpoints>(3), RVector::Zero(3));
    const CVector ones = CVector::Ones(3);
    EXPECT_LT((fs.A * ones - kJ * kOmega0 * ones).norm(), 1e-12);
    EXPECT_LT(max_abs(fs.A - fs.A.transpose()), 1e-12);
    const Spectrum s = spectrum(fs.A);
    EXPECT_NEAR(std::abs(s.lambda1() - kJ * kOmega0), 0.0, 1e-9);
    EXPECT_LT((s.phi1 - ones / std::sqrt(3.0)).norm(), 1e-9);
}

TEST(BuildFastSystem, TwoNodeClosedForm) {
    const FastSystem fs = build_fast_system(two_node(), gains(2, 0.04, kPi / 2), std::vector<Setpoints>(2), RVector::Zero(2));
    const Spectrum s = spectrum(fs.A);
    EXPECT_NEAR(std::abs(s.eigenvalues(0) - kJ * kOmega0), 0.0, 1e-11);
    EXPECT_NEAR(std::abs(s.eigenvalues(1) - cplx(-0.8, kOmega0)), 0.0, 1e-11);
    EXPECT_NEAR(s.gap, 0.8, 1e-11);
}

TEST(BuildFastSystem, RegulationTermVanishesAtSetpoint) {
    const auto sp = canon3_setpoints();
    std::vector<Setpoints> boosted = sp;
    for (auto& s : boosted) s.v_star = 1.2;
    const ReducedNetwork net = reduce_to_converters(canon3());
    const RVector u_f = RVector::Constant(3, std::log(1.2));
    const FastSystem fs = build_fast_system(net, gains(3, 12.0, kPi / 4, 5.0), boosted, u_f);
    for (Eigen::Index k = 0; k < 3; ++k) {
        EXPECT_NEAR(std::abs(fs.effective_reference(k) - boosted[static_cast<std::size_t>(k)].conj_sigma_star()), 0.0, 1e-14);
    }
}

TEST(BuildFastSystem, HeterogeneousGainsRejected) {
    auto p = gains(2, 0.04, kPi / 2);
    p[1].eta = 0.05;
    EXPECT_THROW(build_fast_system(two_node(), p, std::vector<Setpoints>(2), RVector::Zero(2)), UnsupportedConfig);
}

TEST(Spectrum, DiagonalOrdering) {
    CMatrix a = CMatrix::Zero(3, 3);
    a(0, 0) = 1.0;
    a(1, 1) = cplx(0.0, 2.0);
    a(2, 2) = -3.0;
    const Spectrum s = spectrum(a);
    EXPECT_NEAR(std::abs(s.eigenvalues(0) - 1.0), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(s.eigenvalues(1) - cplx(0.0, 2.0)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(s.eigenvalues(2) + 3.0), 0.0, 1e-14);
}

TEST(Spectrum, ShiftProperty) {
    const FastSystem fs = build_fast_system(reduce_to_converters(canon3()), gains(3, 12.566, kPi / 4), canon3_setpoints(),
                                            RVector::Zero(3));
    const cplx c(-2.0, 5.0);
    CMatrix shifted = fs.A;
    shifted.diagonal().array() += c;
    const Spectrum a = spectrum(fs.A);
    const Spectrum b = spectrum(shifted);
    EXPECT_LT((b.eigenvalues - a.eigenvalues - CVector::Constant(3, c)).norm(), 1e-9);
    EXPECT_LT((a.phi1 - b.phi1).norm(), 1e-9);
}

TEST(Spectrum, ResidualsAndLeftVector) {
    const FastSystem fs = build_fast_system(reduce_to_converters(canon3()), gains(3, 12.566, kPi / 4), canon3_setpoints(),
                                            RVector::Zero(3));
    const Spectrum s = spectrum(fs.A);
    EXPECT_LT(s.residual, 1e-9);
    EXPECT_LT(s.max_residual, 1e-9);
    EXPECT_TRUE(s.left_equals_right);
    EXPECT_NEAR(std::abs(cplx(s.psi1.transpose() * s.phi1) - 1.0), 0.0, 1e-12);
}

TEST(Spectrum, AmbiguousDominance) {
    const CMatrix a = CMatrix::Identity(2, 2);
    EXPECT_THROW(spectrum(a), NumericalError);
}

TEST(SpectralCondition, TwoNodePasses) {
    const FastSystem fs = build_fast_system(two_node(), gains(2, 0.04, kPi / 2), std::vector<Setpoints>(2), RVector::Zero(2));
    const SpectralVerdict v = check_spectral_condition(spectrum(fs.A));
    EXPECT_TRUE(v.pass);
    EXPECT_NEAR(v.re_lambda2, -0.8, 1e-11);
    EXPECT_NEAR(v.min_entry_ratio, 1.0, 1e-12);
}

TEST(SpectralCondition, DecoupledSystemHasZeroEntry) {
    CMatrix a = CMatrix::Zero(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 1.0 - 1e-3;
    const SpectralVerdict v = check_spectral_condition(spectrum(a));
    EXPECT_FALSE(v.pass);
    ASSERT_FALSE(v.reasons.empty());
    EXPECT_EQ(v.reasons.front(), "zero eigenvector entry");
}

TEST(SpectralCondition, InflatedSetpointsDestabilizeSecondMode) {
    // Large reactive setpoints move both modes into the right half plane.
    const ReducedNetwork net = two_node();
    std::vector<Setpoints> sp(2);
    sp[0].q_star = 21.0;
    sp[1].q_star = 20.5;
    const FastSystem fs = build_fast_system(net, gains(2, 0.04, kPi / 2), sp, RVector::Zero(2));
    const Spectrum s = spectrum(fs.A);
    EXPECT_GT(s.re_lambda2(), 0.0);
    const SpectralVerdict v = check_spectral_condition(s);
    EXPECT_FALSE(v.pass);
    EXPECT_NE(std::find(v.reasons.begin(), v.reasons.end(), "unstable subdominant mode"), v.reasons.end());
}

TEST(ParametricCondition, ZeroReferencePasses) {
    const ParametricVerdict v = check_parametric_condition(two_node().Y, kPi / 2, CVector::Zero(2), 0.2, 0.1);
    EXPECT_TRUE(v.inequality_holds);
    EXPECT_TRUE(v.certified);
    EXPECT_EQ(v.lhs, 0.0);
}

TEST(ParametricCondition, TwoNodeArithmetic) {
    CVector ref(2);
    ref << cplx(0.0, -2.0), cplx(0.5, -1.0);
    const ParametricVerdict v = check_parametric_condition(two_node().Y, kPi / 2, ref, 0.2, 0.1);
    EXPECT_NEAR(v.lambda2, 20.0, 1e-12);
    EXPECT_NEAR(v.rhs, 0.5 * (1 + std::cos(0.2)) * 0.81 * 20.0, 1e-12);
    EXPECT_NEAR(v.rhs, 16.04, 5e-3);
    EXPECT_NEAR(v.lhs, 2.0, 1e-12);  // max Re(j ref) = max(2, 1)
    EXPECT_NEAR(v.margin, v.rhs - 2.0, 1e-12);
}

TEST(ParametricCondition, BoundRanges) {
    const CMatrix y = two_node().Y;
    EXPECT_THROW(check_parametric_condition(y, kPi / 2, CVector::Zero(2), kPi / 2, 0.1), ConfigError);
    EXPECT_THROW(check_parametric_condition(y, kPi / 2, CVector::Zero(2), 0.1, 0.0), ConfigError);
    EXPECT_THROW(check_parametric_condition(y, kPi / 2, CVector::Zero(2), 0.1, 1.0), ConfigError);
}

TEST(ParametricCondition, APosterioriBoundsRequiredForCertificate) {
    const ReducedNetwork net = reduce_to_converters(canon3());
    const FastSystem fs = build_fast_system(net, gains(3, 0.04 * kOmega0, kPi / 4), canon3_setpoints(), RVector::Zero(3));
    const Spectrum s = spectrum(fs.A);
    const ParametricVerdict tight = check_parametric_condition(net.Y, kPi / 4, fs.effective_reference, 1e-6, 1e-6, &s.phi1);
    EXPECT_TRUE(tight.a_posteriori_checked);
    EXPECT_FALSE(tight.a_posteriori_ok);
    EXPECT_FALSE(tight.certified);
}

TEST(ParametricCondition, ImpliesSpectralCondition) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> x(0.05, 0.4), ratio(0.1, 2.0), sp(-0.3, 0.3);
    int certified = 0;
    for (int trial = 0; trial < 100; ++trial) {
        NetworkModel m;
        const int n = 3 + trial % 4;
        for (int i = 0; i < n; ++i) m.nodes.push_back({std::to_string(i), NodeKind::converter, {}});
        for (int i = 1; i < n; ++i) {
            const double xi = x(rng);
            m.branches.push_back({static_cast<std::size_t>(i - 1), static_cast<std::size_t>(i), ratio(rng) * xi, xi});
        }
        const ReducedNetwork net = reduce_to_converters(m);
        std::vector<Setpoints> s(static_cast<std::size_t>(n));
        for (auto& e : s) e = {sp(rng), sp(rng), 1.0};
        const FastSystem fs = build_fast_system(net, gains(s.size(), 12.566, 1.2), s, RVector::Zero(n));
        const Spectrum spec = spectrum(fs.A);
        const SyncBounds b = extract_sync_bounds(spec.phi1);
        if (!(b.delta < kPi / 2 && b.gamma < 1.0 && b.gamma > 0.0)) continue;
        const ParametricVerdict v = check_parametric_condition(net.Y, 1.2, fs.effective_reference, b.delta, b.gamma, &spec.phi1);
        if (v.certified) {
            ++certified;
            EXPECT_TRUE(check_spectral_condition(spec).pass);
        }
    }
    EXPECT_GT(certified, 0);
}

TEST(SyncBounds, Extraction) {
    CVector phi(3);
    phi << 1.0, 0.8 * rotor(0.1), 0.9 * rotor(-0.05);
    const SyncBounds b = extract_sync_bounds(phi);
    EXPECT_NEAR(b.delta, 0.15, 1e-12);
    EXPECT_NEAR(b.gamma, 1.0 / 0.8 - 1.0, 1e-12);
}

TEST(ModalPrediction, EigenvectorStart) {
    const FastSystem fs = build_fast_system(reduce_to_converters(canon3()), gains(3, 12.566, kPi / 4), canon3_setpoints(),
                                            RVector::Zero(3));
    const Spectrum s = spectrum(fs.A);
    const ModalPrediction m = modal_prediction(s, s.phi1);
    EXPECT_NEAR(std::abs(m.z0 - 1.0), 0.0, 1e-12);
    EXPECT_FALSE(m.degenerate);
    const double t = 0.01;
    EXPECT_LT((m.response(t) - s.phi1 * std::exp(s.lambda1() * t)).norm(), 1e-12);
}

TEST(ModalPrediction, OrthogonalStartIsDegenerate) {
    const FastSystem fs = build_fast_system(reduce_to_converters(canon3()), gains(3, 12.566, kPi / 4), canon3_setpoints(),
                                            RVector::Zero(3));
    const Spectrum s = spectrum(fs.A);
    CVector v0(3);
    v0 << cplx(0.3, 1.0), cplx(-0.5, 0.2), 0.0;
    // Remove the psi1 component: psi1^T phi1 = 1.
    v0 -= s.phi1 * cplx(s.psi1.transpose() * v0);
    EXPECT_TRUE(modal_prediction(s, v0).degenerate);
}

TEST(EigenspaceDistance, Projector) {
    CVector phi(2);
    phi << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    EXPECT_NEAR(eigenspace_distance(cplx(2.0, 1.0) * phi, phi), 0.0, 1e-15);
    CVector orth(2);
    orth << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    EXPECT_NEAR(eigenspace_distance(orth, phi), 0.5, 1e-15);
}
