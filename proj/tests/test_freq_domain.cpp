#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include <cfsync/fast_analysis.hpp>
#include <cfsync/freq_domain.hpp>

using namespace cfsync;

namespace {

constexpr double kOmega0 = 2 * kPi * 50;

std::vector<Setpoints> canon3_setpoints() { return {{0.6, 0.4, 1.0}, {0.3, 0.1, 1.0}, {0.2, 0.2, 1.0}}; }

NyquistCurve circle(cplx center, double radius, int turns, int points = 400) {
    NyquistCurve c;
    for (int i = 0; i < points * std::abs(turns); ++i) {
        const double a = (turns > 0 ? 1.0 : -1.0) * 2.0 * kPi * i / points;
        c.s.push_back(0.0);
        c.image.push_back(center + radius * rotor(a));
        c.on_axis.push_back(1);
    }
    return c;
}

// Tree plus an optional chord; some branches capacitive so G' can be indefinite.
NetworkModel random_network(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> r(0.005, 0.3), x(0.05, 0.5), coin(0.0, 1.0);
    auto reactance = [&] { return coin(rng) < 0.3 ? -x(rng) : x(rng); };
    NetworkModel m;
    for (std::size_t i = 0; i < n; ++i) m.nodes.push_back({std::to_string(i + 1), NodeKind::converter, {}});
    for (std::size_t i = 1; i < n; ++i) {
        m.branches.push_back({std::uniform_int_distribution<std::size_t>(0, i - 1)(rng), i, r(rng), reactance()});
    }
    if (n > 2 && coin(rng) < 0.7) m.branches.push_back({0, n - 1, r(rng), reactance()});
    return m;
}

}  // namespace

TEST(ConverterAdmittance, Examples) {
    const DvocParams p{0.04 * kOmega0, 5.0, 0.005, kPi / 4, kOmega0};
    const cplx ref(0.6, -0.4);
    const RationalTF y = converter_admittance_fast(p, ref);
    // Static limit: at the nominal frequency only the setpoint remains.
    EXPECT_LT(std::abs(y(kJ * kOmega0) + ref), 1e-12);
    const cplx s(0.0, 400.0);
    EXPECT_LT(std::abs(y(s) - ((s - kJ * kOmega0) * rotor(-kPi / 4) / p.eta - ref)), 1e-12);
    DvocParams bad = p;
    bad.eta = 0.0;
    EXPECT_THROW(converter_admittance_fast(bad, ref), ConfigError);
}

TEST(DynamicNetwork, RlMatchesStaticAtNominalFrequency) {
    const NetworkModel m = canon3();
    const DynamicNetwork rl = dynamic_network(m, kOmega0, BranchDynamics::rl);
    const DynamicNetwork st = dynamic_network(m, kOmega0, BranchDynamics::static_phasor);
    EXPECT_LT(max_abs(rl.admittance(kJ * kOmega0) - build_admittance(m)), 1e-10);
    EXPECT_LT(max_abs(st.admittance(cplx(3.0, 77.0)) - build_admittance(m)), 1e-12);
    NetworkModel cap = m;
    cap.branches[0].x = -0.1;
    EXPECT_THROW(dynamic_network(cap, kOmega0, BranchDynamics::rl), UnsupportedConfig);
}

TEST(AggregatedAdmittance, SeriesLaw) {
    NetworkModel m;
    m.nodes = {{"a", NodeKind::converter, {}}, {"b", NodeKind::load, {}}, {"c", NodeKind::converter, {}}};
    m.branches = {{0, 1, 0.02, 0.1}, {1, 2, 0.05, 0.3}};
    const DynamicNetwork net = dynamic_network(m, kOmega0, BranchDynamics::rl);
    const cplx c(0.8, -0.3);
    const std::vector<RationalTF> closures{RationalTF::zero(), RationalTF::zero(), RationalTF::constant(c)};
    const RationalTF y = aggregated_admittance_fast(net, closures, 0);
    for (cplx s : {cplx(0, 10), cplx(0, kOmega0), cplx(-5, 1e3), cplx(2, -50)}) {
        const cplx z = net.branches[0].impedance(s) + net.branches[1].impedance(s) + 1.0 / c;
        EXPECT_LT(std::abs(y(s) - 1.0 / z), 1e-9 * std::abs(1.0 / z));
        EXPECT_LT(std::abs(aggregated_admittance_value(net, closures, 0, s) - 1.0 / z), 1e-12 * std::abs(1.0 / z));
    }
}

TEST(AggregatedAdmittance, RationalModelMatchesDirectEvaluation) {
    const NetworkModel m = canon3();
    const auto params = std::vector<DvocParams>(3, DvocParams::per_unit(0.005, 5.0, 0.005, kPi / 4, kOmega0));
    CVector ref(3);
    for (Eigen::Index k = 0; k < 3; ++k) ref(k) = canon3_setpoints()[static_cast<std::size_t>(k)].conj_sigma_star();
    for (auto kind : {BranchDynamics::static_phasor, BranchDynamics::rl}) {
        const DynamicNetwork net = dynamic_network(m, kOmega0, kind);
        const auto closures = fast_closures(params, ref);
        for (std::size_t k = 0; k < 3; ++k) {
            const RationalTF y = aggregated_admittance_fast(net, closures, k);
            for (double w : {0.0, 100.0, kOmega0, 1e4}) {
                const cplx direct = aggregated_admittance_value(net, closures, k, kJ * w);
                EXPECT_LT(std::abs(y(kJ * w) - direct), 1e-7 * std::max(1.0, std::abs(direct)));
            }
        }
    }
}

TEST(WindingNumber, Circles) {
    EXPECT_EQ(winding_number(circle(0.0, 1.0, 1), 0.0), 1);
    EXPECT_EQ(winding_number(circle(3.0, 1.0, 1), 0.0), 0);
    EXPECT_EQ(winding_number(circle(0.0, 1.0, 2), 0.0), 2);
    EXPECT_EQ(winding_number(circle(0.0, 1.0, -1), 0.0), -1);
    EXPECT_THROW(winding_number(circle(1.0, 1.0, 1), 0.0), PreconditionError);
}

TEST(CriterionSync, TextbookUnstableOpenLoop) {
    // l = 2 / (s - 1): one unstable open-loop pole, encircled once.
    const RationalTF l(Polynomial{2.0}, Polynomial{-1.0, 1.0});
    const SyncCriterion c = criterion_sync(l);
    EXPECT_EQ(c.P1, 1);
    EXPECT_EQ(c.N1, 1);
    EXPECT_EQ(c.Z1, 0);
    EXPECT_TRUE(c.pass);
    // l = 0.5 / (s - 1) - 0.5 / (s - 2): two unstable poles, closed loop keeps both.
    const RationalTF k = RationalTF(Polynomial{0.5}, Polynomial{-1.0, 1.0}) + RationalTF(Polynomial{-0.5}, Polynomial{-2.0, 1.0});
    const SyncCriterion d = criterion_sync(k);
    EXPECT_EQ(d.P1, 2);
    EXPECT_EQ(d.Z1, 2);
    EXPECT_FALSE(d.pass);
}

TEST(CriterionSync, AgreesWithStateSpaceOverEtaSweep) {
    const NetworkModel m = canon3();
    const DynamicNetwork net = dynamic_network(m, kOmega0, BranchDynamics::rl);
    CVector ref(3);
    for (Eigen::Index k = 0; k < 3; ++k) ref(k) = canon3_setpoints()[static_cast<std::size_t>(k)].conj_sigma_star();
    int passes = 0, fails = 0;
    for (double eta_pu : {0.001, 0.002, 0.003, 0.004, 0.005, 0.01, 0.015, 0.02, 0.04}) {
        const auto params = std::vector<DvocParams>(3, DvocParams::per_unit(eta_pu, 5.0, 0.005, kPi / 4, kOmega0));
        const CMatrix a = combined_state_matrix(net, params, ref);
        const CVector ev = Eigen::ComplexEigenSolver<CMatrix>(a, false).eigenvalues();
        double margin = 1e300;
        for (Eigen::Index i = 0; i < ev.size(); ++i) margin = std::min(margin, std::abs(ev(i).real()));
        if (margin < 1e-6) continue;
        const int unstable = unstable_mode_count(a);
        for (std::size_t k = 0; k < 3; ++k) {
            const SyncCriterion c = criterion_sync(sync_return_ratio(net, params, ref, k));
            EXPECT_EQ(c.Z1, unstable) << "eta_pu = " << eta_pu << ", node " << k;
            EXPECT_EQ(c.pass, unstable <= 1);
        }
        (unstable <= 1 ? passes : fails) += 1;
    }
    EXPECT_GT(passes, 0);
    EXPECT_GT(fails, 0);
}

TEST(DcAdmittance, EquivalentAtZeroFrequency) {
    const SlowSystem sys = build_slow_system(reduce_to_converters(canon3()),
                                             std::vector<DvocParams>(3, DvocParams::per_unit(0.04, 5.0, 0.005, kPi / 4, kOmega0)),
                                             canon3_setpoints());
    const DcAdmittancePair pair = dc_admittance_pair(sys, 0);
    const Eigen::Matrix2cd y0 = pair.Y_equ_dc(cplx(0.0, 0.0));
    EXPECT_NEAR(y0(0, 0).real(), 5.0, 1e-12);
    EXPECT_EQ(std::abs(y0(1, 1)), 0.0);
    EXPECT_EQ(std::abs(y0(0, 1)) + std::abs(y0(1, 0)), 0.0);
    for (double w : {0.5, 20.0, 700.0}) {
        const Eigen::Matrix2cd direct = dc_aggregated_value(sys, 0, kJ * w);
        EXPECT_LT((pair.Y_agg_dc(kJ * w) - direct).norm(), 1e-7 * std::max(1.0, direct.norm()));
    }
}

TEST(CriterionVoltage, AgreesWithErrorSpectrumOnRandomConfigs) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> eta(0.005, 0.2), alpha(0.05, 30.0), tau(1e-3, 0.2), phi(0.05, kPi / 2);
    int evaluated = 0, unstable = 0, trials = 0;
    while ((evaluated < 100 || unstable < 3) && trials < 2000) {
        ++trials;
        const NetworkModel m = random_network(rng, 2 + static_cast<std::size_t>(trials % 4));
        const auto params = std::vector<DvocParams>(m.size(), DvocParams::per_unit(eta(rng), alpha(rng), tau(rng), phi(rng), kOmega0));
        const SlowSystem sys = build_slow_system(reduce_to_converters(m), params, std::vector<Setpoints>(m.size()));
        const ErrorSpectrum es = error_spectrum(sys);
        if (std::abs(es.max_re) < 1e-6 * std::max(1.0, sys.eta)) continue;
        VoltageCriterion v;
        try {
            v = criterion_voltage(voltage_return_ratio(dc_admittance_pair(sys, 0)));
        } catch (const PreconditionError&) {
            continue;
        }
        ++evaluated;
        unstable += es.stable ? 0 : 1;
        EXPECT_EQ(v.pass, es.stable) << "trial " << trials << ", max_re = " << es.max_re << ", N2 = " << v.N2;
    }
    EXPECT_GE(evaluated, 100);
    EXPECT_GE(unstable, 3);
}

TEST(CriterionVoltage, DecoupledSingleNode) {
    SlowSystem sys;
    sys.Gp = RMatrix::Zero(1, 1);
    sys.Bp = RMatrix::Zero(1, 1);
    sys.alpha = 5.0;
    sys.tau = 0.005;
    sys.eta = 0.04 * kOmega0;
    const VoltageCriterion v = criterion_voltage(voltage_return_ratio(dc_admittance_pair(sys, 0)));
    EXPECT_EQ(v.N2, 0);
    EXPECT_TRUE(v.pass);
}

TEST(CriterionVoltage, UnstableOpenLoopIsAPreconditionError) {
    TFMatrix2x2 l;
    l(0, 0) = RationalTF(Polynomial{1.0}, Polynomial{-1.0, 1.0});
    EXPECT_THROW(criterion_voltage(l), PreconditionError);
}

TEST(NyquistCsv, AxisSamplesAscending) {
    const RationalTF l(Polynomial{2.0}, Polynomial{1.0, 1.0});
    const SyncCriterion c = criterion_sync(l);
    std::ostringstream os;
    write_nyquist_csv(os, c.curve);
    std::istringstream in(os.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "omega,re,im");
    double prev = -1e300;
    int rows = 0;
    while (std::getline(in, line)) {
        const double w = std::stod(line.substr(0, line.find(',')));
        EXPECT_GT(w, prev);
        prev = w;
        ++rows;
    }
    EXPECT_GT(rows, 100);
}
