#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <cfsync/rational.hpp>

using namespace cfsync;

namespace {

double nearest(const std::vector<cplx>& set, cplx z) {
    double best = 1e300;
    for (const cplx& x : set) best = std::min(best, std::abs(x - z));
    return best;
}

}  // namespace

TEST(Polynomial, ArithmeticAndEvaluation) {
    const Polynomial p{1.0, 2.0};        // 1 + 2s
    const Polynomial q{cplx(0, 1), 0.0, 1.0};  // j + s^2
    EXPECT_EQ((p * q).degree(), 3);
    const cplx s(0.3, -1.7);
    EXPECT_LT(std::abs((p * q)(s) - p(s) * q(s)), 1e-14);
    EXPECT_LT(std::abs((p + q)(s) - (p(s) + q(s))), 1e-14);
    EXPECT_LT(std::abs((p - q)(s) - (p(s) - q(s))), 1e-14);
    EXPECT_TRUE((p - p).is_zero());
    EXPECT_EQ((p - p).degree(), -1);
    EXPECT_LT(std::abs(q.derivative_at(s) - 2.0 * s), 1e-14);
}

TEST(Polynomial, RootsRoundTrip) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 100.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<cplx> r;
        for (int i = 0; i < 6; ++i) r.emplace_back(nd(rng), nd(rng));
        const Polynomial p = Polynomial::from_roots(r, cplx(2.0, -1.0));
        const auto found = p.roots();
        ASSERT_EQ(found.size(), r.size());
        for (const cplx& z : r) EXPECT_LT(nearest(found, z), 1e-8 * std::max(1.0, std::abs(z)));
    }
}

TEST(Polynomial, TrimmedDropsNegligibleLeadingTerms) {
    const Polynomial p{1.0, 1.0, 1e-14};
    EXPECT_EQ(p.trimmed(1e-10).degree(), 1);
    EXPECT_EQ(p.trimmed(1e-16).degree(), 2);
    const Polynomial r = Polynomial{cplx(1, 2), cplx(0, 3)}.real_part();
    EXPECT_EQ(r.degree(), 0);
    EXPECT_EQ(r[0], cplx(1, 0));
}

TEST(RationalTF, EvaluationAndAlgebra) {
    const RationalTF a(Polynomial{1.0}, Polynomial{2.0, 1.0});  // 1/(s+2)
    const RationalTF b(Polynomial{0.0, 3.0}, Polynomial{5.0, 1.0});  // 3s/(s+5)
    for (cplx s : {cplx(0, 1), cplx(0, 314), cplx(-1, 1e5), cplx(0.1, 0)}) {
        const cplx va = 1.0 / (s + 2.0), vb = 3.0 * s / (s + 5.0);
        EXPECT_LT(std::abs(a(s) - va), 1e-13 * std::abs(va));
        EXPECT_LT(std::abs((a + b)(s) - (va + vb)), 1e-12 * std::abs(va + vb));
        EXPECT_LT(std::abs((a * b)(s) - va * vb), 1e-12 * std::abs(va * vb));
        EXPECT_LT(std::abs((a / b)(s) - va / vb), 1e-12 * std::abs(va / vb));
    }
    EXPECT_EQ(a.relative_degree(), 1);
    EXPECT_TRUE(a.proper());
    EXPECT_THROW(RationalTF(Polynomial{1.0}, Polynomial{}), NumericalError);
    EXPECT_THROW(a / RationalTF::zero(), NumericalError);
}

TEST(RationalTF, ReducedCancelsCommonFactors) {
    // (s+1)(s+3) / ((s+1)(s+2)(s+4)) -> (s+3)/((s+2)(s+4))
    const RationalTF f(Polynomial::from_roots({-1.0, -3.0}, 2.0), Polynomial::from_roots({-1.0, -2.0, -4.0}, 1.0));
    const RationalTF g = f.reduced();
    EXPECT_EQ(g.numerator().degree(), 1);
    EXPECT_EQ(g.denominator().degree(), 2);
    EXPECT_LT(nearest(g.poles(), -2.0), 1e-10);
    EXPECT_LT(nearest(g.poles(), -4.0), 1e-10);
    EXPECT_GT(nearest(g.poles(), -1.0), 0.5);
    for (cplx s : {cplx(0, 1), cplx(2, 3)}) EXPECT_LT(std::abs(g(s) - f(s)), 1e-10 * std::abs(f(s)));
    const RationalTF h(Polynomial::from_roots({-1.0}, 1.0), Polynomial::from_roots({-2.0}, 1.0));
    EXPECT_EQ(h.reduced().denominator().degree(), 1);
}

TEST(DeterminantPolynomial, MatchesCharacteristicPolynomial) {
    CMatrix a(3, 3);
    a << cplx(-1, 2), 0.5, 0.0, 0.3, cplx(-2, -1), 1.0, 0.0, 0.2, cplx(-0.5, 0.1);
    const auto m = [&a](cplx s) -> CMatrix { return s * CMatrix::Identity(3, 3) - a; };
    const Polynomial p = determinant_polynomial(m, 6, 3.0);
    EXPECT_EQ(p.degree(), 3);
    EXPECT_LT(std::abs(p.leading() - 1.0), 1e-10);
    Eigen::ComplexEigenSolver<CMatrix> es(a);
    const auto roots = p.roots();
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_LT(nearest(roots, es.eigenvalues()(i)), 1e-8);
    EXPECT_THROW(determinant_polynomial(m, -1, 1.0), NumericalError);
}
