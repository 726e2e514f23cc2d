#pragma once

// Complex-coefficient polynomials and rational transfer functions in s,
// coefficients stored in ascending powers.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "errors.hpp"
#include "linalg.hpp"

namespace cfsync {

class Polynomial {
public:
    Polynomial() = default;
    Polynomial(std::initializer_list<cplx> c) : c_(c) { trim_exact(); }
    explicit Polynomial(std::vector<cplx> c) : c_(std::move(c)) { trim_exact(); }

    static Polynomial constant(cplx a) { return Polynomial({a}); }

    // lead * prod (s - r)
    static Polynomial from_roots(const std::vector<cplx>& roots, cplx lead) {
        std::vector<cplx> c{lead};
        for (const cplx& r : roots) {
            std::vector<cplx> next(c.size() + 1, cplx(0.0, 0.0));
            for (std::size_t i = 0; i < c.size(); ++i) {
                next[i + 1] += c[i];
                next[i] -= r * c[i];
            }
            c = std::move(next);
        }
        return Polynomial(std::move(c));
    }

    const std::vector<cplx>& coefficients() const { return c_; }
    bool is_zero() const { return c_.empty(); }
    int degree() const { return static_cast<int>(c_.size()) - 1; }  // -1 for the zero polynomial
    cplx leading() const { return c_.empty() ? cplx(0.0, 0.0) : c_.back(); }
    cplx operator[](std::size_t i) const { return i < c_.size() ? c_[i] : cplx(0.0, 0.0); }

    cplx operator()(cplx s) const {
        cplx acc(0.0, 0.0);
        for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * s + *it;
        return acc;
    }

    cplx derivative_at(cplx s) const {
        cplx acc(0.0, 0.0);
        for (std::size_t i = c_.size(); i-- > 1;) acc = acc * s + static_cast<double>(i) * c_[i];
        return acc;
    }

    // Drops leading coefficients below rel_tol relative to the largest term
    // |c_k| radius^k.
    Polynomial trimmed(double rel_tol, double radius = 1.0) const {
        double peak = 0.0;
        for (std::size_t k = 0; k < c_.size(); ++k) peak = std::max(peak, std::abs(c_[k]) * std::pow(radius, k));
        std::vector<cplx> c = c_;
        while (!c.empty() && std::abs(c.back()) * std::pow(radius, c.size() - 1) <= rel_tol * peak) c.pop_back();
        return Polynomial(std::move(c));
    }

    // Drops the imaginary parts of all coefficients.
    Polynomial real_part() const {
        std::vector<cplx> c;
        c.reserve(c_.size());
        for (const cplx& a : c_) c.emplace_back(a.real(), 0.0);
        return Polynomial(std::move(c));
    }

    // Roots from the companion matrix, polished by Newton steps.
    std::vector<cplx> roots() const {
        const int n = degree();
        if (n <= 0) return {};
        CMatrix comp = CMatrix::Zero(n, n);
        for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
        for (int i = 0; i < n; ++i) comp(i, n - 1) = -c_[static_cast<std::size_t>(i)] / leading();
        Eigen::ComplexEigenSolver<CMatrix> es(comp, false);
        std::vector<cplx> r(es.eigenvalues().data(), es.eigenvalues().data() + n);
        for (cplx& z : r) {
            for (int it = 0; it < 3; ++it) {
                const cplx d = derivative_at(z);
                if (d == cplx(0.0, 0.0)) break;
                const cplx step = (*this)(z) / d;
                const cplx candidate = z - step;
                if (!(std::abs((*this)(candidate)) < std::abs((*this)(z)))) break;
                z = candidate;
            }
        }
        return r;
    }

    friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
        std::vector<cplx> c(std::max(a.c_.size(), b.c_.size()), cplx(0.0, 0.0));
        for (std::size_t i = 0; i < a.c_.size(); ++i) c[i] += a.c_[i];
        for (std::size_t i = 0; i < b.c_.size(); ++i) c[i] += b.c_[i];
        return Polynomial(std::move(c));
    }
    friend Polynomial operator-(const Polynomial& a) { return a * cplx(-1.0, 0.0); }
    friend Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + (-b); }
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        if (a.is_zero() || b.is_zero()) return {};
        std::vector<cplx> c(a.c_.size() + b.c_.size() - 1, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < a.c_.size(); ++i) {
            for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
        }
        return Polynomial(std::move(c));
    }
    friend Polynomial operator*(const Polynomial& a, cplx k) {
        std::vector<cplx> c = a.c_;
        for (auto& x : c) x *= k;
        return Polynomial(std::move(c));
    }

private:
    void trim_exact() {
        while (!c_.empty() && c_.back() == cplx(0.0, 0.0)) c_.pop_back();
    }

    std::vector<cplx> c_;
};

class RationalTF {
public:
    RationalTF() : num_(), den_({cplx(1.0, 0.0)}) {}
    RationalTF(Polynomial num, Polynomial den) : num_(std::move(num)), den_(std::move(den)) {
        if (den_.is_zero()) throw NumericalError("rational function with zero denominator (degenerate network)");
        normalize();
    }

    static RationalTF constant(cplx a) { return {Polynomial::constant(a), Polynomial::constant(1.0)}; }
    static RationalTF zero() { return {}; }

    const Polynomial& numerator() const { return num_; }
    const Polynomial& denominator() const { return den_; }
    bool is_zero() const { return num_.is_zero(); }

    cplx operator()(cplx s) const {
        if (std::abs(s) <= 1.0) return num_(s) / den_(s);
        // Reversed evaluation keeps large |s| well scaled.
        const cplx w = 1.0 / s;
        auto reversed = [w](const Polynomial& p) {
            cplx acc(0.0, 0.0);
            for (const cplx& c : p.coefficients()) acc = acc * w + c;
            return acc;
        };
        const int shift = num_.degree() - den_.degree();
        if (num_.is_zero()) return cplx(0.0, 0.0);
        return reversed(num_) / reversed(den_) * std::pow(s, shift);
    }

    std::vector<cplx> zeros() const { return num_.roots(); }
    std::vector<cplx> poles() const { return den_.roots(); }
    int relative_degree() const { return num_.is_zero() ? 0 : den_.degree() - num_.degree(); }
    bool proper() const { return relative_degree() >= 0; }

    // Cancels numerator/denominator root pairs closer than tol * max(1, |root|).
    RationalTF reduced(double tol = 1e-6) const {
        if (num_.is_zero()) return zero();
        std::vector<cplx> z = zeros();
        std::vector<cplx> p = poles();
        std::vector<bool> used(p.size(), false);
        std::vector<cplx> keep_z;
        bool cancelled = false;
        for (const cplx& zi : z) {
            std::size_t best = p.size();
            double best_d = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                if (used[j]) continue;
                const double d = std::abs(zi - p[j]);
                if (best == p.size() || d < best_d) {
                    best = j;
                    best_d = d;
                }
            }
            if (best < p.size() && best_d <= tol * std::max(1.0, std::abs(p[best]))) {
                used[best] = true;
                cancelled = true;
            } else {
                keep_z.push_back(zi);
            }
        }
        if (!cancelled) return *this;
        std::vector<cplx> keep_p;
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (!used[j]) keep_p.push_back(p[j]);
        }
        return {Polynomial::from_roots(keep_z, num_.leading()), Polynomial::from_roots(keep_p, den_.leading())};
    }

    RationalTF real_part() const { return {num_.real_part(), den_.real_part()}; }

    friend RationalTF operator+(const RationalTF& a, const RationalTF& b) {
        return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_};
    }
    friend RationalTF operator-(const RationalTF& a) { return {-a.num_, a.den_}; }
    friend RationalTF operator-(const RationalTF& a, const RationalTF& b) { return a + (-b); }
    friend RationalTF operator*(const RationalTF& a, const RationalTF& b) {
        return {a.num_ * b.num_, a.den_ * b.den_};
    }
    friend RationalTF operator/(const RationalTF& a, const RationalTF& b) {
        if (b.is_zero()) throw NumericalError("division by the zero rational function");
        return {a.num_ * b.den_, a.den_ * b.num_};
    }

private:
    // Monic denominator.
    void normalize() {
        const cplx lead = den_.leading();
        num_ = num_ * (1.0 / lead);
        den_ = den_ * (1.0 / lead);
    }

    Polynomial num_;
    Polynomial den_;
};

// 2x2 matrix of real-coefficient rational functions.
struct TFMatrix2x2 {
    std::array<RationalTF, 4> e;  // row-major

    RationalTF& operator()(int i, int j) { return e[static_cast<std::size_t>(2 * i + j)]; }
    const RationalTF& operator()(int i, int j) const { return e[static_cast<std::size_t>(2 * i + j)]; }

    Eigen::Matrix2cd operator()(cplx s) const {
        Eigen::Matrix2cd m;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) m(i, j) = (*this)(i, j)(s);
        }
        return m;
    }

    std::vector<cplx> poles() const {
        std::vector<cplx> out;
        for (const auto& entry : e) {
            if (entry.is_zero()) continue;
            for (const cplx& p : entry.poles()) out.push_back(p);
        }
        return out;
    }
};

// Coefficients of the polynomial s -> det(m(s)) of degree at most
// degree_bound, by interpolation on a circle of the given radius.
inline Polynomial determinant_polynomial(const std::function<CMatrix(cplx)>& m, int degree_bound, double radius) {
    if (degree_bound < 0) throw NumericalError("negative degree bound");
    const int count = degree_bound + 1;
    std::vector<cplx> values(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        const cplx s = radius * rotor(2.0 * kPi * j / count);
        const CMatrix mat = m(s);
        values[static_cast<std::size_t>(j)] = mat.size() == 0 ? cplx(1.0, 0.0) : mat.partialPivLu().determinant();
    }
    std::vector<cplx> c(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        cplx acc(0.0, 0.0);
        for (int j = 0; j < count; ++j) acc += values[static_cast<std::size_t>(j)] * rotor(-2.0 * kPi * j * k / count);
        c[static_cast<std::size_t>(k)] = acc / static_cast<double>(count) / std::pow(radius, k);
    }
    return Polynomial(std::move(c)).trimmed(1e-10, radius);
}

}  // namespace cfsync
