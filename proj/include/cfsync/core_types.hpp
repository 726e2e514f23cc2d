#pragma once

// Complex-angle / complex-frequency coordinates.
//
// A voltage phasor v = |v| e^{j theta} is represented by its complex angle
// u + j theta with u = ln|v|; the time derivative of the complex angle is the
// complex frequency eps + j omega (rocov and angular frequency).

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace cfsync {

// Stationary-frame voltage phasor in per unit.
using ComplexVoltage = cplx;

struct ComplexAngle {
    double u = 0.0;      // ln of the per-unit amplitude
    double theta = 0.0;  // rad, continuous (never wrapped)

    cplx value() const { return {u, theta}; }
    static ComplexAngle from(cplx z) { return {z.real(), z.imag()}; }
};

struct ComplexFrequency {
    double eps = 0.0;    // 1/s, rocov
    double omega = 0.0;  // rad/s

    cplx value() const { return {eps, omega}; }
    static ComplexFrequency from(cplx z) { return {z.real(), z.imag()}; }
};

// Brings `angle` onto the branch nearest to `reference`.
inline double unwrap_near(double angle, double reference) {
    const double two_pi = 2.0 * kPi;
    return angle + two_pi * std::round((reference - angle) / two_pi);
}

inline ComplexAngle angle_from_voltage(ComplexVoltage v, std::optional<ComplexAngle> prev = std::nullopt) {
    const double mag = std::abs(v);
    if (!(mag > 0.0) || !std::isfinite(mag)) {
        throw DomainError("complex angle undefined for zero or non-finite voltage");
    }
    double theta = std::arg(v);
    if (prev) {
        theta = unwrap_near(theta, prev->theta);
    }
    return {std::log(mag), theta};
}

inline ComplexVoltage voltage_from_angle(const ComplexAngle& angle) {
    return std::exp(angle.u) * cplx(std::cos(angle.theta), std::sin(angle.theta));
}

// Complex frequency from uniformly sampled voltages: second-order central
// differences of the unwrapped complex angle, second-order one-sided at the ends.
inline std::vector<ComplexFrequency> estimate_complex_frequency(std::span<const ComplexVoltage> samples, double dt) {
    if (samples.size() < 3) {
        throw ConfigError("complex-frequency estimation needs at least 3 samples");
    }
    if (!(dt > 0.0)) {
        throw ConfigError("complex-frequency estimation needs dt > 0");
    }
    std::vector<cplx> angle(samples.size());
    std::optional<ComplexAngle> prev;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ComplexAngle a = angle_from_voltage(samples[i], prev);
        angle[i] = a.value();
        prev = a;
    }

    const std::size_t n = samples.size();
    std::vector<ComplexFrequency> out(n);
    const double inv = 1.0 / (2.0 * dt);
    out[0] = ComplexFrequency::from((-3.0 * angle[0] + 4.0 * angle[1] - angle[2]) * inv);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        out[i] = ComplexFrequency::from((angle[i + 1] - angle[i - 1]) * inv);
    }
    out[n - 1] = ComplexFrequency::from((3.0 * angle[n - 1] - 4.0 * angle[n - 2] + angle[n - 3]) * inv);
    return out;
}

}  // namespace cfsync
