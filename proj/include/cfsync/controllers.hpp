#pragma once

// Converter control laws (dVOC and its variants) as right-hand sides, and the
// complex droop law they are equivalent to.

#include <cmath>
#include <string>

#include "core_types.hpp"
#include "errors.hpp"
#include "linalg.hpp"

namespace cfsync {

// Gains of one converter. `eta` is the gain as it appears in the equations
// (units of 1/s per unit admittance); see DvocParams::per_unit.
struct DvocParams {
    double eta = 0.0;
    double alpha = 0.0;   // 0 disables voltage regulation
    double tau = 0.005;   // s
    double phi = kPi / 4; // rad, in [0, pi/2]
    double omega0 = 2.0 * kPi * 50.0;

    // Gains given in per unit of the base angular frequency.
    static DvocParams per_unit(double eta_pu, double alpha, double tau, double phi, double omega0) {
        return {eta_pu * omega0, alpha, tau, phi, omega0};
    }

    cplx rotation() const { return rotor(phi); }

    void validate() const {
        if (!(eta > 0.0)) throw ConfigError("dVOC gain eta must be > 0");
        if (!(alpha >= 0.0)) throw ConfigError("dVOC gain alpha must be >= 0");
        if (!(tau > 0.0)) throw ConfigError("filter time constant tau must be > 0");
        if (!(phi >= 0.0 && phi <= kPi / 2)) throw ConfigError("rotation phi must lie in [0, pi/2]");
        if (!std::isfinite(omega0)) throw ConfigError("omega0 must be finite");
    }
};

struct Setpoints {
    double p_star = 0.0;
    double q_star = 0.0;
    double v_star = 1.0;

    // Normalized power setpoint (p* - j q*) / v*^2.
    cplx conj_sigma_star() const { return cplx(p_star, -q_star) / (v_star * v_star); }
    double u_star() const { return std::log(v_star); }

    void validate() const {
        if (!(v_star > 0.0)) throw ConfigError("voltage setpoint v_star must be > 0");
    }
};

enum class ControllerVariant { classic, core, log, filtered };

inline const char* to_string(ControllerVariant v) {
    switch (v) {
        case ControllerVariant::classic: return "classic";
        case ControllerVariant::core: return "core";
        case ControllerVariant::log: return "log";
        case ControllerVariant::filtered: return "filtered";
    }
    return "?";
}

struct ConverterState {
    cplx v;
    double u_f = 0.0;  // filtered voltage logarithm; inert unless variant is filtered
};

struct ConverterRate {
    cplx v_dot;
    double u_f_dot = 0.0;
};

// `conj_sigma_star` is the (possibly shunt-adjusted) normalized power setpoint;
// `setpoints` supplies v* and u*.
inline ConverterRate converter_rhs(ControllerVariant variant, const ConverterState& state, cplx i_o,
                                   const DvocParams& params, const Setpoints& setpoints, cplx conj_sigma_star) {
    const cplx v = state.v;
    const cplx core = kJ * params.omega0 * v + params.eta * params.rotation() * (conj_sigma_star * v - i_o);
    switch (variant) {
        case ControllerVariant::core:
            return {core, 0.0};
        case ControllerVariant::classic:
            return {core + params.eta * params.alpha * (setpoints.v_star - std::abs(v)) / setpoints.v_star * v, 0.0};
        case ControllerVariant::log: {
            const double mag = std::abs(v);
            if (!(mag > 0.0)) throw DomainError("log dVOC undefined at zero voltage");
            return {core + params.eta * params.alpha * (setpoints.u_star() - std::log(mag)) * v, 0.0};
        }
        case ControllerVariant::filtered: {
            const double mag = std::abs(v);
            if (!(mag > 0.0)) throw DomainError("filtered dVOC undefined at zero voltage");
            return {core + params.eta * params.alpha * (setpoints.u_star() - state.u_f) * v,
                    (std::log(mag) - state.u_f) / params.tau};
        }
    }
    throw ConfigError("unknown controller variant");
}

inline ConverterRate converter_rhs(ControllerVariant variant, const ConverterState& state, cplx i_o,
                                   const DvocParams& params, const Setpoints& setpoints) {
    return converter_rhs(variant, state, i_o, params, setpoints, setpoints.conj_sigma_star());
}

// Complex droop law: d(angle)/dt = j omega0 + eta e^{j phi} (conj_sigma* - conj_sigma).
inline ComplexFrequency complex_droop_rhs(const ComplexAngle& /*angle*/, cplx conj_sigma, const DvocParams& params,
                                          const Setpoints& setpoints) {
    const cplx rate =
        kJ * params.omega0 + params.eta * params.rotation() * (setpoints.conj_sigma_star() - conj_sigma);
    return ComplexFrequency::from(rate);
}

// |core(v)/v - droop(angle(v), i_o/v)|; zero up to rounding for every v != 0.
inline double verify_droop_equivalence(cplx v, cplx i_o, const DvocParams& params, const Setpoints& setpoints) {
    if (v == cplx(0.0, 0.0)) throw DomainError("droop equivalence undefined at zero voltage");
    const cplx via_core = converter_rhs(ControllerVariant::core, {v, 0.0}, i_o, params, setpoints).v_dot / v;
    const cplx via_droop = complex_droop_rhs(angle_from_voltage(v), i_o / v, params, setpoints).value();
    return std::abs(via_core - via_droop);
}

}  // namespace cfsync
