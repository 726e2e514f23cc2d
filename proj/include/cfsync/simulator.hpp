#pragma once

// Fixed-step RK4 integration of the closed-loop models: nonlinear dVOC
// (filtered or log), the fast linear system, the slow linearly approximated
// system, and their versions forced by constant generator voltages.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "controllers.hpp"
#include "core_types.hpp"
#include "errors.hpp"
#include "fast_analysis.hpp"
#include "linalg.hpp"
#include "network.hpp"

namespace cfsync {

enum class ModelKind { nonlinear_filtered, nonlinear_log, fast_linear, slow_linear, fast_aug, slow_aug };

inline const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::nonlinear_filtered: return "nonlinear_filtered";
        case ModelKind::nonlinear_log: return "nonlinear_log";
        case ModelKind::fast_linear: return "fast_linear";
        case ModelKind::slow_linear: return "slow_linear";
        case ModelKind::fast_aug: return "fast_aug";
        case ModelKind::slow_aug: return "slow_aug";
    }
    return "?";
}

inline bool is_augmented(ModelKind k) { return k == ModelKind::fast_aug || k == ModelKind::slow_aug; }
inline bool is_angle_model(ModelKind k) { return k == ModelKind::slow_linear || k == ModelKind::slow_aug; }
inline bool is_fast_model(ModelKind k) { return k == ModelKind::fast_linear || k == ModelKind::fast_aug; }

struct SetSetpoint {
    std::size_t node = 0;
    Setpoints value;
};

// Sets alpha on every converter.
struct EnableVoltageRegulation {
    double alpha = 0.0;
};

struct StepExogenous {
    CVector v_sg;
};

using EventAction = std::variant<SetSetpoint, EnableVoltageRegulation, StepExogenous>;

struct Event {
    double time = 0.0;
    EventAction action;
};

struct IntegratorConfig {
    double dt = 1e-5;
    double t_end = 0.1;
    std::size_t record_stride = 1;
    double divergence_threshold = 1e6;
};

// Generator voltages held at constant amplitude and frequency:
// v_SG(t) = v_sg e^{j omega t}.
struct ExogenousInput {
    CVector v_sg;
    double omega = 0.0;
};

struct Scenario {
    CMatrix Y;               // converter block, Laplacian when there are no generators
    CVector setpoint_shift;  // absorbed shunts, added to conj_sigma*
    CMatrix Y_G;             // converter x generator coupling (augmented kinds)
    std::vector<DvocParams> params;
    std::vector<Setpoints> setpoints;
    ModelKind kind = ModelKind::nonlinear_filtered;
    CVector v0;
    RVector u_f0;
    std::vector<Event> events;
    IntegratorConfig integrator;
    std::optional<ExogenousInput> sg;
    std::optional<CVector> track_eigenspace;  // phi1 for the eigenspace distance diagnostic

    std::size_t size() const { return params.size(); }

    // Converter-only scenario on a reduced network.
    static Scenario on(const ReducedNetwork& net, std::vector<DvocParams> params, std::vector<Setpoints> setpoints,
                       ModelKind kind) {
        Scenario s;
        s.Y = net.Y;
        s.setpoint_shift = net.setpoint_shift;
        s.Y_G = CMatrix::Zero(net.size(), 0);
        s.params = std::move(params);
        s.setpoints = std::move(setpoints);
        s.kind = kind;
        s.v0 = CVector::Ones(net.size());
        s.u_f0 = RVector::Zero(net.size());
        return s;
    }

    static Scenario on(const SgPartition& part, std::vector<DvocParams> params, std::vector<Setpoints> setpoints,
                       ModelKind kind) {
        Scenario s;
        s.Y = part.Y;
        s.setpoint_shift = part.setpoint_shift;
        s.Y_G = part.Y_G;
        s.params = std::move(params);
        s.setpoints = std::move(setpoints);
        s.kind = kind;
        s.v0 = CVector::Ones(part.Y.rows());
        s.u_f0 = RVector::Zero(part.Y.rows());
        return s;
    }

    void validate() const {
        const auto n = static_cast<Eigen::Index>(size());
        if (n == 0) throw ConfigError("scenario has no converters");
        if (Y.rows() != n || Y.cols() != n) throw ConfigError("scenario: Y does not match converter count");
        if (setpoint_shift.size() != n) throw ConfigError("scenario: setpoint shift size mismatch");
        if (static_cast<Eigen::Index>(setpoints.size()) != n) throw ConfigError("scenario: setpoint count mismatch");
        if (v0.size() != n || u_f0.size() != n) throw ConfigError("scenario: initial state size mismatch");
        for (const auto& p : params) p.validate();
        for (const auto& s : setpoints) s.validate();
        if (!(integrator.dt > 0.0)) throw ConfigError("integrator dt must be > 0");
        if (!(integrator.t_end >= 0.0)) throw ConfigError("integrator t_end must be >= 0");
        if (integrator.record_stride == 0) throw ConfigError("record_stride must be >= 1");
        double last = 0.0;
        for (const auto& e : events) {
            if (e.time < last) throw ConfigError("events must be time-ordered");
            if (e.time < 0.0 || e.time > integrator.t_end) throw ConfigError("event time outside [0, t_end]");
            last = e.time;
            if (const auto* sp = std::get_if<SetSetpoint>(&e.action); sp && sp->node >= size()) {
                throw ConfigError("set_setpoint event names an unknown node");
            }
            if (const auto* st = std::get_if<StepExogenous>(&e.action)) {
                if (!is_augmented(kind)) throw ConfigError("step_exogenous event requires an augmented model");
                if (st->v_sg.size() != Y_G.cols()) throw ConfigError("step_exogenous: v_SG size mismatch");
            }
        }
        const bool has_sg = sg.has_value();
        if (has_sg != is_augmented(kind)) {
            throw ConfigError("exogenous generator inputs must be given exactly for augmented model kinds");
        }
        if (has_sg && sg->v_sg.size() != Y_G.cols()) throw ConfigError("v_SG size does not match Y_G");
        if (is_angle_model(kind) || kind == ModelKind::nonlinear_filtered || kind == ModelKind::nonlinear_log) {
            for (Eigen::Index k = 0; k < n; ++k) {
                if (v0(k) == cplx(0.0, 0.0)) throw DomainError("initial voltage is zero at a node that needs ln|v|");
            }
        }
    }
};

struct NodeRecord {
    cplx v;
    double u_f = 0.0;
    cplx varpi;       // complex frequency eps + j omega
    cplx conj_sigma;  // conjugate normalized power
    double p = 0.0;
    double q = 0.0;
    double v_abs = 0.0;
    double theta = 0.0;  // unwrapped
    double u = 0.0;      // ln|v|
};

struct Sample {
    double t = 0.0;
    std::vector<NodeRecord> nodes;
    std::vector<cplx> angle_differences;  // angle_k - angle_l for k < l
    double eigenspace_distance = std::numeric_limits<double>::quiet_NaN();
};

enum class TrajectoryStatus { completed, diverged, domain_error };

struct Trajectory {
    ModelKind kind = ModelKind::nonlinear_filtered;
    double dt = 0.0;             // integration step
    double record_interval = 0.0;
    std::vector<Sample> samples;
    TrajectoryStatus status = TrajectoryStatus::completed;
    std::string message;

    bool empty() const { return samples.empty(); }
    std::size_t node_count() const { return samples.empty() ? 0 : samples.front().nodes.size(); }
    const Sample& back() const { return samples.back(); }

    CVector voltages(std::size_t i) const {
        const auto& s = samples[i].nodes;
        CVector v(static_cast<Eigen::Index>(s.size()));
        for (std::size_t k = 0; k < s.size(); ++k) v(static_cast<Eigen::Index>(k)) = s[k].v;
        return v;
    }
};

// One classic fourth-order Runge-Kutta step.
template <typename State, typename Rhs>
State rk4_step(const Rhs& f, double t, const State& x, double dt) {
    const State k1 = f(t, x);
    const State k2 = f(t + 0.5 * dt, State(x + (0.5 * dt) * k1));
    const State k3 = f(t + 0.5 * dt, State(x + (0.5 * dt) * k2));
    const State k4 = f(t + dt, State(x + dt * k3));
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace detail {

// Mutable model state for one run: parameters change only through events.
class ClosedLoop {
public:
    explicit ClosedLoop(const Scenario& sc)
        : sc_(sc), params_(sc.params), setpoints_(sc.setpoints), n_(static_cast<Eigen::Index>(sc.size())) {
        if (sc.sg) v_sg_ = sc.sg->v_sg;
        frozen_u_f_ = sc.u_f0;
        update_references();
    }

    Eigen::Index n() const { return n_; }

    void apply(const EventAction& action) {
        if (const auto* sp = std::get_if<SetSetpoint>(&action)) {
            setpoints_[sp->node] = sp->value;
        } else if (const auto* ev = std::get_if<EnableVoltageRegulation>(&action)) {
            for (auto& p : params_) p.alpha = ev->alpha;
        } else if (const auto* st = std::get_if<StepExogenous>(&action)) {
            v_sg_ = st->v_sg;
        }
        update_references();
    }

    // State layout: [v or angle (n); u_f (n, real part only)].
    CVector initial_state() const {
        CVector x(2 * n_);
        for (Eigen::Index k = 0; k < n_; ++k) {
            x(k) = is_angle_model(sc_.kind) ? angle_from_voltage(sc_.v0(k)).value() : sc_.v0(k);
            x(n_ + k) = sc_.u_f0(k);
        }
        return x;
    }

    CVector rhs(double t, const CVector& x) const {
        CVector dx = CVector::Zero(2 * n_);
        switch (sc_.kind) {
            case ModelKind::fast_linear:
            case ModelKind::fast_aug: {
                const CVector v = x.head(n_);
                CVector current = sc_.Y * v;
                if (sc_.kind == ModelKind::fast_aug && sc_.Y_G.cols() > 0) current += sc_.Y_G * generator_voltage(t);
                for (Eigen::Index k = 0; k < n_; ++k) {
                    const auto& p = params_[static_cast<std::size_t>(k)];
                    dx(k) = kJ * p.omega0 * v(k) + p.eta * p.rotation() * (fast_ref_(k) * v(k) - current(k));
                }
                break;
            }
            case ModelKind::slow_linear:
            case ModelKind::slow_aug: {
                const CVector angle = x.head(n_);
                CVector flow = sc_.Y * angle;
                if (sc_.kind == ModelKind::slow_aug && sc_.Y_G.cols() > 0) flow += sc_.Y_G * generator_angle(t);
                for (Eigen::Index k = 0; k < n_; ++k) {
                    const auto i = static_cast<std::size_t>(k);
                    const auto& p = params_[i];
                    const double u_f = x(n_ + k).real();
                    dx(k) = kJ * p.omega0 + p.eta * p.rotation() * (ref_(k) - flow(k)) +
                            p.eta * p.alpha * (setpoints_[i].u_star() - u_f);
                    dx(n_ + k) = (x(k).real() - u_f) / p.tau;
                }
                break;
            }
            case ModelKind::nonlinear_filtered:
            case ModelKind::nonlinear_log: {
                const CVector v = x.head(n_);
                const CVector current = sc_.Y * v;
                const ControllerVariant variant = sc_.kind == ModelKind::nonlinear_filtered ? ControllerVariant::filtered
                                                                                            : ControllerVariant::log;
                for (Eigen::Index k = 0; k < n_; ++k) {
                    const auto i = static_cast<std::size_t>(k);
                    const ConverterRate r = converter_rhs(variant, {v(k), x(n_ + k).real()}, current(k), params_[i],
                                                          setpoints_[i], ref_(k));
                    dx(k) = r.v_dot;
                    dx(n_ + k) = r.u_f_dot;
                }
                break;
            }
        }
        return dx;
    }

    // Derived per-node quantities at state x.
    void describe(double t, const CVector& x, std::vector<NodeRecord>& out, std::vector<double>& theta_track) const {
        const CVector dx = rhs(t, x);
        out.resize(static_cast<std::size_t>(n_));
        const bool angle_model = is_angle_model(sc_.kind);
        CVector flow;
        if (angle_model) {
            flow = sc_.Y * x.head(n_);
            if (sc_.Y_G.cols() > 0) flow += sc_.Y_G * generator_angle(t);
        } else {
            flow = sc_.Y * x.head(n_);
            if (sc_.kind == ModelKind::fast_aug && sc_.Y_G.cols() > 0) flow += sc_.Y_G * generator_voltage(t);
        }
        for (Eigen::Index k = 0; k < n_; ++k) {
            const auto i = static_cast<std::size_t>(k);
            NodeRecord& r = out[i];
            if (angle_model) {
                const cplx a = x(k);
                r.u = a.real();
                r.theta = a.imag();
                r.v = voltage_from_angle(ComplexAngle::from(a));
                r.varpi = dx(k);
                r.conj_sigma = flow(k) - sc_.setpoint_shift(k);
            } else {
                r.v = x(k);
                r.v_abs = std::abs(r.v);
                if (r.v_abs > 0.0) {
                    r.u = std::log(r.v_abs);
                    r.theta = unwrap_near(std::arg(r.v), theta_track[i]);
                    r.varpi = dx(k) / r.v;
                    r.conj_sigma = flow(k) / r.v - sc_.setpoint_shift(k);
                } else {
                    r.u = -std::numeric_limits<double>::infinity();
                    r.theta = theta_track[i];
                    r.varpi = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
                    r.conj_sigma = r.varpi;
                }
            }
            theta_track[i] = r.theta;
            r.v_abs = std::abs(r.v);
            r.u_f = is_fast_model(sc_.kind) ? frozen_u_f_(k) : x(n_ + k).real();
            const cplx sigma = std::conj(r.conj_sigma);
            const double v2 = r.v_abs * r.v_abs;
            r.p = sigma.real() * v2;
            r.q = sigma.imag() * v2;
        }
    }

    // Keeps unwrapped phase continuous between recorded samples.
    void track_theta(const CVector& x, std::vector<double>& theta_track) const {
        if (is_angle_model(sc_.kind)) return;
        for (Eigen::Index k = 0; k < n_; ++k) {
            const auto i = static_cast<std::size_t>(k);
            if (x(k) != cplx(0.0, 0.0)) theta_track[i] = unwrap_near(std::arg(x(k)), theta_track[i]);
        }
    }

    // Returns a message when the state left the admissible region.
    std::optional<std::string> check(const CVector& x, double threshold) const {
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            if (!std::isfinite(x(k).real()) || !std::isfinite(x(k).imag())) return std::string("non-finite state");
        }
        if (is_angle_model(sc_.kind)) {
            for (Eigen::Index k = 0; k < n_; ++k) {
                if (std::abs(x(k).real()) > std::log(threshold)) return std::string("voltage logarithm beyond divergence guard");
            }
        } else {
            const double norm = x.head(n_).cwiseAbs().maxCoeff();
            if (norm > threshold) return std::string("state norm beyond divergence guard");
        }
        return std::nullopt;
    }

private:
    CVector generator_voltage(double t) const {
        return v_sg_ * std::exp(kJ * (sc_.sg ? sc_.sg->omega * t : 0.0));
    }

    CVector generator_angle(double t) const {
        CVector a(v_sg_.size());
        for (Eigen::Index g = 0; g < v_sg_.size(); ++g) {
            a(g) = angle_from_voltage(v_sg_(g)).value() + kJ * (sc_.sg ? sc_.sg->omega * t : 0.0);
        }
        return a;
    }

    void update_references() {
        ref_.resize(n_);
        fast_ref_.resize(n_);
        for (Eigen::Index k = 0; k < n_; ++k) {
            const auto i = static_cast<std::size_t>(k);
            const auto& p = params_[i];
            ref_(k) = setpoints_[i].conj_sigma_star() + sc_.setpoint_shift(k);
            fast_ref_(k) = ref_(k) + p.alpha * rotor(-p.phi) * (setpoints_[i].u_star() - frozen_u_f_(k));
        }
    }

    const Scenario& sc_;
    std::vector<DvocParams> params_;
    std::vector<Setpoints> setpoints_;
    Eigen::Index n_;
    CVector v_sg_;
    RVector frozen_u_f_;
    CVector ref_;
    CVector fast_ref_;
};

}  // namespace detail

inline Trajectory simulate(const Scenario& sc) {
    sc.validate();
    detail::ClosedLoop loop(sc);
    const auto& cfg = sc.integrator;
    const auto steps = static_cast<std::size_t>(std::llround(cfg.t_end / cfg.dt));
    const Eigen::Index n = loop.n();

    Trajectory traj;
    traj.kind = sc.kind;
    traj.dt = cfg.dt;
    traj.record_interval = cfg.dt * static_cast<double>(cfg.record_stride);
    traj.samples.reserve(steps / cfg.record_stride + 2);

    // Events snap to the nearest grid point.
    std::vector<std::pair<std::size_t, const Event*>> pending;
    for (const auto& e : sc.events) pending.emplace_back(static_cast<std::size_t>(std::llround(e.time / cfg.dt)), &e);
    std::size_t next_event = 0;

    std::vector<double> theta_track(static_cast<std::size_t>(n), 0.0);
    if (!is_angle_model(sc.kind)) {
        for (Eigen::Index k = 0; k < n; ++k) theta_track[static_cast<std::size_t>(k)] = std::arg(sc.v0(k));
    }

    auto record = [&](std::size_t step, const CVector& x) {
        Sample s;
        s.t = static_cast<double>(step) * cfg.dt;
        loop.describe(s.t, x, s.nodes, theta_track);
        for (std::size_t k = 0; k < s.nodes.size(); ++k) {
            for (std::size_t l = k + 1; l < s.nodes.size(); ++l) {
                s.angle_differences.emplace_back(cplx(s.nodes[k].u, s.nodes[k].theta) -
                                                 cplx(s.nodes[l].u, s.nodes[l].theta));
            }
        }
        if (sc.track_eigenspace) {
            CVector v(n);
            for (Eigen::Index k = 0; k < n; ++k) v(k) = s.nodes[static_cast<std::size_t>(k)].v;
            s.eigenspace_distance = eigenspace_distance(v, *sc.track_eigenspace);
        }
        traj.samples.push_back(std::move(s));
    };

    CVector x = loop.initial_state();
    auto rhs = [&loop](double t, const CVector& state) { return loop.rhs(t, state); };
    try {
        for (std::size_t step = 0;; ++step) {
            while (next_event < pending.size() && pending[next_event].first <= step) {
                loop.apply(pending[next_event].second->action);
                ++next_event;
            }
            if (step % cfg.record_stride == 0 || step == steps) record(step, x);
            if (step == steps) break;
            const double t = static_cast<double>(step) * cfg.dt;
            x = rk4_step(rhs, t, x, cfg.dt);
            loop.track_theta(x, theta_track);
            if (auto problem = loop.check(x, cfg.divergence_threshold)) {
                traj.status = TrajectoryStatus::diverged;
                traj.message = *problem + " at t = " + std::to_string(t + cfg.dt);
                break;
            }
        }
    } catch (const DomainError& e) {
        traj.status = TrajectoryStatus::domain_error;
        traj.message = e.what();
    }
    return traj;
}

struct SyncDetection {
    bool synced = false;
    double t_sync = std::numeric_limits<double>::quiet_NaN();
    cplx varpi_sync;
    double spread = 0.0;  // max deviation from the window mean over the trailing window
    std::string reason;
};

// Complex-frequency synchronization over the trailing window. A window whose
// voltage norm fell below amplitude_floor times the initial norm counts as
// decay to zero rather than synchronization.
inline SyncDetection detect_sync(const Trajectory& traj, double window = 0.02, double tol = 1e-4,
                                 double amplitude_floor = 1e-6) {
    SyncDetection out;
    if (traj.samples.size() < 2) {
        out.reason = "trajectory too short";
        return out;
    }
    const double t_end = traj.samples.back().t;
    if (t_end - traj.samples.front().t < window) {
        out.reason = "trajectory shorter than one window";
        return out;
    }
    std::size_t first = traj.samples.size() - 1;
    while (first > 0 && traj.samples[first - 1].t >= t_end - window - 1e-12) --first;

    cplx mean{0.0, 0.0};
    std::size_t count = 0;
    for (std::size_t i = first; i < traj.samples.size(); ++i) {
        for (const auto& r : traj.samples[i].nodes) {
            mean += r.varpi;
            ++count;
        }
    }
    mean /= static_cast<double>(count);
    out.varpi_sync = mean;

    auto deviation = [&](std::size_t i) {
        double d = 0.0;
        for (const auto& r : traj.samples[i].nodes) d = std::max(d, std::abs(r.varpi - mean));
        return std::isfinite(d) ? d : std::numeric_limits<double>::infinity();
    };
    for (std::size_t i = first; i < traj.samples.size(); ++i) out.spread = std::max(out.spread, deviation(i));

    auto norm_at = [&](std::size_t i) { return traj.voltages(i).norm(); };
    const double initial = norm_at(0);
    if (norm_at(traj.samples.size() - 1) < amplitude_floor * initial) {
        out.reason = "voltages decayed toward zero";
        return out;
    }
    if (!(out.spread < tol)) {
        out.reason = "complex frequencies still spread over the trailing window";
        return out;
    }
    out.synced = true;
    std::size_t start = first;
    while (start > 0 && deviation(start - 1) < tol) --start;
    out.t_sync = traj.samples[start].t;
    return out;
}

struct InvarianceMetrics {
    double max_ratio_drift = 0.0;  // relative drift of v_l/v_k
    double max_sigma_drift = 0.0;  // absolute drift of conj_sigma_k
    std::vector<double> pair_drift;
    std::vector<double> node_drift;
};

inline InvarianceMetrics invariance_metrics(const Trajectory& traj, double t_from) {
    if (traj.samples.empty()) throw ConfigError("invariance_metrics: empty trajectory");
    std::size_t start = 0;
    while (start < traj.samples.size() && traj.samples[start].t < t_from - 1e-12) ++start;
    if (start >= traj.samples.size()) throw ConfigError("invariance_metrics: t_from beyond trajectory end");
    const std::size_t n = traj.node_count();
    InvarianceMetrics m;
    m.pair_drift.assign(n * (n - 1) / 2, 0.0);
    m.node_drift.assign(n, 0.0);
    const auto& ref = traj.samples[start].nodes;
    for (std::size_t i = start; i < traj.samples.size(); ++i) {
        const auto& cur = traj.samples[i].nodes;
        std::size_t p = 0;
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t l = k + 1; l < n; ++l, ++p) {
                const cplx r0 = ref[l].v / ref[k].v;
                const cplx r = cur[l].v / cur[k].v;
                m.pair_drift[p] = std::max(m.pair_drift[p], std::abs(r - r0) / std::abs(r0));
            }
            m.node_drift[k] = std::max(m.node_drift[k], std::abs(cur[k].conj_sigma - ref[k].conj_sigma));
        }
    }
    for (double d : m.pair_drift) m.max_ratio_drift = std::max(m.max_ratio_drift, d);
    for (double d : m.node_drift) m.max_sigma_drift = std::max(m.max_sigma_drift, d);
    return m;
}

struct ModelComparison {
    double rms_u = 0.0;
    double rms_delta = 0.0;
    double max_u = 0.0;
    double max_delta = 0.0;
    double rel_rms_u = 0.0;      // relative to the RMS of the first trajectory's signal
    double rel_rms_delta = 0.0;
};

// Compares voltage logarithm u and center-of-angle deviation delta on a shared grid.
inline ModelComparison compare_models(const Trajectory& a, const Trajectory& b) {
    if (a.samples.size() != b.samples.size() || a.node_count() != b.node_count()) {
        throw ConfigError("compare_models: trajectories are on different grids");
    }
    ModelComparison c;
    double err_u = 0.0, err_d = 0.0, sig_u = 0.0, sig_d = 0.0;
    std::size_t count = 0;
    const std::size_t n = a.node_count();
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        if (std::abs(a.samples[i].t - b.samples[i].t) > 1e-9 * std::max(1.0, a.samples[i].t)) {
            throw ConfigError("compare_models: trajectories are on different grids");
        }
        double mean_a = 0.0, mean_b = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            mean_a += a.samples[i].nodes[k].theta;
            mean_b += b.samples[i].nodes[k].theta;
        }
        mean_a /= static_cast<double>(n);
        mean_b /= static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& ra = a.samples[i].nodes[k];
            const auto& rb = b.samples[i].nodes[k];
            const double du = ra.u - rb.u;
            const double da = ra.theta - mean_a;
            const double dd = da - (rb.theta - mean_b);
            err_u += du * du;
            err_d += dd * dd;
            sig_u += ra.u * ra.u;
            sig_d += da * da;
            c.max_u = std::max(c.max_u, std::abs(du));
            c.max_delta = std::max(c.max_delta, std::abs(dd));
            ++count;
        }
    }
    const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(count, 1));
    c.rms_u = std::sqrt(err_u * inv);
    c.rms_delta = std::sqrt(err_d * inv);
    auto relative = [](double err, double sig) {
        if (sig > 0.0) return std::sqrt(err / sig);
        return err > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    };
    c.rel_rms_u = relative(err_u, sig_u);
    c.rel_rms_delta = relative(err_d, sig_d);
    return c;
}

// One row per (t, node), 17 significant digits, LF line endings.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,node,v_re,v_im,v_abs,theta,u_f,eps,omega,p,q\n";
    char buf[512];
    for (const auto& sample : traj.samples) {
        for (std::size_t k = 0; k < sample.nodes.size(); ++k) {
            const auto& r = sample.nodes[k];
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", sample.t,
                          k + 1, r.v.real(), r.v.imag(), r.v_abs, r.theta, r.u_f, r.varpi.real(), r.varpi.imag(), r.p,
                          r.q);
            os << buf;
        }
    }
}

}  // namespace cfsync
