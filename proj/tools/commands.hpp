#pragma once

// Subcommands of the cfsync tool. Each returns an exit code and a JSON report:
// 0 every check passed, 2 a stability check failed, 1 input or numerical error.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include <cfsync/cfsync.hpp>

#include "scenario_file.hpp"
#include "svg.hpp"

namespace cfsync::cli {

inline constexpr const char* kToolVersion = "1.0.0";

using json = nlohmann::ordered_json;

enum ExitCode : int { kPass = 0, kError = 1, kUnstable = 2 };

struct RunOptions {
    std::optional<double> dt;
    std::optional<double> t_end;
    std::string out_dir;
    std::string format = "json";
    bool plot = false;
    std::uint64_t seed = 1;
};

struct CommandResult {
    int exit_code = kPass;
    json report;
    std::string csv;  // primary CSV payload, printed with --format csv
    std::vector<std::string> files;
};

inline json to_json(cplx z) { return json{{"re", z.real()}, {"im", z.imag()}}; }

inline json to_json(const CVector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(to_json(v(i)));
    return a;
}

inline json to_json(const RVector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json to_json(const std::vector<cplx>& v) {
    json a = json::array();
    for (const cplx& z : v) a.push_back(to_json(z));
    return a;
}

inline int worse(int a, int b) {
    if (a == kError || b == kError) return kError;
    return std::max(a, b);
}

namespace detail {

inline std::string artifact(const RunOptions& opt, const ScenarioFile& sf, const std::string& suffix) {
    std::filesystem::create_directories(opt.out_dir);
    return (std::filesystem::path(opt.out_dir) / (sf.name + "_" + suffix)).string();
}

inline void emit(CommandResult& r, const RunOptions& opt, const ScenarioFile& sf, const std::string& suffix,
                 const std::string& content) {
    if (opt.out_dir.empty()) return;
    const std::string path = artifact(opt, sf, suffix);
    write_file(path, content);
    r.files.push_back(path);
}

inline std::string eigen_csv(const CVector& ev) {
    std::ostringstream os;
    os << "index,re,im\n";
    char buf[96];
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(i + 1), ev(i).real(), ev(i).imag());
        os << buf;
    }
    return os.str();
}

inline std::size_t nyquist_index(const ScenarioFile& sf, const Prepared& p) {
    const auto it = std::find(p.names.begin(), p.names.end(), sf.analysis.nyquist_node);
    return static_cast<std::size_t>(it - p.names.begin());
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct FastOutcome {
    FastSystem system;
    Spectrum spectrum;
    SpectralVerdict condition1;
    std::optional<ParametricVerdict> condition2;
    std::string condition2_note;
};

inline FastOutcome fast_outcome(const ScenarioFile& sf, const Prepared& p) {
    FastOutcome out;
    const RVector u_f = RVector::Constant(p.size(), sf.initial.u_f0);
    out.system = build_fast_system(p.reduced(), p.params, p.setpoints, u_f);
    out.spectrum = spectrum(out.system.A);
    out.condition1 = check_spectral_condition(out.spectrum, sf.analysis.entry_tol);
    const SyncBounds observed = extract_sync_bounds(out.spectrum.phi1);
    const double delta = sf.analysis.delta_bar.value_or(observed.delta);
    const double gamma = sf.analysis.gamma_bar.value_or(std::max(observed.gamma, 1e-12));
    if (!p.converter_only) {
        out.condition2_note = "not applicable: converter block is not a Laplacian when generators are present";
    } else if (!(delta < kPi / 2 && gamma < 1.0)) {
        out.condition2_note = "not applicable: synchronous-state bounds outside the admissible range";
    } else {
        out.condition2 = check_parametric_condition(out.system.Y, out.system.phi, out.system.effective_reference, delta,
                                                    gamma, &out.spectrum.phi1);
    }
    return out;
}

inline json fast_json(const FastOutcome& f) {
    json j;
    j["eigenvalues"] = to_json(f.spectrum.eigenvalues);
    j["lambda1"] = to_json(f.spectrum.lambda1());
    j["re_lambda2"] = f.spectrum.re_lambda2();
    j["gap"] = f.spectrum.gap;
    j["phi1"] = to_json(f.spectrum.phi1);
    j["condition1"] = {{"pass", f.condition1.pass},
                       {"min_entry_ratio", f.condition1.min_entry_ratio},
                       {"re_lambda2", f.condition1.re_lambda2},
                       {"reasons", f.condition1.reasons}};
    if (f.condition2) {
        const auto& c = *f.condition2;
        j["condition2"] = {{"certified", c.certified},       {"inequality_holds", c.inequality_holds},
                           {"lhs", c.lhs},                   {"rhs", c.rhs},
                           {"margin", c.margin},             {"lambda2", c.lambda2},
                           {"delta_bar", c.delta_bar},       {"gamma_bar", c.gamma_bar},
                           {"observed_delta", c.observed.delta}, {"observed_gamma", c.observed.gamma},
                           {"a_posteriori_ok", c.a_posteriori_ok}, {"warning", c.warning}};
    } else {
        j["condition2"] = {{"certified", false}, {"note", f.condition2_note}};
    }
    j["predicted_sync"] = f.condition1.pass;
    return j;
}

inline CommandResult analyze_fast(const ScenarioFile& sf, const RunOptions& opt) {
    CommandResult r;
    const Prepared p = prepare(sf);
    const FastOutcome f = fast_outcome(sf, p);
    r.report["fast"] = fast_json(f);
    r.exit_code = f.condition1.pass ? kPass : kUnstable;
    r.csv = detail::eigen_csv(f.spectrum.eigenvalues);
    detail::emit(r, opt, sf, "fast_eigenvalues.csv", r.csv);
    return r;
}

// ---------------------------------------------------------------------------

inline SlowSystem slow_system_of(const Prepared& p) {
    if (!p.converter_only) throw UnsupportedConfig("slow analysis supports converter-only networks");
    return build_slow_system(p.reduced(), p.params, p.setpoints);
}

inline CommandResult analyze_slow(const ScenarioFile& sf, const RunOptions& opt) {
    CommandResult r;
    const Prepared p = prepare(sf);
    const SlowSystem sys = slow_system_of(p);
    const Equilibrium eq = solve_equilibrium(sys);
    const ErrorSpectrum es = error_spectrum(sys);
    json j;
    j["equilibrium"] = {{"u_s", to_json(eq.u_s)},
                        {"delta_s", to_json(eq.delta_s)},
                        {"residual", eq.residual},
                        {"sigma_min", eq.sigma_min}};
    j["steady_state_frequency"] = eq.theta0_rate;
    j["steady_state_frequency_hz"] = eq.theta0_rate / (2.0 * kPi);
    j["error_spectrum"] = {{"eigenvalues", to_json(es.restricted_eigenvalues)}, {"max_re", es.max_re}, {"stable", es.stable}};
    j["g_psd"] = sys.g_psd;
    j["g_min_eigenvalue"] = sys.g_min_eigenvalue;
    if (!sys.warning.empty()) j["warning"] = sys.warning;
    r.report["slow"] = j;
    r.exit_code = es.stable ? kPass : kUnstable;
    r.csv = detail::eigen_csv(es.restricted_eigenvalues);
    detail::emit(r, opt, sf, "slow_eigenvalues.csv", r.csv);
    return r;
}

// ---------------------------------------------------------------------------

inline json sync_json(const SyncDetection& d) {
    json j{{"synced", d.synced}, {"spread", d.spread}};
    if (d.synced) {
        j["t_sync"] = d.t_sync;
        j["varpi_sync"] = to_json(d.varpi_sync);
    } else {
        j["reason"] = d.reason;
    }
    return j;
}

inline CommandResult simulate_command(const ScenarioFile& sf, const RunOptions& opt) {
    CommandResult r;
    const Prepared p = prepare(sf);
    Scenario sc = build_simulation(sf, p, opt.seed);
    if (opt.dt) sc.integrator.dt = *opt.dt;
    if (opt.t_end) sc.integrator.t_end = *opt.t_end;
    const Trajectory traj = simulate(sc);

    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    r.csv = csv.str();
    detail::emit(r, opt, sf, "trajectory.csv", r.csv);
    if (opt.plot) detail::emit(r, opt, sf, "trajectory.svg", trajectory_svg(traj, p.names));

    json j;
    j["model"] = to_string(sc.kind);
    j["dt"] = sc.integrator.dt;
    j["t_end"] = sc.integrator.t_end;
    j["samples"] = traj.samples.size();
    j["status"] = traj.status == TrajectoryStatus::completed ? "completed"
                  : traj.status == TrajectoryStatus::diverged ? "diverged"
                                                              : "domain_error";
    if (!traj.message.empty()) j["message"] = traj.message;
    if (!traj.samples.empty()) {
        const auto& last = traj.back();
        json nodes = json::array();
        for (std::size_t k = 0; k < last.nodes.size(); ++k) {
            const auto& n = last.nodes[k];
            nodes.push_back({{"node", p.names[k]}, {"v", to_json(n.v)}, {"varpi", to_json(n.varpi)}, {"p", n.p}, {"q", n.q}});
        }
        j["terminal"] = {{"t", last.t}, {"nodes", nodes}};
        if (traj.samples.back().t - traj.samples.front().t >= sf.analysis.sync_window) {
            j["sync"] = sync_json(detect_sync(traj, sf.analysis.sync_window, sf.analysis.sync_tol));
        }
    }
    r.report["simulation"] = j;
    r.exit_code = traj.status == TrajectoryStatus::completed ? kPass
                  : traj.status == TrajectoryStatus::diverged ? kUnstable
                                                              : kError;
    return r;
}

// ---------------------------------------------------------------------------

struct NyquistOutcome {
    SyncCriterion sync;
    std::optional<VoltageCriterion> voltage;
    std::string voltage_note;
};

inline NyquistOutcome nyquist_outcome(const ScenarioFile& sf, const Prepared& p, BranchDynamics dynamics) {
    if (!p.converter_only) throw UnsupportedConfig("Nyquist criteria support converter-only networks");
    if (sf.network.indices_of(NodeKind::load).size() > 0) {
        throw UnsupportedConfig("Nyquist criteria need every node to carry a converter");
    }
    NyquistOutcome out;
    const std::size_t k = detail::nyquist_index(sf, p);
    const RVector u_f = RVector::Constant(p.size(), sf.initial.u_f0);
    const FastSystem fs = build_fast_system(p.reduced(), p.params, p.setpoints, u_f);
    // Shunts stay in the dynamic network, so the reference drops the absorbed shift.
    const CVector reference = fs.effective_reference - p.setpoint_shift;
    const DynamicNetwork net = dynamic_network(sf.network, sf.gains.omega0, dynamics);
    const RationalTF l = sync_return_ratio(net, p.params, reference, k);
    out.sync = criterion_sync(l, sf.analysis.nyquist);
    if (sf.gains.alpha > 0.0) {
        const SlowSystem sys = slow_system_of(p);
        const TFMatrix2x2 lk = voltage_return_ratio(dc_admittance_pair(sys, k));
        try {
            out.voltage = criterion_voltage(lk, sf.analysis.nyquist);
        } catch (const PreconditionError& e) {
            out.voltage_note = e.what();
        }
    } else {
        out.voltage_note = "not applicable: alpha = 0";
    }
    return out;
}

inline json nyquist_json(const NyquistOutcome& n, const std::string& node, BranchDynamics dyn) {
    json j;
    j["node"] = node;
    j["network_dynamics"] = dyn == BranchDynamics::rl ? "rl" : "static";
    j["sync"] = {{"Z1", n.sync.Z1}, {"P1", n.sync.P1}, {"N1", n.sync.N1}, {"pass", n.sync.pass},
                 {"poles", to_json(n.sync.poles)}, {"samples", n.sync.curve.s.size()}};
    if (n.voltage) {
        j["voltage"] = {{"N2", n.voltage->N2}, {"pass", n.voltage->pass}, {"samples", n.voltage->curve.s.size()}};
    } else {
        j["voltage"] = {{"pass", nullptr}, {"note", n.voltage_note}};
    }
    return j;
}

inline CommandResult nyquist_command(const ScenarioFile& sf, const RunOptions& opt) {
    CommandResult r;
    const Prepared p = prepare(sf);
    const BranchDynamics dyn = sf.analysis.nyquist_network;
    const NyquistOutcome n = nyquist_outcome(sf, p, dyn);
    r.report["nyquist"] = nyquist_json(n, sf.analysis.nyquist_node, dyn);
    std::ostringstream csv;
    write_nyquist_csv(csv, n.sync.curve);
    r.csv = csv.str();
    detail::emit(r, opt, sf, "nyquist_sync.csv", r.csv);
    if (opt.plot) detail::emit(r, opt, sf, "nyquist_sync.svg", nyquist_svg(n.sync.curve, "l_k(s)"));
    if (n.voltage) {
        std::ostringstream vcsv;
        write_nyquist_csv(vcsv, n.voltage->curve);
        detail::emit(r, opt, sf, "nyquist_voltage.csv", vcsv.str());
        if (opt.plot) detail::emit(r, opt, sf, "nyquist_voltage.svg", nyquist_svg(n.voltage->curve, "det(I + L_k(s))"));
    }
    r.exit_code = kPass;
    if (!n.sync.pass) r.exit_code = kUnstable;
    if (n.voltage && !n.voltage->pass) r.exit_code = kUnstable;
    if (!n.voltage && sf.gains.alpha > 0.0) r.exit_code = worse(r.exit_code, kError);
    return r;
}

// ---------------------------------------------------------------------------

// Every applicable analysis plus a cross-check of the synchronization verdicts:
// Spectral condition, static-network Nyquist criterion and a simulated fast run.
inline CommandResult check_command(const ScenarioFile& sf, const RunOptions& opt) {
    CommandResult r;
    const Prepared p = prepare(sf);
    json checks = json::object();
    int code = kPass;

    const FastOutcome f = fast_outcome(sf, p);
    checks["fast"] = fast_json(f);
    code = worse(code, f.condition1.pass ? kPass : kUnstable);

    std::optional<bool> nyquist_sync;
    if (p.converter_only && sf.network.indices_of(NodeKind::load).empty()) {
        const NyquistOutcome n = nyquist_outcome(sf, p, BranchDynamics::static_phasor);
        checks["nyquist"] = nyquist_json(n, sf.analysis.nyquist_node, BranchDynamics::static_phasor);
        nyquist_sync = n.sync.pass;
        code = worse(code, n.sync.pass ? kPass : kUnstable);
        if (n.voltage) code = worse(code, n.voltage->pass ? kPass : kUnstable);
    } else {
        checks["nyquist"] = {{"note", "not applicable: needs a converter-only network without load nodes"}};
    }

    if (p.converter_only && sf.gains.alpha > 0.0) {
        const SlowSystem sys = slow_system_of(p);
        const Equilibrium eq = solve_equilibrium(sys);
        const ErrorSpectrum es = error_spectrum(sys);
        checks["slow"] = {{"steady_state_frequency", eq.theta0_rate},
                          {"max_re", es.max_re},
                          {"stable", es.stable},
                          {"g_psd", sys.g_psd}};
        code = worse(code, es.stable ? kPass : kUnstable);
    } else {
        checks["slow"] = {{"note", "not applicable"}};
    }

    // Fast-model run from a random start; duration scaled to the spectral gap.
    Scenario sc = build_simulation(sf, p, opt.seed);
    sc.kind = p.converter_only ? ModelKind::fast_linear : ModelKind::fast_aug;
    sc.events.clear();
    {
        std::mt19937_64 rng(opt.seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (Eigen::Index k = 0; k < sc.v0.size(); ++k) sc.v0(k) = cplx(nd(rng), nd(rng));
    }
    const double gap = std::max(f.spectrum.gap, 1e-3);
    sc.integrator.dt = opt.dt.value_or(1e-5);
    sc.integrator.t_end = opt.t_end.value_or(std::clamp(30.0 / gap, 0.1, 5.0) + sf.analysis.sync_window);
    sc.integrator.record_stride = 10;
    const Trajectory traj = simulate(sc);
    const SyncDetection d = detect_sync(traj, sf.analysis.sync_window, sf.analysis.sync_tol);
    json sim = sync_json(d);
    sim["model"] = to_string(sc.kind);
    sim["t_end"] = sc.integrator.t_end;
    if (d.synced && sc.sg) {
        sim["exogenous_frequency_error"] = std::abs(d.varpi_sync - kJ * sc.sg->omega);
    } else if (d.synced) {
        sim["lambda1_error"] = std::abs(d.varpi_sync - f.spectrum.lambda1());
    }
    checks["simulated_sync"] = sim;

    bool consistent = d.synced == f.condition1.pass;
    if (nyquist_sync && *nyquist_sync != f.condition1.pass) consistent = false;
    checks["consistent"] = consistent;
    if (!consistent) {
        checks["inconsistency"] = "spectral condition, static Nyquist criterion and simulated run disagree";
        code = kError;
    }
    r.report["check"] = checks;
    r.exit_code = code;
    return r;
}

// ---------------------------------------------------------------------------

inline json envelope(const std::string& command, const std::string& path, const std::string& hash) {
    json j;
    j["tool"] = "cfsync";
    j["version"] = kToolVersion;
    j["command"] = command;
    j["scenario"] = path;
    j["config_hash"] = hash;
    return j;
}

inline CommandResult run_one(const std::string& command, const std::string& path, const RunOptions& opt) {
    CommandResult r;
    json head = envelope(command, path, "");
    try {
        const ScenarioFile sf = load_scenario(path);
        head["config_hash"] = config_hash(sf.text);
        head["name"] = sf.name;
        if (command == "analyze-fast") r = analyze_fast(sf, opt);
        else if (command == "analyze-slow") r = analyze_slow(sf, opt);
        else if (command == "simulate") r = simulate_command(sf, opt);
        else if (command == "nyquist") r = nyquist_command(sf, opt);
        else if (command == "check") r = check_command(sf, opt);
        else throw ConfigError("unknown command '" + command + "'");
        json full = head;
        for (auto& [k, v] : r.report.items()) full[k] = v;
        full["exit_code"] = r.exit_code;
        full["files"] = r.files;
        if (!opt.out_dir.empty()) {
            const std::string rp = detail::artifact(opt, sf, command + "_report.json");
            full["files"].push_back(rp);
            write_file(rp, full.dump(2) + "\n");
        }
        r.report = full;
    } catch (const std::exception& e) {
        r = CommandResult{};
        r.exit_code = kError;
        r.report = head;
        r.report["error"] = e.what();
        r.report["exit_code"] = kError;
    }
    return r;
}

inline unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CFSYNC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = std::min<unsigned>(n, static_cast<unsigned>(v));
    }
    return std::max(1u, std::min<unsigned>(n, static_cast<unsigned>(std::max<std::size_t>(jobs, 1))));
}

// Runs `check` on every *.yaml in a directory, one scenario per worker.
inline CommandResult check_all(const std::string& dir, const RunOptions& opt) {
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".yaml" || ext == ".yml")) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<CommandResult> results(files.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < worker_count(files.size()); ++w) {
        pool.emplace_back([&]() {
            for (std::size_t i = next++; i < files.size(); i = next++) results[i] = run_one("check", files[i], opt);
        });
    }
    for (auto& t : pool) t.join();

    CommandResult all;
    all.report = envelope("check --all", dir, "");
    json list = json::array();
    int code = kPass;
    for (std::size_t i = 0; i < files.size(); ++i) {
        list.push_back(results[i].report);
        code = worse(code, results[i].exit_code);
    }
    if (files.empty()) {
        all.report["error"] = "no scenario files found";
        code = kError;
    }
    all.report["results"] = list;
    all.report["exit_code"] = code;
    all.exit_code = code;
    return all;
}

}  // namespace cfsync::cli
