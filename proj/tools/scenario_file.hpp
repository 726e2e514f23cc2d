#pragma once

// YAML scenario files: schema validation with line-anchored messages and
// conversion to library inputs.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include <cfsync/cfsync.hpp>

namespace cfsync::cli {

class SchemaError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

struct ConverterSetpoint {
    std::string node;
    Setpoints value;
};

struct EventSpec {
    double time = 0.0;
    std::string action;  // set_setpoint | enable_voltage_regulation | step_exogenous
    std::string node;
    Setpoints setpoint;
    double alpha = 0.0;
    std::map<std::string, cplx> v_sg;
};

struct InitialStateSpec {
    std::string mode = "flat";  // flat | random | explicit
    std::map<std::string, cplx> v0;
    double u_f0 = 0.0;
    double scale = 1.0;  // magnitude of flat or random initial voltages
};

struct AnalysisSpec {
    std::optional<double> delta_bar;
    std::optional<double> gamma_bar;
    double entry_tol = 1e-8;
    double sync_window = 0.02;
    double sync_tol = 1e-4;
    std::string nyquist_node;
    BranchDynamics nyquist_network = BranchDynamics::static_phasor;
    NyquistOptions nyquist;
};

struct ScenarioFile {
    std::string path;
    std::string text;
    std::string name;
    NetworkModel network;
    DvocParams gains;  // eta at equation level
    std::vector<ConverterSetpoint> setpoints;
    ModelKind kind = ModelKind::nonlinear_filtered;
    IntegratorConfig integrator;
    InitialStateSpec initial;
    std::vector<EventSpec> events;
    AnalysisSpec analysis;
    std::map<std::string, cplx> v_sg;
    std::optional<double> sg_omega;
    bool has_sg = false;

    std::vector<std::size_t> converters() const { return network.indices_of(NodeKind::converter); }
    std::vector<std::size_t> generators() const { return network.indices_of(NodeKind::generator); }
};

namespace detail {

inline std::string where(const std::string& path, const YAML::Node& node) {
    const YAML::Mark m = node.Mark();
    std::ostringstream os;
    os << path;
    if (m.line >= 0) os << ":" << (m.line + 1) << ":" << (m.column + 1);
    return os.str();
}

[[noreturn]] inline void fail(const std::string& path, const YAML::Node& node, const std::string& msg) {
    throw SchemaError(where(path, node) + ": " + msg);
}

inline void allow_keys(const std::string& path, const YAML::Node& map, const std::string& section,
                       const std::set<std::string>& allowed) {
    if (!map.IsMap()) fail(path, map, "section '" + section + "' must be a mapping");
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) fail(path, kv.first, "unknown key '" + key + "' in section '" + section + "'");
    }
}

inline double number(const std::string& path, const YAML::Node& node, const std::string& what) {
    try {
        return node.as<double>();
    } catch (const YAML::Exception&) {
        fail(path, node, "'" + what + "' must be a number");
    }
}

inline double number_or(const std::string& path, const YAML::Node& parent, const char* key, double fallback) {
    const YAML::Node n = parent[key];
    return n ? number(path, n, key) : fallback;
}

inline std::string text(const std::string& path, const YAML::Node& node, const std::string& what) {
    if (!node.IsScalar()) fail(path, node, "'" + what + "' must be a scalar");
    return node.as<std::string>();
}

// [re, im] or a real scalar.
inline cplx complex_value(const std::string& path, const YAML::Node& node, const std::string& what) {
    if (node.IsScalar()) return {number(path, node, what), 0.0};
    if (node.IsSequence() && node.size() == 2) {
        return {number(path, node[0], what), number(path, node[1], what)};
    }
    fail(path, node, "'" + what + "' must be a number or a [re, im] pair");
}

inline Setpoints setpoint(const std::string& path, const YAML::Node& node, const std::string& section) {
    allow_keys(path, node, section, {"p_star", "q_star", "v_star"});
    Setpoints s;
    s.p_star = number_or(path, node, "p_star", 0.0);
    s.q_star = number_or(path, node, "q_star", 0.0);
    s.v_star = number_or(path, node, "v_star", 1.0);
    if (!(s.v_star > 0.0)) fail(path, node, "v_star must be > 0");
    return s;
}

inline ModelKind model_kind(const std::string& path, const YAML::Node& node) {
    const std::string k = text(path, node, "kind");
    for (ModelKind m : {ModelKind::nonlinear_filtered, ModelKind::nonlinear_log, ModelKind::fast_linear,
                        ModelKind::slow_linear, ModelKind::fast_aug, ModelKind::slow_aug}) {
        if (k == to_string(m)) return m;
    }
    fail(path, node, "unknown model kind '" + k + "'");
}

}  // namespace detail

inline ScenarioFile parse_scenario(const std::string& text, const std::string& path = "<scenario>") {
    using namespace detail;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        std::ostringstream os;
        os << path << ":" << (e.mark.line + 1) << ":" << (e.mark.column + 1) << ": " << e.msg;
        throw SchemaError(os.str());
    }
    if (!root || !root.IsMap()) throw SchemaError(path + ": scenario must be a mapping");
    allow_keys(path, root, "<root>", {"name", "network", "converters", "model", "events", "analysis", "sg"});

    ScenarioFile sf;
    sf.path = path;
    sf.text = text;
    sf.name = root["name"] ? detail::text(path, root["name"], "name") : std::string("scenario");

    // network
    const YAML::Node net = root["network"];
    if (!net) fail(path, root, "missing section 'network'");
    allow_keys(path, net, "network", {"nodes", "branches", "shunts"});
    const YAML::Node nodes = net["nodes"];
    if (!nodes || !nodes.IsSequence() || nodes.size() == 0) fail(path, net, "network.nodes must be a non-empty list");
    std::map<std::string, std::size_t> index;
    for (const auto& nd : nodes) {
        Node n;
        if (nd.IsScalar()) {
            n.name = nd.as<std::string>();
        } else {
            allow_keys(path, nd, "network.nodes", {"name", "kind"});
            if (!nd["name"]) fail(path, nd, "node needs a 'name'");
            n.name = detail::text(path, nd["name"], "name");
            if (nd["kind"]) {
                const std::string k = detail::text(path, nd["kind"], "kind");
                if (k == "converter") n.kind = NodeKind::converter;
                else if (k == "load") n.kind = NodeKind::load;
                else if (k == "generator") n.kind = NodeKind::generator;
                else fail(path, nd["kind"], "unknown node kind '" + k + "'");
            }
        }
        if (index.count(n.name)) fail(path, nd, "duplicate node name '" + n.name + "'");
        index[n.name] = sf.network.nodes.size();
        sf.network.nodes.push_back(n);
    }
    auto node_index = [&](const YAML::Node& ref) {
        const std::string name = detail::text(path, ref, "node");
        const auto it = index.find(name);
        if (it == index.end()) fail(path, ref, "unknown node '" + name + "'");
        return it->second;
    };
    const YAML::Node branches = net["branches"];
    if (branches) {
        if (!branches.IsSequence()) fail(path, branches, "network.branches must be a list");
        for (const auto& b : branches) {
            allow_keys(path, b, "network.branches", {"from", "to", "r", "x"});
            if (!b["from"] || !b["to"]) fail(path, b, "branch needs 'from' and 'to'");
            BranchSpec spec;
            spec.from = node_index(b["from"]);
            spec.to = node_index(b["to"]);
            spec.r = number_or(path, b, "r", 0.0);
            spec.x = number_or(path, b, "x", 0.0);
            if (spec.r == 0.0 && spec.x == 0.0) {
                fail(path, b, "branch #" + std::to_string(sf.network.branches.size()) + " (" +
                                  sf.network.nodes[spec.from].name + "-" + sf.network.nodes[spec.to].name +
                                  "): zero impedance (r = x = 0)");
            }
            sf.network.branches.push_back(spec);
        }
    }
    if (const YAML::Node shunts = net["shunts"]) {
        if (!shunts.IsMap()) fail(path, shunts, "network.shunts must map node names to admittances");
        for (const auto& kv : shunts) {
            sf.network.nodes[node_index(kv.first)].shunt = complex_value(path, kv.second, "shunt");
        }
    }
    try {
        validate(sf.network);
    } catch (const ConfigError& e) {
        fail(path, net, e.what());
    }

    // converters
    const YAML::Node conv = root["converters"];
    if (!conv) fail(path, root, "missing section 'converters'");
    allow_keys(path, conv, "converters", {"eta", "eta_scaling", "alpha", "tau", "phi", "omega0", "setpoints"});
    const double omega0 = number_or(path, conv, "omega0", 2.0 * kPi * 50.0);
    const double eta = number_or(path, conv, "eta", 0.04);
    std::string scaling = "per_unit";
    if (conv["eta_scaling"]) scaling = detail::text(path, conv["eta_scaling"], "eta_scaling");
    if (scaling != "per_unit" && scaling != "absolute") {
        fail(path, conv["eta_scaling"], "eta_scaling must be 'per_unit' or 'absolute'");
    }
    sf.gains.omega0 = omega0;
    sf.gains.eta = scaling == "per_unit" ? eta * omega0 : eta;
    sf.gains.alpha = number_or(path, conv, "alpha", 0.0);
    sf.gains.tau = number_or(path, conv, "tau", 0.005);
    sf.gains.phi = number_or(path, conv, "phi", kPi / 4);
    try {
        sf.gains.validate();
    } catch (const ConfigError& e) {
        fail(path, conv, e.what());
    }
    const YAML::Node sps = conv["setpoints"];
    std::map<std::string, Setpoints> given;
    if (sps) {
        if (!sps.IsMap()) fail(path, sps, "converters.setpoints must map node names to setpoints");
        for (const auto& kv : sps) {
            const std::size_t i = node_index(kv.first);
            if (sf.network.nodes[i].kind != NodeKind::converter) {
                fail(path, kv.first, "setpoints given for non-converter node '" + sf.network.nodes[i].name + "'");
            }
            given[sf.network.nodes[i].name] = setpoint(path, kv.second, "converters.setpoints");
        }
    }
    for (std::size_t i : sf.converters()) {
        const auto& name = sf.network.nodes[i].name;
        sf.setpoints.push_back({name, given.count(name) ? given[name] : Setpoints{}});
    }
    if (sf.setpoints.empty()) fail(path, nodes, "network has no converter nodes");

    // model
    if (const YAML::Node model = root["model"]) {
        allow_keys(path, model, "model",
                   {"kind", "dt", "t_end", "record_stride", "divergence_threshold", "initial_state"});
        if (model["kind"]) sf.kind = model_kind(path, model["kind"]);
        sf.integrator.dt = number_or(path, model, "dt", is_angle_model(sf.kind) ? 1e-4 : 1e-5);
        sf.integrator.t_end = number_or(path, model, "t_end", 0.1);
        sf.integrator.record_stride = static_cast<std::size_t>(number_or(path, model, "record_stride", 1.0));
        sf.integrator.divergence_threshold = number_or(path, model, "divergence_threshold", 1e6);
        if (!(sf.integrator.dt > 0.0)) fail(path, model, "dt must be > 0");
        if (!(sf.integrator.t_end > 0.0)) fail(path, model, "t_end must be > 0");
        if (sf.integrator.record_stride == 0) fail(path, model, "record_stride must be >= 1");
        if (const YAML::Node init = model["initial_state"]) {
            allow_keys(path, init, "model.initial_state", {"v0", "u_f0", "scale"});
            sf.initial.u_f0 = number_or(path, init, "u_f0", 0.0);
            sf.initial.scale = number_or(path, init, "scale", 1.0);
            if (const YAML::Node v0 = init["v0"]) {
                if (v0.IsScalar()) {
                    const std::string mode = v0.as<std::string>();
                    if (mode != "flat" && mode != "random") fail(path, v0, "v0 must be 'flat', 'random' or a node map");
                    sf.initial.mode = mode;
                } else if (v0.IsMap()) {
                    sf.initial.mode = "explicit";
                    for (const auto& kv : v0) {
                        const std::size_t i = node_index(kv.first);
                        if (sf.network.nodes[i].kind != NodeKind::converter) {
                            fail(path, kv.first, "initial voltage given for a non-converter node");
                        }
                        sf.initial.v0[sf.network.nodes[i].name] = complex_value(path, kv.second, "v0");
                    }
                } else {
                    fail(path, v0, "v0 must be 'flat', 'random' or a node map");
                }
            }
        }
    } else {
        sf.integrator.dt = 1e-5;
    }

    // sg
    if (const YAML::Node sg = root["sg"]) {
        allow_keys(path, sg, "sg", {"v_sg", "omega"});
        sf.has_sg = true;
        if (sg["omega"]) sf.sg_omega = number(path, sg["omega"], "omega");
        if (const YAML::Node v = sg["v_sg"]) {
            if (!v.IsMap()) fail(path, v, "sg.v_sg must map generator nodes to voltages");
            for (const auto& kv : v) {
                const std::size_t i = node_index(kv.first);
                if (sf.network.nodes[i].kind != NodeKind::generator) {
                    fail(path, kv.first, "sg.v_sg names a non-generator node");
                }
                sf.v_sg[sf.network.nodes[i].name] = complex_value(path, kv.second, "v_sg");
            }
        }
        for (std::size_t g : sf.generators()) {
            if (!sf.v_sg.count(sf.network.nodes[g].name)) {
                fail(path, sg, "sg.v_sg is missing generator '" + sf.network.nodes[g].name + "'");
            }
        }
    }
    if (sf.has_sg != is_augmented(sf.kind)) {
        fail(path, root, "section 'sg' must be present exactly for augmented model kinds (fast_aug, slow_aug)");
    }
    if (!sf.generators().empty() && !sf.has_sg) {
        fail(path, nodes, "generator nodes need an 'sg' section and an augmented model kind");
    }

    // events
    if (const YAML::Node events = root["events"]) {
        if (!events.IsSequence()) fail(path, events, "events must be a list");
        double last = 0.0;
        for (const auto& e : events) {
            allow_keys(path, e, "events", {"time", "action", "node", "p_star", "q_star", "v_star", "alpha", "v_sg"});
            EventSpec ev;
            if (!e["time"] || !e["action"]) fail(path, e, "event needs 'time' and 'action'");
            ev.time = number(path, e["time"], "time");
            ev.action = detail::text(path, e["action"], "action");
            if (ev.time < last) fail(path, e, "events must be time-ordered");
            if (ev.time < 0.0 || ev.time > sf.integrator.t_end) fail(path, e, "event time outside [0, t_end]");
            last = ev.time;
            if (ev.action == "set_setpoint") {
                if (!e["node"]) fail(path, e, "set_setpoint needs 'node'");
                const std::size_t i = node_index(e["node"]);
                if (sf.network.nodes[i].kind != NodeKind::converter) fail(path, e["node"], "set_setpoint names a non-converter node");
                ev.node = sf.network.nodes[i].name;
                ev.setpoint.p_star = number_or(path, e, "p_star", 0.0);
                ev.setpoint.q_star = number_or(path, e, "q_star", 0.0);
                ev.setpoint.v_star = number_or(path, e, "v_star", 1.0);
                if (!(ev.setpoint.v_star > 0.0)) fail(path, e, "v_star must be > 0");
            } else if (ev.action == "enable_voltage_regulation") {
                ev.alpha = number_or(path, e, "alpha", sf.gains.alpha);
                if (!(ev.alpha >= 0.0)) fail(path, e, "alpha must be >= 0");
            } else if (ev.action == "step_exogenous") {
                if (!sf.has_sg) fail(path, e, "step_exogenous requires an augmented model with an 'sg' section");
                if (!e["v_sg"] || !e["v_sg"].IsMap()) fail(path, e, "step_exogenous needs a 'v_sg' map");
                ev.v_sg = sf.v_sg;
                for (const auto& kv : e["v_sg"]) {
                    const std::size_t i = node_index(kv.first);
                    if (sf.network.nodes[i].kind != NodeKind::generator) fail(path, kv.first, "v_sg names a non-generator node");
                    ev.v_sg[sf.network.nodes[i].name] = complex_value(path, kv.second, "v_sg");
                }
            } else {
                fail(path, e["action"], "unknown event action '" + ev.action + "'");
            }
            sf.events.push_back(ev);
        }
    }

    // analysis
    if (const YAML::Node an = root["analysis"]) {
        allow_keys(path, an, "analysis", {"conditions", "nyquist", "sync", "delta_bar", "gamma_bar"});
        auto bounds = [&](const YAML::Node& holder) {
            if (holder["delta_bar"]) sf.analysis.delta_bar = number(path, holder["delta_bar"], "delta_bar");
            if (holder["gamma_bar"]) sf.analysis.gamma_bar = number(path, holder["gamma_bar"], "gamma_bar");
        };
        bounds(an);
        if (const YAML::Node c = an["conditions"]) {
            allow_keys(path, c, "analysis.conditions", {"delta_bar", "gamma_bar", "entry_tol"});
            bounds(c);
            sf.analysis.entry_tol = number_or(path, c, "entry_tol", 1e-8);
        }
        if (const YAML::Node s = an["sync"]) {
            allow_keys(path, s, "analysis.sync", {"window", "tol"});
            sf.analysis.sync_window = number_or(path, s, "window", 0.02);
            sf.analysis.sync_tol = number_or(path, s, "tol", 1e-4);
        }
        if (const YAML::Node ny = an["nyquist"]) {
            allow_keys(path, ny, "analysis.nyquist", {"node", "network_dynamics", "omega_max", "indent_radius"});
            if (ny["node"]) {
                const std::size_t i = node_index(ny["node"]);
                if (sf.network.nodes[i].kind != NodeKind::converter) fail(path, ny["node"], "nyquist node must be a converter");
                sf.analysis.nyquist_node = sf.network.nodes[i].name;
            }
            if (ny["network_dynamics"]) {
                const std::string d = detail::text(path, ny["network_dynamics"], "network_dynamics");
                if (d == "static") sf.analysis.nyquist_network = BranchDynamics::static_phasor;
                else if (d == "rl") sf.analysis.nyquist_network = BranchDynamics::rl;
                else fail(path, ny["network_dynamics"], "network_dynamics must be 'static' or 'rl'");
            }
            sf.analysis.nyquist.omega_max = number_or(path, ny, "omega_max", 1e6);
            sf.analysis.nyquist.indent_radius = number_or(path, ny, "indent_radius", 1e-4);
        }
    }
    if (sf.analysis.delta_bar && !(*sf.analysis.delta_bar >= 0.0 && *sf.analysis.delta_bar < kPi / 2)) {
        fail(path, root["analysis"], "delta_bar must lie in [0, pi/2)");
    }
    if (sf.analysis.gamma_bar && !(*sf.analysis.gamma_bar > 0.0 && *sf.analysis.gamma_bar < 1.0)) {
        fail(path, root["analysis"], "gamma_bar must lie in (0, 1)");
    }
    if (sf.analysis.nyquist_node.empty()) sf.analysis.nyquist_node = sf.setpoints.front().node;
    return sf;
}

inline ScenarioFile load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open scenario file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path);
}

// FNV-1a over the raw file bytes.
inline std::string config_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Conversion to library inputs

struct Prepared {
    std::vector<DvocParams> params;
    std::vector<Setpoints> setpoints;
    std::vector<std::string> names;  // converter names, in order
    CMatrix Y;
    CVector setpoint_shift;
    CMatrix Y_G;
    std::vector<std::string> generator_names;
    bool converter_only = true;

    ReducedNetwork reduced() const { return {Y, setpoint_shift, {}}; }
    Eigen::Index size() const { return Y.rows(); }
};

inline Prepared prepare(const ScenarioFile& sf) {
    Prepared p;
    const auto conv = sf.converters();
    const auto gens = sf.generators();
    for (const auto& s : sf.setpoints) {
        p.names.push_back(s.node);
        p.setpoints.push_back(s.value);
        p.params.push_back(sf.gains);
    }
    if (gens.empty()) {
        const ReducedNetwork red = reduce_to_converters(sf.network);
        p.Y = red.Y;
        p.setpoint_shift = red.setpoint_shift;
        p.Y_G = CMatrix::Zero(red.size(), 0);
    } else {
        const SgPartition part = sg_partition(build_admittance(sf.network), conv, gens);
        p.Y = part.Y;
        p.setpoint_shift = part.setpoint_shift;
        p.Y_G = part.Y_G;
        p.converter_only = false;
        for (std::size_t g : gens) p.generator_names.push_back(sf.network.nodes[g].name);
    }
    return p;
}

inline CVector initial_voltages(const ScenarioFile& sf, const Prepared& p, std::uint64_t seed) {
    const Eigen::Index n = p.size();
    CVector v0 = CVector::Constant(n, cplx(sf.initial.scale, 0.0));
    if (sf.initial.mode == "random") {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (Eigen::Index k = 0; k < n; ++k) v0(k) = sf.initial.scale * cplx(nd(rng), nd(rng));
    } else if (sf.initial.mode == "explicit") {
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto it = sf.initial.v0.find(p.names[static_cast<std::size_t>(k)]);
            if (it != sf.initial.v0.end()) v0(k) = it->second;
        }
    }
    return v0;
}

inline CVector generator_voltages(const Prepared& p, const std::map<std::string, cplx>& values) {
    CVector v(static_cast<Eigen::Index>(p.generator_names.size()));
    for (std::size_t g = 0; g < p.generator_names.size(); ++g) v(static_cast<Eigen::Index>(g)) = values.at(p.generator_names[g]);
    return v;
}

inline Scenario build_simulation(const ScenarioFile& sf, const Prepared& p, std::uint64_t seed) {
    Scenario sc;
    sc.Y = p.Y;
    sc.setpoint_shift = p.setpoint_shift;
    sc.Y_G = p.Y_G;
    sc.params = p.params;
    sc.setpoints = p.setpoints;
    sc.kind = sf.kind;
    sc.v0 = initial_voltages(sf, p, seed);
    sc.u_f0 = RVector::Constant(p.size(), sf.initial.u_f0);
    sc.integrator = sf.integrator;
    if (sf.has_sg) sc.sg = ExogenousInput{generator_voltages(p, sf.v_sg), sf.sg_omega.value_or(sf.gains.omega0)};
    for (const auto& e : sf.events) {
        Event ev;
        ev.time = e.time;
        if (e.action == "set_setpoint") {
            const auto it = std::find(p.names.begin(), p.names.end(), e.node);
            ev.action = SetSetpoint{static_cast<std::size_t>(it - p.names.begin()), e.setpoint};
        } else if (e.action == "enable_voltage_regulation") {
            ev.action = EnableVoltageRegulation{e.alpha};
        } else {
            ev.action = StepExogenous{generator_voltages(p, e.v_sg)};
        }
        sc.events.push_back(ev);
    }
    return sc;
}

}  // namespace cfsync::cli
