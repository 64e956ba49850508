#pragma once

// Electrical layer: averaged DC/DC converters on capacitor buses, RL
// tie-lines, resistive / constant-power loads, scheduled PV injections and
// battery state of charge. Advanced by explicit forward Euler at a fixed
// step; identical inputs give bit-identical trajectories.

#include "spikegrid/types.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace spikegrid {

enum class SourceKind { StiffSource, Battery, PvMppt };

template <typename Scalar>
struct ConverterParams {
    Scalar rated_voltage = 0;        // volts
    Scalar rated_power = 0;          // watts
    Scalar filter_inductance = 0;    // henries
    Scalar filter_capacitance = 0;   // farads
    Scalar amplification_ratio = 1;  // input/output conversion ratio
    SourceKind source_kind = SourceKind::StiffSource;
    Scalar tracking_time_constant = Scalar(1e-3);  // inner-loop lag, seconds

    void validate(Index node) const {
        if (!(filter_inductance > 0) || !(filter_capacitance > 0))
            throw ConfigError("converter filter L/C must be positive at node " +
                              std::to_string(node));
        if (!(amplification_ratio > 0))
            throw ConfigError("amplification ratio must be positive at node " +
                              std::to_string(node));
        if (!(tracking_time_constant > 0))
            throw ConfigError("tracking time constant must be positive at node " +
                              std::to_string(node));
    }
};

template <typename Scalar>
struct LineParams {
    Scalar resistance = 0;  // ohms, > 0
    Scalar inductance = 0;  // henries, >= 0 (0 -> algebraic branch)
    Index from = -1;
    Index to = -1;
};

enum class LoadKind { Resistive, ConstantPower };

/// Piecewise-constant schedule: value of the last entry with time <= t.
template <typename Scalar>
struct Schedule {
    std::vector<std::pair<Scalar, Scalar>> points;  // (time, value)

    Scalar at(Scalar t) const {
        Scalar v = points.empty() ? Scalar(0) : points.front().second;
        for (const auto& [time, value] : points) {
            if (time <= t) v = value;
            else break;
        }
        return v;
    }
};

template <typename Scalar>
struct LoadModel {
    Index node = -1;
    LoadKind kind = LoadKind::Resistive;
    Schedule<Scalar> schedule;  // ohms (resistive) or watts (constant-power)
};

/// Scheduled power injection at MPPT; positive watts feed the bus.
template <typename Scalar>
struct PvInjection {
    Index node = -1;
    Schedule<Scalar> schedule;
};

template <typename Scalar>
struct BatteryParams {
    Scalar capacity = 0;  // ampere-seconds
    Scalar soc_initial = 0;
    Scalar soc_max = 1;
    Scalar soc_min = 0;

    void validate(Index node) const {
        if (!(capacity > 0))
            throw ConfigError("battery capacity must be positive at node " +
                              std::to_string(node));
        if (!(0 <= soc_min && soc_min < soc_max && soc_max <= 1))
            throw ConfigError("battery SOC limits out of order at node " +
                              std::to_string(node));
        if (soc_initial < soc_min || soc_initial > soc_max)
            throw ConfigError("initial SOC outside limits at node " +
                              std::to_string(node));
    }
};

template <typename Scalar>
struct NodeSpec {
    Index id = -1;
    std::optional<ConverterParams<Scalar>> converter;
    std::optional<BatteryParams<Scalar>> battery;
    Scalar junction_capacitance = Scalar(1e-4);  // used when no converter
};

template <typename Scalar>
struct TopologySpec {
    std::vector<NodeSpec<Scalar>> nodes;
    std::vector<LineParams<Scalar>> lines;
    std::vector<LoadModel<Scalar>> loads;
    std::vector<PvInjection<Scalar>> pv;
};

/// Immutable physical topology. Built once by build_network.
template <typename Scalar>
struct NetworkGraph {
    Index node_count = 0;
    std::vector<LineParams<Scalar>> lines;
    IncidenceMatrix incidence;                     // symmetric, zero diagonal
    std::vector<std::vector<Index>> flow_adjacency;  // N_flow per node
    std::vector<std::vector<Index>> incident_lines;  // line ids per node
    std::vector<bool> has_converter;

    std::vector<Index> converter_nodes() const {
        std::vector<Index> out;
        for (Index k = 0; k < node_count; ++k)
            if (has_converter[static_cast<std::size_t>(k)]) out.push_back(k);
        return out;
    }
};

template <typename Scalar>
NetworkGraph<Scalar> build_network(const TopologySpec<Scalar>& spec) {
    NetworkGraph<Scalar> g;
    g.node_count = static_cast<Index>(spec.nodes.size());
    std::vector<bool> seen(static_cast<std::size_t>(g.node_count), false);
    for (const auto& n : spec.nodes) {
        if (n.id < 0 || n.id >= g.node_count)
            throw ConfigError("node ids must be 0.." +
                              std::to_string(g.node_count - 1) + ", got " +
                              std::to_string(n.id));
        if (seen[static_cast<std::size_t>(n.id)])
            throw ConfigError("duplicate node id " + std::to_string(n.id));
        seen[static_cast<std::size_t>(n.id)] = true;
        if (n.converter) n.converter->validate(n.id);
        if (n.battery) n.battery->validate(n.id);
    }

    g.incidence = IncidenceMatrix::Zero(g.node_count, g.node_count);
    g.flow_adjacency.resize(static_cast<std::size_t>(g.node_count));
    g.incident_lines.resize(static_cast<std::size_t>(g.node_count));
    g.has_converter.assign(static_cast<std::size_t>(g.node_count), false);
    for (const auto& n : spec.nodes)
        g.has_converter[static_cast<std::size_t>(n.id)] = n.converter.has_value();

    for (std::size_t l = 0; l < spec.lines.size(); ++l) {
        const auto& line = spec.lines[l];
        if (line.from < 0 || line.from >= g.node_count || line.to < 0 ||
            line.to >= g.node_count)
            throw ConfigError("line " + std::to_string(l) +
                              " references a missing node");
        if (line.from == line.to)
            throw ConfigError("line " + std::to_string(l) + " is a self-loop");
        if (!(line.resistance > 0))
            throw ConfigError("line " + std::to_string(l) +
                              " resistance must be positive");
        if (line.inductance < 0)
            throw ConfigError("line " + std::to_string(l) +
                              " inductance must be nonnegative");
        g.incidence(line.from, line.to) = 1;
        g.incidence(line.to, line.from) = 1;
        g.incident_lines[static_cast<std::size_t>(line.from)].push_back(
            static_cast<Index>(l));
        g.incident_lines[static_cast<std::size_t>(line.to)].push_back(
            static_cast<Index>(l));
    }
    g.lines = spec.lines;
    for (Index k = 0; k < g.node_count; ++k)
        for (Index j = 0; j < g.node_count; ++j)
            if (g.incidence(k, j)) g.flow_adjacency[static_cast<std::size_t>(k)].push_back(j);

    for (const auto& load : spec.loads) {
        if (load.node < 0 || load.node >= g.node_count)
            throw ConfigError("load references a missing node");
        if (load.schedule.points.empty())
            throw ConfigError("load schedule must not be empty");
        Scalar prev = -1;
        for (const auto& [t, v] : load.schedule.points) {
            if (!(v > 0)) throw ConfigError("load schedule values must be positive");
            if (t <= prev && prev >= 0)
                throw ConfigError("load schedule times must be strictly increasing");
            prev = t;
        }
    }
    return g;
}

/// Flow adjacency between converter nodes, riding through passive junction
/// nodes, restricted to lines flagged active. This is the neighbor set the
/// control layer sees; spec-level N_flow (direct lines) stays on the graph.
template <typename Scalar>
std::vector<std::vector<Index>> converter_flow_adjacency(
    const NetworkGraph<Scalar>& g, const std::vector<bool>& line_active) {
    const auto n = static_cast<std::size_t>(g.node_count);
    std::vector<std::vector<Index>> adj(n);
    for (Index k = 0; k < g.node_count; ++k) {
        if (!g.has_converter[static_cast<std::size_t>(k)]) continue;
        // BFS from k through passive nodes only.
        std::vector<bool> visited(n, false);
        visited[static_cast<std::size_t>(k)] = true;
        std::vector<Index> frontier{k};
        while (!frontier.empty()) {
            std::vector<Index> next;
            for (Index u : frontier) {
                for (Index l : g.incident_lines[static_cast<std::size_t>(u)]) {
                    if (!line_active[static_cast<std::size_t>(l)]) continue;
                    const auto& line = g.lines[static_cast<std::size_t>(l)];
                    Index v = line.from == u ? line.to : line.from;
                    if (visited[static_cast<std::size_t>(v)]) continue;
                    visited[static_cast<std::size_t>(v)] = true;
                    if (g.has_converter[static_cast<std::size_t>(v)])
                        adj[static_cast<std::size_t>(k)].push_back(v);
                    else
                        next.push_back(v);  // keep crossing the junction
                }
            }
            frontier = std::move(next);
        }
        std::sort(adj[static_cast<std::size_t>(k)].begin(),
                  adj[static_cast<std::size_t>(k)].end());
    }
    return adj;
}

/// Dense per-node / per-line electrical state.
template <typename Scalar>
struct GridState {
    Vector<Scalar> bus_voltage;      // v_k
    Vector<Scalar> output_current;   // i_k (converter inductor current)
    Vector<Scalar> bridge_emf;       // tracks the composed setpoint
    Vector<Scalar> line_current;     // signed from -> to
    Vector<Scalar> soc;              // batteries; 0 elsewhere

    static GridState zero(Index nodes, Index lines) {
        GridState s;
        s.bus_voltage = Vector<Scalar>::Zero(nodes);
        s.output_current = Vector<Scalar>::Zero(nodes);
        s.bridge_emf = Vector<Scalar>::Zero(nodes);
        s.line_current = Vector<Scalar>::Zero(lines);
        s.soc = Vector<Scalar>::Zero(nodes);
        return s;
    }
};

/// Per-node signed tie-line flow sums; positive = exporting.
template <typename Scalar>
Vector<Scalar> tie_line_flows(const NetworkGraph<Scalar>& g,
                              const Vector<Scalar>& line_current,
                              const std::vector<bool>& line_active) {
    Vector<Scalar> out = Vector<Scalar>::Zero(g.node_count);
    for (std::size_t l = 0; l < g.lines.size(); ++l) {
        if (!line_active[l]) continue;
        const auto& line = g.lines[l];
        out[line.from] += line_current[static_cast<Index>(l)];
        out[line.to] -= line_current[static_cast<Index>(l)];
    }
    return out;
}

template <typename Scalar>
struct SocUpdate {
    Scalar soc;
    bool clamped;
};

/// soc' = soc - i_bat*dt/C, clamped to [soc_min, soc_max].
template <typename Scalar>
SocUpdate<Scalar> update_soc(Scalar soc, Scalar i_bat, Scalar dt,
                             const BatteryParams<Scalar>& params) {
    Scalar next = soc - i_bat * dt / params.capacity;
    bool clamped = next < params.soc_min || next > params.soc_max;
    next = std::clamp(next, params.soc_min, params.soc_max);
    return {next, clamped};
}

/// Per-node current drawn by loads minus PV injection, at bus voltages v.
/// Constant-power draws are linearized per tick with the voltage floored at
/// 10% of rated to avoid division blow-up.
template <typename Scalar>
Vector<Scalar> external_currents(const NetworkGraph<Scalar>& g,
                                 const std::vector<LoadModel<Scalar>>& loads,
                                 const std::vector<PvInjection<Scalar>>& pv,
                                 const Vector<Scalar>& v, Scalar rated_voltage,
                                 Scalar t) {
    Vector<Scalar> draw = Vector<Scalar>::Zero(g.node_count);
    const Scalar v_floor = Scalar(0.1) * rated_voltage;
    for (const auto& load : loads) {
        Scalar value = load.schedule.at(t);
        Scalar vk = std::max(v[load.node], v_floor);
        draw[load.node] += load.kind == LoadKind::Resistive ? vk / value : value / vk;
    }
    for (const auto& p : pv) {
        Scalar vk = std::max(v[p.node], v_floor);
        draw[p.node] -= p.schedule.at(t) / vk;
    }
    return draw;
}

template <typename Scalar>
struct StepInputs {
    const Vector<Scalar>* setpoints = nullptr;       // composed v*_k per node
    const Vector<Scalar>* external_draw = nullptr;   // loads minus PV, amps
    const std::vector<bool>* line_active = nullptr;
    const std::vector<bool>* converter_enabled = nullptr;
};

/// One forward-Euler step of the full electrical network.
///
/// Bus capacitors integrate converter output minus external draw minus
/// tie-line flows; line RL branches integrate endpoint voltage differences;
/// bridge EMFs track setpoints through a first-order lag. Disabled
/// converters contribute no current and hold their EMF at the bus voltage.
template <typename Scalar>
void step_network(const NetworkGraph<Scalar>& g,
                  const std::vector<ConverterParams<Scalar>>& conv,
                  const std::vector<Scalar>& junction_capacitance,
                  GridState<Scalar>& s, const StepInputs<Scalar>& in, Scalar dt) {
    const Vector<Scalar>& vstar = *in.setpoints;
    const Vector<Scalar>& draw = *in.external_draw;
    const std::vector<bool>& active = *in.line_active;
    const std::vector<bool>& enabled = *in.converter_enabled;

    Vector<Scalar> flows = tie_line_flows(g, s.line_current, active);
    Vector<Scalar> v = s.bus_voltage;

    for (Index k = 0; k < g.node_count; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        if (g.has_converter[ks] && enabled[ks]) {
            const auto& p = conv[ks];
            s.bridge_emf[k] += dt / p.tracking_time_constant * (vstar[k] - s.bridge_emf[k]);
            s.output_current[k] +=
                dt / p.filter_inductance * (s.bridge_emf[k] - v[k]);
            s.bus_voltage[k] += dt / p.filter_capacitance *
                                (s.output_current[k] - draw[k] - flows[k]);
        } else if (g.has_converter[ks]) {
            s.bridge_emf[k] = v[k];
            s.output_current[k] = 0;
            s.bus_voltage[k] += dt / conv[ks].filter_capacitance * (-draw[k] - flows[k]);
        } else {
            s.bus_voltage[k] += dt / junction_capacitance[ks] * (-draw[k] - flows[k]);
        }
    }

    for (std::size_t l = 0; l < g.lines.size(); ++l) {
        const auto li = static_cast<Index>(l);
        if (!active[l]) {
            s.line_current[li] = 0;
            continue;
        }
        const auto& line = g.lines[l];
        Scalar dv = v[line.from] - v[line.to];
        if (line.inductance > 0)
            s.line_current[li] +=
                dt / line.inductance * (dv - line.resistance * s.line_current[li]);
        else
            s.line_current[li] = dv / line.resistance;
    }
}

/// Rejects steps that violate the line stability bound dt < L/(2R).
template <typename Scalar>
void check_step_bound(const NetworkGraph<Scalar>& g, Scalar dt) {
    for (std::size_t l = 0; l < g.lines.size(); ++l) {
        const auto& line = g.lines[l];
        if (line.inductance > 0 && !(dt < line.inductance / (2 * line.resistance)))
            throw ConfigError("dt " + std::to_string(static_cast<double>(dt)) +
                              " exceeds stability bound L/(2R) of line " +
                              std::to_string(l));
    }
}

/// Throws SimulationError naming the first non-finite node.
template <typename Scalar>
void check_finite(const GridState<Scalar>& s, std::int64_t tick) {
    for (Index k = 0; k < s.bus_voltage.size(); ++k)
        if (!std::isfinite(static_cast<double>(s.bus_voltage[k])) ||
            !std::isfinite(static_cast<double>(s.output_current[k])))
            throw SimulationError("non-finite electrical state at node " +
                                      std::to_string(k) + ", tick " +
                                      std::to_string(tick),
                                  k, tick);
}

}  // namespace spikegrid
