#pragma once

// Scenario configuration: topology, control constants, stage timeline,
// codec/SNN sections and run parameters. Built from presets or parsed from
// a versioned JSON document (unknown keys rejected).

#include "spikegrid/codec.hpp"
#include "spikegrid/control.hpp"
#include "spikegrid/grid.hpp"
#include "spikegrid/stdp.hpp"
#include "spikegrid/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spikegrid {

enum class RunMode { Clc, Nsc };

enum class StageActionKind {
    LoadStep,
    LineOutage,
    LineRestore,
    NodeDisconnect,
    PvPowerStep
};

struct StageAction {
    double time = 0;
    StageActionKind kind = StageActionKind::LoadStep;
    Index target = -1;  // load index, line id, node id or pv index
    double value = 0;   // new load/pv value where applicable
};

struct ControlConfig {
    double droop_deviation_fraction = 0.05;  // ΔV as a fraction of V_n
    double pi_voltage_kp = 0.5;
    double pi_voltage_ki = 20.0;
    double pi_sharing_kp = 0.2;
    double pi_sharing_ki = 10.0;
    double anti_windup_fraction = 0.2;  // integral clamp, fraction of V_n
    double setpoint_lo = 0.8;
    double setpoint_hi = 1.2;
    double adjacency_weight = 1.0;
    double soc_epsilon = 1e-3;
};

struct EncoderSection {
    Index neurons_per_feature = 64;
    double tuning_width = 0.05;
};

struct SnnSection {
    Index hidden_layers = 2;
    Index hidden_width = 256;
    double tau_m = 10e-3;
    double tau_syn = 2e-3;
    double tau_ref = 4e-3;
    double threshold = 1.0;
    double decode_tau = 2e-3;
};

struct StdpSection {
    bool enabled = true;
    double a_plus = 5e-5;
    double a_minus = 5e-5;
    double tau_plus = 20e-3;
    double tau_minus = 20e-3;
    double g_max = 1.0;
};

struct ScenarioConfig {
    std::string name;
    double rated_voltage = 48.0;
    double duration = 2.5;
    double settle_duration = 1.0;  // unlogged pre-roll to steady state
    double dt_electrical = 10e-6;
    double dt_control = 1e-3;
    std::uint64_t seed = 1;
    RunMode mode = RunMode::Clc;
    bool force_ground_truth = false;  // NSC with estimates pinned to truth
    SharingObjective objective = SharingObjective::Current;
    std::string model_path;

    TopologySpec<double> topology;
    std::vector<StageAction> stages;
    EventThresholds<double> thresholds;
    ControlConfig control;
    EncoderSection encoder;
    SnnSection snn;
    StdpSection stdp;

    double derivative_tau = 0.5e-3;      // codec derivative smoothing
    double steady_current_tau = 20e-3;   // ī_k filter for e^i

    std::vector<std::string> non_paper;  // keys not sourced from the tables

    /// Converter node ids participating in secondary control, ascending.
    std::vector<Index> participants() const;

    void validate() const;
};

/// Tabulated presets: Cases I-V plus the experimental two-bus rig (E).
ScenarioConfig case_preset(const std::string& id);

/// Strict JSON round-trip for scenario configs.
ScenarioConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ScenarioConfig& cfg);
ScenarioConfig load_config_file(const std::string& path);

/// Preset id when it names one, otherwise treats the argument as a path.
ScenarioConfig resolve_case(const std::string& id_or_path);

}  // namespace spikegrid
