#pragma once

// Scenario execution: the coupled electrical / control / codec / SNN loop
// over a stage timeline, with CSV artifacts and metrics. One engine owns all
// state of one scenario; distinct engines share nothing.

#include "spikegrid/energy.hpp"
#include "spikegrid/model_io.hpp"
#include "spikegrid/scenario.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace spikegrid {

struct MetricsReport {
    std::string case_name;
    std::string mode;
    std::uint64_t seed = 0;
    std::uint64_t control_ticks = 0;
    double final_sharing_error = 0;
    double final_avg_voltage_error = 0;
    std::vector<double> stage_settling_times;  // seconds after stage, -1 = never
    std::uint64_t event_count = 0;
    std::uint64_t spike_total = 0;
    std::uint64_t saturation_ticks = 0;
    OpCounts snn, rnn, ann;

    std::string to_json_text() const;
};

struct RunResult {
    std::vector<Index> participants;
    std::vector<double> time;                       // control-tick stamps
    Matrix<double> voltage, current, power;         // tick x participant
    Matrix<double> setpoint;                        // tick x participant
    Matrix<double> estimates;                       // tick x estimate column
    std::vector<std::string> estimate_columns;
    std::vector<std::vector<Index>> estimate_remotes;  // per participant
    Matrix<double> truth_for_estimates;             // same layout as estimates
    std::vector<std::uint8_t> any_event;            // per tick
    Matrix<double> event_flag;                      // tick x participant
    Matrix<double> spike_count;                     // tick x participant
    std::vector<double> sharing_error;              // per tick
    std::vector<double> avg_voltage_error;          // per tick
    std::vector<std::uint8_t> saturated;            // per tick
    std::vector<EventRecord> events;
    std::vector<std::array<std::uint64_t, 6>> energy_rows;  // per tick
    EnergyLedger ledger;
    MetricsReport metrics;

    Index participant_column(Index node) const;
    Index estimate_column(Index observer, Index remote, bool voltage) const;
};

/// Per-node, per-control-tick dataset sample hook (CLC sweeps).
struct SampleHook {
    std::function<void(Index node, double t, const std::array<double, 4>& features,
                       bool window_active, const std::vector<Index>& remotes,
                       const std::vector<double>& remote_v,
                       const std::vector<double>& remote_i)>
        fn;
};

class ScenarioEngine {
public:
    /// bundle may be null for CLC and ground-truth-forced runs.
    ScenarioEngine(ScenarioConfig cfg, const ModelBundle* bundle);

    void set_sample_hook(SampleHook hook) { hook_ = std::move(hook); }

    /// Runs the scenario; when out_dir is nonempty, writes timeseries.csv,
    /// events.csv, spikes.csv, energy.csv and metrics.json into it.
    RunResult run(const std::string& out_dir = "");

private:
    ScenarioConfig cfg_;
    const ModelBundle* bundle_;
    SampleHook hook_;
};

MetricsReport compute_metrics(const ScenarioConfig& cfg, const RunResult& result);

/// Rebuilds the metrics purely from a run directory's CSV artifacts.
MetricsReport recompute_metrics_from_csv(const std::string& run_dir);

/// Reads a run's energy.csv, cross-checks it against metrics.json, writes
/// report.csv and prints a summary.
ComparativeReport energy_report(const std::string& run_dir, std::ostream& out);

void write_run_artifacts(const ScenarioConfig& cfg, const RunResult& result,
                         const std::string& out_dir);

}  // namespace spikegrid
