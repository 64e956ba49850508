#include "spikegrid/csv.hpp"
#include "spikegrid/runner.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

namespace spikegrid {

namespace {

using Json = nlohmann::ordered_json;

constexpr double kSharingSettled = 0.02;
constexpr double kSettleHold = 0.05;  // seconds below threshold to count

std::vector<double> settling_times(const std::vector<double>& time,
                                   const std::vector<double>& sharing_error,
                                   const std::vector<double>& stage_times) {
    std::vector<double> out;
    for (double t_stage : stage_times) {
        double settled_at = -1;
        std::size_t i = 0;
        while (i < time.size() && time[i] < t_stage) ++i;
        for (; i < time.size(); ++i) {
            if (sharing_error[i] >= kSharingSettled) continue;
            std::size_t j = i;
            while (j < time.size() && sharing_error[j] < kSharingSettled) ++j;
            double held = (j < time.size() ? time[j] : time.back()) - time[i];
            if (held >= kSettleHold) {
                settled_at = time[i] - t_stage;
                break;
            }
            i = j;
        }
        out.push_back(settled_at);
    }
    return out;
}

}  // namespace

std::string MetricsReport::to_json_text() const {
    Json j;
    j["case"] = case_name;
    j["mode"] = mode;
    j["seed"] = seed;
    j["control_ticks"] = control_ticks;
    j["final_sharing_error"] = final_sharing_error;
    j["final_avg_voltage_error"] = final_avg_voltage_error;
    j["stage_settling_times"] = stage_settling_times;
    j["event_count"] = event_count;
    j["spike_total"] = spike_total;
    j["saturation_ticks"] = saturation_ticks;
    for (auto [kind, counts] : {std::pair{"snn", &snn}, {"rnn", &rnn}, {"ann", &ann}}) {
        j["energy"][kind] = {{"acc", counts->acc},
                             {"mac", counts->mac},
                             {"joules", energy_joules(*counts)}};
    }
    return j.dump(2) + "\n";
}

MetricsReport compute_metrics(const ScenarioConfig& cfg, const RunResult& result) {
    MetricsReport m;
    m.case_name = cfg.name;
    m.mode = cfg.mode == RunMode::Nsc
                 ? (cfg.force_ground_truth ? "nsc-ground-truth" : "nsc")
                 : "clc";
    m.seed = cfg.seed;
    m.control_ticks = result.time.size();
    m.final_sharing_error =
        result.sharing_error.empty() ? 0.0 : result.sharing_error.back();
    m.final_avg_voltage_error =
        result.avg_voltage_error.empty() ? 0.0 : result.avg_voltage_error.back();
    std::vector<double> stage_times;
    for (const auto& s : cfg.stages) stage_times.push_back(s.time);
    m.stage_settling_times = settling_times(result.time, result.sharing_error, stage_times);
    m.event_count = result.events.size();
    double spikes = 0;
    for (Index r = 0; r < result.spike_count.rows(); ++r)
        spikes += result.spike_count.row(r).sum();
    m.spike_total = static_cast<std::uint64_t>(spikes);
    for (std::uint8_t s : result.saturated) m.saturation_ticks += s;
    m.snn = result.ledger.snn;
    m.rnn = result.ledger.rnn;
    m.ann = result.ledger.ann;
    return m;
}

void write_run_artifacts(const ScenarioConfig& cfg, const RunResult& result,
                         const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);

    {
        CsvWriter ts(out_dir + "/timeseries.csv");
        std::vector<std::string> header{"t"};
        std::size_t ecol_base = 0;
        std::vector<std::size_t> node_ecols;
        for (std::size_t i = 0; i < result.participants.size(); ++i) {
            const std::string k = std::to_string(result.participants[i]);
            header.push_back("v" + k);
            header.push_back("i" + k);
            header.push_back("P" + k);
            node_ecols.push_back(ecol_base);
            for (Index j : result.estimate_remotes[i]) {
                header.push_back("vhat" + k + "_" + std::to_string(j));
                header.push_back("ihat" + k + "_" + std::to_string(j));
                ecol_base += 2;
            }
            header.push_back("event" + k);
            header.push_back("spikes" + k);
        }
        header.push_back("sharing_err");
        header.push_back("vavg_err");
        header.push_back("saturated");
        ts.header(header);
        for (std::size_t row = 0; row < result.time.size(); ++row) {
            const auto r = static_cast<Index>(row);
            ts.field(result.time[row]);
            for (std::size_t i = 0; i < result.participants.size(); ++i) {
                const auto c = static_cast<Index>(i);
                ts.field(result.voltage(r, c));
                ts.field(result.current(r, c));
                ts.field(result.power(r, c));
                std::size_t e0 = node_ecols[i];
                for (std::size_t j = 0; j < result.estimate_remotes[i].size(); ++j) {
                    ts.field(result.estimates(r, static_cast<Index>(e0 + 2 * j)));
                    ts.field(result.estimates(r, static_cast<Index>(e0 + 2 * j + 1)));
                }
                ts.field(result.event_flag(r, c));
                ts.field(result.spike_count(r, c));
            }
            ts.field(result.sharing_error[row]);
            ts.field(result.avg_voltage_error[row]);
            ts.field(static_cast<std::uint64_t>(result.saturated[row]));
            ts.end_row();
        }
    }
    {
        CsvWriter ev(out_dir + "/events.csv");
        ev.header({"node", "kind", "start_tick", "end_tick"});
        for (const auto& rec : result.events) {
            ev.field(static_cast<std::int64_t>(rec.node));
            switch (rec.kind) {
                case EventKind::InputVoltage: ev.field(std::string("input-voltage")); break;
                case EventKind::InputCurrent: ev.field(std::string("input-current")); break;
                default: ev.field(std::string("output")); break;
            }
            ev.field(rec.start_tick);
            ev.field(rec.end_tick);
            ev.end_row();
        }
    }
    {
        CsvWriter en(out_dir + "/energy.csv");
        en.header({"tick", "snn_acc", "snn_mac", "rnn_acc", "rnn_mac", "ann_acc",
                   "ann_mac"});
        for (std::size_t row = 0; row < result.energy_rows.size(); ++row) {
            en.field(static_cast<std::uint64_t>(row));
            for (std::uint64_t v : result.energy_rows[row]) en.field(v);
            en.end_row();
        }
    }
    {
        std::ofstream mf(out_dir + "/metrics.json", std::ios::binary);
        mf << result.metrics.to_json_text();
    }
    {
        std::ofstream cf(out_dir + "/config.json", std::ios::binary);
        cf << config_to_json_text(cfg);
    }
}

MetricsReport recompute_metrics_from_csv(const std::string& run_dir) {
    CsvTable ts = read_csv(run_dir + "/timeseries.csv");
    CsvTable ev = read_csv(run_dir + "/events.csv");
    CsvTable en = read_csv(run_dir + "/energy.csv");
    ScenarioConfig cfg = load_config_file(run_dir + "/config.json");

    MetricsReport m;
    m.case_name = cfg.name;
    m.mode = cfg.mode == RunMode::Nsc
                 ? (cfg.force_ground_truth ? "nsc-ground-truth" : "nsc")
                 : "clc";
    m.seed = cfg.seed;
    m.control_ticks = ts.rows.size();

    const auto t_col = ts.column_index("t");
    const auto share_col = ts.column_index("sharing_err");
    const auto vavg_col = ts.column_index("vavg_err");
    const auto sat_col = ts.column_index("saturated");
    std::vector<double> time, sharing, vavg;
    for (std::size_t r = 0; r < ts.rows.size(); ++r) {
        time.push_back(ts.value(r, t_col));
        sharing.push_back(ts.value(r, share_col));
        vavg.push_back(ts.value(r, vavg_col));
        m.saturation_ticks += static_cast<std::uint64_t>(ts.value(r, sat_col));
    }
    m.final_sharing_error = sharing.empty() ? 0.0 : sharing.back();
    m.final_avg_voltage_error = vavg.empty() ? 0.0 : vavg.back();
    std::vector<double> stage_times;
    for (const auto& s : cfg.stages) stage_times.push_back(s.time);
    m.stage_settling_times = settling_times(time, sharing, stage_times);
    m.event_count = ev.rows.size();

    double spikes = 0;
    for (std::size_t c = 0; c < ts.columns.size(); ++c) {
        if (ts.columns[c].rfind("spikes", 0) != 0) continue;
        for (std::size_t r = 0; r < ts.rows.size(); ++r)
            spikes += ts.value(r, static_cast<std::ptrdiff_t>(c));
    }
    m.spike_total = static_cast<std::uint64_t>(spikes);

    auto col_u64 = [&](std::size_t row, const char* name) {
        return static_cast<std::uint64_t>(
            std::stoull(en.rows[row][static_cast<std::size_t>(en.column_index(name))]));
    };
    for (std::size_t r = 0; r < en.rows.size(); ++r) {
        m.snn.acc += col_u64(r, "snn_acc");
        m.snn.mac += col_u64(r, "snn_mac");
        m.rnn.acc += col_u64(r, "rnn_acc");
        m.rnn.mac += col_u64(r, "rnn_mac");
        m.ann.acc += col_u64(r, "ann_acc");
        m.ann.mac += col_u64(r, "ann_mac");
    }
    return m;
}

}  // namespace spikegrid
