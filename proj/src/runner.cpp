#include "spikegrid/runner.hpp"

#include "spikegrid/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace spikegrid {

namespace {

using Json = nlohmann::ordered_json;

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::InputVoltage: return "input-voltage";
        case EventKind::InputCurrent: return "input-current";
        default: return "output";
    }
}

/// Largest connected component of enabled participants under the active
/// line mask (ties broken toward the lowest node id).
std::vector<Index> main_component(const std::vector<Index>& participants,
                                  const std::vector<bool>& enabled,
                                  const std::vector<std::vector<Index>>& adjacency) {
    std::vector<Index> best;
    std::vector<bool> seen(adjacency.size(), false);
    for (Index root : participants) {
        if (seen[static_cast<std::size_t>(root)] ||
            !enabled[static_cast<std::size_t>(root)])
            continue;
        std::vector<Index> component{root};
        seen[static_cast<std::size_t>(root)] = true;
        for (std::size_t i = 0; i < component.size(); ++i) {
            for (Index nb : adjacency[static_cast<std::size_t>(component[i])]) {
                if (!seen[static_cast<std::size_t>(nb)] &&
                    enabled[static_cast<std::size_t>(nb)]) {
                    seen[static_cast<std::size_t>(nb)] = true;
                    component.push_back(nb);
                }
            }
        }
        std::sort(component.begin(), component.end());
        if (component.size() > best.size()) best = component;
    }
    return best;
}

struct NodeControl {
    DroopParams<double> droop;
    PiState<double> pi_voltage;
    PiState<double> pi_sharing;
    ObserverState<double> observer;
    double vbar = 0;
    double dv_voltage = 0;
    double dv_sharing = 0;
    bool frozen = false;
};

struct NodeCodec {
    DerivativeFilter<double> dv_fast, di_fast, dflow_fast;  // electrical rate
    DerivativeFilter<double> dv_feat, di_feat;              // control rate
    LowPass<double> steady_current;
    EventCapture capture{0};
};

struct NodeEstimator {
    bool present = false;
    SnnModel<double> model;
    EncoderConfig<double> encoder;
    std::vector<Index> remotes;
    RateDecoder<double> decoder;
    StdpTraces<double> stdp;
    Matrix<double> effective_out;  // conductance-modulated output weights
    std::vector<double> soc_estimate;  // per remote, soc objective only
    std::vector<std::uint64_t> tick_layer_spikes;  // per layer, this tick
    Vector<double> last_input, last_hidden, last_output;  // spike vectors
};

}  // namespace

Index RunResult::participant_column(Index node) const {
    for (std::size_t i = 0; i < participants.size(); ++i)
        if (participants[i] == node) return static_cast<Index>(i);
    throw std::logic_error("node is not a participant");
}

Index RunResult::estimate_column(Index observer, Index remote, bool voltage) const {
    Index col = 0;
    for (std::size_t i = 0; i < participants.size(); ++i) {
        for (Index r : estimate_remotes[i]) {
            if (participants[i] == observer && r == remote)
                return col + (voltage ? 0 : 1);
            col += 2;
        }
    }
    throw std::logic_error("estimate column not found");
}

ScenarioEngine::ScenarioEngine(ScenarioConfig cfg, const ModelBundle* bundle)
    : cfg_(std::move(cfg)), bundle_(bundle) {
    cfg_.validate();
    const bool needs_model = cfg_.mode == RunMode::Nsc && !cfg_.force_ground_truth;
    if (needs_model && bundle_ == nullptr)
        throw ConfigError("NSC mode requires a trained model bundle");
}

RunResult ScenarioEngine::run(const std::string& out_dir) {
    const ScenarioConfig& cfg = cfg_;
    NetworkGraph<double> graph = build_network(cfg.topology);
    const Index n_nodes = graph.node_count;
    const auto participants = cfg.participants();
    const std::size_t n_part = participants.size();
    const double v_nom = cfg.rated_voltage;
    const bool nsc_live = cfg.mode == RunMode::Nsc && !cfg.force_ground_truth;

    // Per-node parameter arrays (position == node id).
    std::vector<ConverterParams<double>> conv(static_cast<std::size_t>(n_nodes));
    std::vector<BatteryParams<double>> battery(static_cast<std::size_t>(n_nodes));
    std::vector<bool> has_battery(static_cast<std::size_t>(n_nodes), false);
    std::vector<double> junction_cap(static_cast<std::size_t>(n_nodes), 470e-6);
    for (const auto& node : cfg.topology.nodes) {
        const auto id = static_cast<std::size_t>(node.id);
        if (node.converter) conv[id] = *node.converter;
        junction_cap[id] = node.junction_capacitance;
        if (node.battery) {
            battery[id] = *node.battery;
            has_battery[id] = true;
        }
    }

    // Stage load/pv steps fold into the element schedules; line and node
    // actions stay timed.
    auto loads = cfg.topology.loads;
    auto pv = cfg.topology.pv;
    struct TimedAction {
        double time;
        StageActionKind kind;
        Index target;
        bool applied = false;
    };
    std::vector<TimedAction> timed;
    for (const auto& stage : cfg.stages) {
        switch (stage.kind) {
            case StageActionKind::LoadStep:
                loads[static_cast<std::size_t>(stage.target)].schedule.points.emplace_back(
                    stage.time, stage.value);
                break;
            case StageActionKind::PvPowerStep:
                pv[static_cast<std::size_t>(stage.target)].schedule.points.emplace_back(
                    stage.time, stage.value);
                break;
            default:
                timed.push_back({stage.time, stage.kind, stage.target});
        }
    }
    for (auto& load : loads)
        std::sort(load.schedule.points.begin(), load.schedule.points.end());
    for (auto& p : pv) std::sort(p.schedule.points.begin(), p.schedule.points.end());

    std::vector<bool> line_active(cfg.topology.lines.size(), true);
    std::vector<bool> conv_enabled(static_cast<std::size_t>(n_nodes), true);
    auto adjacency = converter_flow_adjacency(graph, line_active);
    auto component = main_component(participants, conv_enabled, adjacency);

    // Electrical state: flat start at rated voltage, settled by the pre-roll.
    GridState<double> state = GridState<double>::zero(n_nodes, static_cast<Index>(graph.lines.size()));
    state.bus_voltage.setConstant(v_nom);
    state.bridge_emf.setConstant(v_nom);
    for (Index k = 0; k < n_nodes; ++k)
        if (has_battery[static_cast<std::size_t>(k)])
            state.soc[k] = battery[static_cast<std::size_t>(k)].soc_initial;

    // Control state. Droop constants exist for every converter (pv-mppt
    // nodes droop locally but take no secondary corrections).
    std::vector<NodeControl> control(static_cast<std::size_t>(n_nodes));
    for (const auto& node : cfg.topology.nodes) {
        if (!node.converter) continue;
        auto& c = control[static_cast<std::size_t>(node.id)];
        const double i_max = node.converter->rated_power / v_nom;
        c.droop = DroopParams<double>::from_limits(
            v_nom, cfg.control.droop_deviation_fraction * v_nom, i_max);
        c.pi_voltage = {cfg.control.pi_voltage_kp, cfg.control.pi_voltage_ki, 0.0,
                        cfg.control.anti_windup_fraction * v_nom};
        c.pi_sharing = {cfg.control.pi_sharing_kp, cfg.control.pi_sharing_ki, 0.0,
                        cfg.control.anti_windup_fraction * v_nom};
        c.vbar = v_nom;
    }

    std::vector<NodeCodec> codec(static_cast<std::size_t>(n_nodes));
    for (Index k : participants) {
        auto& cd = codec[static_cast<std::size_t>(k)];
        cd.dv_fast.smoothing_tau = cfg.derivative_tau;
        cd.di_fast.smoothing_tau = cfg.derivative_tau;
        cd.dflow_fast.smoothing_tau = cfg.derivative_tau;
        cd.dv_feat.smoothing_tau = cfg.derivative_tau;
        cd.di_feat.smoothing_tau = cfg.derivative_tau;
        cd.steady_current.tau = cfg.steady_current_tau;
        cd.capture = EventCapture(k);
    }

    // Estimation state per participant.
    std::vector<NodeEstimator> est(static_cast<std::size_t>(n_nodes));
    std::vector<ObserverReplicaBank<double>> replicas(static_cast<std::size_t>(n_nodes));
    StdpConfig<double> stdp_cfg{cfg.stdp.a_plus, cfg.stdp.a_minus, cfg.stdp.tau_plus,
                                cfg.stdp.tau_minus, cfg.stdp.g_max};
    for (Index k : participants) {
        auto& e = est[static_cast<std::size_t>(k)];
        e.remotes.clear();
        for (Index j : participants)
            if (j != k) e.remotes.push_back(j);
        if (nsc_live) {
            const NodeModel* nm = bundle_->find(k);
            if (!nm) throw ConfigError("model bundle has no network for node " +
                                       std::to_string(k));
            if (!nm->model.trained)
                throw ConfigError("model for node " + std::to_string(k) +
                                  " is untrained");
            if (nm->remote_ids != e.remotes)
                throw ConfigError("model remote set does not match topology at node " +
                                  std::to_string(k));
            if (std::abs(bundle_->tick_dt - cfg.dt_control) > 1e-12)
                throw ConfigError("model was trained for a different control tick");
            e.present = true;
            e.model = nm->model;
            e.model.reset_state();
            e.encoder = nm->encoder;
            e.decoder = RateDecoder<double>(e.model.shape.output_width(),
                                            e.model.decode_tau, cfg.dt_control);
            const Index pre = e.model.shape.widths[e.model.shape.widths.size() - 2];
            const Index post = e.model.shape.output_width();
            e.stdp = StdpTraces<double>::init(pre, post, cfg.stdp.g_max / 2);
            e.effective_out = e.model.weights.back();
            e.tick_layer_spikes.assign(e.model.shape.widths.size(), 0);
        }
        replicas[static_cast<std::size_t>(k)].reset(e.remotes);
        if (cfg.objective == SharingObjective::SocProportional) {
            for (Index j : e.remotes)
                e.soc_estimate.push_back(battery[static_cast<std::size_t>(j)].soc_initial);
        }
    }

    const auto steps_per_tick =
        static_cast<std::int64_t>(std::llround(cfg.dt_control / cfg.dt_electrical));
    const auto settle_steps = static_cast<std::int64_t>(
        std::llround(cfg.settle_duration / cfg.dt_electrical));
    const auto run_steps =
        static_cast<std::int64_t>(std::llround(cfg.duration / cfg.dt_electrical));
    const double dt = cfg.dt_electrical;
    const double dt_c = cfg.dt_control;

    RunResult result;
    result.participants = participants;
    const auto expected_rows = static_cast<Index>((run_steps + steps_per_tick - 1) / steps_per_tick);
    result.time.reserve(static_cast<std::size_t>(expected_rows));
    result.voltage.resize(expected_rows, static_cast<Index>(n_part));
    result.current.resize(expected_rows, static_cast<Index>(n_part));
    result.power.resize(expected_rows, static_cast<Index>(n_part));
    result.setpoint.resize(expected_rows, static_cast<Index>(n_part));
    result.event_flag.resize(expected_rows, static_cast<Index>(n_part));
    result.spike_count.resize(expected_rows, static_cast<Index>(n_part));
    Index est_cols = 0;
    for (Index k : participants) {
        result.estimate_remotes.push_back(est[static_cast<std::size_t>(k)].remotes);
        for (Index j : est[static_cast<std::size_t>(k)].remotes) {
            result.estimate_columns.push_back("vhat" + std::to_string(k) + "_" +
                                              std::to_string(j));
            result.estimate_columns.push_back("ihat" + std::to_string(k) + "_" +
                                              std::to_string(j));
            est_cols += 2;
        }
    }
    result.estimates.resize(expected_rows, est_cols);
    result.truth_for_estimates.resize(expected_rows, est_cols);

    std::vector<std::tuple<std::int64_t, Index, int, Index>> spike_rows;

    // Estimate buffers: per participant, [vhat_j, ihat_j, ...] remote-major.
    std::vector<std::vector<double>> estimates(static_cast<std::size_t>(n_nodes));
    for (Index k : participants)
        estimates[static_cast<std::size_t>(k)].assign(
            est[static_cast<std::size_t>(k)].remotes.size() * 2, 0.0);

    Vector<double> v_star_last = Vector<double>::Constant(n_nodes, v_nom);
    std::vector<double> vbar_prev(static_cast<std::size_t>(n_nodes), v_nom);
    bool window_saturated = false;
    std::int64_t control_tick = 0;  // counts logged ticks from t_rel = 0

    auto charge_mode = ChargeMode::Discharging;

    // --- control tick ----------------------------------------------------
    auto do_control_tick = [&](double t_rel, bool logged) {
        Vector<double> flows = tie_line_flows(graph, state.line_current, line_active);
        const std::int64_t tick = logged ? control_tick : -1;
        OpCounts tick_snn, tick_rnn, tick_ann;

        // Codec + estimation per participant.
        for (Index k : participants) {
            const auto ks = static_cast<std::size_t>(k);
            auto& cd = codec[ks];
            auto& e = est[ks];
            const double v_k = state.bus_voltage[k];
            const double i_k = state.output_current[k];

            const double f_dv = cd.dv_feat.tick(v_k, dt_c);
            const double f_di = cd.di_feat.tick(i_k, dt_c);
            std::array<double, 4> features{v_k, i_k, f_dv, f_di};

            auto [omega_v, omega_i] = input_error_signals<double>(
                conv[ks].filter_capacitance, conv[ks].filter_inductance,
                conv[ks].amplification_ratio, cd.dv_fast.state, cd.di_fast.state,
                v_star_last[k], v_k, cd.steady_current.state, i_k);
            double omega_o = output_event_signal<double>(conv[ks].filter_capacitance,
                                                         cd.dv_fast.state,
                                                         cd.dflow_fast.state);
            const bool islanded = adjacency[ks].empty() || !conv_enabled[ks];
            if (logged && !islanded)
                cd.capture.step(detect(omega_v, omega_i, omega_o, cfg.thresholds), tick);
            else if (logged && islanded && cd.capture.active())
                cd.capture.finish(tick);  // islanding shuts the whole loop down

            const bool active = logged && !islanded && cd.capture.active();
            std::fill(e.tick_layer_spikes.begin(), e.tick_layer_spikes.end(), 0);

            if (nsc_live && e.present && logged) {
                if (logged && control_tick == 0) {
                    // Seed estimates (and the rate filter) with the settled
                    // truth: the pre-disturbance benchmark values.
                    auto& buf = estimates[ks];
                    Vector<double> seed(static_cast<Index>(buf.size()));
                    for (std::size_t r = 0; r < e.remotes.size(); ++r) {
                        seed[static_cast<Index>(2 * r)] =
                            state.bus_voltage[e.remotes[r]];
                        seed[static_cast<Index>(2 * r + 1)] =
                            state.output_current[e.remotes[r]];
                    }
                    e.decoder.seed_from_estimates(e.model, seed);
                }
                if (active) {
                    Vector<double> spikes_in = encode(features, e.encoder);
                    ForwardResult<double> fr =
                        forward_tick(e.model, spikes_in, dt_c, &e.effective_out);
                    e.decoder.tick_active(fr.output_spikes);
                    e.tick_layer_spikes = fr.layer_spike_counts;
                    if (cfg.stdp.enabled) {
                        const auto& hidden = fr.layer_spikes[fr.layer_spikes.size() - 2];
                        stdp_tick(e.stdp, hidden, fr.output_spikes, dt_c, stdp_cfg);
                        e.effective_out =
                            e.model.weights.back().cwiseProduct(
                                (2.0 / cfg.stdp.g_max) * e.stdp.conductance);
                    }
                    if (logged && !out_dir.empty()) {
                        for (int layer = 0;
                             layer < static_cast<int>(fr.layer_spikes.size()); ++layer)
                            for (Index nidx = 0; nidx < fr.layer_spikes[layer].size();
                                 ++nidx)
                                if (fr.layer_spikes[layer][nidx] > 0.5)
                                    spike_rows.emplace_back(tick, k, layer, nidx);
                    }
                }
                Vector<double> decoded = e.decoder.estimates(e.model);
                auto& buf = estimates[ks];
                for (std::size_t r = 0; r < buf.size(); ++r)
                    buf[r] = decoded[static_cast<Index>(r)];
            } else {
                // CLC and ground-truth-forced: the provider sees true values.
                auto& buf = estimates[ks];
                for (std::size_t r = 0; r < e.remotes.size(); ++r) {
                    buf[2 * r] = state.bus_voltage[e.remotes[r]];
                    buf[2 * r + 1] = state.output_current[e.remotes[r]];
                }
            }

            if (hook_.fn && logged) {
                std::vector<double> rv, ri;
                for (Index j : e.remotes) {
                    rv.push_back(state.bus_voltage[j]);
                    ri.push_back(state.output_current[j]);
                }
                hook_.fn(k, t_rel, features, active, e.remotes, rv, ri);
            }

            // Energy: the SNN is metered as ticked; binary-recurrent and
            // dense shadows ride the same spike stream and shapes.
            if (logged && nsc_live && e.present) {
                const auto& widths = e.model.shape.widths;
                for (std::size_t p = 0; p + 1 < widths.size(); ++p) {
                    const auto n_in = static_cast<std::uint64_t>(widths[p]);
                    const auto n_out = static_cast<std::uint64_t>(widths[p + 1]);
                    const std::uint64_t n_spk = e.tick_layer_spikes[p];
                    tick_snn += count_tick(EstimatorKind::Snn, n_in, n_out, n_spk, active);
                    tick_rnn += count_tick(EstimatorKind::Rnn, n_in, n_out, n_spk, true);
                    tick_ann += count_tick(EstimatorKind::Ann, n_in, n_out, 0, true);
                }
            }
        }
        if (logged) {
            result.ledger.add(EstimatorKind::Snn, tick_snn);
            result.ledger.add(EstimatorKind::Rnn, tick_rnn);
            result.ledger.add(EstimatorKind::Ann, tick_ann);
            result.energy_rows.push_back({tick_snn.acc, tick_snn.mac, tick_rnn.acc,
                                          tick_rnn.mac, tick_ann.acc, tick_ann.mac});
        }

        // Secondary control: neighbor snapshots from the previous tick.
        if (cfg.objective == SharingObjective::SocProportional) {
            double net = 0;
            for (Index k : participants)
                net += state.bus_voltage[k] * state.output_current[k];
            charge_mode = net >= 0 ? ChargeMode::Discharging : ChargeMode::Charging;
        }
        std::vector<double> vbar_next = vbar_prev;
        for (Index k : participants) {
            const auto ks = static_cast<std::size_t>(k);
            auto& c = control[ks];
            const bool islanded = adjacency[ks].empty() || !conv_enabled[ks];
            c.frozen = islanded;
            if (islanded) continue;  // corrections frozen at zero increment

            const auto& e = est[ks];
            std::vector<double> nbr_vbar, nbr_value, weights;
            double own_value = 0;

            double own_dsoc = 1, own_gamma = 0;
            bool own_excluded = false;
            if (cfg.objective == SharingObjective::SocProportional) {
                own_dsoc = delta_soc(state.soc[k], battery[ks].soc_min,
                                     battery[ks].soc_max, charge_mode);
                auto share = soc_share_value(state.bus_voltage[k] * state.output_current[k],
                                             own_dsoc, cfg.control.soc_epsilon);
                own_gamma = share.gamma;
                own_excluded = share.excluded;
            }

            if (nsc_live) {
                // Replicated remote observers advance from the estimates.
                std::vector<double> est_v(e.remotes.size());
                for (std::size_t r = 0; r < e.remotes.size(); ++r)
                    est_v[r] = estimates[ks][2 * r];
                std::vector<std::vector<Index>> remote_adj;
                for (Index j : e.remotes)
                    remote_adj.push_back(adjacency[static_cast<std::size_t>(j)]);
                replicas[ks].tick(est_v, vbar_prev[ks], k, remote_adj, dt_c);
            }

            for (Index j : adjacency[ks]) {
                weights.push_back(cfg.control.adjacency_weight);
                std::size_t r = 0;
                for (; r < e.remotes.size(); ++r)
                    if (e.remotes[r] == j) break;
                if (nsc_live) {
                    nbr_vbar.push_back(replicas[ks].observer_voltage(r));
                } else {
                    nbr_vbar.push_back(vbar_prev[static_cast<std::size_t>(j)]);
                }
                const double v_j = estimates[ks][2 * r];
                const double i_j = estimates[ks][2 * r + 1];
                switch (cfg.objective) {
                    case SharingObjective::Current: nbr_value.push_back(i_j); break;
                    case SharingObjective::Power: nbr_value.push_back(v_j * i_j); break;
                    case SharingObjective::SocProportional: {
                        double dsoc_j, p_j;
                        if (nsc_live) {
                            double soc_j = est[ks].soc_estimate[r];
                            dsoc_j = delta_soc(soc_j, battery[static_cast<std::size_t>(j)].soc_min,
                                               battery[static_cast<std::size_t>(j)].soc_max,
                                               charge_mode);
                            p_j = v_j * i_j;
                        } else {
                            dsoc_j = delta_soc(state.soc[j],
                                               battery[static_cast<std::size_t>(j)].soc_min,
                                               battery[static_cast<std::size_t>(j)].soc_max,
                                               charge_mode);
                            p_j = state.bus_voltage[j] * state.output_current[j];
                        }
                        auto share = soc_share_value(p_j, dsoc_j, cfg.control.soc_epsilon);
                        if (share.excluded) weights.back() = 0;
                        nbr_value.push_back(share.gamma);
                        break;
                    }
                }
            }

            switch (cfg.objective) {
                case SharingObjective::Current: own_value = state.output_current[k]; break;
                case SharingObjective::Power:
                    own_value = state.bus_voltage[k] * state.output_current[k];
                    break;
                case SharingObjective::SocProportional: own_value = own_gamma; break;
            }

            vbar_next[ks] = observer_step(c.observer, state.bus_voltage[k], nbr_vbar,
                                          weights, vbar_prev[ks], dt_c);
            c.dv_voltage = pi_step(c.pi_voltage, v_nom - vbar_next[ks], dt_c);
            double mismatch = own_excluded
                                  ? 0.0
                                  : sharing_mismatch(own_value, nbr_value, weights);
            c.dv_sharing = pi_step(c.pi_sharing, mismatch, dt_c);
        }
        vbar_prev = vbar_next;
        for (Index k : participants) control[static_cast<std::size_t>(k)].vbar =
            vbar_prev[static_cast<std::size_t>(k)];

        // SOC replicas for the NSC soc objective.
        if (nsc_live && cfg.objective == SharingObjective::SocProportional) {
            for (Index k : participants) {
                const auto ks = static_cast<std::size_t>(k);
                auto& e = est[ks];
                for (std::size_t r = 0; r < e.remotes.size(); ++r) {
                    const auto js = static_cast<std::size_t>(e.remotes[r]);
                    const double p_hat = estimates[ks][2 * r] * estimates[ks][2 * r + 1];
                    const double v_bat =
                        conv[js].rated_voltage / conv[js].amplification_ratio;
                    e.soc_estimate[r] -= (p_hat / v_bat) * dt_c / battery[js].capacity;
                }
            }
        }

        // Row logging.
        if (logged) {
            const Index row = static_cast<Index>(control_tick);
            result.time.push_back(t_rel);
            double comp_v = 0, comp_n = 0;
            std::vector<double> comp_values;
            Index ecol = 0;
            for (std::size_t i = 0; i < n_part; ++i) {
                const Index k = participants[i];
                const auto ks = static_cast<std::size_t>(k);
                const double v_k = state.bus_voltage[k];
                const double i_k = state.output_current[k];
                result.voltage(row, static_cast<Index>(i)) = v_k;
                result.current(row, static_cast<Index>(i)) = i_k;
                result.power(row, static_cast<Index>(i)) = v_k * i_k;
                result.setpoint(row, static_cast<Index>(i)) = v_star_last[k];
                result.event_flag(row, static_cast<Index>(i)) =
                    codec[ks].capture.active() ? 1.0 : 0.0;
                std::uint64_t spk = 0;
                for (std::uint64_t c : est[ks].tick_layer_spikes) spk += c;
                result.spike_count(row, static_cast<Index>(i)) = static_cast<double>(spk);
                for (std::size_t r = 0; r < est[ks].remotes.size(); ++r) {
                    result.estimates(row, ecol) = estimates[ks][2 * r];
                    result.estimates(row, ecol + 1) = estimates[ks][2 * r + 1];
                    result.truth_for_estimates(row, ecol) =
                        state.bus_voltage[est[ks].remotes[r]];
                    result.truth_for_estimates(row, ecol + 1) =
                        state.output_current[est[ks].remotes[r]];
                    ecol += 2;
                }
            }
            for (Index k : component) {
                comp_v += state.bus_voltage[k];
                comp_n += 1;
                switch (cfg.objective) {
                    case SharingObjective::Current:
                        comp_values.push_back(state.output_current[k]);
                        break;
                    case SharingObjective::Power:
                        comp_values.push_back(state.bus_voltage[k] *
                                              state.output_current[k]);
                        break;
                    case SharingObjective::SocProportional: {
                        const auto ks = static_cast<std::size_t>(k);
                        double dsoc = delta_soc(state.soc[k], battery[ks].soc_min,
                                                battery[ks].soc_max, charge_mode);
                        auto share = soc_share_value(
                            state.bus_voltage[k] * state.output_current[k], dsoc,
                            cfg.control.soc_epsilon);
                        if (!share.excluded) comp_values.push_back(share.gamma);
                        break;
                    }
                }
            }
            double sharing_err = 0;
            if (comp_values.size() >= 2) {
                double lo = *std::min_element(comp_values.begin(), comp_values.end());
                double hi = *std::max_element(comp_values.begin(), comp_values.end());
                double mean = 0;
                for (double x : comp_values) mean += x;
                mean /= static_cast<double>(comp_values.size());
                sharing_err = (hi - lo) / std::max(std::abs(mean), 1e-12);
            }
            result.sharing_error.push_back(sharing_err);
            double vavg_err = comp_n > 0
                                  ? std::abs(comp_v / comp_n - v_nom) / v_nom
                                  : 0.0;
            result.avg_voltage_error.push_back(vavg_err);
            result.saturated.push_back(window_saturated ? 1 : 0);
            bool any_ev = false;
            for (Index k : participants)
                any_ev = any_ev || codec[static_cast<std::size_t>(k)].capture.active();
            result.any_event.push_back(any_ev ? 1 : 0);
            window_saturated = false;
            ++control_tick;
        }
    };

    // --- main loop --------------------------------------------------------
    const std::int64_t total_steps = settle_steps + run_steps;
    for (std::int64_t step = 0; step < total_steps; ++step) {
        const double t_rel = static_cast<double>(step - settle_steps) * dt;

        for (auto& action : timed) {
            if (action.applied || t_rel < action.time) continue;
            action.applied = true;
            switch (action.kind) {
                case StageActionKind::LineOutage:
                    line_active[static_cast<std::size_t>(action.target)] = false;
                    break;
                case StageActionKind::LineRestore:
                    line_active[static_cast<std::size_t>(action.target)] = true;
                    break;
                case StageActionKind::NodeDisconnect:
                    conv_enabled[static_cast<std::size_t>(action.target)] = false;
                    for (Index l : graph.incident_lines[static_cast<std::size_t>(action.target)])
                        line_active[static_cast<std::size_t>(l)] = false;
                    break;
                default: break;
            }
            adjacency = converter_flow_adjacency(graph, line_active);
            component = main_component(participants, conv_enabled, adjacency);
        }

        if ((step - settle_steps) % steps_per_tick == 0)
            do_control_tick(t_rel, step >= settle_steps);

        // Electrical substep: droop runs at the electrical rate, secondary
        // corrections are held between control ticks.
        Vector<double> setpoints = Vector<double>::Constant(n_nodes, v_nom);
        for (Index k : participants) {
            const auto ks = static_cast<std::size_t>(k);
            const auto& c = control[ks];
            double v_ref = droop_reference(state.output_current[k], c.droop);
            auto sp = compose_setpoint(v_ref, c.dv_voltage, c.dv_sharing, v_nom,
                                       cfg.control.setpoint_lo, cfg.control.setpoint_hi);
            setpoints[k] = sp.value;
            if (sp.saturated) window_saturated = true;
        }
        for (const auto& node : cfg.topology.nodes) {
            if (node.converter && node.converter->source_kind == SourceKind::PvMppt)
                setpoints[node.id] =
                    droop_reference(state.output_current[node.id],
                                    control[static_cast<std::size_t>(node.id)].droop);
        }
        v_star_last = setpoints;

        Vector<double> draw =
            external_currents(graph, loads, pv, state.bus_voltage, v_nom, t_rel);
        StepInputs<double> inputs;
        inputs.setpoints = &setpoints;
        inputs.external_draw = &draw;
        inputs.line_active = &line_active;
        inputs.converter_enabled = &conv_enabled;
        step_network(graph, conv, junction_cap, state, inputs, dt);

        if (!state.bus_voltage.allFinite())
            check_finite(state, step - settle_steps);

        Vector<double> flows = tie_line_flows(graph, state.line_current, line_active);
        for (Index k : participants) {
            const auto ks = static_cast<std::size_t>(k);
            auto& cd = codec[ks];
            cd.dv_fast.tick(state.bus_voltage[k], dt);
            cd.di_fast.tick(state.output_current[k], dt);
            cd.dflow_fast.tick(flows[k], dt);
            cd.steady_current.tick(state.output_current[k], dt);
            if (has_battery[ks]) {
                // Battery current from power balance at the battery voltage.
                const double v_bat = conv[ks].rated_voltage / conv[ks].amplification_ratio;
                const double i_bat =
                    state.bus_voltage[k] * state.output_current[k] / v_bat;
                state.soc[k] = update_soc(state.soc[k], i_bat, dt, battery[ks]).soc;
            }
        }
    }

    for (Index k : participants) {
        auto& cd = codec[static_cast<std::size_t>(k)];
        cd.capture.finish(control_tick - 1);
        for (const auto& rec : cd.capture.records()) result.events.push_back(rec);
    }
    std::sort(result.events.begin(), result.events.end(),
              [](const EventRecord& a, const EventRecord& b) {
                  if (a.node != b.node) return a.node < b.node;
                  if (a.start_tick != b.start_tick) return a.start_tick < b.start_tick;
                  return static_cast<int>(a.kind) < static_cast<int>(b.kind);
              });

    result.metrics = compute_metrics(cfg, result);
    if (!out_dir.empty()) {
        write_run_artifacts(cfg, result, out_dir);
        // Spike raster (tick, node, layer, neuron).
        CsvWriter spikes(out_dir + "/spikes.csv");
        spikes.header({"tick", "node", "layer", "neuron"});
        for (const auto& [tick, node, layer, neuron] : spike_rows) {
            spikes.field(tick);
            spikes.field(static_cast<std::int64_t>(node));
            spikes.field(layer);
            spikes.field(static_cast<std::int64_t>(neuron));
            spikes.end_row();
        }
    }
    return result;
}

}  // namespace spikegrid
