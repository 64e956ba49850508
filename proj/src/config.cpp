#include "spikegrid/scenario.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>

namespace spikegrid {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

void require_keys(const Json& j, const std::set<std::string>& allowed,
                  const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
T get_or(const Json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

Schedule<double> parse_schedule(const Json& j, const std::string& where) {
    Schedule<double> s;
    if (!j.is_array()) throw ConfigError(where + " schedule must be an array");
    for (const auto& point : j) {
        if (!point.is_array() || point.size() != 2)
            throw ConfigError(where + " schedule entries are [time, value] pairs");
        s.points.emplace_back(point[0].get<double>(), point[1].get<double>());
    }
    return s;
}

Json dump_schedule(const Schedule<double>& s) {
    Json j = Json::array();
    for (const auto& [t, v] : s.points) j.push_back(Json::array({t, v}));
    return j;
}

SourceKind parse_source_kind(const std::string& s) {
    if (s == "stiff-source") return SourceKind::StiffSource;
    if (s == "battery") return SourceKind::Battery;
    if (s == "pv-mppt") return SourceKind::PvMppt;
    throw ConfigError("unknown source kind '" + s + "'");
}

std::string source_kind_name(SourceKind k) {
    switch (k) {
        case SourceKind::StiffSource: return "stiff-source";
        case SourceKind::Battery: return "battery";
        default: return "pv-mppt";
    }
}

StageActionKind parse_action(const std::string& s) {
    if (s == "load-step") return StageActionKind::LoadStep;
    if (s == "line-outage") return StageActionKind::LineOutage;
    if (s == "line-restore") return StageActionKind::LineRestore;
    if (s == "node-disconnect") return StageActionKind::NodeDisconnect;
    if (s == "pv-power-step") return StageActionKind::PvPowerStep;
    throw ConfigError("unknown stage action '" + s + "'");
}

std::string action_name(StageActionKind k) {
    switch (k) {
        case StageActionKind::LoadStep: return "load-step";
        case StageActionKind::LineOutage: return "line-outage";
        case StageActionKind::LineRestore: return "line-restore";
        case StageActionKind::NodeDisconnect: return "node-disconnect";
        default: return "pv-power-step";
    }
}

}  // namespace

ScenarioConfig config_from_json_text(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    require_keys(j, {"schema_version", "name", "rated_voltage", "duration",
                     "settle_duration", "dt_electrical", "dt_control", "seed", "mode",
                     "force_ground_truth", "objective", "model", "nodes", "lines",
                     "loads", "pv", "stages", "thresholds", "control", "encoder",
                     "snn", "stdp", "derivative_tau", "steady_current_tau",
                     "non_paper_values"},
                 "config");
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kSchemaVersion)
        throw ConfigError("config schema_version must be " + std::to_string(kSchemaVersion));

    ScenarioConfig cfg;
    cfg.name = get_or<std::string>(j, "name", "scenario");
    cfg.rated_voltage = j.at("rated_voltage").get<double>();
    cfg.duration = j.at("duration").get<double>();
    cfg.settle_duration = get_or(j, "settle_duration", cfg.settle_duration);
    cfg.dt_electrical = j.at("dt_electrical").get<double>();
    cfg.dt_control = get_or(j, "dt_control", cfg.dt_control);
    cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
    std::string mode = get_or<std::string>(j, "mode", "clc");
    if (mode != "clc" && mode != "nsc") throw ConfigError("mode must be clc or nsc");
    cfg.mode = mode == "nsc" ? RunMode::Nsc : RunMode::Clc;
    cfg.force_ground_truth = get_or(j, "force_ground_truth", false);
    std::string objective = get_or<std::string>(j, "objective", "current");
    if (objective == "current") cfg.objective = SharingObjective::Current;
    else if (objective == "power") cfg.objective = SharingObjective::Power;
    else if (objective == "soc") cfg.objective = SharingObjective::SocProportional;
    else throw ConfigError("objective must be current, power or soc");
    cfg.model_path = get_or<std::string>(j, "model", "");

    for (const auto& node : j.at("nodes")) {
        require_keys(node, {"id", "converter", "battery", "junction_capacitance"},
                     "node");
        NodeSpec<double> spec;
        spec.id = node.at("id").get<Index>();
        spec.junction_capacitance = get_or(node, "junction_capacitance", 470e-6);
        if (node.contains("converter")) {
            const auto& c = node.at("converter");
            require_keys(c,
                         {"rated_voltage", "rated_power", "filter_inductance",
                          "filter_capacitance", "amplification_ratio", "source_kind",
                          "tracking_time_constant"},
                         "converter");
            ConverterParams<double> p;
            p.rated_voltage = c.at("rated_voltage").get<double>();
            p.rated_power = c.at("rated_power").get<double>();
            p.filter_inductance = c.at("filter_inductance").get<double>();
            p.filter_capacitance = c.at("filter_capacitance").get<double>();
            p.amplification_ratio = get_or(c, "amplification_ratio", 1.0);
            p.source_kind = parse_source_kind(get_or<std::string>(c, "source_kind", "stiff-source"));
            p.tracking_time_constant = get_or(c, "tracking_time_constant", 1e-3);
            spec.converter = p;
        }
        if (node.contains("battery")) {
            const auto& b = node.at("battery");
            require_keys(b, {"capacity", "soc_initial", "soc_max", "soc_min"}, "battery");
            spec.battery = BatteryParams<double>{
                b.at("capacity").get<double>(), b.at("soc_initial").get<double>(),
                get_or(b, "soc_max", 1.0), get_or(b, "soc_min", 0.0)};
        }
        cfg.topology.nodes.push_back(spec);
    }
    for (const auto& l : j.at("lines")) {
        require_keys(l, {"from", "to", "resistance", "inductance"}, "line");
        cfg.topology.lines.push_back({l.at("resistance").get<double>(),
                                      l.at("inductance").get<double>(),
                                      l.at("from").get<Index>(), l.at("to").get<Index>()});
    }
    if (j.contains("loads")) {
        for (const auto& l : j.at("loads")) {
            require_keys(l, {"node", "kind", "schedule"}, "load");
            LoadModel<double> load;
            load.node = l.at("node").get<Index>();
            std::string kind = l.at("kind").get<std::string>();
            if (kind == "resistive") load.kind = LoadKind::Resistive;
            else if (kind == "constant-power") load.kind = LoadKind::ConstantPower;
            else throw ConfigError("load kind must be resistive or constant-power");
            load.schedule = parse_schedule(l.at("schedule"), "load");
            cfg.topology.loads.push_back(load);
        }
    }
    if (j.contains("pv")) {
        for (const auto& p : j.at("pv")) {
            require_keys(p, {"node", "schedule"}, "pv");
            cfg.topology.pv.push_back(
                {p.at("node").get<Index>(), parse_schedule(p.at("schedule"), "pv")});
        }
    }
    if (j.contains("stages")) {
        for (const auto& s : j.at("stages")) {
            require_keys(s, {"time", "action", "target", "value"}, "stage");
            StageAction a;
            a.time = s.at("time").get<double>();
            a.kind = parse_action(s.at("action").get<std::string>());
            a.target = s.at("target").get<Index>();
            a.value = get_or(s, "value", 0.0);
            cfg.stages.push_back(a);
        }
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        require_keys(t, {"sigma_v", "sigma_i", "sigma_o"}, "thresholds");
        cfg.thresholds = {t.at("sigma_v").get<double>(), t.at("sigma_i").get<double>(),
                          t.at("sigma_o").get<double>()};
    }
    if (j.contains("control")) {
        const auto& c = j.at("control");
        require_keys(c,
                     {"droop_deviation_fraction", "pi_voltage_kp", "pi_voltage_ki",
                      "pi_sharing_kp", "pi_sharing_ki", "anti_windup_fraction",
                      "setpoint_lo", "setpoint_hi", "adjacency_weight", "soc_epsilon"},
                     "control");
        auto& cc = cfg.control;
        cc.droop_deviation_fraction = get_or(c, "droop_deviation_fraction", cc.droop_deviation_fraction);
        cc.pi_voltage_kp = get_or(c, "pi_voltage_kp", cc.pi_voltage_kp);
        cc.pi_voltage_ki = get_or(c, "pi_voltage_ki", cc.pi_voltage_ki);
        cc.pi_sharing_kp = get_or(c, "pi_sharing_kp", cc.pi_sharing_kp);
        cc.pi_sharing_ki = get_or(c, "pi_sharing_ki", cc.pi_sharing_ki);
        cc.anti_windup_fraction = get_or(c, "anti_windup_fraction", cc.anti_windup_fraction);
        cc.setpoint_lo = get_or(c, "setpoint_lo", cc.setpoint_lo);
        cc.setpoint_hi = get_or(c, "setpoint_hi", cc.setpoint_hi);
        cc.adjacency_weight = get_or(c, "adjacency_weight", cc.adjacency_weight);
        cc.soc_epsilon = get_or(c, "soc_epsilon", cc.soc_epsilon);
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        require_keys(e, {"neurons_per_feature", "tuning_width"}, "encoder");
        cfg.encoder.neurons_per_feature = get_or(e, "neurons_per_feature", cfg.encoder.neurons_per_feature);
        cfg.encoder.tuning_width = get_or(e, "tuning_width", cfg.encoder.tuning_width);
    }
    if (j.contains("snn")) {
        const auto& s = j.at("snn");
        require_keys(s,
                     {"hidden_layers", "hidden_width", "tau_m", "tau_syn", "tau_ref",
                      "threshold", "decode_tau"},
                     "snn");
        auto& sc = cfg.snn;
        sc.hidden_layers = get_or(s, "hidden_layers", sc.hidden_layers);
        sc.hidden_width = get_or(s, "hidden_width", sc.hidden_width);
        sc.tau_m = get_or(s, "tau_m", sc.tau_m);
        sc.tau_syn = get_or(s, "tau_syn", sc.tau_syn);
        sc.tau_ref = get_or(s, "tau_ref", sc.tau_ref);
        sc.threshold = get_or(s, "threshold", sc.threshold);
        sc.decode_tau = get_or(s, "decode_tau", sc.decode_tau);
    }
    if (j.contains("stdp")) {
        const auto& s = j.at("stdp");
        require_keys(s, {"enabled", "a_plus", "a_minus", "tau_plus", "tau_minus", "g_max"},
                     "stdp");
        auto& sd = cfg.stdp;
        sd.enabled = get_or(s, "enabled", sd.enabled);
        sd.a_plus = get_or(s, "a_plus", sd.a_plus);
        sd.a_minus = get_or(s, "a_minus", sd.a_minus);
        sd.tau_plus = get_or(s, "tau_plus", sd.tau_plus);
        sd.tau_minus = get_or(s, "tau_minus", sd.tau_minus);
        sd.g_max = get_or(s, "g_max", sd.g_max);
    }
    cfg.derivative_tau = get_or(j, "derivative_tau", cfg.derivative_tau);
    cfg.steady_current_tau = get_or(j, "steady_current_tau", cfg.steady_current_tau);
    if (j.contains("non_paper_values"))
        cfg.non_paper = j.at("non_paper_values").get<std::vector<std::string>>();

    cfg.validate();
    return cfg;
}

std::string config_to_json_text(const ScenarioConfig& cfg) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["name"] = cfg.name;
    j["rated_voltage"] = cfg.rated_voltage;
    j["duration"] = cfg.duration;
    j["settle_duration"] = cfg.settle_duration;
    j["dt_electrical"] = cfg.dt_electrical;
    j["dt_control"] = cfg.dt_control;
    j["seed"] = cfg.seed;
    j["mode"] = cfg.mode == RunMode::Nsc ? "nsc" : "clc";
    j["force_ground_truth"] = cfg.force_ground_truth;
    j["objective"] = cfg.objective == SharingObjective::Current ? "current"
                     : cfg.objective == SharingObjective::Power ? "power"
                                                                : "soc";
    if (!cfg.model_path.empty()) j["model"] = cfg.model_path;

    j["nodes"] = Json::array();
    for (const auto& n : cfg.topology.nodes) {
        Json node;
        node["id"] = n.id;
        if (n.converter) {
            const auto& c = *n.converter;
            node["converter"] = {{"rated_voltage", c.rated_voltage},
                                 {"rated_power", c.rated_power},
                                 {"filter_inductance", c.filter_inductance},
                                 {"filter_capacitance", c.filter_capacitance},
                                 {"amplification_ratio", c.amplification_ratio},
                                 {"source_kind", source_kind_name(c.source_kind)},
                                 {"tracking_time_constant", c.tracking_time_constant}};
        } else {
            node["junction_capacitance"] = n.junction_capacitance;
        }
        if (n.battery) {
            const auto& b = *n.battery;
            node["battery"] = {{"capacity", b.capacity},
                               {"soc_initial", b.soc_initial},
                               {"soc_max", b.soc_max},
                               {"soc_min", b.soc_min}};
        }
        j["nodes"].push_back(node);
    }
    j["lines"] = Json::array();
    for (const auto& l : cfg.topology.lines)
        j["lines"].push_back({{"from", l.from},
                              {"to", l.to},
                              {"resistance", l.resistance},
                              {"inductance", l.inductance}});
    j["loads"] = Json::array();
    for (const auto& l : cfg.topology.loads)
        j["loads"].push_back(
            {{"node", l.node},
             {"kind", l.kind == LoadKind::Resistive ? "resistive" : "constant-power"},
             {"schedule", dump_schedule(l.schedule)}});
    j["pv"] = Json::array();
    for (const auto& p : cfg.topology.pv)
        j["pv"].push_back({{"node", p.node}, {"schedule", dump_schedule(p.schedule)}});
    j["stages"] = Json::array();
    for (const auto& s : cfg.stages)
        j["stages"].push_back({{"time", s.time},
                               {"action", action_name(s.kind)},
                               {"target", s.target},
                               {"value", s.value}});
    j["thresholds"] = {{"sigma_v", cfg.thresholds.sigma_v},
                       {"sigma_i", cfg.thresholds.sigma_i},
                       {"sigma_o", cfg.thresholds.sigma_o}};
    j["control"] = {{"droop_deviation_fraction", cfg.control.droop_deviation_fraction},
                    {"pi_voltage_kp", cfg.control.pi_voltage_kp},
                    {"pi_voltage_ki", cfg.control.pi_voltage_ki},
                    {"pi_sharing_kp", cfg.control.pi_sharing_kp},
                    {"pi_sharing_ki", cfg.control.pi_sharing_ki},
                    {"anti_windup_fraction", cfg.control.anti_windup_fraction},
                    {"setpoint_lo", cfg.control.setpoint_lo},
                    {"setpoint_hi", cfg.control.setpoint_hi},
                    {"adjacency_weight", cfg.control.adjacency_weight},
                    {"soc_epsilon", cfg.control.soc_epsilon}};
    j["encoder"] = {{"neurons_per_feature", cfg.encoder.neurons_per_feature},
                    {"tuning_width", cfg.encoder.tuning_width}};
    j["snn"] = {{"hidden_layers", cfg.snn.hidden_layers},
                {"hidden_width", cfg.snn.hidden_width},
                {"tau_m", cfg.snn.tau_m},
                {"tau_syn", cfg.snn.tau_syn},
                {"tau_ref", cfg.snn.tau_ref},
                {"threshold", cfg.snn.threshold},
                {"decode_tau", cfg.snn.decode_tau}};
    j["stdp"] = {{"enabled", cfg.stdp.enabled},
                 {"a_plus", cfg.stdp.a_plus},
                 {"a_minus", cfg.stdp.a_minus},
                 {"tau_plus", cfg.stdp.tau_plus},
                 {"tau_minus", cfg.stdp.tau_minus},
                 {"g_max", cfg.stdp.g_max}};
    j["derivative_tau"] = cfg.derivative_tau;
    j["steady_current_tau"] = cfg.steady_current_tau;
    j["non_paper_values"] = cfg.non_paper;
    return j.dump(2) + "\n";
}

ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

ScenarioConfig resolve_case(const std::string& id_or_path) {
    if (id_or_path == "I" || id_or_path == "II" || id_or_path == "III" ||
        id_or_path == "IV" || id_or_path == "V" || id_or_path == "E")
        return case_preset(id_or_path);
    return load_config_file(id_or_path);
}

}  // namespace spikegrid
