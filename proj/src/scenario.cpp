#include "spikegrid/scenario.hpp"

#include <algorithm>
#include <cmath>

namespace spikegrid {

std::vector<Index> ScenarioConfig::participants() const {
    std::vector<Index> out;
    for (const auto& n : topology.nodes)
        if (n.converter && n.converter->source_kind != SourceKind::PvMppt)
            out.push_back(n.id);
    std::sort(out.begin(), out.end());
    return out;
}

void ScenarioConfig::validate() const {
    if (!(rated_voltage > 0)) throw ConfigError("rated voltage must be positive");
    if (!(duration > 0)) throw ConfigError("duration must be positive");
    if (!(dt_electrical > 0 && dt_control > 0))
        throw ConfigError("time steps must be positive");
    double ratio = dt_control / dt_electrical;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1)
        throw ConfigError("control step must be an integer multiple of the electrical step");

    NetworkGraph<double> graph = build_network(topology);
    check_step_bound(graph, dt_electrical);
    thresholds.validate();

    double prev = -1;
    for (const auto& stage : stages) {
        if (stage.time <= prev)
            throw ConfigError("stage times must be strictly increasing");
        if (stage.time >= duration)
            throw ConfigError("stage time beyond run duration");
        prev = stage.time;
        switch (stage.kind) {
            case StageActionKind::LoadStep:
                if (stage.target < 0 ||
                    stage.target >= static_cast<Index>(topology.loads.size()))
                    throw ConfigError("stage references a missing load");
                if (!(stage.value > 0)) throw ConfigError("load step value must be positive");
                break;
            case StageActionKind::LineOutage:
            case StageActionKind::LineRestore:
                if (stage.target < 0 ||
                    stage.target >= static_cast<Index>(topology.lines.size()))
                    throw ConfigError("stage references a missing line");
                break;
            case StageActionKind::NodeDisconnect:
                if (stage.target < 0 || stage.target >= graph.node_count)
                    throw ConfigError("stage references a missing node");
                break;
            case StageActionKind::PvPowerStep:
                if (stage.target < 0 ||
                    stage.target >= static_cast<Index>(topology.pv.size()))
                    throw ConfigError("stage references a missing pv source");
                break;
        }
    }

    if (objective == SharingObjective::SocProportional) {
        for (Index id : participants()) {
            for (const auto& node : topology.nodes)
                if (node.id == id && !node.battery)
                    throw ConfigError("soc objective requires a battery at node " +
                                      std::to_string(id));
        }
    }
    if (participants().size() < 1) throw ConfigError("no controllable converters");
}

}  // namespace spikegrid
