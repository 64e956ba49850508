#include "spikegrid/dataset.hpp"

#include "spikegrid/csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

namespace spikegrid {

namespace {

using Json = nlohmann::ordered_json;

struct Collected {
    std::vector<std::array<double, 4>> features;
    std::vector<std::vector<double>> targets;  // v,i per remote
};

/// One sweep entry: a modified copy of the base scenario.
std::vector<ScenarioConfig> default_sweep(const ScenarioConfig& base,
                                          const DatasetOptions& options) {
    if (base.topology.loads.empty())
        throw ConfigError("dataset sweep needs at least one load");
    std::vector<ScenarioConfig> runs;
    const auto& load0 = base.topology.loads.front();
    const double v0 = load0.schedule.points.front().second;

    auto sweep_base = base;
    sweep_base.mode = RunMode::Clc;
    sweep_base.force_ground_truth = false;
    sweep_base.model_path.clear();
    sweep_base.duration = 1.4;
    sweep_base.stages.clear();

    for (double m : options.magnitudes) {
        auto run = sweep_base;
        // Resistive loads grow by dividing the resistance.
        const double stepped = load0.kind == LoadKind::Resistive ? v0 / m : v0 * m;
        run.name = base.name + "-sweep";
        run.stages = {{0.3, StageActionKind::LoadStep, 0, stepped},
                      {0.9, StageActionKind::LoadStep, 0, v0}};
        runs.push_back(std::move(run));
    }
    if (options.include_outages) {
        for (std::size_t l = 0; l < base.topology.lines.size(); ++l) {
            auto run = sweep_base;
            run.name = base.name + "-sweep-outage";
            run.stages = {{0.3, StageActionKind::LineOutage, static_cast<Index>(l), 0},
                          {0.9, StageActionKind::LineRestore, static_cast<Index>(l), 0}};
            runs.push_back(std::move(run));
        }
    }
    return runs;
}

}  // namespace

DatasetInfo generate_dataset(const ScenarioConfig& base, const std::string& out_dir,
                             const DatasetOptions& options) {
    const auto participants = base.participants();
    std::map<Index, Collected> collected;
    std::map<Index, std::vector<Index>> remotes;

    auto runs = default_sweep(base, options);
    if (runs.empty()) throw ConfigError("dataset sweep is empty");
    for (auto& run : runs) {
        ScenarioEngine engine(run, nullptr);
        SampleHook hook;
        hook.fn = [&](Index node, double, const std::array<double, 4>& features,
                      bool active, const std::vector<Index>& remote_ids,
                      const std::vector<double>& rv, const std::vector<double>& ri) {
            if (!active) return;
            auto& c = collected[node];
            c.features.push_back(features);
            std::vector<double> target;
            for (std::size_t r = 0; r < remote_ids.size(); ++r) {
                target.push_back(rv[r]);
                target.push_back(ri[r]);
            }
            c.targets.push_back(std::move(target));
            remotes[node] = remote_ids;
        };
        engine.set_sample_hook(hook);
        engine.run();
    }

    for (Index k : participants) {
        if (!collected.count(k) || collected[k].features.empty())
            throw ConfigError("dataset sweep produced zero events for node " +
                              std::to_string(k));
        if (static_cast<Index>(collected[k].features.size()) < options.rows)
            throw ConfigError("dataset sweep produced only " +
                              std::to_string(collected[k].features.size()) +
                              " event samples for node " + std::to_string(k) +
                              " (need " + std::to_string(options.rows) + ")");
    }

    std::filesystem::create_directories(out_dir);
    Json manifest;
    manifest["schema_version"] = 1;
    manifest["case"] = base.name;
    manifest["rated_voltage"] = base.rated_voltage;
    manifest["dt_control"] = base.dt_control;
    manifest["rows"] = options.rows;
    manifest["seed"] = base.seed;
    manifest["encoder"] = {{"neurons_per_feature", base.encoder.neurons_per_feature},
                           {"tuning_width", base.encoder.tuning_width}};
    manifest["snn"] = {{"hidden_layers", base.snn.hidden_layers},
                       {"hidden_width", base.snn.hidden_width},
                       {"tau_m", base.snn.tau_m},
                       {"tau_syn", base.snn.tau_syn},
                       {"tau_ref", base.snn.tau_ref},
                       {"threshold", base.snn.threshold},
                       {"decode_tau", base.snn.decode_tau}};
    manifest["nodes"] = Json::array();

    DatasetInfo info;
    info.rows = options.rows;
    info.directory = out_dir;

    for (Index k : participants) {
        const auto& c = collected[k];
        const auto total = static_cast<Index>(c.features.size());
        std::vector<std::size_t> picks;
        for (Index i = 0; i < options.rows; ++i)
            picks.push_back(static_cast<std::size_t>(
                (static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(total)) /
                static_cast<std::uint64_t>(options.rows)));

        CsvWriter feat(out_dir + "/features_node" + std::to_string(k) + ".csv");
        feat.header({"v", "i", "dv", "di"});
        CsvWriter targ(out_dir + "/targets_node" + std::to_string(k) + ".csv");
        std::vector<std::string> tcols;
        for (Index j : remotes[k]) {
            tcols.push_back("v" + std::to_string(j));
            tcols.push_back("i" + std::to_string(j));
        }
        targ.header(tcols);

        std::array<double, 4> fmin, fmax;
        fmin.fill(1e300);
        fmax.fill(-1e300);
        for (std::size_t p : picks) {
            for (int f = 0; f < 4; ++f) {
                fmin[static_cast<std::size_t>(f)] =
                    std::min(fmin[static_cast<std::size_t>(f)], c.features[p][static_cast<std::size_t>(f)]);
                fmax[static_cast<std::size_t>(f)] =
                    std::max(fmax[static_cast<std::size_t>(f)], c.features[p][static_cast<std::size_t>(f)]);
            }
            for (int f = 0; f < 4; ++f) feat.field(c.features[p][static_cast<std::size_t>(f)]);
            feat.end_row();
            for (double t : c.targets[p]) targ.field(t);
            targ.end_row();
        }

        Json ranges = Json::array();
        for (int f = 0; f < 4; ++f) {
            double a = fmin[static_cast<std::size_t>(f)], b = fmax[static_cast<std::size_t>(f)];
            double span = b - a;
            if (span < 1e-9) span = std::max(std::abs(a) * 0.1, 1e-3);
            ranges.push_back(Json::array({a - 0.1 * span, b + 0.1 * span}));
        }
        Json bases = Json::array();
        for (Index j : remotes[k]) {
            bases.push_back(base.rated_voltage);
            double p_rated = 0;
            for (const auto& node : base.topology.nodes)
                if (node.id == j && node.converter) p_rated = node.converter->rated_power;
            bases.push_back(p_rated / base.rated_voltage);
        }
        Json node_entry;
        node_entry["node"] = k;
        node_entry["remotes"] = remotes[k];
        node_entry["feature_ranges"] = ranges;
        node_entry["bases"] = bases;
        manifest["nodes"].push_back(node_entry);
        info.nodes.push_back(k);
    }

    std::ofstream mf(out_dir + "/manifest.json", std::ios::binary);
    mf << manifest.dump(2) << "\n";
    return info;
}

DatasetBundle load_dataset(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw ConfigError("missing dataset manifest in " + dir);
    Json manifest = Json::parse(mf);

    DatasetBundle bundle;
    bundle.case_name = manifest.at("case").get<std::string>();
    bundle.rated_voltage = manifest.at("rated_voltage").get<double>();
    bundle.dt_control = manifest.at("dt_control").get<double>();
    const auto& snn = manifest.at("snn");
    bundle.snn.hidden_layers = snn.at("hidden_layers").get<Index>();
    bundle.snn.hidden_width = snn.at("hidden_width").get<Index>();
    bundle.snn.tau_m = snn.at("tau_m").get<double>();
    bundle.snn.tau_syn = snn.at("tau_syn").get<double>();
    bundle.snn.tau_ref = snn.at("tau_ref").get<double>();
    bundle.snn.threshold = snn.at("threshold").get<double>();
    bundle.snn.decode_tau = snn.at("decode_tau").get<double>();

    for (const auto& entry : manifest.at("nodes")) {
        NodeDataset node;
        node.node = entry.at("node").get<Index>();
        node.remotes = entry.at("remotes").get<std::vector<Index>>();
        node.encoder.neurons_per_feature =
            manifest.at("encoder").at("neurons_per_feature").get<Index>();
        node.encoder.tuning_width = manifest.at("encoder").at("tuning_width").get<double>();
        const auto& ranges = entry.at("feature_ranges");
        for (int f = 0; f < 4; ++f)
            node.encoder.ranges[static_cast<std::size_t>(f)] = {
                ranges[static_cast<std::size_t>(f)][0].get<double>(),
                ranges[static_cast<std::size_t>(f)][1].get<double>()};

        CsvTable feat = read_csv(dir + "/features_node" + std::to_string(node.node) + ".csv");
        CsvTable targ = read_csv(dir + "/targets_node" + std::to_string(node.node) + ".csv");
        if (feat.rows.size() != targ.rows.size())
            throw ConfigError("feature/target row mismatch in dataset");
        const auto rows = static_cast<Index>(feat.rows.size());
        node.set.features.resize(rows, 4);
        node.set.targets.resize(rows, static_cast<Index>(targ.columns.size()));
        for (Index r = 0; r < rows; ++r) {
            for (Index f = 0; f < 4; ++f)
                node.set.features(r, f) =
                    feat.value(static_cast<std::size_t>(r), f);
            for (Index t = 0; t < node.set.targets.cols(); ++t)
                node.set.targets(r, t) = targ.value(static_cast<std::size_t>(r), t);
        }
        const auto& bases = entry.at("bases");
        node.set.bases.resize(static_cast<Index>(bases.size()));
        for (Index b = 0; b < node.set.bases.size(); ++b)
            node.set.bases[b] = bases[static_cast<std::size_t>(b)].get<double>();
        bundle.nodes.push_back(std::move(node));
    }
    return bundle;
}

TrainSummary train_models(const DatasetBundle& data, const TrainOptions& options,
                          const std::string& model_out) {
    ModelBundle bundle;
    bundle.tick_dt = data.dt_control;
    TrainSummary summary;

    std::vector<std::vector<double>> loss_logs;
    for (const auto& node : data.nodes) {
        NetworkShape shape;
        shape.widths.push_back(node.encoder.width());
        for (Index h = 0; h < data.snn.hidden_layers; ++h)
            shape.widths.push_back(data.snn.hidden_width);
        shape.widths.push_back(static_cast<Index>(node.remotes.size()) * 2);

        NeuronConfig<double> neuron{data.snn.tau_m, data.snn.tau_syn, data.snn.tau_ref,
                                    data.snn.threshold};
        SnnModel<double> model = make_model(
            shape, neuron, options.seed + static_cast<std::uint64_t>(node.node));
        model.decode_tau = data.snn.decode_tau;

        TrainerConfig<double> cfg;
        cfg.epochs = options.epochs;
        cfg.learning_rate = options.learning_rate;
        cfg.seed = options.seed;
        cfg.present_ticks = options.present_ticks;
        cfg.tick_dt = data.dt_control;

        TrainReport<double> report = train_offline(model, node.encoder, node.set, cfg);

        NodeModel out;
        out.node_id = node.node;
        out.remote_ids = node.remotes;
        out.model = std::move(model);
        out.encoder = node.encoder;
        bundle.nodes.push_back(std::move(out));

        summary.nodes.push_back(node.node);
        summary.first_loss.push_back(report.loss.empty() ? 0 : report.loss.front());
        summary.final_loss.push_back(report.loss.empty() ? 0 : report.loss.back());
        std::vector<double> log(report.loss.begin(), report.loss.end());
        loss_logs.push_back(std::move(log));
    }

    save_model(bundle, model_out);

    // Per-epoch loss next to the model file.
    std::string loss_path = model_out + ".loss.csv";
    CsvWriter loss(loss_path);
    std::vector<std::string> header{"epoch"};
    for (Index n : summary.nodes) header.push_back("node" + std::to_string(n));
    loss.header(header);
    std::size_t max_rows = 0;
    for (const auto& l : loss_logs) max_rows = std::max(max_rows, l.size());
    for (std::size_t e = 0; e < max_rows; ++e) {
        loss.field(static_cast<std::uint64_t>(e));
        for (const auto& l : loss_logs)
            loss.field(e < l.size() ? l[e] : l.back());
        loss.end_row();
    }
    return summary;
}

}  // namespace spikegrid
