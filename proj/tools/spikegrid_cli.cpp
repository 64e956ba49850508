// Command-line front end: simulate / dataset / train / energy-report.
// SPIKEGRID_LOG={quiet,info,debug} controls verbosity.

#include "spikegrid/dataset.hpp"
#include "spikegrid/model_io.hpp"
#include "spikegrid/runner.hpp"
#include "spikegrid/scenario.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

namespace {

int log_level() {
    const char* env = std::getenv("SPIKEGRID_LOG");
    if (!env) return 1;
    std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << msg << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic DC microgrid co-simulator with spiking remote-state estimation"};
    app.require_subcommand(1);

    std::string case_id, mode_str = "clc", model_path, out_path, data_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int epochs = 200;

    auto* simulate = app.add_subcommand("simulate", "run a scenario and emit CSV artifacts");
    simulate->add_option("--case", case_id, "preset id (I,II,III,IV,V,E) or config path")
        ->required();
    simulate->add_option("--mode", mode_str, "clc or nsc")->check(CLI::IsMember({"clc", "nsc"}));
    simulate->add_option("--model", model_path, "trained model bundle (nsc mode)");
    simulate->add_option("--seed", seed, "run seed")->each([&](const std::string&) {
        seed_set = true;
    });
    simulate->add_option("--out", out_path, "output directory")->required();

    auto* dataset = app.add_subcommand("dataset", "generate a training dataset (CLC sweep)");
    dataset->add_option("--case", case_id, "preset id or config path")->required();
    dataset->add_option("--out", out_path, "output directory")->required();

    auto* train = app.add_subcommand("train", "train per-node networks from a dataset");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--seed", seed, "weight-init seed")->each([&](const std::string&) {
        seed_set = true;
    });
    train->add_option("--out", out_path, "model bundle output path")->required();

    auto* report = app.add_subcommand("energy-report", "summarize a run's energy ledger");
    report->add_option("--run", data_dir, "run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) {
            spikegrid::ScenarioConfig cfg = spikegrid::resolve_case(case_id);
            cfg.mode = mode_str == "nsc" ? spikegrid::RunMode::Nsc : spikegrid::RunMode::Clc;
            if (!model_path.empty()) cfg.model_path = model_path;
            if (seed_set) cfg.seed = seed;

            spikegrid::ModelBundle bundle;
            const spikegrid::ModelBundle* bundle_ptr = nullptr;
            if (cfg.mode == spikegrid::RunMode::Nsc && !cfg.force_ground_truth) {
                if (cfg.model_path.empty())
                    throw spikegrid::ConfigError("nsc mode needs --model (or a model in the config)");
                bundle = spikegrid::load_model(cfg.model_path);
                bundle_ptr = &bundle;
            }
            info("simulating " + cfg.name + " [" + mode_str + "] -> " + out_path);
            spikegrid::ScenarioEngine engine(cfg, bundle_ptr);
            spikegrid::RunResult result = engine.run(out_path);
            info("done: " + std::to_string(result.time.size()) + " control ticks, " +
                 std::to_string(result.events.size()) + " events");
            std::cout << result.metrics.to_json_text();
        } else if (dataset->parsed()) {
            spikegrid::ScenarioConfig cfg = spikegrid::resolve_case(case_id);
            info("generating dataset for " + cfg.name + " -> " + out_path);
            auto ds = spikegrid::generate_dataset(cfg, out_path);
            info("wrote " + std::to_string(ds.rows) + " rows for " +
                 std::to_string(ds.nodes.size()) + " nodes");
        } else if (train->parsed()) {
            auto data = spikegrid::load_dataset(data_dir);
            spikegrid::TrainOptions options;
            options.epochs = epochs;
            if (seed_set) options.seed = seed;
            info("training " + std::to_string(data.nodes.size()) + " networks (" +
                 std::to_string(epochs) + " epochs)");
            auto summary = spikegrid::train_models(data, options, out_path);
            for (std::size_t i = 0; i < summary.nodes.size(); ++i)
                info("node " + std::to_string(summary.nodes[i]) + ": loss " +
                     std::to_string(summary.first_loss[i]) + " -> " +
                     std::to_string(summary.final_loss[i]));
        } else if (report->parsed()) {
            spikegrid::energy_report(data_dir, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
