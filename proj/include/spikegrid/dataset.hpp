#pragma once

// Dataset generation (CLC sweeps sampled during event windows) and the
// offline training entry used by the CLI.

#include "spikegrid/model_io.hpp"
#include "spikegrid/runner.hpp"
#include "spikegrid/training.hpp"

#include <string>
#include <vector>

namespace spikegrid {

struct DatasetOptions {
    Index rows = 800;
    /// Load multipliers applied to the first load's initial value; the
    /// preset stage magnitudes themselves stay held out.
    std::vector<double> magnitudes{1.6, 2.0, 2.8, 3.2, 3.6};
    bool include_outages = true;
};

struct DatasetInfo {
    std::vector<Index> nodes;
    Index rows = 0;
    std::string directory;
};

DatasetInfo generate_dataset(const ScenarioConfig& base, const std::string& out_dir,
                             const DatasetOptions& options = {});

struct NodeDataset {
    Index node = -1;
    std::vector<Index> remotes;
    TrainingSet<double> set;
    EncoderConfig<double> encoder;  // ranges filled from the manifest
};

struct DatasetBundle {
    std::string case_name;
    double rated_voltage = 0;
    double dt_control = 0;
    SnnSection snn;
    std::vector<NodeDataset> nodes;
};

DatasetBundle load_dataset(const std::string& dir);

struct TrainOptions {
    int epochs = 200;
    std::uint64_t seed = 1;
    double learning_rate = 0.5;
    int present_ticks = 16;
};

struct TrainSummary {
    std::vector<Index> nodes;
    std::vector<double> first_loss, final_loss;
};

/// Trains one network per node and writes the bundle plus a loss log
/// (loss.csv: epoch, then one column per node).
TrainSummary train_models(const DatasetBundle& data, const TrainOptions& options,
                          const std::string& model_out);

}  // namespace spikegrid
