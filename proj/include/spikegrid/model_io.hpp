#pragma once

// "NSNN" model container: the per-node trained networks of a scenario in a
// single binary file. Layout: magic, format version, spike-tick, node count,
// then per node the shape header, neuron constants, row-major weight blocks,
// decode calibration and encoder configuration; CRC-32 over the payload.

#include "spikegrid/codec.hpp"
#include "spikegrid/snn.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spikegrid {

struct NodeModel {
    Index node_id = -1;
    std::vector<Index> remote_ids;  // estimated buses, ascending
    SnnModel<double> model;
    EncoderConfig<double> encoder;
};

struct ModelBundle {
    double tick_dt = 1e-3;
    std::vector<NodeModel> nodes;

    const NodeModel* find(Index node_id) const {
        for (const auto& n : nodes)
            if (n.node_id == node_id) return &n;
        return nullptr;
    }
};

std::uint32_t crc32(const unsigned char* data, std::size_t size);

void save_model(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model(const std::string& path);

}  // namespace spikegrid
