#pragma once

// Common dense types and small utilities shared by every module.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace spikegrid {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Binary incidence between nodes; values are 0/1.
using IncidenceMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Configuration-time validation failure (bad topology, schedule, dt, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Runtime simulation failure. Carries the offending node and tick.
struct SimulationError : std::runtime_error {
    SimulationError(const std::string& what, Index node, std::int64_t tick)
        : std::runtime_error(what), node(node), tick(tick) {}
    Index node = -1;
    std::int64_t tick = -1;
};

/// Model container I/O failure (bad magic, version, checksum, shape).
struct ModelIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Scalar>
bool all_finite(const Vector<Scalar>& v) {
    return v.array().isFinite().all();
}

/// Deterministic 64-bit generator (splitmix64). Used instead of <random>
/// engines/distributions so that seeded runs are reproducible across
/// standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

}  // namespace spikegrid
