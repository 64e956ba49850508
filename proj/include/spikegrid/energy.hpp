#pragma once

// Computational-energy meter: per-tick ACC/MAC counts for spiking, binary
// recurrent and dense estimators over the same layer shapes and spike
// stream, converted to joules at 0.1 pJ per ACC and 3.1 pJ per MAC.
// Counts and accumulated energy stay in integer arithmetic (deci-picojoule
// units) so ledger sums are exact.

#include "spikegrid/types.hpp"

#include <cstdint>
#include <string>

namespace spikegrid {

enum class EstimatorKind { Snn, Rnn, Ann };

inline const char* estimator_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::Snn: return "snn";
        case EstimatorKind::Rnn: return "rnn";
        default: return "ann";
    }
}

struct OpCounts {
    std::uint64_t acc = 0;
    std::uint64_t mac = 0;

    OpCounts& operator+=(const OpCounts& o) {
        acc += o.acc;
        mac += o.mac;
        return *this;
    }
    friend OpCounts operator+(OpCounts a, const OpCounts& b) { return a += b; }
    friend bool operator==(const OpCounts&, const OpCounts&) = default;
};

/// Deci-picojoules: exact integers with E_ACC = 1, E_MAC = 31.
inline std::uint64_t energy_dpj(const OpCounts& c) { return c.acc + 31 * c.mac; }

/// E = 0.1 pJ * acc + 3.1 pJ * mac.
inline double energy_joules(const OpCounts& c) {
    return static_cast<double>(energy_dpj(c)) * 1e-13;
}

/// Per-tick counts for one layer pair.
///   SNN: acc = N_spk*N_out + (active ? 2*N_out : 0), mac = N_out
///   RNN: acc = N_spk*N_out + (active ? N_out : 0),   mac = N_out
///   ANN: acc = 2*N_out,                              mac = N_in*N_out + 3*N_out
inline OpCounts count_tick(EstimatorKind kind, std::uint64_t n_in, std::uint64_t n_out,
                           std::uint64_t n_spk, bool active) {
    if (kind != EstimatorKind::Ann && n_spk > n_in)
        throw ConfigError("spike count exceeds presynaptic width");
    switch (kind) {
        case EstimatorKind::Snn:
            return {n_spk * n_out + (active ? 2 * n_out : 0), n_out};
        case EstimatorKind::Rnn:
            return {n_spk * n_out + (active ? n_out : 0), n_out};
        default:
            return {2 * n_out, n_in * n_out + 3 * n_out};
    }
}

/// Accumulated per-kind totals for a run.
struct EnergyLedger {
    OpCounts snn, rnn, ann;

    void add(EstimatorKind kind, const OpCounts& c) {
        switch (kind) {
            case EstimatorKind::Snn: snn += c; break;
            case EstimatorKind::Rnn: rnn += c; break;
            case EstimatorKind::Ann: ann += c; break;
        }
    }

    const OpCounts& of(EstimatorKind kind) const {
        switch (kind) {
            case EstimatorKind::Snn: return snn;
            case EstimatorKind::Rnn: return rnn;
            default: return ann;
        }
    }
};

struct ComparativeReport {
    OpCounts snn, rnn, ann;

    std::uint64_t ops(EstimatorKind k) const {
        const OpCounts& c = k == EstimatorKind::Snn ? snn
                            : k == EstimatorKind::Rnn ? rnn
                                                      : ann;
        return c.acc + c.mac;
    }
    double joules(EstimatorKind k) const {
        return energy_joules(k == EstimatorKind::Snn ? snn
                             : k == EstimatorKind::Rnn ? rnn
                                                       : ann);
    }
    /// Ratio of dense to spiking energy.
    double ann_to_snn_ratio() const {
        return static_cast<double>(energy_dpj(ann)) /
               static_cast<double>(energy_dpj(snn));
    }
    bool ordering_holds() const {
        return energy_dpj(snn) <= energy_dpj(rnn) && energy_dpj(rnn) < energy_dpj(ann);
    }
};

inline ComparativeReport comparative_report(const EnergyLedger& ledger) {
    return {ledger.snn, ledger.rnn, ledger.ann};
}

}  // namespace spikegrid
