#pragma once

// Spike-timing-dependent plasticity: pair-based exponential window, trace
// bookkeeping and bounded per-synapse conductances for online adaptation.

#include "spikegrid/types.hpp"

#include <cmath>

namespace spikegrid {

template <typename Scalar>
struct StdpConfig {
    Scalar a_plus = Scalar(0.01);
    Scalar a_minus = Scalar(0.01);
    Scalar tau_plus = Scalar(20e-3);
    Scalar tau_minus = Scalar(20e-3);
    Scalar g_max = Scalar(1);

    void validate() const {
        if (!(a_plus > 0 && a_minus > 0 && tau_plus > 0 && tau_minus > 0 && g_max > 0))
            throw ConfigError("STDP constants must be positive");
    }
};

/// Closed-form pair window: positive for causal pre->post, negative for
/// anti-causal, zero at coincidence.
template <typename Scalar>
Scalar stdp_delta_w(Scalar t_pre, Scalar t_post, const StdpConfig<Scalar>& c) {
    if (t_post > t_pre) return c.a_plus * std::exp((t_pre - t_post) / c.tau_plus);
    if (t_post < t_pre) return -c.a_minus * std::exp(-(t_pre - t_post) / c.tau_minus);
    return Scalar(0);
}

/// S: per-pre-neuron trace (jumps +A+ on pre spikes, decays with tau+),
/// consulted at post spikes for potentiation. Q: per-post-neuron trace
/// (jumps -A- on post spikes, decays with tau-), consulted at pre spikes
/// for depression. Conductances live in [0, g_max].
template <typename Scalar>
struct StdpTraces {
    Vector<Scalar> pre_trace;   // S
    Vector<Scalar> post_trace;  // Q
    Matrix<Scalar> conductance; // [post x pre]

    static StdpTraces init(Index pre, Index post, Scalar g0) {
        return {Vector<Scalar>::Zero(pre), Vector<Scalar>::Zero(post),
                Matrix<Scalar>::Constant(post, pre, g0)};
    }
};

/// Exponential decay over dt followed by the jumps for this tick's spikes.
template <typename Scalar>
void trace_tick(StdpTraces<Scalar>& tr, const Vector<Scalar>& pre_spikes,
                const Vector<Scalar>& post_spikes, Scalar dt,
                const StdpConfig<Scalar>& c) {
    tr.pre_trace *= std::exp(-dt / c.tau_plus);
    tr.post_trace *= std::exp(-dt / c.tau_minus);
    tr.pre_trace += c.a_plus * pre_spikes;
    tr.post_trace -= c.a_minus * post_spikes;
}

/// Applies the trace values to the conductances: every post spike
/// potentiates its incoming synapses by the pre traces, every pre spike
/// depresses its outgoing synapses by the (negative) post traces. Callers
/// must pass traces that exclude this tick's own jumps so coincident pairs
/// contribute nothing.
template <typename Scalar>
void conductance_update(StdpTraces<Scalar>& tr, const Vector<Scalar>& pre_spikes,
                        const Vector<Scalar>& post_spikes, const StdpConfig<Scalar>& c) {
    if ((post_spikes.array() > Scalar(0.5)).any())
        tr.conductance.noalias() += c.g_max * post_spikes * tr.pre_trace.transpose();
    if ((pre_spikes.array() > Scalar(0.5)).any())
        tr.conductance.noalias() += c.g_max * tr.post_trace * pre_spikes.transpose();
    tr.conductance = tr.conductance.cwiseMax(Scalar(0)).cwiseMin(c.g_max);
}

/// g_E = Σ g_i.
template <typename Scalar>
Scalar total_conductance(const StdpTraces<Scalar>& tr) {
    return tr.conductance.sum();
}

/// One online tick: decay traces, apply conductance updates from the
/// decayed (pre-jump) traces, then record this tick's spikes.
template <typename Scalar>
void stdp_tick(StdpTraces<Scalar>& tr, const Vector<Scalar>& pre_spikes,
               const Vector<Scalar>& post_spikes, Scalar dt,
               const StdpConfig<Scalar>& c) {
    tr.pre_trace *= std::exp(-dt / c.tau_plus);
    tr.post_trace *= std::exp(-dt / c.tau_minus);
    conductance_update(tr, pre_spikes, post_spikes, c);
    tr.pre_trace += c.a_plus * pre_spikes;
    tr.post_trace -= c.a_minus * post_spikes;
}

}  // namespace spikegrid
