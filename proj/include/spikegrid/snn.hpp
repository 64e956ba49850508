#pragma once

// Spike-response-model network with leaky integrate-and-fire semantics.
// Membrane potentials are sums of exponentially filtered input spikes
// (difference-of-exponentials synaptic kernel) and the neuron's own past
// spikes (refractory feedback); both kernels are realized as recursive
// state variables, so no convolution history is stored.

#include "spikegrid/types.hpp"

#include <cstdint>
#include <vector>

namespace spikegrid {

template <typename Scalar>
struct NeuronConfig {
    Scalar tau_m = Scalar(10e-3);    // membrane, seconds
    Scalar tau_syn = Scalar(2e-3);   // synaptic, seconds
    Scalar tau_ref = Scalar(4e-3);   // refractory, seconds
    Scalar threshold = Scalar(1);    // U_thr; reset subtracts the threshold

    void validate() const {
        if (!(tau_m > tau_syn && tau_syn > 0))
            throw ConfigError("neuron requires tau_m > tau_syn > 0");
        if (!(tau_ref > 0)) throw ConfigError("tau_ref must be positive");
        if (!(threshold > 0)) throw ConfigError("threshold must be positive");
    }
};

struct NetworkShape {
    std::vector<Index> widths;  // input, hidden..., output

    Index input_width() const { return widths.front(); }
    Index output_width() const { return widths.back(); }
    std::size_t pairs() const { return widths.size() - 1; }

    void validate() const {
        if (widths.size() < 2) throw ConfigError("network needs >= 2 layers");
        for (Index w : widths)
            if (w < 1) throw ConfigError("layer widths must be >= 1");
    }
};

/// Spike bit: 1 iff u - threshold > 0 (Heaviside, 0 at equality).
template <typename Scalar>
Scalar fire(Scalar membrane, Scalar threshold) {
    return membrane - threshold > 0 ? Scalar(1) : Scalar(0);
}

/// Per-layer-pair filter state. zm/zs are per presynaptic neuron, zref per
/// postsynaptic neuron; all decay to zero absent spikes.
template <typename Scalar>
struct LayerState {
    Vector<Scalar> zm, zs, zref;

    static LayerState zero(Index pre, Index post) {
        return {Vector<Scalar>::Zero(pre), Vector<Scalar>::Zero(pre),
                Vector<Scalar>::Zero(post)};
    }
};

template <typename Scalar>
struct SnnModel {
    NetworkShape shape;
    NeuronConfig<Scalar> neuron;
    std::vector<Matrix<Scalar>> weights;       // [post x pre] per pair
    std::vector<LayerState<Scalar>> state;     // runtime filters per pair
    Vector<Scalar> decode_scale;               // affine calibration per output
    Vector<Scalar> decode_offset;
    Scalar decode_tau = Scalar(2e-3);          // rate-filter time constant
    bool trained = false;

    void reset_state() {
        state.clear();
        for (std::size_t p = 0; p < shape.pairs(); ++p)
            state.push_back(LayerState<Scalar>::zero(shape.widths[p], shape.widths[p + 1]));
    }
};

/// Untrained model: weights uniform in [0, 1/fan-in] from the seed,
/// identity calibration.
template <typename Scalar>
SnnModel<Scalar> make_model(const NetworkShape& shape, const NeuronConfig<Scalar>& neuron,
                            std::uint64_t seed) {
    shape.validate();
    neuron.validate();
    SnnModel<Scalar> m;
    m.shape = shape;
    m.neuron = neuron;
    SplitMix64 rng(seed);
    for (std::size_t p = 0; p < shape.pairs(); ++p) {
        Matrix<Scalar> w(shape.widths[p + 1], shape.widths[p]);
        const Scalar hi = Scalar(1) / static_cast<Scalar>(shape.widths[p]);
        for (Index i = 0; i < w.rows(); ++i)
            for (Index j = 0; j < w.cols(); ++j)
                w(i, j) = static_cast<Scalar>(rng.uniform()) * hi;
        m.weights.push_back(std::move(w));
    }
    m.decode_scale = Vector<Scalar>::Ones(shape.output_width());
    m.decode_offset = Vector<Scalar>::Zero(shape.output_width());
    m.reset_state();
    return m;
}

/// Advances the synaptic filters of pair `p` with the incoming spikes and
/// returns the membrane potentials of the postsynaptic layer. The weight
/// matrix may be overridden (conductance-modulated layers).
template <typename Scalar>
Vector<Scalar> membrane_step(SnnModel<Scalar>& m, std::size_t p,
                             const Vector<Scalar>& incoming, Scalar dt,
                             const Matrix<Scalar>* weight_override = nullptr) {
    auto& st = m.state[p];
    const Scalar lm = std::exp(-dt / m.neuron.tau_m);
    const Scalar ls = std::exp(-dt / m.neuron.tau_syn);
    st.zm = lm * (st.zm + incoming);
    st.zs = ls * (st.zs + incoming);
    const Matrix<Scalar>& w = weight_override ? *weight_override : m.weights[p];
    // Refractory feedback subtracts a threshold-sized, recovering amount.
    return w * (st.zm - st.zs) - m.neuron.threshold * st.zref;
}

template <typename Scalar>
struct ForwardResult {
    Vector<Scalar> output_spikes;
    std::vector<Vector<Scalar>> layer_spikes;       // per layer incl. input
    std::vector<std::uint64_t> layer_spike_counts;  // popcounts of the above
};

/// One network tick: layers evaluated in order within the tick, so an input
/// spike can reach the output in the same step.
template <typename Scalar>
ForwardResult<Scalar> forward_tick(SnnModel<Scalar>& m, const Vector<Scalar>& input,
                                   Scalar dt,
                                   const Matrix<Scalar>* output_weights = nullptr) {
    if (input.size() != m.shape.input_width())
        throw ConfigError("input width mismatch: got " + std::to_string(input.size()) +
                          ", expected " + std::to_string(m.shape.input_width()));
    ForwardResult<Scalar> r;
    r.layer_spike_counts.reserve(m.shape.widths.size());
    const Scalar lr = std::exp(-dt / m.neuron.tau_ref);

    Vector<Scalar> spikes = input;
    r.layer_spikes.push_back(spikes);
    r.layer_spike_counts.push_back(
        static_cast<std::uint64_t>((spikes.array() > Scalar(0.5)).count()));
    for (std::size_t p = 0; p < m.shape.pairs(); ++p) {
        const bool last = p + 1 == m.shape.pairs();
        Vector<Scalar> u =
            membrane_step(m, p, spikes, dt, last ? output_weights : nullptr);
        Vector<Scalar> out(u.size());
        for (Index i = 0; i < u.size(); ++i) out[i] = fire(u[i], m.neuron.threshold);
        auto& st = m.state[p];
        st.zref = lr * (st.zref + out);
        spikes = std::move(out);
        r.layer_spikes.push_back(spikes);
        r.layer_spike_counts.push_back(
            static_cast<std::uint64_t>((spikes.array() > Scalar(0.5)).count()));
    }
    r.output_spikes = r.layer_spikes.back();
    return r;
}

}  // namespace spikegrid
