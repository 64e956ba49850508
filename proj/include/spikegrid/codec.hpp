#pragma once

// Event codec: error signals from converter dynamics, threshold detection,
// capture/hold of event windows, population encoding of analog features to
// spikes and filtered-rate decoding of output spikes back to held analog
// estimates.

#include "spikegrid/snn.hpp"
#include "spikegrid/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace spikegrid {

template <typename Scalar>
struct EventThresholds {
    Scalar sigma_v = Scalar(0.01);
    Scalar sigma_i = Scalar(0.002);
    Scalar sigma_o = Scalar(0.0039);

    void validate() const {
        if (!(sigma_v > 0 && sigma_i > 0 && sigma_o > 0))
            throw ConfigError("event thresholds must be positive");
    }
};

enum class EventKind { InputVoltage, InputCurrent, Output };

struct EventRecord {
    Index node = -1;
    std::int64_t start_tick = -1;
    std::int64_t end_tick = -1;
    EventKind kind = EventKind::InputVoltage;
};

/// Backward difference with a first-order low-pass to suppress integrator
/// chatter.
template <typename Scalar>
struct DerivativeFilter {
    Scalar smoothing_tau = Scalar(0.5e-3);
    Scalar last = 0;
    Scalar state = 0;
    bool primed = false;

    Scalar tick(Scalar x, Scalar dt) {
        Scalar raw = primed ? (x - last) / dt : Scalar(0);
        last = x;
        primed = true;
        state += (raw - state) * (Scalar(1) - std::exp(-dt / smoothing_tau));
        return state;
    }
};

template <typename Scalar>
struct LowPass {
    Scalar tau = Scalar(20e-3);
    Scalar state = 0;
    bool primed = false;

    Scalar tick(Scalar x, Scalar dt) {
        if (!primed) {
            state = x;
            primed = true;
        }
        state += (x - state) * (Scalar(1) - std::exp(-dt / tau));
        return state;
    }
};

/// Input-side error signals: Ω_i = v^L − e^i, Ω_v = i^C − e^v, with
/// i^C = C·dv/dt and v^L = L·di/dt from measured derivatives,
/// e^v = v* − v and e^i = (ī − i)/d.
template <typename Scalar>
std::pair<Scalar, Scalar> input_error_signals(Scalar capacitance, Scalar inductance,
                                              Scalar amplification_ratio,
                                              Scalar dv_dt, Scalar di_dt,
                                              Scalar v_setpoint, Scalar v,
                                              Scalar i_steady, Scalar i) {
    Scalar cap_current = capacitance * dv_dt;
    Scalar ind_voltage = inductance * di_dt;
    Scalar e_v = v_setpoint - v;
    Scalar e_i = (i_steady - i) / amplification_ratio;
    return {cap_current - e_v, ind_voltage - e_i};
}

/// Ω_o = C·dv/dt − dI_flow/dt.
template <typename Scalar>
Scalar output_event_signal(Scalar capacitance, Scalar dv_dt, Scalar dflow_dt) {
    return capacitance * dv_dt - dflow_dt;
}

struct DetectionFlags {
    bool input_voltage = false;
    bool input_current = false;
    bool output = false;

    bool any() const { return input_voltage || input_current || output; }
};

/// Strict exceedance: |Ω| must be greater than σ, equality does not trigger.
template <typename Scalar>
DetectionFlags detect(Scalar omega_v, Scalar omega_i, Scalar omega_o,
                      const EventThresholds<Scalar>& thr) {
    return {std::abs(omega_v) > thr.sigma_v, std::abs(omega_i) > thr.sigma_i,
            std::abs(omega_o) > thr.sigma_o};
}

/// Capture state machine. A window opens at the first detection, stays open
/// while any criterion holds and closes otherwise; the SNN is active exactly
/// while a window is open. One record per kind spans from that kind's first
/// detection inside the window to the window close.
class EventCapture {
public:
    explicit EventCapture(Index node) : node_(node) {}

    bool active() const { return window_open_; }
    bool opened_this_tick() const { return opened_; }
    bool closed_this_tick() const { return closed_; }
    const std::vector<EventRecord>& records() const { return records_; }

    void step(const DetectionFlags& flags, std::int64_t tick) {
        opened_ = closed_ = false;
        if (!window_open_ && flags.any()) {
            window_open_ = true;
            opened_ = true;
        }
        if (window_open_) {
            mark(EventKind::InputVoltage, flags.input_voltage, tick);
            mark(EventKind::InputCurrent, flags.input_current, tick);
            mark(EventKind::Output, flags.output, tick);
            if (!flags.any()) {
                close(tick);
                window_open_ = false;
                closed_ = true;
            }
        }
    }

    /// Closes any window left open at the end of a run.
    void finish(std::int64_t tick) {
        if (window_open_) {
            close(tick);
            window_open_ = false;
        }
    }

private:
    void mark(EventKind kind, bool flagged, std::int64_t tick) {
        auto& start = start_[static_cast<std::size_t>(kind)];
        if (flagged && start < 0) start = tick;
    }

    void close(std::int64_t tick) {
        for (std::size_t k = 0; k < 3; ++k) {
            if (start_[k] >= 0)
                records_.push_back({node_, start_[k], tick, static_cast<EventKind>(k)});
            start_[k] = -1;
        }
    }

    Index node_;
    bool window_open_ = false;
    bool opened_ = false;
    bool closed_ = false;
    std::array<std::int64_t, 3> start_{-1, -1, -1};
    std::vector<EventRecord> records_;
};

/// Population (place-code) encoder: per feature, evenly spaced triangular
/// tuning centers over the configured range; a neuron fires when its tuning
/// activation exceeds 0.5. Deterministic; features clamp to their range.
template <typename Scalar>
struct EncoderConfig {
    Index neurons_per_feature = 64;
    std::array<std::pair<Scalar, Scalar>, 4> ranges{};  // (lo, hi) per feature
    Scalar tuning_width = Scalar(0.05);  // fraction of the normalized range

    Index width() const { return 4 * neurons_per_feature; }

    void validate() const {
        if (neurons_per_feature < 2)
            throw ConfigError("encoder needs >= 2 neurons per feature");
        if (!(tuning_width > 0)) throw ConfigError("tuning width must be positive");
        for (const auto& [lo, hi] : ranges)
            if (!(hi > lo)) throw ConfigError("encoder feature range is degenerate");
    }
};

template <typename Scalar>
Vector<Scalar> encode(const std::array<Scalar, 4>& features,
                      const EncoderConfig<Scalar>& cfg) {
    const Index npf = cfg.neurons_per_feature;
    Vector<Scalar> spikes = Vector<Scalar>::Zero(cfg.width());
    for (std::size_t f = 0; f < 4; ++f) {
        const auto [lo, hi] = cfg.ranges[f];
        Scalar x = std::clamp((features[f] - lo) / (hi - lo), Scalar(0), Scalar(1));
        for (Index n = 0; n < npf; ++n) {
            Scalar center = static_cast<Scalar>(n) / static_cast<Scalar>(npf - 1);
            Scalar activation = Scalar(1) - std::abs(x - center) / cfg.tuning_width;
            if (activation > Scalar(0.5))
                spikes[static_cast<Index>(f) * npf + n] = Scalar(1);
        }
    }
    return spikes;
}

/// Filtered-rate decoder with benchmark-hold semantics: the rate filter only
/// advances while a window is open, so between events the affine estimates
/// are exactly the values held at the last close.
template <typename Scalar>
class RateDecoder {
public:
    RateDecoder() = default;
    RateDecoder(Index outputs, Scalar tau, Scalar dt)
        : decay_(std::exp(-dt / tau)), rate_(Vector<Scalar>::Zero(outputs)) {}

    void tick_active(const Vector<Scalar>& output_spikes) {
        rate_ = decay_ * rate_ + (Scalar(1) - decay_) * output_spikes;
    }

    const Vector<Scalar>& rate() const { return rate_; }

    /// Requires a trained calibration; estimates are affine in the rate.
    Vector<Scalar> estimates(const SnnModel<Scalar>& model) const {
        if (!model.trained)
            throw ConfigError("decode requires a trained model (no calibration)");
        return (model.decode_scale.array() * rate_.array() + model.decode_offset.array())
            .matrix();
    }

    /// Seeds the filter so estimates start from known values (run start).
    void seed_from_estimates(const SnnModel<Scalar>& model, const Vector<Scalar>& est) {
        rate_ = ((est - model.decode_offset).array() / model.decode_scale.array()).matrix();
    }

private:
    Scalar decay_ = 0;
    Vector<Scalar> rate_;
};

/// Sparse spike raster: uniformly spaced ticks, active indices per tick.
struct SpikeTrain {
    Index width = 0;
    std::vector<std::vector<Index>> ticks;

    template <typename Scalar>
    void push(const Vector<Scalar>& spikes) {
        std::vector<Index> active;
        for (Index i = 0; i < spikes.size(); ++i)
            if (spikes[i] > Scalar(0.5)) active.push_back(i);
        ticks.push_back(std::move(active));
    }
};

}  // namespace spikegrid
