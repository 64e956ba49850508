#pragma once

// Hierarchical control: V-I droop, distributed averaging observer, PI
// corrections for voltage restoration and current / power / SOC-proportional
// sharing. The same operations serve CLC mode (true neighbor values) and NSC
// mode (estimated neighbor values bound through a provider snapshot).

#include "spikegrid/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace spikegrid {

template <typename Scalar>
struct DroopParams {
    Scalar droop_gain = 0;       // m_k, volts/ampere
    Scalar nominal_voltage = 0;  // V_n
    Scalar max_deviation = 0;    // ΔV_k
    Scalar max_current = 0;      // I_k,max

    static DroopParams from_limits(Scalar nominal, Scalar max_dev, Scalar i_max) {
        return {max_dev / i_max, nominal, max_dev, i_max};
    }
};

/// v_ref = V_n - m*i.
template <typename Scalar>
Scalar droop_reference(Scalar output_current, const DroopParams<Scalar>& p) {
    return p.nominal_voltage - p.droop_gain * output_current;
}

template <typename Scalar>
struct PiState {
    Scalar kp = 0;
    Scalar ki = 0;
    Scalar integral = 0;
    Scalar windup_limit = 0;  // symmetric clamp on the integral; 0 disables
};

/// output = kp*err + integral'; integral' = integral + ki*err*dt (clamped).
template <typename Scalar>
Scalar pi_step(PiState<Scalar>& s, Scalar error, Scalar dt) {
    s.integral += s.ki * error * dt;
    if (s.windup_limit > 0)
        s.integral = std::clamp(s.integral, -s.windup_limit, s.windup_limit);
    return s.kp * error + s.integral;
}

template <typename Scalar>
struct ObserverState {
    Scalar integral = 0;
};

/// Advances the averaging observer one tick and returns v̄_k = v_k + ∫Σ a_kj(v̄_j − v̄_k).
/// neighbor_vbars holds one entry per nonzero weight, aligned with weights.
template <typename Scalar>
Scalar observer_step(ObserverState<Scalar>& s, Scalar v_k,
                     const std::vector<Scalar>& neighbor_vbars,
                     const std::vector<Scalar>& weights, Scalar own_vbar,
                     Scalar dt) {
    Scalar integrand = 0;
    for (std::size_t j = 0; j < neighbor_vbars.size(); ++j)
        integrand += weights[j] * (neighbor_vbars[j] - own_vbar);
    s.integral += integrand * dt;
    return v_k + s.integral;
}

/// λ_k = Σ a_kj (x_j − x_k) for x ∈ {i, P, P/ΔSOC}.
template <typename Scalar>
Scalar sharing_mismatch(Scalar own, const std::vector<Scalar>& neighbors,
                        const std::vector<Scalar>& weights) {
    Scalar acc = 0;
    for (std::size_t j = 0; j < neighbors.size(); ++j)
        acc += weights[j] * (neighbors[j] - own);
    return acc;
}

template <typename Scalar>
struct Setpoint {
    Scalar value;
    bool saturated;
};

/// v* = v_ref + δvI + δvII, clamped to [lo, hi]·V_n.
template <typename Scalar>
Setpoint<Scalar> compose_setpoint(Scalar v_ref, Scalar dv_voltage, Scalar dv_sharing,
                                  Scalar nominal_voltage, Scalar lo = Scalar(0.8),
                                  Scalar hi = Scalar(1.2)) {
    Scalar raw = v_ref + dv_voltage + dv_sharing;
    Scalar clamped = std::clamp(raw, lo * nominal_voltage, hi * nominal_voltage);
    return {clamped, clamped != raw};
}

enum class ChargeMode { Charging, Discharging };

/// ΔSOC headroom toward the active limit.
template <typename Scalar>
Scalar delta_soc(Scalar soc, Scalar soc_min, Scalar soc_max, ChargeMode mode) {
    return mode == ChargeMode::Charging ? soc_max - soc : soc - soc_min;
}

template <typename Scalar>
struct SocShare {
    Scalar gamma;    // P / ΔSOC
    bool excluded;   // ΔSOC below epsilon; node leaves the sharing set
};

template <typename Scalar>
SocShare<Scalar> soc_share_value(Scalar power, Scalar dsoc,
                                 Scalar epsilon = Scalar(1e-3)) {
    if (dsoc <= epsilon) return {Scalar(0), true};
    return {power / dsoc, false};
}

enum class SharingObjective { Current, Power, SocProportional };

/// Immutable per-tick snapshot of the values a node's secondary loop
/// consumes for its neighbors. CLC fills it with true remote values, NSC
/// with SNN estimates (nsc_bind_estimates); ground-truth forcing makes the
/// two identical.
template <typename Scalar>
struct NeighborValues {
    std::vector<Index> ids;
    std::vector<Scalar> observer_voltage;  // stands in for v̄_j
    std::vector<Scalar> current;           // i_j or î_j
    std::vector<Scalar> power;             // P_j or v̂_j·î_j
    std::vector<Scalar> gamma;             // P/ΔSOC for SOC objective
    std::vector<Scalar> weights;
};

/// Builds the NSC-mode snapshot from per-remote estimates: î_j and the
/// estimated remote observer values; P̂_j = v̂_j·î_j. Unit weights over N_flow.
template <typename Scalar>
NeighborValues<Scalar> nsc_bind_estimates(
    const std::vector<Index>& flow_neighbors,
    const std::vector<Scalar>& est_observer_voltage,
    const std::vector<Scalar>& est_voltage, const std::vector<Scalar>& est_current,
    const std::vector<Scalar>& est_gamma) {
    NeighborValues<Scalar> nv;
    nv.ids = flow_neighbors;
    const auto n = flow_neighbors.size();
    nv.observer_voltage = est_observer_voltage;
    nv.current = est_current;
    nv.power.resize(n);
    for (std::size_t j = 0; j < n; ++j) nv.power[j] = est_voltage[j] * est_current[j];
    nv.gamma = est_gamma;
    nv.weights.assign(n, Scalar(1));
    return nv;
}

/// Local replicas of the remote nodes' averaging observers, advanced from
/// estimated remote bus voltages. Gives a node the v̄_j values Eq-style
/// consensus needs without any cyber exchange.
template <typename Scalar>
class ObserverReplicaBank {
public:
    void reset(const std::vector<Index>& remote_ids) {
        remote_ids_ = remote_ids;
        integral_.assign(remote_ids.size(), Scalar(0));
        vbar_.assign(remote_ids.size(), Scalar(0));
        primed_ = false;
    }

    const std::vector<Index>& remote_ids() const { return remote_ids_; }

    Scalar observer_voltage(std::size_t idx) const { return vbar_[idx]; }

    /// One consensus tick over the replicated observers. adjacency[j] lists
    /// the converter neighbors of remote node remote_ids_[j]; values for the
    /// owner come from own_vbar, others from the replicas.
    void tick(const std::vector<Scalar>& est_voltage, Scalar own_vbar, Index own_id,
              const std::vector<std::vector<Index>>& adjacency, Scalar dt) {
        if (!primed_) {
            // Replicas start at the estimated bus voltages.
            for (std::size_t j = 0; j < remote_ids_.size(); ++j)
                vbar_[j] = est_voltage[j];
            primed_ = true;
        }
        std::vector<Scalar> next(remote_ids_.size());
        for (std::size_t j = 0; j < remote_ids_.size(); ++j) {
            Scalar integrand = 0;
            for (Index nb : adjacency[j]) {
                Scalar value = nb == own_id ? own_vbar : vbar_[index_of(nb)];
                integrand += value - vbar_[j];
            }
            integral_[j] += integrand * dt;
            next[j] = est_voltage[j] + integral_[j];
        }
        vbar_ = std::move(next);
    }

private:
    std::size_t index_of(Index id) const {
        for (std::size_t j = 0; j < remote_ids_.size(); ++j)
            if (remote_ids_[j] == id) return j;
        throw std::logic_error("replica id not found");
    }

    std::vector<Index> remote_ids_;
    std::vector<Scalar> integral_;
    std::vector<Scalar> vbar_;
    bool primed_ = false;
};

}  // namespace spikegrid
