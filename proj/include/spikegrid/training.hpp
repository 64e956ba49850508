#pragma once

// Offline supervised weight determination. Each sample presents a static
// encoded raster for a fixed number of ticks; the filtered output rate is
// mapped through per-output affine calibration and fitted to the remote
// targets by full-batch gradient descent with backtracking (an epoch that
// would increase the training loss is retried at a halved rate, so the
// recorded loss is non-increasing by construction).
//
// The backward pass propagates exactly through the linear filter
// recursions; the Heaviside spike function uses a sigmoid-derivative
// surrogate. A smooth mode replaces the forward Heaviside with the sigmoid
// itself, which makes the analytic gradient exact and finite-difference
// checkable.

#include "spikegrid/codec.hpp"
#include "spikegrid/snn.hpp"
#include "spikegrid/types.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace spikegrid {

template <typename Scalar>
struct TrainingSet {
    Matrix<Scalar> features;  // n x 4, physical units
    Matrix<Scalar> targets;   // n x q, physical units
    Vector<Scalar> bases;     // q, normalization scale per output
};

template <typename Scalar>
struct TrainerConfig {
    int epochs = 200;
    Scalar learning_rate = Scalar(0.5);
    std::uint64_t seed = 1;  // recorded for provenance; the pass is deterministic
    int present_ticks = 16;
    Scalar surrogate_slope = Scalar(5);
    Scalar tick_dt = Scalar(1e-3);
    int max_backtracks = 24;
    Scalar rate_growth = Scalar(1.05);
    Scalar max_rate = Scalar(4);
    bool smooth_forward = false;  // sigmoid activations end to end
};

template <typename Scalar>
struct TrainReport {
    std::vector<Scalar> loss;  // index 0 = initial loss, then one per epoch
    int backtracks = 0;
    int stalled_epochs = 0;
};

namespace detail {

template <typename Scalar>
struct TrainerContext {
    Matrix<Scalar> raster;       // W0 x n encoded inputs
    Matrix<Scalar> targets_n;    // q x n normalized targets
    std::vector<Scalar> coef0;   // input trace coefficient per tick
    Scalar lm, ls, lref, adec;
    int ticks;
    Scalar slope;
    bool smooth;
};

template <typename Scalar>
Matrix<Scalar> activate(const Matrix<Scalar>& u, Scalar threshold, Scalar slope,
                        bool smooth) {
    if (smooth)
        return (Scalar(1) / (Scalar(1) + (-slope * (u.array() - threshold)).exp()))
            .matrix();
    return (u.array() - threshold > Scalar(0)).template cast<Scalar>().matrix();
}

/// d(spike)/d(membrane): sigmoid-derivative surrogate around the threshold.
template <typename Scalar>
Matrix<Scalar> activation_slope(const Matrix<Scalar>& u, Scalar threshold,
                                Scalar slope) {
    auto s = (Scalar(1) / (Scalar(1) + (-slope * (u.array() - threshold)).exp()));
    return (slope * s * (Scalar(1) - s)).matrix();
}

/// Per-tick forward intermediates for one layer pair.
template <typename Scalar>
struct PairTrace {
    std::vector<Matrix<Scalar>> membrane;  // u_p(t)
    std::vector<Matrix<Scalar>> net;       // zm - zs entering the weights
    std::vector<Matrix<Scalar>> spikes;    // S_p(t)
};

template <typename Scalar>
struct ForwardPass {
    std::vector<PairTrace<Scalar>> pairs;
    Matrix<Scalar> rate;  // q x n filtered output rate at the last tick
};

template <typename Scalar>
TrainerContext<Scalar> make_context(const SnnModel<Scalar>& model,
                                    const EncoderConfig<Scalar>& enc,
                                    const TrainingSet<Scalar>& set,
                                    const TrainerConfig<Scalar>& cfg) {
    if (set.features.cols() != 4)
        throw ConfigError("training features must have 4 columns, got " +
                          std::to_string(set.features.cols()));
    if (enc.width() != model.shape.input_width())
        throw ConfigError("encoder width " + std::to_string(enc.width()) +
                          " does not match network input " +
                          std::to_string(model.shape.input_width()));
    if (set.targets.cols() != model.shape.output_width())
        throw ConfigError("target columns " + std::to_string(set.targets.cols()) +
                          " do not match network output " +
                          std::to_string(model.shape.output_width()));
    if (set.targets.rows() != set.features.rows())
        throw ConfigError("feature/target row mismatch");
    if (set.bases.size() != set.targets.cols())
        throw ConfigError("one normalization base per output required");

    TrainerContext<Scalar> ctx;
    const Index n = set.features.rows();
    ctx.raster.resize(enc.width(), n);
    for (Index s = 0; s < n; ++s) {
        std::array<Scalar, 4> f{set.features(s, 0), set.features(s, 1),
                                set.features(s, 2), set.features(s, 3)};
        ctx.raster.col(s) = encode(f, enc);
    }
    ctx.targets_n = set.bases.cwiseInverse().asDiagonal() * set.targets.transpose();

    const auto& nc = model.neuron;
    ctx.lm = std::exp(-cfg.tick_dt / nc.tau_m);
    ctx.ls = std::exp(-cfg.tick_dt / nc.tau_syn);
    ctx.lref = std::exp(-cfg.tick_dt / nc.tau_ref);
    ctx.adec = std::exp(-cfg.tick_dt / model.decode_tau);
    ctx.ticks = cfg.present_ticks;
    ctx.slope = cfg.surrogate_slope;
    ctx.smooth = cfg.smooth_forward;

    // Static raster: the input filter state has the closed form
    // coef0(t) * raster with coef0 the partial geometric sums.
    Scalar cm = 0, cs = 0;
    ctx.coef0.resize(static_cast<std::size_t>(ctx.ticks));
    for (int t = 0; t < ctx.ticks; ++t) {
        cm = ctx.lm * (cm + 1);
        cs = ctx.ls * (cs + 1);
        ctx.coef0[static_cast<std::size_t>(t)] = cm - cs;
    }
    return ctx;
}

template <typename Scalar>
ForwardPass<Scalar> run_forward(const SnnModel<Scalar>& model,
                                const TrainerContext<Scalar>& ctx, bool keep_trace) {
    const std::size_t pairs = model.shape.pairs();
    const Index n = ctx.raster.cols();
    const Scalar theta = model.neuron.threshold;

    ForwardPass<Scalar> fp;
    fp.pairs.resize(pairs);
    std::vector<Matrix<Scalar>> zm(pairs), zs(pairs), zref(pairs);
    for (std::size_t p = 0; p < pairs; ++p) {
        zm[p] = Matrix<Scalar>::Zero(model.shape.widths[p], n);
        zs[p] = zm[p];
        zref[p] = Matrix<Scalar>::Zero(model.shape.widths[p + 1], n);
    }
    Matrix<Scalar> drive0 = model.weights[0] * ctx.raster;  // reused every tick
    Matrix<Scalar> rate = Matrix<Scalar>::Zero(model.shape.output_width(), n);

    for (int t = 0; t < ctx.ticks; ++t) {
        Matrix<Scalar> below;  // spikes of the layer below, this tick
        for (std::size_t p = 0; p < pairs; ++p) {
            Matrix<Scalar> u;
            Matrix<Scalar> net;
            if (p == 0) {
                u = ctx.coef0[static_cast<std::size_t>(t)] * drive0 - theta * zref[p];
            } else {
                zm[p] = ctx.lm * (zm[p] + below);
                zs[p] = ctx.ls * (zs[p] + below);
                net = zm[p] - zs[p];
                u = model.weights[p] * net - theta * zref[p];
            }
            Matrix<Scalar> spikes = activate(u, theta, ctx.slope, ctx.smooth);
            zref[p] = ctx.lref * (zref[p] + spikes);
            if (keep_trace) {
                auto& tr = fp.pairs[p];
                tr.membrane.push_back(u);
                if (p > 0) tr.net.push_back(std::move(net));
                tr.spikes.push_back(spikes);
            }
            below = std::move(spikes);
        }
        rate = ctx.adec * rate + (Scalar(1) - ctx.adec) * below;
    }
    fp.rate = std::move(rate);
    return fp;
}

template <typename Scalar>
Scalar loss_from_rate(const SnnModel<Scalar>& model, const TrainerContext<Scalar>& ctx,
                      const Matrix<Scalar>& rate, const Vector<Scalar>& scale_n,
                      const Vector<Scalar>& offset_n) {
    Matrix<Scalar> est = scale_n.asDiagonal() * rate;
    est.colwise() += offset_n;
    return (est - ctx.targets_n).squaredNorm() /
           static_cast<Scalar>(ctx.targets_n.size());
}

template <typename Scalar>
struct Gradients {
    std::vector<Matrix<Scalar>> weights;
    Vector<Scalar> scale;
    Vector<Scalar> offset;
};

template <typename Scalar>
Scalar loss_and_gradients(const SnnModel<Scalar>& model,
                          const TrainerContext<Scalar>& ctx,
                          const Vector<Scalar>& scale_n, const Vector<Scalar>& offset_n,
                          Gradients<Scalar>& grad) {
    const std::size_t pairs = model.shape.pairs();
    const Index n = ctx.raster.cols();
    const Scalar theta = model.neuron.threshold;
    const int T = ctx.ticks;

    ForwardPass<Scalar> fp = run_forward(model, ctx, /*keep_trace=*/true);

    grad.weights.clear();
    for (std::size_t p = 0; p < pairs; ++p)
        grad.weights.push_back(Matrix<Scalar>::Zero(model.weights[p].rows(),
                                                    model.weights[p].cols()));

    Matrix<Scalar> est = scale_n.asDiagonal() * fp.rate;
    est.colwise() += offset_n;
    Matrix<Scalar> err = est - ctx.targets_n;
    const Scalar norm = Scalar(2) / static_cast<Scalar>(ctx.targets_n.size());
    Scalar loss = err.squaredNorm() / static_cast<Scalar>(ctx.targets_n.size());

    grad.scale = norm * (err.array() * fp.rate.array()).rowwise().sum().matrix();
    grad.offset = norm * err.rowwise().sum();

    // Adjoint of the output rate at the final tick.
    Matrix<Scalar> g_rate = norm * (scale_n.asDiagonal() * err);

    // Running adjoints per pair: refractory state and synaptic traces.
    std::vector<Matrix<Scalar>> g_zref(pairs), g_zm(pairs), g_zs(pairs);
    for (std::size_t p = 0; p < pairs; ++p) {
        g_zref[p] = Matrix<Scalar>::Zero(model.shape.widths[p + 1], n);
        g_zm[p] = Matrix<Scalar>::Zero(model.shape.widths[p], n);
        g_zs[p] = g_zm[p];
    }
    Matrix<Scalar> acc0 = Matrix<Scalar>::Zero(model.shape.widths[1], n);

    for (int t = T - 1; t >= 0; --t) {
        Matrix<Scalar> g_spikes_below;  // filled while walking down the pairs
        for (std::size_t pi = 0; pi < pairs; ++pi) {
            const std::size_t p = pairs - 1 - pi;
            const auto& tr = fp.pairs[p];
            const auto ts = static_cast<std::size_t>(t);

            Matrix<Scalar> g_s = Matrix<Scalar>::Zero(model.shape.widths[p + 1], n);
            if (p == pairs - 1) {
                g_s += (Scalar(1) - ctx.adec) * g_rate;
                g_rate *= ctx.adec;  // adjoint for tick t-1
            } else {
                g_s += g_spikes_below;
            }
            // zref(t) = lref*(zref(t-1) + S(t)); u(t+1) subtracted theta*zref(t).
            g_s += ctx.lref * g_zref[p];

            Matrix<Scalar> g_u =
                g_s.cwiseProduct(activation_slope(tr.membrane[ts], theta, ctx.slope));
            g_zref[p] = -theta * g_u + ctx.lref * g_zref[p];

            if (p == 0) {
                acc0.noalias() += ctx.coef0[ts] * g_u;
            } else {
                grad.weights[p].noalias() += g_u * tr.net[ts].transpose();
                Matrix<Scalar> g_net = model.weights[p].transpose() * g_u;
                g_zm[p] = g_net + ctx.lm * g_zm[p];
                g_zs[p] = -g_net + ctx.ls * g_zs[p];
                g_spikes_below = ctx.lm * g_zm[p] + ctx.ls * g_zs[p];
            }
        }
    }
    grad.weights[0].noalias() = acc0 * ctx.raster.transpose();
    return loss;
}

/// One deterministic pre-pass that rescales silent layers so gradients can
/// flow: with the untrained uniform [0, 1/fan-in] init and a sparse place
/// code, deeper layers never reach threshold.
template <typename Scalar>
void calibrate_layer_gains(SnnModel<Scalar>& model, const TrainerContext<Scalar>& ctx) {
    const std::size_t pairs = model.shape.pairs();
    for (std::size_t p = 0; p < pairs; ++p) {
        ForwardPass<Scalar> fp = run_forward(model, ctx, /*keep_trace=*/true);
        Scalar peak = 0;
        for (const auto& u : fp.pairs[p].membrane)
            peak = std::max(peak, u.maxCoeff());
        const Scalar target = Scalar(1.3) * model.neuron.threshold;
        if (peak > Scalar(0) && peak < target)
            model.weights[p] *= target / peak;
    }
}

}  // namespace detail

/// Trains weights and decode calibration in place; model.trained flips on
/// the first accepted epoch. Deterministic: no RNG is consulted.
template <typename Scalar>
TrainReport<Scalar> train_offline(SnnModel<Scalar>& model,
                                  const EncoderConfig<Scalar>& enc,
                                  const TrainingSet<Scalar>& set,
                                  const TrainerConfig<Scalar>& cfg) {
    enc.validate();
    detail::TrainerContext<Scalar> ctx = detail::make_context(model, enc, set, cfg);
    TrainReport<Scalar> report;
    if (cfg.epochs == 0) return report;

    detail::calibrate_layer_gains(model, ctx);

    // Calibration is trained in normalized space and folded into physical
    // units at the end.
    Vector<Scalar> scale_n = Vector<Scalar>::Ones(model.shape.output_width());
    Vector<Scalar> offset_n = Vector<Scalar>::Zero(model.shape.output_width());

    detail::Gradients<Scalar> grad;
    Scalar lr = cfg.learning_rate;
    Scalar loss = detail::loss_and_gradients(model, ctx, scale_n, offset_n, grad);
    if (!std::isfinite(static_cast<double>(loss)))
        throw ConfigError("training diverged: non-finite initial loss");
    report.loss.push_back(loss);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        bool accepted = false;
        for (int attempt = 0; attempt <= cfg.max_backtracks; ++attempt) {
            SnnModel<Scalar> candidate = model;
            for (std::size_t p = 0; p < model.shape.pairs(); ++p)
                candidate.weights[p] -= lr * grad.weights[p];
            Vector<Scalar> cand_scale = scale_n - lr * grad.scale;
            Vector<Scalar> cand_offset = offset_n - lr * grad.offset;

            detail::Gradients<Scalar> cand_grad;
            Scalar cand_loss = detail::loss_and_gradients(candidate, ctx, cand_scale,
                                                          cand_offset, cand_grad);
            if (std::isfinite(static_cast<double>(cand_loss)) && cand_loss <= loss) {
                model.weights = std::move(candidate.weights);
                scale_n = std::move(cand_scale);
                offset_n = std::move(cand_offset);
                grad = std::move(cand_grad);
                loss = cand_loss;
                lr = std::min(lr * cfg.rate_growth, cfg.max_rate);
                accepted = true;
                break;
            }
            lr *= Scalar(0.5);
            ++report.backtracks;
        }
        if (!accepted) ++report.stalled_epochs;
        report.loss.push_back(loss);
    }

    model.decode_scale = (scale_n.array() * set.bases.array()).matrix();
    model.decode_offset = (offset_n.array() * set.bases.array()).matrix();
    model.trained = true;
    model.reset_state();
    return report;
}

/// Training-set loss of the current model (hard or smooth forward per cfg),
/// using normalized calibration derived from the stored physical one.
template <typename Scalar>
Scalar training_loss(const SnnModel<Scalar>& model, const EncoderConfig<Scalar>& enc,
                     const TrainingSet<Scalar>& set, const TrainerConfig<Scalar>& cfg) {
    detail::TrainerContext<Scalar> ctx = detail::make_context(model, enc, set, cfg);
    detail::ForwardPass<Scalar> fp = detail::run_forward(model, ctx, false);
    Vector<Scalar> scale_n = (model.decode_scale.array() / set.bases.array()).matrix();
    Vector<Scalar> offset_n = (model.decode_offset.array() / set.bases.array()).matrix();
    return detail::loss_from_rate(model, ctx, fp.rate, scale_n, offset_n);
}

}  // namespace spikegrid
