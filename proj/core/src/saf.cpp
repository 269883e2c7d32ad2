#include "saf/saf.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <utility>

namespace saf {

const char* loss_name(LossKind kind) { return kind == LossKind::MSE ? "mse" : "mae"; }

LossKind loss_from_name(const std::string& name) {
    if (name == "mse") return LossKind::MSE;
    if (name == "mae") return LossKind::MAE;
    throw ConfigError("unknown loss \"" + name + "\" (mse|mae)");
}

const char* ablation_name(Ablation kind) {
    switch (kind) {
        case Ablation::None: return "none";
        case Ablation::NoDecoderUpdate: return "no-decoder-update";
        case Ablation::NoEncoderUpdate: return "no-encoder-update";
        case Ablation::NoErrorSignal: return "no-error-signal";
    }
    throw ContractError("ablation_name: invalid enum value");
}

Ablation ablation_from_name(const std::string& name) {
    if (name == "none") return Ablation::None;
    if (name == "no-decoder-update") return Ablation::NoDecoderUpdate;
    if (name == "no-encoder-update") return Ablation::NoEncoderUpdate;
    if (name == "no-error-signal") return Ablation::NoErrorSignal;
    throw ConfigError("unknown ablation \"" + name +
                      "\" (none|no-decoder-update|no-encoder-update|no-error-signal)");
}

void SafConfig::validate() const {
    if (window < 2) throw ConfigError("config: window must be at least 2");
    std::size_t n = mask_length();
    if (n == 0 || n >= window)
        throw ConfigError("config: mask length " + std::to_string(n) + " must satisfy 0 < mask < window (" +
                          std::to_string(window) + ")");
    if (horizon == 0) throw ConfigError("config: horizon must be positive");
    if (!(adapt_rate >= 0.0) || !std::isfinite(adapt_rate))
        throw ConfigError("config: adapt_rate must be finite and >= 0");
    if (!(train_rate > 0.0) || !std::isfinite(train_rate))
        throw ConfigError("config: train_rate must be finite and > 0");
    if (adapt_steps == 0) throw ConfigError("config: adapt_steps must be at least 1");
}

MaskedWindow mask_and_tile(const Tensor& window, std::size_t mask) {
    if (window.rank() != 2)
        throw ShapeError("mask_and_tile: window must be a matrix, got " + shape_string(window.shape));
    std::size_t m = window.shape[0], d = window.shape[1];
    if (mask == 0 || mask >= m)
        throw ConfigError("mask_and_tile: mask length " + std::to_string(mask) +
                          " must satisfy 0 < mask < window rows (" + std::to_string(m) + ")");

    MaskedWindow out;
    out.original = window;
    out.filled = window;
    out.mask = mask;
    const double* tile = window.values.data() + mask * d;  // first unmasked row
    for (std::size_t r = 0; r < mask; ++r)
        std::memcpy(out.filled.values.data() + r * d, tile, d * sizeof(double));
    return out;
}

namespace {

// A value-only copy usable as a constant on any tape.
Tensor detached(const Tensor& t) { return Tensor(t.shape, t.values); }

std::string rate_string(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", rate);
    return buf;
}

Tensor loss_of(Tape& tape, const Tensor& prediction, const Tensor& target, LossKind kind) {
    Tensor d = tape.sub(prediction, target);
    if (kind == LossKind::MSE) return tape.mean(tape.mul(d, d));
    return tape.mean(tape.abs(d));
}

// Checks that a bundle/config pair agree structurally before running the
// pipelines on it.
void check_compatible(const ModelBundle& bundle, const SafConfig& config, bool error_channel) {
    if (bundle.dims.window != config.window)
        throw ConfigError("config window " + std::to_string(config.window) + " does not match model window " +
                          std::to_string(bundle.dims.window));
    if (bundle.dims.horizon != config.horizon)
        throw ConfigError("config horizon " + std::to_string(config.horizon) +
                          " does not match model horizon " + std::to_string(bundle.dims.horizon));
    if (bundle.dims.error_channel != error_channel)
        throw ContractError(error_channel
                                ? "self-adaptive pipeline needs a model built with the error channel"
                                : "baseline pipeline needs a model built without the error channel");
    if (bundle.merge != config.merge)
        throw ConfigError(std::string("config merge mode \"") + merge_name(config.merge) +
                          "\" does not match model merge mode \"" + merge_name(bundle.merge) + "\"");
    std::size_t n = config.mask_length();
    if (n == 0 || n >= config.window)
        throw ConfigError("config: mask length " + std::to_string(n) + " must satisfy 0 < mask < window (" +
                          std::to_string(config.window) + ")");
}

// Batched layout used throughout: element b of the batch contributes row b
// of each per-step matrix, and stacked results are step-major, so row
// s*B + b of a stack belongs to (step s, sample b).

struct BatchViews {
    std::size_t batch = 0;
    std::size_t rows = 0;   // m
    std::size_t width = 0;  // d_x
    std::vector<const Tensor*> windows;
    Tensor statics;  // B x d_s, or empty
};

BatchViews collect_batch(const ModelBundle& bundle, const std::vector<WindowSample>& batch) {
    if (batch.empty()) throw ShapeError("train_step: empty batch");
    const ModelDims& dims = bundle.dims;

    BatchViews views;
    views.batch = batch.size();
    views.rows = dims.window;
    views.width = dims.covariates;
    views.windows.reserve(batch.size());
    for (const WindowSample& sample : batch) {
        if (sample.window.rank() != 2 || sample.window.shape[0] != dims.window ||
            sample.window.shape[1] != dims.covariates)
            throw ShapeError("batch windows must all be " + std::to_string(dims.window) + " x " +
                             std::to_string(dims.covariates) + ", got " + shape_string(sample.window.shape));
        if (sample.target.size() != dims.horizon)
            throw ShapeError("batch targets must have " + std::to_string(dims.horizon) + " values, got " +
                             shape_string(sample.target.shape));
        views.windows.push_back(&sample.window);
    }

    if (dims.statics > 0) {
        views.statics = Tensor({batch.size(), dims.statics});
        for (std::size_t b = 0; b < batch.size(); ++b) {
            if (batch[b].statics.size() != dims.statics)
                throw ShapeError("batch static vectors must have " + std::to_string(dims.statics) +
                                 " values, got " + shape_string(batch[b].statics.shape));
            std::memcpy(views.statics.values.data() + b * dims.statics, batch[b].statics.values.data(),
                        dims.statics * sizeof(double));
        }
    } else {
        for (const WindowSample& sample : batch)
            if (sample.statics.size() != 0)
                throw ShapeError("model has no static features but batch samples carry them");
    }
    return views;
}

// Builds the per-step encoder inputs (B x 2*d_x each) from per-sample raw
// windows and an optional per-sample error matrix; the error block is
// zeros when `errors` is null.
std::vector<Tensor> encoder_steps(const std::vector<const Tensor*>& windows,
                                  const std::vector<Tensor>* errors, std::size_t rows, std::size_t width) {
    std::size_t batch = windows.size();
    std::vector<Tensor> steps;
    steps.reserve(rows);
    for (std::size_t s = 0; s < rows; ++s) {
        Tensor step({batch, 2 * width});
        for (std::size_t b = 0; b < batch; ++b) {
            double* row = step.values.data() + b * 2 * width;
            std::memcpy(row, windows[b]->values.data() + s * width, width * sizeof(double));
            if (errors)
                std::memcpy(row + width, (*errors)[b].values.data() + s * width, width * sizeof(double));
        }
        steps.push_back(std::move(step));
    }
    return steps;
}

// Baseline variant: rows carry only the raw covariates.
std::vector<Tensor> plain_steps(const std::vector<const Tensor*>& windows, std::size_t rows,
                                std::size_t width) {
    std::size_t batch = windows.size();
    std::vector<Tensor> steps;
    steps.reserve(rows);
    for (std::size_t s = 0; s < rows; ++s) {
        Tensor step({batch, width});
        for (std::size_t b = 0; b < batch; ++b)
            std::memcpy(step.values.data() + b * width, windows[b]->values.data() + s * width,
                        width * sizeof(double));
        steps.push_back(std::move(step));
    }
    return steps;
}

// Stacked step-major targets for the reconstruction loss: row s*B + b is
// row s of sample b's original window, restricted to the first `steps`.
Tensor backcast_targets(const std::vector<const Tensor*>& windows, std::size_t steps, std::size_t width) {
    std::size_t batch = windows.size();
    Tensor out({steps * batch, width});
    for (std::size_t s = 0; s < steps; ++s)
        for (std::size_t b = 0; b < batch; ++b)
            std::memcpy(out.values.data() + (s * batch + b) * width, windows[b]->values.data() + s * width,
                        width * sizeof(double));
    return out;
}

Tensor forecast_targets(const std::vector<WindowSample>& batch, std::size_t horizon) {
    std::size_t size = batch.size();
    Tensor out({horizon * size, 1});
    for (std::size_t s = 0; s < horizon; ++s)
        for (std::size_t b = 0; b < size; ++b) out.values[s * size + b] = batch[b].target.values[s];
    return out;
}

// Runs the encoder over prepared steps with the static pathway merged in.
EncodedState run_encoder(Tape& tape, const CellHandles& cell, const ReadoutHandles* static_net,
                         MergeMode merge, std::vector<Tensor> steps, const Tensor& statics,
                         std::size_t batch, std::size_t hidden) {
    CellState initial{Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
    if (static_net) {
        Tensor srepr = static_representation(tape, *static_net, statics);
        if (merge == MergeMode::Additive) {
            initial.h = srepr;
        } else {
            for (Tensor& step : steps) step = tape.concat_last(step, srepr);
        }
    }
    return encode_steps(tape, cell, steps, initial);
}

// Hidden outputs of an encoder pass as plain values, so a later tape can
// consume the representation as constants (the recomputed reconstruction
// is data, never a gradient path).
EncodedState detached_state(const EncodedState& state) {
    EncodedState out;
    out.hiddens.reserve(state.hiddens.size());
    for (const Tensor& h : state.hiddens) out.hiddens.push_back(detached(h));
    out.h = detached(state.h);
    out.c = detached(state.c);
    return out;
}

struct AdaptedRun {
    EncodedState representation;  // detached, from the last adaptation pass
    Tensor backcasts;             // (m*B) x d_x, adapted readout on that representation
    std::vector<Tensor> errors;   // per sample, m x d_x
    double pre_loss = 0.0;
    double post_loss = 0.0;
};

// The shared self-supervised phase.  Encodes masked+tiled windows with a
// zero error block, reconstructs, and takes adapt_steps gradient steps at
// adapt_rate on `encoder` / `backcast` (the caller passes either live
// sets or clones).  Then recomputes the reconstruction with the adapted
// readout on the pre-update representation and derives per-sample errors
// against the ORIGINAL windows.
AdaptedRun adapt_phase(ParameterSet& encoder, ParameterSet& backcast, const ParameterSet* static_net,
                       const ModelBundle& bundle, const SafConfig& config,
                       const std::vector<const Tensor*>& originals, const Tensor& statics,
                       Ablation ablation) {
    const ModelDims& dims = bundle.dims;
    std::size_t batch = originals.size();
    std::size_t n = config.mask_length();
    std::size_t loss_steps = config.masked_only_backcast_loss ? n : dims.window;
    bool update_encoder = config.adapt_rate > 0.0 && ablation != Ablation::NoEncoderUpdate;
    bool update_decoder = config.adapt_rate > 0.0 && ablation != Ablation::NoDecoderUpdate;

    std::vector<MaskedWindow> masked;
    masked.reserve(batch);
    std::vector<const Tensor*> filled;
    filled.reserve(batch);
    for (const Tensor* w : originals) {
        masked.push_back(mask_and_tile(*w, n));
        filled.push_back(&masked.back().filled);
    }
    Tensor targets = backcast_targets(originals, loss_steps, dims.covariates);

    AdaptedRun run;
    try {
        for (std::size_t step = 0; step < config.adapt_steps; ++step) {
            Tape tape;
            CellHandles cell = update_encoder ? watch_cell(tape, encoder) : constant_cell(encoder);
            ReadoutHandles readout =
                update_decoder ? watch_readout(tape, backcast) : constant_readout(backcast);
            ReadoutHandles snet;
            if (static_net) snet = constant_static(*static_net);

            EncodedState state = run_encoder(tape, cell, static_net ? &snet : nullptr, bundle.merge,
                                             encoder_steps(filled, nullptr, dims.window, dims.covariates),
                                             statics, batch, dims.hidden);
            Tensor b = decode_backcast_steps(tape, readout, state, loss_steps);
            Tensor loss = loss_of(tape, b, targets, config.loss);
            if (step == 0) run.pre_loss = loss.values[0];

            if (update_encoder || update_decoder) {
                tape.backward(loss);
                if (update_encoder) sgd_step(encoder, config.adapt_rate);
                if (update_decoder) sgd_step(backcast, config.adapt_rate);
            }
            if (step + 1 == config.adapt_steps) run.representation = detached_state(state);
        }

        // Reconstruction with the adapted readout on the pre-update
        // representation.  The errors cover every window position, so the
        // full window is decoded even when the loss is mask-restricted.
        Tape tape;
        Tensor b = decode_backcast_steps(tape, constant_readout(backcast), run.representation, 0);
        Tensor scored = config.masked_only_backcast_loss
                            ? decode_backcast_steps(tape, constant_readout(backcast), run.representation,
                                                    loss_steps)
                            : b;
        run.post_loss = loss_of(tape, scored, targets, config.loss).values[0];
        run.backcasts = b;
    } catch (const NumericError& err) {
        throw AdaptationError(config.adapt_rate, "self-adaptation diverged at rate " +
                                                     rate_string(config.adapt_rate) + ": " + err.what());
    }

    run.errors.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor e({dims.window, dims.covariates});
        for (std::size_t s = 0; s < dims.window; ++s)
            for (std::size_t j = 0; j < dims.covariates; ++j)
                e.values[s * dims.covariates + j] =
                    originals[b]->values[s * dims.covariates + j] -
                    run.backcasts.values[(s * batch + b) * dims.covariates + j];
        run.errors.push_back(std::move(e));
    }
    return run;
}

} // namespace

AdaptationOutcome self_adapt(const ModelBundle& bundle, const SafConfig& config, const Tensor& window,
                             const Tensor& statics, Ablation ablation) {
    check_compatible(bundle, config, true);
    if (window.rank() != 2 || window.shape[0] != bundle.dims.window ||
        window.shape[1] != bundle.dims.covariates)
        throw ShapeError("self_adapt: window must be " + std::to_string(bundle.dims.window) + " x " +
                         std::to_string(bundle.dims.covariates) + ", got " + shape_string(window.shape));

    ParameterSet encoder = bundle.encoder.clone();
    ParameterSet backcast = bundle.backcast.clone();

    Tensor statics_row;
    if (bundle.dims.statics > 0) {
        if (statics.size() != bundle.dims.statics)
            throw ShapeError("self_adapt: static vector must have " + std::to_string(bundle.dims.statics) +
                             " values, got " + shape_string(statics.shape));
        statics_row = Tensor::matrix(1, bundle.dims.statics, statics.values);
    } else if (statics.size() != 0) {
        throw ShapeError("self_adapt: model has no static features but a static vector was given");
    }

    AdaptedRun run = adapt_phase(encoder, backcast, bundle.static_net ? &*bundle.static_net : nullptr,
                                 bundle, config, {&window}, statics_row, ablation);

    AdaptationOutcome out;
    out.encoder = std::move(encoder);
    out.backcast = std::move(backcast);
    out.backcasts = std::move(run.backcasts);  // batch of one: (m*1) x d_x is already m x d_x
    out.errors = std::move(run.errors[0]);
    out.pre_loss = run.pre_loss;
    out.post_loss = run.post_loss;
    return out;
}

std::vector<double> infer(const ModelBundle& bundle, const SafConfig& config, const Tensor& window,
                          const Tensor& statics, Ablation ablation) {
    AdaptationOutcome adapted = self_adapt(bundle, config, window, statics, ablation);

    bool use_errors = config.use_error_signal && ablation != Ablation::NoErrorSignal;
    std::vector<const Tensor*> windows{&window};
    std::vector<Tensor> errors;
    if (use_errors) errors.push_back(adapted.errors);

    Tensor statics_row;
    if (bundle.dims.statics > 0) statics_row = Tensor::matrix(1, bundle.dims.statics, statics.values);

    Tape tape;
    CellHandles cell = constant_cell(adapted.encoder);
    ReadoutHandles snet;
    if (bundle.static_net) snet = constant_static(*bundle.static_net);
    EncodedState state = run_encoder(
        tape, cell, bundle.static_net ? &snet : nullptr, bundle.merge,
        encoder_steps(windows, use_errors ? &errors : nullptr, bundle.dims.window, bundle.dims.covariates),
        statics_row, 1, bundle.dims.hidden);
    Tensor y = decode_forecast_steps(tape, constant_cell(bundle.forecast),
                                     constant_readout(bundle.forecast), state, bundle.dims.horizon);
    return y.values;
}

double train_step(ModelBundle& bundle, const SafConfig& config, const std::vector<WindowSample>& batch,
                  Ablation ablation) {
    check_compatible(bundle, config, true);
    BatchViews views = collect_batch(bundle, batch);

    AdaptedRun run = adapt_phase(bundle.encoder, bundle.backcast,
                                 bundle.static_net ? &*bundle.static_net : nullptr, bundle, config,
                                 views.windows, views.statics, ablation);

    bool use_errors = config.use_error_signal && ablation != Ablation::NoErrorSignal;
    Tensor targets = forecast_targets(batch, bundle.dims.horizon);

    Tape tape;
    CellHandles cell = watch_cell(tape, bundle.encoder);
    CellHandles fcell = watch_cell(tape, bundle.forecast);
    ReadoutHandles fread = watch_readout(tape, bundle.forecast);
    ReadoutHandles snet;
    if (bundle.static_net) snet = watch_static(tape, *bundle.static_net);
    EncodedState state = run_encoder(tape, cell, bundle.static_net ? &snet : nullptr, bundle.merge,
                                     encoder_steps(views.windows, use_errors ? &run.errors : nullptr,
                                                   bundle.dims.window, bundle.dims.covariates),
                                     views.statics, views.batch, bundle.dims.hidden);
    Tensor y = decode_forecast_steps(tape, fcell, fread, state, bundle.dims.horizon);
    Tensor loss = loss_of(tape, y, targets, config.loss);
    double value = loss.values[0];

    tape.backward(loss);
    sgd_step(bundle.encoder, config.train_rate);
    sgd_step(bundle.forecast, config.train_rate);
    if (bundle.static_net) sgd_step(*bundle.static_net, config.train_rate);
    return value;
}

double baseline_train_step(ModelBundle& bundle, const SafConfig& config,
                           const std::vector<WindowSample>& batch) {
    check_compatible(bundle, config, false);
    BatchViews views = collect_batch(bundle, batch);
    Tensor targets = forecast_targets(batch, bundle.dims.horizon);

    Tape tape;
    CellHandles cell = watch_cell(tape, bundle.encoder);
    CellHandles fcell = watch_cell(tape, bundle.forecast);
    ReadoutHandles fread = watch_readout(tape, bundle.forecast);
    ReadoutHandles snet;
    if (bundle.static_net) snet = watch_static(tape, *bundle.static_net);
    EncodedState state = run_encoder(tape, cell, bundle.static_net ? &snet : nullptr, bundle.merge,
                                     plain_steps(views.windows, bundle.dims.window, bundle.dims.covariates),
                                     views.statics, views.batch, bundle.dims.hidden);
    Tensor y = decode_forecast_steps(tape, fcell, fread, state, bundle.dims.horizon);
    Tensor loss = loss_of(tape, y, targets, config.loss);
    double value = loss.values[0];

    tape.backward(loss);
    sgd_step(bundle.encoder, config.train_rate);
    sgd_step(bundle.forecast, config.train_rate);
    if (bundle.static_net) sgd_step(*bundle.static_net, config.train_rate);
    return value;
}

std::vector<double> baseline_infer(const ModelBundle& bundle, const SafConfig& config,
                                   const Tensor& window, const Tensor& statics) {
    check_compatible(bundle, config, false);
    if (window.rank() != 2 || window.shape[0] != bundle.dims.window ||
        window.shape[1] != bundle.dims.covariates)
        throw ShapeError("baseline_infer: window must be " + std::to_string(bundle.dims.window) + " x " +
                         std::to_string(bundle.dims.covariates) + ", got " + shape_string(window.shape));

    Tensor statics_row;
    if (bundle.dims.statics > 0) {
        if (statics.size() != bundle.dims.statics)
            throw ShapeError("baseline_infer: static vector must have " +
                             std::to_string(bundle.dims.statics) + " values, got " +
                             shape_string(statics.shape));
        statics_row = Tensor::matrix(1, bundle.dims.statics, statics.values);
    } else if (statics.size() != 0) {
        throw ShapeError("baseline_infer: model has no static features but a static vector was given");
    }

    std::vector<const Tensor*> windows{&window};
    Tape tape;
    CellHandles cell = constant_cell(bundle.encoder);
    ReadoutHandles snet;
    if (bundle.static_net) snet = constant_static(*bundle.static_net);
    EncodedState state =
        run_encoder(tape, cell, bundle.static_net ? &snet : nullptr, bundle.merge,
                    plain_steps(windows, bundle.dims.window, bundle.dims.covariates), statics_row, 1,
                    bundle.dims.hidden);
    Tensor y = decode_forecast_steps(tape, constant_cell(bundle.forecast),
                                     constant_readout(bundle.forecast), state, bundle.dims.horizon);
    return y.values;
}

} // namespace saf
