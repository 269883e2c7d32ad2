#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "saf/model.hpp"
#include "saf/sample.hpp"

namespace saf {

enum class LossKind : std::uint8_t { MSE, MAE };

const char* loss_name(LossKind kind);
LossKind loss_from_name(const std::string& name);

/// Knobs of the self-adaptive procedure.
///
/// `mask` of 0 means "half the window" (the default split).  `adapt_rate`
/// is the test-time rate applied to weight clones during inference and to
/// the live weights during the self-supervised phase of training;
/// `train_rate` drives the supervised update.  `use_error_signal` controls
/// whether reconstruction errors feed back into the encoder as extra
/// features; `masked_only_backcast_loss` restricts the self-supervised
/// loss to the masked positions instead of the whole window.
struct SafConfig {
    std::size_t window = 30;         // m
    std::size_t mask = 0;            // n; 0 -> window / 2
    std::size_t horizon = 5;         // h
    double adapt_rate = 1e-4;        // alpha
    double train_rate = 1e-3;        // gamma
    std::size_t adapt_steps = 1;
    bool use_error_signal = true;
    bool masked_only_backcast_loss = false;
    LossKind loss = LossKind::MSE;
    MergeMode merge = MergeMode::Additive;

    std::size_t mask_length() const { return mask == 0 ? window / 2 : mask; }

    /// Gate for user-supplied configs: 0 < mask < window, adapt_rate >= 0,
    /// train_rate > 0, adapt_steps >= 1, finite rates.  The ops themselves
    /// accept any finite non-negative rates so degenerate settings (both
    /// rates zero) remain expressible in tests.
    void validate() const;
};

/// Switches for the component-knockout variants.  None is full SAF;
/// the others skip exactly one piece of the procedure.
enum class Ablation : std::uint8_t {
    None,
    NoDecoderUpdate,   // reconstruction loss does not update the backcast decoder
    NoEncoderUpdate,   // reconstruction loss does not update the encoder
    NoErrorSignal,     // zeros replace the error features at the final encode
};

const char* ablation_name(Ablation kind);
Ablation ablation_from_name(const std::string& name);

/// A window with its masked prefix overwritten by copies of the first
/// unmasked row.  `filled` is what the encoder sees; `original` is kept
/// for loss targets and error computation.
struct MaskedWindow {
    Tensor filled;    // m x d_x
    Tensor original;  // untouched copy
    std::size_t mask = 0;
};

/// Rows [0, n) of `window` are replaced by row n (the first row the mask
/// leaves visible); rows [n, m) pass through unchanged.
MaskedWindow mask_and_tile(const Tensor& window, std::size_t mask);

/// Everything the self-supervised adaptation produces: the adapted weight
/// copies, the final reconstruction, its errors, and the loss before and
/// after the update.  The bundle the adaptation started from is never
/// modified.
struct AdaptationOutcome {
    ParameterSet encoder;    // adapted copy of the encoder weights
    ParameterSet backcast;   // adapted copy of the backcast readout
    Tensor backcasts;        // m x d_x, recomputed with the adapted readout
    Tensor errors;           // m x d_x, original - backcasts elementwise
    double pre_loss = 0.0;
    double post_loss = 0.0;
};

/// The self-supervised half of inference: encodes the masked+tiled window
/// (error features zeroed), reconstructs it, and takes `adapt_steps`
/// gradient steps at `adapt_rate` on CLONES of the encoder and backcast
/// weights.  The reconstruction is then recomputed with the adapted
/// readout applied to the pre-update representation, and errors are the
/// elementwise difference from the original window.
///
/// Raises AdaptationError (carrying adapt_rate) if the adaptation makes
/// anything non-finite.
AdaptationOutcome self_adapt(const ModelBundle& bundle, const SafConfig& config, const Tensor& window,
                             const Tensor& statics, Ablation ablation = Ablation::None);

/// Full self-adaptive inference: runs self_adapt, re-encodes the ORIGINAL
/// window with the reconstruction errors appended as extra features
/// (zeros when the error signal is off) using the ADAPTED encoder, and
/// rolls out the forecast with the stored, unmodified forecast decoder.
/// Pure: repeated calls are bit-identical and the bundle never changes.
std::vector<double> infer(const ModelBundle& bundle, const SafConfig& config, const Tensor& window,
                          const Tensor& statics, Ablation ablation = Ablation::None);

/// One training iteration over a batch, updating `bundle` IN PLACE:
/// the self-supervised phase applies `adapt_rate` steps to the live
/// encoder and backcast weights, then the supervised phase applies one
/// `train_rate` step to the encoder, forecast decoder, and static net
/// from the forecast loss.  The error features enter the supervised pass
/// as constants, and the supervised gradient treats the already-updated
/// weights as the starting point (no differentiation through the
/// adaptation).  Returns the forecast loss measured after the
/// self-supervised update (the value the supervised step descends on).
double train_step(ModelBundle& bundle, const SafConfig& config, const std::vector<WindowSample>& batch,
                  Ablation ablation = Ablation::None);

/// Supervised control without any of the above: encode the raw window,
/// roll out the forecast, one `train_rate` step on encoder + forecast
/// decoder + static net.  The bundle must be built without the error
/// channel.  Returns the batch forecast loss before the update.
double baseline_train_step(ModelBundle& bundle, const SafConfig& config,
                           const std::vector<WindowSample>& batch);

/// Plain forecast with a no-error-channel bundle.  Pure.
std::vector<double> baseline_infer(const ModelBundle& bundle, const SafConfig& config,
                                   const Tensor& window, const Tensor& statics);

} // namespace saf
