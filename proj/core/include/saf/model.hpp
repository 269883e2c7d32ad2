#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "saf/parameters.hpp"
#include "saf/tensor.hpp"

namespace saf {

enum class MergeMode : std::uint8_t { Additive, Concatenation };

const char* merge_name(MergeMode mode);
MergeMode merge_from_name(const std::string& name);

/// Structural description of one model.
///
/// `error_channel` doubles the encoder's covariate block: windows are fed
/// as [covariates | backcast residuals], with the residual block zeroed
/// wherever errors do not exist yet.  Baseline models set it to false and
/// consume plain d_x-wide rows.
struct ModelDims {
    std::size_t covariates = 1;  // d_x
    std::size_t statics = 0;     // d_s, 0 means no static net at all
    std::size_t hidden = 16;
    std::size_t window = 30;  // m
    std::size_t horizon = 5;  // h
    bool error_channel = true;

    /// Width of one encoder input row before any static concatenation.
    std::size_t row_width() const { return error_channel ? 2 * covariates : covariates; }
    /// Full encoder input width including a concatenated static block.
    std::size_t encoder_input_width(MergeMode merge) const;
    void validate() const;
};

/// All parameters of one model: recurrent encoder, per-timestep backcast
/// readout, recurrent forecast decoder, optional static net.
///
/// Cell parameter layout inside a set: "W" (input x 4*hidden), "R"
/// (hidden x 4*hidden), "b" (4*hidden), gate order [input, forget,
/// candidate, output].  Readout layout: "W_out" (hidden x out), "b_out"
/// (out).  The static net is a single tanh layer "W" (d_s x hidden),
/// "b" (hidden).
struct ModelBundle {
    ModelDims dims;
    MergeMode merge = MergeMode::Additive;
    std::uint64_t seed = 0;
    ParameterSet encoder;
    ParameterSet backcast;
    ParameterSet forecast;
    std::optional<ParameterSet> static_net;

    ModelBundle clone() const;
    std::uint64_t value_hash() const;
    void validate() const;
};

/// Seed-deterministic initialisation: weights uniform in
/// [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)) per matrix,
/// biases zero except the forget-gate block of each cell bias, which is 1.
/// One value stream, tensors filled in declaration order, so equal seeds
/// give bit-identical bundles.
ModelBundle init_params(const ModelDims& dims, MergeMode merge, std::uint64_t seed);

struct CellState {
    Tensor h;  // batch x hidden
    Tensor c;
};

/// Per-step hiddens plus the final state of an encoder pass.
struct EncodedState {
    std::vector<Tensor> hiddens;  // window entries, each batch x hidden
    Tensor h;
    Tensor c;
};

/// Weight handles for one recurrent cell.  Obtain them either watched
/// (gradients flow to the owning ParameterSet) or constant.
struct CellHandles {
    Tensor W, R, b;
};
struct ReadoutHandles {
    Tensor W, b;
};

CellHandles watch_cell(Tape& tape, ParameterSet& params);
CellHandles constant_cell(const ParameterSet& params);
ReadoutHandles watch_readout(Tape& tape, ParameterSet& params);
ReadoutHandles constant_readout(const ParameterSet& params);
ReadoutHandles watch_static(Tape& tape, ParameterSet& params);
ReadoutHandles constant_static(const ParameterSet& params);

/// One gated recurrence step: gates from x_t·W + h·R + b, split in the
/// order [input, forget, candidate, output].
CellState cell_step(Tape& tape, const CellHandles& cell, const Tensor& x_t, const CellState& state);

/// Runs the cell over the given per-step rows (each batch x width).
EncodedState encode_steps(Tape& tape, const CellHandles& cell, const std::vector<Tensor>& steps,
                          const CellState& initial);

/// Per-timestep affine readout of every hidden output, stacked step-major
/// into (window*batch) x d_x.  `limit_steps` > 0 restricts the readout to
/// the first that many window positions (masked-only losses).
Tensor decode_backcast_steps(Tape& tape, const ReadoutHandles& readout, const EncodedState& state,
                             std::size_t limit_steps = 0);

/// Recurrent rollout seeded by the encoder's final state.  The first step
/// consumes a zero input; every later step consumes the previous
/// prediction.  Stacked step-major into (horizon*batch) x 1.
Tensor decode_forecast_steps(Tape& tape, const CellHandles& cell, const ReadoutHandles& readout,
                             const EncodedState& encoded, std::size_t horizon);

/// Static pathway: tanh(statics · W + b), one row per batch entry.
Tensor static_representation(Tape& tape, const ReadoutHandles& net, const Tensor& statics);

/// Single-sample convenience wrappers over the step-level API.  `window`
/// carries row_width() columns; `statics` is a d_s vector (empty when the
/// model has none).  These run the encoder without watching anything, so
/// they are safe on shared bundles.
EncodedState encode(Tape& tape, const ModelBundle& bundle, const Tensor& window, const Tensor& statics);
Tensor decode_backcast(Tape& tape, const ModelBundle& bundle, const EncodedState& state);
Tensor decode_forecast(Tape& tape, const ModelBundle& bundle, const EncodedState& state);

/// Splits a matrix into per-row constant tensors of shape 1 x cols.
std::vector<Tensor> window_rows(const Tensor& window);

/// Bundle serialization in the SAFP1 container (binary, little-endian,
/// layout documented in docs/formats.md).  `metadata` travels verbatim and
/// comes back from load_bundle; callers keep arbitrary UTF-8 (JSON by
/// convention) in it.
void save_bundle(const ModelBundle& bundle, const std::string& path, const std::string& metadata);
ModelBundle load_bundle(const std::string& path, std::string* metadata = nullptr);

} // namespace saf
