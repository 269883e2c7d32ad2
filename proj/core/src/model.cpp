#include "saf/model.hpp"

#include <cmath>
#include <cstring>

#include "saf/io.hpp"
#include "saf/rng.hpp"

namespace saf {

const char* merge_name(MergeMode mode) {
    return mode == MergeMode::Additive ? "additive" : "concatenation";
}

MergeMode merge_from_name(const std::string& name) {
    if (name == "additive") return MergeMode::Additive;
    if (name == "concatenation") return MergeMode::Concatenation;
    throw ConfigError("unknown merge mode \"" + name + "\" (additive|concatenation)");
}

std::size_t ModelDims::encoder_input_width(MergeMode merge) const {
    std::size_t w = row_width();
    if (merge == MergeMode::Concatenation && statics > 0) w += hidden;
    return w;
}

void ModelDims::validate() const {
    if (covariates == 0) throw ConfigError("model dims: covariates must be positive");
    if (hidden == 0) throw ConfigError("model dims: hidden size must be positive");
    if (window == 0) throw ConfigError("model dims: window length must be positive");
    if (horizon == 0) throw ConfigError("model dims: horizon must be positive");
}

ModelBundle ModelBundle::clone() const {
    ModelBundle copy;
    copy.dims = dims;
    copy.merge = merge;
    copy.seed = seed;
    copy.encoder = encoder.clone();
    copy.backcast = backcast.clone();
    copy.forecast = forecast.clone();
    if (static_net) copy.static_net = static_net->clone();
    return copy;
}

std::uint64_t ModelBundle::value_hash() const {
    // Covers parameter values only (via the per-set hashes, which already
    // include names and shapes); structural fields are compared directly
    // where they matter.  Two bundles with bit-identical weights hash
    // equal regardless of recorded seed or merge mode.
    std::uint64_t h = 0xCBF29CE484222325ull;
    auto mix_in = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    };
    mix_in(encoder.value_hash());
    mix_in(backcast.value_hash());
    mix_in(forecast.value_hash());
    mix_in(static_net ? static_net->value_hash() : 0);
    return h;
}

void ModelBundle::validate() const {
    dims.validate();
    std::size_t u = dims.hidden;
    auto expect = [](const ParameterSet& set, std::string_view name, std::vector<std::size_t> shape,
                     const char* which) {
        const Tensor& t = set.at(name);
        if (t.shape != shape)
            throw ShapeError(std::string("model bundle: ") + which + " parameter \"" + std::string(name) +
                             "\" has shape " + shape_string(t.shape) + ", expected " + shape_string(shape));
    };
    expect(encoder, "W", {dims.encoder_input_width(merge), 4 * u}, "encoder");
    expect(encoder, "R", {u, 4 * u}, "encoder");
    expect(encoder, "b", {4 * u}, "encoder");
    expect(backcast, "W_out", {u, dims.covariates}, "backcast");
    expect(backcast, "b_out", {dims.covariates}, "backcast");
    expect(forecast, "W", {1, 4 * u}, "forecast");
    expect(forecast, "R", {u, 4 * u}, "forecast");
    expect(forecast, "b", {4 * u}, "forecast");
    expect(forecast, "W_out", {u, 1}, "forecast");
    expect(forecast, "b_out", {1}, "forecast");
    if (dims.statics > 0) {
        if (!static_net) throw ConfigError("model bundle: static features declared but static net absent");
        expect(*static_net, "W", {dims.statics, u}, "static");
        expect(*static_net, "b", {u}, "static");
    } else if (static_net) {
        throw ConfigError("model bundle: static net present but no static features declared");
    }
}

namespace {

Tensor glorot(CounterRng& rng, std::size_t rows, std::size_t cols) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t({rows, cols});
    for (double& v : t.values) v = rng.uniform(-limit, limit);
    return t;
}

Tensor cell_bias(std::size_t units) {
    // zero except the forget-gate block
    Tensor b({4 * units});
    for (std::size_t k = units; k < 2 * units; ++k) b.values[k] = 1.0;
    return b;
}

} // namespace

ModelBundle init_params(const ModelDims& dims, MergeMode merge, std::uint64_t seed) {
    dims.validate();
    std::size_t u = dims.hidden;
    CounterRng rng(CounterRng::mix(seed, 0x1A17));

    ModelBundle bundle;
    bundle.dims = dims;
    bundle.merge = merge;
    bundle.seed = seed;

    bundle.encoder.add("W", glorot(rng, dims.encoder_input_width(merge), 4 * u));
    bundle.encoder.add("R", glorot(rng, u, 4 * u));
    bundle.encoder.add("b", cell_bias(u));

    bundle.backcast.add("W_out", glorot(rng, u, dims.covariates));
    bundle.backcast.add("b_out", Tensor::zeros({dims.covariates}));

    bundle.forecast.add("W", glorot(rng, 1, 4 * u));
    bundle.forecast.add("R", glorot(rng, u, 4 * u));
    bundle.forecast.add("b", cell_bias(u));
    bundle.forecast.add("W_out", glorot(rng, u, 1));
    bundle.forecast.add("b_out", Tensor::zeros({1}));

    if (dims.statics > 0) {
        ParameterSet net;
        net.add("W", glorot(rng, dims.statics, u));
        net.add("b", Tensor::zeros({u}));
        bundle.static_net = std::move(net);
    }
    return bundle;
}

CellHandles watch_cell(Tape& tape, ParameterSet& params) {
    return {tape.watch(params.at("W")), tape.watch(params.at("R")), tape.watch(params.at("b"))};
}

CellHandles constant_cell(const ParameterSet& params) {
    return {params.at("W"), params.at("R"), params.at("b")};
}

ReadoutHandles watch_readout(Tape& tape, ParameterSet& params) {
    return {tape.watch(params.at("W_out")), tape.watch(params.at("b_out"))};
}

ReadoutHandles constant_readout(const ParameterSet& params) {
    return {params.at("W_out"), params.at("b_out")};
}

ReadoutHandles watch_static(Tape& tape, ParameterSet& params) {
    return {tape.watch(params.at("W")), tape.watch(params.at("b"))};
}

ReadoutHandles constant_static(const ParameterSet& params) {
    return {params.at("W"), params.at("b")};
}

CellState cell_step(Tape& tape, const CellHandles& cell, const Tensor& x_t, const CellState& state) {
    std::size_t u = cell.R.shape[0];
    Tensor z = tape.add(tape.add(tape.matmul(x_t, cell.W), tape.matmul(state.h, cell.R)), cell.b);
    Tensor i = tape.sigmoid(tape.slice_last(z, 0, u));
    Tensor f = tape.sigmoid(tape.slice_last(z, u, 2 * u));
    Tensor g = tape.tanh(tape.slice_last(z, 2 * u, 3 * u));
    Tensor o = tape.sigmoid(tape.slice_last(z, 3 * u, 4 * u));
    Tensor c = tape.add(tape.mul(f, state.c), tape.mul(i, g));
    Tensor h = tape.mul(o, tape.tanh(c));
    return {std::move(h), std::move(c)};
}

EncodedState encode_steps(Tape& tape, const CellHandles& cell, const std::vector<Tensor>& steps,
                          const CellState& initial) {
    if (steps.empty()) throw ShapeError("encode: empty window");
    EncodedState out;
    out.hiddens.reserve(steps.size());
    CellState state = initial;
    for (const Tensor& x : steps) {
        state = cell_step(tape, cell, x, state);
        out.hiddens.push_back(state.h);
    }
    out.h = state.h;
    out.c = state.c;
    return out;
}

Tensor decode_backcast_steps(Tape& tape, const ReadoutHandles& readout, const EncodedState& state,
                             std::size_t limit_steps) {
    std::size_t used = limit_steps == 0 ? state.hiddens.size() : limit_steps;
    if (used > state.hiddens.size())
        throw ShapeError("decode_backcast: cannot read " + std::to_string(used) + " of " +
                         std::to_string(state.hiddens.size()) + " window positions");
    std::vector<Tensor> rows;
    rows.reserve(used);
    for (std::size_t t = 0; t < used; ++t)
        rows.push_back(tape.add(tape.matmul(state.hiddens[t], readout.W), readout.b));
    return tape.stack_rows(rows);
}

Tensor decode_forecast_steps(Tape& tape, const CellHandles& cell, const ReadoutHandles& readout,
                             const EncodedState& encoded, std::size_t horizon) {
    if (horizon == 0) throw ShapeError("decode_forecast: horizon must be positive");
    std::size_t batch = encoded.h.shape.at(0);
    CellState state{encoded.h, encoded.c};
    Tensor input = Tensor::zeros({batch, 1});
    std::vector<Tensor> outputs;
    outputs.reserve(horizon);
    for (std::size_t s = 0; s < horizon; ++s) {
        state = cell_step(tape, cell, input, state);
        input = tape.add(tape.matmul(state.h, readout.W), readout.b);
        outputs.push_back(input);
    }
    return tape.stack_rows(outputs);
}

Tensor static_representation(Tape& tape, const ReadoutHandles& net, const Tensor& statics) {
    return tape.tanh(tape.add(tape.matmul(statics, net.W), net.b));
}

namespace {

// Shared assembly for the single-sample wrappers: splits the window into
// rows, inserts the static pathway per merge mode.
EncodedState encode_with(Tape& tape, const ModelBundle& bundle, const CellHandles& cell,
                         const ReadoutHandles* static_net, const Tensor& window, const Tensor& statics) {
    const ModelDims& dims = bundle.dims;
    if (window.rank() != 2 || window.shape[0] != dims.window)
        throw ShapeError("encode: window has shape " + shape_string(window.shape) + ", expected " +
                         std::to_string(dims.window) + " rows");
    if (window.shape[1] != dims.row_width())
        throw ShapeError("encode: window rows are " + std::to_string(window.shape[1]) + " wide, expected " +
                         std::to_string(dims.row_width()));

    std::vector<Tensor> steps = window_rows(window);
    std::size_t batch = 1;

    Tensor srepr;
    if (static_net) {
        Tensor s = statics;
        if (s.rank() == 1) s = Tensor::matrix(1, s.shape[0], s.values);
        if (s.rank() != 2 || s.shape[1] != dims.statics)
            throw ShapeError("encode: static vector has shape " + shape_string(statics.shape) +
                             ", expected " + std::to_string(dims.statics) + " features");
        srepr = static_representation(tape, *static_net, s);
    } else if (statics.size() != 0) {
        throw ShapeError("encode: model has no static net but static features were given");
    }

    CellState initial{Tensor::zeros({batch, dims.hidden}), Tensor::zeros({batch, dims.hidden})};
    if (static_net && bundle.merge == MergeMode::Additive) {
        initial.h = srepr;
    } else if (static_net && bundle.merge == MergeMode::Concatenation) {
        for (Tensor& step : steps) step = tape.concat_last(step, srepr);
    }
    return encode_steps(tape, cell, steps, initial);
}

} // namespace

EncodedState encode(Tape& tape, const ModelBundle& bundle, const Tensor& window, const Tensor& statics) {
    CellHandles cell = constant_cell(bundle.encoder);
    if (bundle.dims.statics > 0) {
        if (!bundle.static_net) throw ConfigError("encode: bundle is missing its static net");
        ReadoutHandles net = constant_static(*bundle.static_net);
        return encode_with(tape, bundle, cell, &net, window, statics);
    }
    return encode_with(tape, bundle, cell, nullptr, window, statics);
}

Tensor decode_backcast(Tape& tape, const ModelBundle& bundle, const EncodedState& state) {
    return decode_backcast_steps(tape, constant_readout(bundle.backcast), state);
}

Tensor decode_forecast(Tape& tape, const ModelBundle& bundle, const EncodedState& state) {
    CellHandles cell = constant_cell(bundle.forecast);
    ReadoutHandles readout = constant_readout(bundle.forecast);
    return decode_forecast_steps(tape, cell, readout, state, bundle.dims.horizon);
}

std::vector<Tensor> window_rows(const Tensor& window) {
    if (window.rank() != 2) throw ShapeError("window_rows: expected a matrix, got " + shape_string(window.shape));
    std::size_t rows = window.shape[0], cols = window.shape[1];
    std::vector<Tensor> out;
    out.reserve(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        Tensor row({1, cols});
        std::memcpy(row.values.data(), window.values.data() + r * cols, cols * sizeof(double));
        out.push_back(std::move(row));
    }
    return out;
}

// --- SAFP1 container ------------------------------------------------------

namespace {

constexpr char kMagic[] = "SAFP1\n";
constexpr std::uint8_t kBundleKind = 1;

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_string(std::string& out, std::string_view s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

void put_set(std::string& out, std::string_view name, const ParameterSet& set) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(set.size()));
    for (const auto& [pname, tensor] : set) {
        put_string(out, pname);
        put_u8(out, static_cast<std::uint8_t>(tensor.rank()));
        for (std::size_t d : tensor.shape) put_u64(out, d);
        const char* raw = reinterpret_cast<const char*>(tensor.values.data());
        out.append(raw, tensor.values.size() * sizeof(double));
    }
}

struct Cursor {
    const std::string& data;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > data.size()) throw IoError(path + ": truncated bundle file");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos++])) << (8 * i);
        return v;
    }
    std::string str() {
        std::uint32_t n = u32();
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
    ParameterSet set(std::string* name) {
        *name = str();
        std::uint32_t count = u32();
        ParameterSet out;
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string pname = str();
            std::uint8_t rank = u8();
            if (rank > 2) throw IoError(path + ": tensor rank " + std::to_string(rank) + " unsupported");
            std::vector<std::size_t> shape;
            for (std::uint8_t d = 0; d < rank; ++d) shape.push_back(u64());
            std::size_t n = shape_size(shape);
            need(n * sizeof(double));
            std::vector<double> values(n);
            std::memcpy(values.data(), data.data() + pos, n * sizeof(double));
            pos += n * sizeof(double);
            out.add(std::move(pname), Tensor(std::move(shape), std::move(values)));
        }
        return out;
    }
};

} // namespace

void save_bundle(const ModelBundle& bundle, const std::string& path, const std::string& metadata) {
    bundle.validate();
    std::string out;
    out.append(kMagic, sizeof kMagic - 1);
    put_u8(out, kBundleKind);
    put_u64(out, bundle.dims.covariates);
    put_u64(out, bundle.dims.statics);
    put_u64(out, bundle.dims.hidden);
    put_u64(out, bundle.dims.window);
    put_u64(out, bundle.dims.horizon);
    put_u8(out, bundle.dims.error_channel ? 1 : 0);
    put_u8(out, bundle.merge == MergeMode::Additive ? 0 : 1);
    put_u64(out, bundle.seed);
    put_string(out, metadata);
    put_u32(out, bundle.static_net ? 4 : 3);
    put_set(out, "encoder", bundle.encoder);
    put_set(out, "backcast", bundle.backcast);
    put_set(out, "forecast", bundle.forecast);
    if (bundle.static_net) put_set(out, "static", *bundle.static_net);
    atomic_write_file(path, out);
}

ModelBundle load_bundle(const std::string& path, std::string* metadata) {
    std::string data = read_file(path);
    if (data.size() < sizeof kMagic - 1 || data.compare(0, sizeof kMagic - 1, kMagic) != 0)
        throw IoError(path + ": not a SAFP1 file");

    Cursor cur{data, sizeof kMagic - 1, path};
    if (cur.u8() != kBundleKind) throw IoError(path + ": unsupported SAFP1 record kind");

    ModelBundle bundle;
    bundle.dims.covariates = cur.u64();
    bundle.dims.statics = cur.u64();
    bundle.dims.hidden = cur.u64();
    bundle.dims.window = cur.u64();
    bundle.dims.horizon = cur.u64();
    bundle.dims.error_channel = cur.u8() != 0;
    bundle.merge = cur.u8() == 0 ? MergeMode::Additive : MergeMode::Concatenation;
    bundle.seed = cur.u64();
    std::string meta = cur.str();
    if (metadata) *metadata = std::move(meta);

    std::uint32_t sets = cur.u32();
    for (std::uint32_t i = 0; i < sets; ++i) {
        std::string name;
        ParameterSet set = cur.set(&name);
        if (name == "encoder")
            bundle.encoder = std::move(set);
        else if (name == "backcast")
            bundle.backcast = std::move(set);
        else if (name == "forecast")
            bundle.forecast = std::move(set);
        else if (name == "static")
            bundle.static_net = std::move(set);
        else
            throw IoError(path + ": unknown parameter set \"" + name + "\"");
    }
    bundle.validate();
    return bundle;
}

} // namespace saf
