#pragma once

#include "loadcast/errors.hpp"
#include "loadcast/features.hpp"
#include "loadcast/nn/tape.hpp"
#include "loadcast/rng.hpp"

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace loadcast::nn {

enum class Architecture { FCDNN, LSTM, GRU };

inline std::string_view to_string(Architecture a) {
    switch (a) {
    case Architecture::FCDNN: return "FCDNN";
    case Architecture::LSTM: return "LSTM";
    case Architecture::GRU: return "GRU";
    }
    return "?";
}

inline Architecture architecture_from(std::string_view name) {
    std::string upper(name);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "FCDNN") return Architecture::FCDNN;
    if (upper == "LSTM") return Architecture::LSTM;
    if (upper == "GRU") return Architecture::GRU;
    throw ConfigError("unknown architecture '" + std::string(name) + "' (valid: FCDNN, LSTM, GRU)");
}

/// Layer sizes of one forecaster. RNNs use `hidden[0]` as their state size.
struct ModelShape {
    Architecture architecture = Architecture::LSTM;
    std::size_t window_hours = kWindowHours;
    std::size_t channels = 1;
    std::size_t horizon = kHorizonHours;
    std::vector<std::size_t> hidden{64};

    bool operator==(const ModelShape&) const = default;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
    /// Inputs feeding this tensor, used for initialization bounds.
    std::size_t fan_in = 1;
};

/// Weights of one forecaster plus the normalization it was trained with.
///
/// Tensor layout by architecture (H = hidden size, C = channels, T = window):
///   FCDNN: w0 [T*C, h0], b0 [1, h0], w1 [h0, h1], b1 [1, h1], ..., head_w, head_b
///   LSTM:  w_x [C, 4H], w_h [H, 4H], b [1, 4H] (gate blocks i, f, g, o), head_w, head_b
///   GRU:   w_x [C, 3H], w_h [H, 2H], w_hn [H, H], b [1, 3H] (blocks z, r, n), head_w, head_b
struct ModelParameters {
    ModelShape shape;
    std::vector<NamedTensor> tensors;
    NormStats norm;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += static_cast<std::size_t>(t.tensor.size());
        return n;
    }

    Tensor& at(std::string_view name) {
        for (auto& t : tensors) {
            if (t.name == name) return t.tensor;
        }
        throw ConfigError("model has no tensor '" + std::string(name) + "'");
    }
    const Tensor& at(std::string_view name) const { return const_cast<ModelParameters*>(this)->at(name); }

    void zero_grad() {
        for (auto& t : tensors) t.tensor.zero_grad();
    }
};

/// Zero-initialized parameters for `shape`.
inline ModelParameters make_model(const ModelShape& shape) {
    if (shape.channels == 0 || shape.window_hours == 0 || shape.horizon == 0 || shape.hidden.empty()) {
        throw ShapeError("model needs channels, window, horizon and at least one hidden size");
    }
    for (auto h : shape.hidden) {
        if (h == 0) throw ShapeError("hidden sizes must be positive");
    }
    ModelParameters p;
    p.shape = shape;
    const auto add = [&](std::string name, std::size_t rows, std::size_t cols, std::size_t fan_in) {
        p.tensors.push_back(NamedTensor{std::move(name),
                                        Tensor(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                                        fan_in});
    };
    const std::size_t C = shape.channels;
    std::size_t last = 0;
    switch (shape.architecture) {
    case Architecture::FCDNN: {
        std::size_t in = shape.window_hours * C;
        for (std::size_t l = 0; l < shape.hidden.size(); ++l) {
            add("w" + std::to_string(l), in, shape.hidden[l], in);
            add("b" + std::to_string(l), 1, shape.hidden[l], in);
            in = shape.hidden[l];
        }
        last = in;
        break;
    }
    case Architecture::LSTM: {
        const std::size_t H = shape.hidden[0];
        add("w_x", C, 4 * H, C + H);
        add("w_h", H, 4 * H, C + H);
        add("b", 1, 4 * H, C + H);
        last = H;
        break;
    }
    case Architecture::GRU: {
        const std::size_t H = shape.hidden[0];
        add("w_x", C, 3 * H, C + H);
        add("w_h", H, 2 * H, C + H);
        add("w_hn", H, H, C + H);
        add("b", 1, 3 * H, C + H);
        last = H;
        break;
    }
    }
    add("head_w", last, shape.horizon, last);
    add("head_b", 1, shape.horizon, last);
    return p;
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias, drawn
/// tensor by tensor in row-major order.
inline void init_uniform(ModelParameters& p, SplitMix64& rng) {
    for (auto& t : p.tensors) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(t.fan_in));
        for (Eigen::Index i = 0; i < t.tensor.value.size(); ++i) {
            t.tensor.value.data()[i] = rng.uniform(-bound, bound);
        }
        t.tensor.zero_grad();
    }
}

/// Binds every tensor as a tape parameter (gradients flow back into it).
inline std::vector<Var> bind_parameters(Tape& tape, ModelParameters& p) {
    std::vector<Var> vars;
    vars.reserve(p.tensors.size());
    for (auto& t : p.tensors) vars.push_back(tape.parameter(t.tensor));
    return vars;
}

/// Binds every tensor read-only (inference).
inline std::vector<Var> bind_constants(Tape& tape, const ModelParameters& p) {
    std::vector<Var> vars;
    vars.reserve(p.tensors.size());
    for (const auto& t : p.tensors) vars.push_back(tape.view(t.tensor.value));
    return vars;
}

namespace detail {

inline void check_input(const ModelShape& s, const Matrix& batch) {
    if (static_cast<std::size_t>(batch.cols()) != s.window_hours * s.channels) {
        throw ShapeError("input batch " + shape_string(batch) + " does not match model input (" +
                         std::to_string(s.window_hours) + "x" + std::to_string(s.channels) + ")");
    }
}

inline Var fcdnn(Tape& tape, const ModelShape& s, std::span<const Var> w, const Matrix& batch) {
    Var x = tape.view(batch);
    std::size_t k = 0;
    for (std::size_t l = 0; l < s.hidden.size(); ++l, k += 2) {
        x = tape.tanh(tape.add_row(tape.matmul(x, w[k]), w[k + 1]));
    }
    return tape.add_row(tape.matmul(x, w[k]), w[k + 1]);
}

inline Var step_input(Tape& tape, const ModelShape& s, const Matrix& batch, std::size_t t) {
    const auto C = static_cast<Eigen::Index>(s.channels);
    return tape.constant(batch.middleCols(static_cast<Eigen::Index>(t) * C, C));
}

inline Var lstm(Tape& tape, const ModelShape& s, std::span<const Var> w, const Matrix& batch) {
    const auto H = static_cast<Eigen::Index>(s.hidden[0]);
    const Var w_x = w[0], w_h = w[1], b = w[2];
    Var h = tape.constant(Matrix::Zero(batch.rows(), H));
    Var c = h;
    for (std::size_t t = 0; t < s.window_hours; ++t) {
        try {
            const Var x = step_input(tape, s, batch, t);
            const Var gates = tape.add_row(tape.add(tape.matmul(x, w_x), tape.matmul(h, w_h)), b);
            const Var i = tape.sigmoid(tape.slice_cols(gates, 0, H));
            const Var f = tape.sigmoid(tape.slice_cols(gates, H, H));
            const Var g = tape.tanh(tape.slice_cols(gates, 2 * H, H));
            const Var o = tape.sigmoid(tape.slice_cols(gates, 3 * H, H));
            c = tape.add(tape.mul(f, c), tape.mul(i, g));
            h = tape.mul(o, tape.tanh(c));
        } catch (const NumericError& e) {
            throw NumericError("LSTM step " + std::to_string(t) + ": " + e.what());
        }
    }
    return tape.add_row(tape.matmul(h, w[3]), w[4]);
}

inline Var gru(Tape& tape, const ModelShape& s, std::span<const Var> w, const Matrix& batch) {
    const auto H = static_cast<Eigen::Index>(s.hidden[0]);
    const Var w_x = w[0], w_h = w[1], w_hn = w[2], b = w[3];
    Var h = tape.constant(Matrix::Zero(batch.rows(), H));
    for (std::size_t t = 0; t < s.window_hours; ++t) {
        try {
            const Var x = step_input(tape, s, batch, t);
            const Var xg = tape.add_row(tape.matmul(x, w_x), b);
            const Var hg = tape.matmul(h, w_h);
            const Var z = tape.sigmoid(tape.add(tape.slice_cols(xg, 0, H), tape.slice_cols(hg, 0, H)));
            const Var r = tape.sigmoid(tape.add(tape.slice_cols(xg, H, H), tape.slice_cols(hg, H, H)));
            const Var n = tape.tanh(tape.add(tape.slice_cols(xg, 2 * H, H), tape.matmul(tape.mul(r, h), w_hn)));
            // h' = (1 - z) n + z h = n + z (h - n)
            h = tape.add(n, tape.mul(z, tape.sub(h, n)));
        } catch (const NumericError& e) {
            throw NumericError("GRU step " + std::to_string(t) + ": " + e.what());
        }
    }
    return tape.add_row(tape.matmul(h, w[4]), w[5]);
}

} // namespace detail

/// Records the forward pass for a batch of normalized inputs, one sample per
/// row laid out hour-major (`window_hours x channels` flattened). Returns the
/// `batch x horizon` prediction node.
inline Var forward(Tape& tape, const ModelShape& shape, std::span<const Var> weights, const Matrix& batch) {
    detail::check_input(shape, batch);
    switch (shape.architecture) {
    case Architecture::FCDNN: return detail::fcdnn(tape, shape, weights, batch);
    case Architecture::LSTM: return detail::lstm(tape, shape, weights, batch);
    case Architecture::GRU: return detail::gru(tape, shape, weights, batch);
    }
    throw ConfigError("unknown architecture");
}

/// Inference on a batch of normalized inputs.
inline Matrix forward_batch(const ModelParameters& p, const Matrix& batch) {
    Tape tape;
    const auto w = bind_constants(tape, p);
    return tape.value(forward(tape, p.shape, w, batch));
}

namespace detail {

inline Matrix single_row(std::span<const double> input) {
    Matrix m(1, static_cast<Eigen::Index>(input.size()));
    for (std::size_t i = 0; i < input.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = input[i];
    return m;
}

inline std::vector<double> row_vector(const Matrix& m) { return {m.data(), m.data() + m.cols()}; }

} // namespace detail

/// Flattened normalized input (window x channels) to horizon outputs.
inline std::vector<double> forward_fcdnn(const ModelParameters& p, std::span<const double> input) {
    if (p.shape.architecture != Architecture::FCDNN) throw ShapeError("forward_fcdnn needs FCDNN parameters");
    return detail::row_vector(forward_batch(p, detail::single_row(input)));
}

/// LSTM or GRU over the input sequence from zero initial state.
inline std::vector<double> forward_rnn(const ModelParameters& p, std::span<const double> input) {
    if (p.shape.architecture == Architecture::FCDNN) throw ShapeError("forward_rnn needs LSTM or GRU parameters");
    return detail::row_vector(forward_batch(p, detail::single_row(input)));
}

/// Day-ahead forecast in original units for one raw (unnormalized) input.
inline std::vector<double> predict(const ModelParameters& p, std::span<const double> raw_input) {
    const auto normalized = normalize_input(raw_input, p.norm);
    const Matrix out = forward_batch(p, detail::single_row(normalized));
    return invert_target(detail::row_vector(out), p.norm);
}

/// Mean squared difference of two equal-length vectors.
inline double loss_mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ShapeError("loss_mse length mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

} // namespace loadcast::nn
