#pragma once

#include "loadcast/features.hpp"
#include "loadcast/nn/models.hpp"
#include "loadcast/nn/optim.hpp"
#include "loadcast/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace loadcast::nn {

struct TrainConfig {
    std::uint64_t seed = 1;
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int patience = 5;
    /// Chronological tail held out for early stopping.
    double val_fraction = 0.1;
    std::vector<std::size_t> fcdnn_hidden{64, 64};
    std::size_t rnn_hidden = 64;
    double clip_norm = 5.0;

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (epochs <= 0) out.push_back("train.epochs must be > 0");
        if (batch_size <= 0) out.push_back("train.batch_size must be > 0");
        if (!(learning_rate > 0)) out.push_back("train.learning_rate must be > 0");
        if (patience <= 0) out.push_back("train.patience must be > 0");
        if (!(val_fraction > 0.0 && val_fraction < 0.5)) out.push_back("train.val_fraction must lie in (0, 0.5)");
        if (fcdnn_hidden.empty() || std::find(fcdnn_hidden.begin(), fcdnn_hidden.end(), 0u) != fcdnn_hidden.end()) {
            out.push_back("train.fcdnn_hidden must be non-empty and positive");
        }
        if (rnn_hidden == 0) out.push_back("train.rnn_hidden must be > 0");
        if (!(clip_norm > 0)) out.push_back("train.clip_norm must be > 0");
        return out;
    }

    void validate() const {
        const auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid training config:";
        for (const auto& s : v) msg += "\n  - " + s;
        throw ConfigError(msg);
    }

    bool operator==(const TrainConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"seed", c.seed},           {"epochs", c.epochs},
                       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                       {"patience", c.patience},   {"val_fraction", c.val_fraction},
                       {"fcdnn_hidden", c.fcdnn_hidden}, {"rnn_hidden", c.rnn_hidden},
                       {"clip_norm", c.clip_norm}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.patience = j.value("patience", c.patience);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.fcdnn_hidden = j.value("fcdnn_hidden", c.fcdnn_hidden);
    c.rnn_hidden = j.value("rnn_hidden", c.rnn_hidden);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
}

inline ModelShape shape_for(Architecture arch, const WindowSet& ws, const TrainConfig& cfg) {
    ModelShape s;
    s.architecture = arch;
    s.window_hours = ws.window_hours;
    s.channels = ws.channels();
    s.horizon = ws.horizon;
    s.hidden = arch == Architecture::FCDNN ? cfg.fcdnn_hidden : std::vector<std::size_t>{cfg.rnn_hidden};
    return s;
}

/// Tracks the best validation loss and signals when `patience` epochs have
/// passed without improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Records an epoch's validation loss; true when it is a new best.
    bool observe(double val_loss) {
        ++epoch_;
        if (val_loss < best_) {
            best_ = val_loss;
            best_epoch_ = epoch_;
            return true;
        }
        return false;
    }

    bool should_stop() const { return epoch_ - best_epoch_ >= patience_; }
    double best() const { return best_; }
    /// 1-based epoch of the best loss, 0 before any observation.
    int best_epoch() const { return best_epoch_; }
    int epochs_seen() const { return epoch_; }

private:
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
    int epoch_ = 0;
};

struct TrainTrace {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    /// Best validation loss seen up to and including each epoch.
    std::vector<double> best_val_loss;
    int best_epoch = 0;
    bool stopped_early = false;
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
};

inline void to_json(nlohmann::json& j, const TrainTrace& t) {
    j = nlohmann::json{{"train_loss", t.train_loss},       {"val_loss", t.val_loss},
                       {"best_val_loss", t.best_val_loss}, {"best_epoch", t.best_epoch},
                       {"stopped_early", t.stopped_early}, {"train_samples", t.train_samples},
                       {"val_samples", t.val_samples}};
}

struct TrainResult {
    ModelParameters model;
    TrainTrace trace;
};

/// Minimum number of windows accepted by `train`.
inline constexpr std::size_t kMinTrainWindows = 10;

namespace detail {

/// Packs normalized samples into a batch matrix and matching targets.
inline void gather(const WindowSet& ws, std::span<const std::size_t> rows, Matrix& x, Matrix& y) {
    const auto in_cols = static_cast<Eigen::Index>(ws.window_hours * ws.channels());
    const auto out_cols = static_cast<Eigen::Index>(ws.horizon);
    x.resize(static_cast<Eigen::Index>(rows.size()), in_cols);
    y.resize(static_cast<Eigen::Index>(rows.size()), out_cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        std::copy(ws.inputs[rows[i]].begin(), ws.inputs[rows[i]].end(), x.row(r).data());
        std::copy(ws.targets[rows[i]].begin(), ws.targets[rows[i]].end(), y.row(r).data());
    }
}

inline double evaluate_mse(const ModelParameters& p, const WindowSet& normalized, std::size_t batch) {
    std::vector<std::size_t> rows(normalized.size());
    std::iota(rows.begin(), rows.end(), 0);
    double sse = 0.0;
    Matrix x, y;
    for (std::size_t first = 0; first < rows.size(); first += batch) {
        const std::size_t n = std::min(batch, rows.size() - first);
        gather(normalized, std::span(rows).subspan(first, n), x, y);
        sse += (forward_batch(p, x) - y).squaredNorm();
    }
    return sse / static_cast<double>(rows.size() * normalized.horizon);
}

} // namespace detail

/// Mean squared error of `p` on raw (unnormalized) windows, measured in the
/// model's normalized target units.
inline double validation_mse(const ModelParameters& p, const WindowSet& raw) {
    return detail::evaluate_mse(p, apply_norm(raw, p.norm), 64);
}

/// Mini-batch training with early stopping.
///
/// Windows are ordered by target date; the last `val_fraction` of them (at
/// least one) form the validation set. Normalization is fitted on the
/// training part only. Initialization and shuffling draw from streams derived
/// from `cfg.seed`. `warm`, when given and shape-compatible, replaces the
/// random initial weights. Returns the parameters of the best validation
/// epoch.
inline TrainResult train(Architecture arch, const WindowSet& windows, const TrainConfig& cfg,
                         const ModelParameters* warm = nullptr) {
    cfg.validate();
    if (windows.size() < kMinTrainWindows) {
        throw DatasetError("training needs at least " + std::to_string(kMinTrainWindows) + " windows, got " +
                           std::to_string(windows.size()));
    }

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return windows.target_dates[a] < windows.target_dates[b];
    });
    WindowSet sorted = windows.empty_like();
    for (auto i : order) sorted.push(windows.inputs[i], windows.targets[i], windows.target_dates[i], windows.input_latest[i]);

    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(sorted.size()) * cfg.val_fraction)));
    const std::size_t n_train = sorted.size() - n_val;
    const WindowSet train_raw = sorted.subset(0, n_train);
    const WindowSet val_raw = sorted.subset(n_train, sorted.size());

    const NormStats norm = fit_norm(train_raw);
    const WindowSet train_set = apply_norm(train_raw, norm);
    const WindowSet val_set = apply_norm(val_raw, norm);

    ModelParameters model = make_model(shape_for(arch, windows, cfg));
    model.norm = norm;
    SplitMix64 init_rng(derive_seed(cfg.seed, 1));
    init_uniform(model, init_rng);
    if (warm && warm->shape == model.shape) {
        for (std::size_t k = 0; k < model.tensors.size(); ++k) model.tensors[k].tensor.value = warm->tensors[k].tensor.value;
    }
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, 2));

    Adam adam(AdamConfig{cfg.learning_rate});
    EarlyStopper stopper(cfg.patience);
    TrainResult result{model, {}};
    result.trace.train_samples = n_train;
    result.trace.val_samples = n_val;

    std::vector<std::size_t> idx(n_train);
    std::iota(idx.begin(), idx.end(), 0);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    Tape tape;
    Matrix x, y;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        try {
            shuffle_rng.shuffle(std::span(idx));
            double loss_sum = 0.0;
            for (std::size_t first = 0; first < n_train; first += batch) {
                const std::size_t n = std::min(batch, n_train - first);
                detail::gather(train_set, std::span(idx).subspan(first, n), x, y);
                tape.reset();
                model.zero_grad();
                const auto w = bind_parameters(tape, model);
                const Var pred = forward(tape, model.shape, w, x);
                const Var loss = tape.mse(pred, y);
                loss_sum += tape.scalar(loss) * static_cast<double>(n);
                tape.backward(loss);
                clip_global_norm(model, cfg.clip_norm);
                adam.step(model);
            }
            const double train_loss = loss_sum / static_cast<double>(n_train);
            const double val_loss = detail::evaluate_mse(model, val_set, batch);
            if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
                throw NumericError("loss is not finite");
            }
            result.trace.train_loss.push_back(train_loss);
            result.trace.val_loss.push_back(val_loss);
            if (stopper.observe(val_loss)) result.model = model;
            result.trace.best_val_loss.push_back(stopper.best());
        } catch (const NumericError& e) {
            throw TrainingError(std::string(to_string(arch)) + " diverged in epoch " + std::to_string(epoch) +
                                ": " + e.what());
        }
        if (stopper.should_stop()) {
            result.trace.stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    result.trace.best_epoch = stopper.best_epoch();
    result.model.zero_grad();
    return result;
}

} // namespace loadcast::nn
