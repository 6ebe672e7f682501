#include "gradcheck.hpp"
#include "loadcast/nn/checkpoint.hpp"
#include "loadcast/nn/train.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace loadcast;
using namespace loadcast::nn;

namespace {

ModelShape toy_shape(Architecture a, std::size_t C = 2, std::size_t T = 5, std::size_t out = 3, std::size_t H = 4) {
    ModelShape s;
    s.architecture = a;
    s.channels = C;
    s.window_hours = T;
    s.horizon = out;
    s.hidden = a == Architecture::FCDNN ? std::vector<std::size_t>{H, H} : std::vector<std::size_t>{H};
    return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Synthetic windows: target is a fixed linear function of the last input hour.
WindowSet toy_windows(std::size_t n, std::uint64_t seed, bool constant_target = false) {
    WindowSet ws;
    ws.window_hours = 6;
    ws.horizon = 4;
    ws.channel_names = {"load_mw", "temp"};
    SplitMix64 rng(seed);
    const Date d0 = Date::from_ymd(2020, 1, 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(12);
        for (auto& v : x) v = 100.0 + 10.0 * rng.gaussian();
        std::vector<double> y(4);
        for (std::size_t h = 0; h < 4; ++h) y[h] = constant_target ? 5.0 : 0.5 * x[10] + 0.1 * h * x[11];
        const Date d = d0 + static_cast<int>(i);
        ws.push(std::move(x), std::move(y), d, start_of(d) - 1);
    }
    return ws;
}

TrainConfig small_cfg() {
    TrainConfig c;
    c.epochs = 15;
    c.batch_size = 8;
    c.learning_rate = 1e-2;
    c.fcdnn_hidden = {8};
    c.rnn_hidden = 4;
    return c;
}

} // namespace

TEST(Models, ZeroParametersGiveZeroOutput) {
    for (auto a : {Architecture::FCDNN, Architecture::LSTM, Architecture::GRU}) {
        const auto p = make_model(toy_shape(a));
        SplitMix64 rng(3);
        const auto x = gradcheck::random_matrix(4, 10, rng);
        EXPECT_TRUE(forward_batch(p, x).isZero(0.0)) << to_string(a);
    }
}

TEST(Models, HeadBiasOnlyIsConstantOutput) {
    for (auto a : {Architecture::FCDNN, Architecture::LSTM, Architecture::GRU}) {
        auto p = make_model(toy_shape(a));
        p.at("head_b").value << 1.5, -2.0, 0.25;
        SplitMix64 rng(4);
        const auto out = forward_batch(p, gradcheck::random_matrix(3, 10, rng));
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            EXPECT_EQ(out(r, 0), 1.5);
            EXPECT_EQ(out(r, 1), -2.0);
            EXPECT_EQ(out(r, 2), 0.25);
        }
    }
}

TEST(Models, TensorLayout) {
    const auto lstm = make_model(toy_shape(Architecture::LSTM));
    EXPECT_EQ(lstm.at("w_x").rows(), 2);
    EXPECT_EQ(lstm.at("w_x").cols(), 16);
    EXPECT_EQ(lstm.at("w_h").rows(), 4);
    EXPECT_EQ(lstm.at("head_w").cols(), 3);
    const auto gru = make_model(toy_shape(Architecture::GRU));
    EXPECT_EQ(gru.at("w_x").cols(), 12);
    EXPECT_EQ(gru.at("w_h").cols(), 8);
    EXPECT_EQ(gru.at("w_hn").cols(), 4);
    const auto fc = make_model(toy_shape(Architecture::FCDNN));
    EXPECT_EQ(fc.at("w0").rows(), 10);
    EXPECT_EQ(fc.parameter_count(), 10u * 4 + 4 + 4 * 4 + 4 + 4 * 3 + 3);
}

TEST(Models, ScalarLstmMatchesHandComputation) {
    auto p = make_model(toy_shape(Architecture::LSTM, 1, 1, 1, 1));
    // Gate order i, f, g, o.
    p.at("w_x").value << 0.3, -0.2, 0.7, 0.5;
    p.at("w_h").value << 0.9, 0.9, 0.9, 0.9;  // unused: h0 = 0
    p.at("b").value << 0.1, 0.2, -0.3, 0.4;
    p.at("head_w").value << 1.7;
    p.at("head_b").value << -0.05;
    const double x = 0.8;
    const double i = sigmoid(0.3 * x + 0.1);
    const double g = std::tanh(0.7 * x - 0.3);
    const double o = sigmoid(0.5 * x + 0.4);
    const double c = i * g;  // f * c0 vanishes
    const double expected = 1.7 * o * std::tanh(c) - 0.05;
    Matrix in(1, 1);
    in << x;
    EXPECT_NEAR(forward_batch(p, in)(0, 0), expected, 1e-12);
}

TEST(Models, TwoStepLstmMatchesHandComputation) {
    auto p = make_model(toy_shape(Architecture::LSTM, 1, 2, 1, 1));
    p.at("w_x").value << 0.3, -0.2, 0.7, 0.5;
    p.at("w_h").value << -0.4, 0.6, 0.2, 0.1;
    p.at("b").value << 0.1, 0.2, -0.3, 0.4;
    p.at("head_w").value << 1.0;
    const double xs[2] = {0.8, -1.1};
    double h = 0, c = 0;
    for (double x : xs) {
        const double i = sigmoid(0.3 * x - 0.4 * h + 0.1);
        const double f = sigmoid(-0.2 * x + 0.6 * h + 0.2);
        const double g = std::tanh(0.7 * x + 0.2 * h - 0.3);
        const double o = sigmoid(0.5 * x + 0.1 * h + 0.4);
        c = f * c + i * g;
        h = o * std::tanh(c);
    }
    Matrix in(1, 2);
    in << xs[0], xs[1];
    EXPECT_NEAR(forward_batch(p, in)(0, 0), h, 1e-12);
}

TEST(Models, TwoStepGruMatchesHandComputation) {
    auto p = make_model(toy_shape(Architecture::GRU, 1, 2, 1, 1));
    // Blocks z, r, n; the recurrent n weight sits in w_hn and multiplies r * h.
    p.at("w_x").value << 0.4, -0.6, 0.9;
    p.at("w_h").value << 0.3, 0.5;
    p.at("w_hn").value << -0.7;
    p.at("b").value << 0.05, -0.1, 0.2;
    p.at("head_w").value << 2.0;
    p.at("head_b").value << 0.5;
    const double xs[2] = {1.2, -0.3};
    double h = 0;
    for (double x : xs) {
        const double z = sigmoid(0.4 * x + 0.05 + 0.3 * h);
        const double r = sigmoid(-0.6 * x - 0.1 + 0.5 * h);
        const double n = std::tanh(0.9 * x + 0.2 - 0.7 * (r * h));
        h = (1 - z) * n + z * h;
    }
    Matrix in(1, 2);
    in << xs[0], xs[1];
    EXPECT_NEAR(forward_batch(p, in)(0, 0), 2.0 * h + 0.5, 1e-12);
}

TEST(Models, SingleSampleHelpersAgreeWithBatch) {
    auto p = make_model(toy_shape(Architecture::GRU));
    SplitMix64 rng(8);
    init_uniform(p, rng);
    const auto x = gradcheck::random_matrix(1, 10, rng);
    const auto batch = forward_batch(p, x);
    const auto single = forward_rnn(p, std::span<const double>(x.data(), 10));
    for (int h = 0; h < 3; ++h) EXPECT_EQ(single[h], batch(0, h));
    auto f = make_model(toy_shape(Architecture::FCDNN));
    init_uniform(f, rng);
    EXPECT_EQ(forward_fcdnn(f, std::span<const double>(x.data(), 10))[1], forward_batch(f, x)(0, 1));
}

TEST(Models, InputWidthMismatchIsShapeError) {
    const auto p = make_model(toy_shape(Architecture::LSTM));
    EXPECT_THROW(forward_batch(p, Matrix::Zero(2, 9)), ShapeError);
}

TEST(Models, ArchitectureNames) {
    EXPECT_EQ(architecture_from("lstm"), Architecture::LSTM);
    EXPECT_EQ(architecture_from("Gru"), Architecture::GRU);
    EXPECT_EQ(architecture_from("FCDNN"), Architecture::FCDNN);
    try {
        architecture_from("transformer");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("transformer"), std::string::npos);
        EXPECT_NE(msg.find("LSTM"), std::string::npos);
    }
}

TEST(Gradients, MatchFiniteDifferences) {
    for (auto a : {Architecture::FCDNN, Architecture::LSTM, Architecture::GRU}) {
        for (std::uint64_t seed : {11u, 12u, 13u}) {
            const auto r = gradcheck::check_architecture(a, 3, 3, 4, 2, seed);
            EXPECT_GT(r.checked, 20u);
            EXPECT_LT(r.max_rel_error, 1e-4) << to_string(a) << " seed " << seed << " worst " << r.worst;
        }
    }
}

TEST(Gradients, ZeroLossGivesZeroGradients) {
    auto p = make_model(toy_shape(Architecture::LSTM));
    SplitMix64 rng(5);
    init_uniform(p, rng);
    const auto x = gradcheck::random_matrix(3, 10, rng);
    const Matrix y = forward_batch(p, x);
    Tape tape;
    p.zero_grad();
    const auto w = bind_parameters(tape, p);
    const Var loss = tape.mse(forward(tape, p.shape, w, x), y);
    EXPECT_EQ(tape.scalar(loss), 0.0);
    tape.backward(loss);
    for (const auto& t : p.tensors) EXPECT_TRUE(t.tensor.grad.isZero(0.0)) << t.name;
}

TEST(Loss, MseExamples) {
    const std::vector<double> ones(24, 1.0), zeros(24, 0.0);
    std::vector<double> one_off(24, 0.0);
    one_off[5] = 1.0;
    EXPECT_EQ(loss_mse(ones, ones), 0.0);
    EXPECT_EQ(loss_mse(ones, zeros), 1.0);
    EXPECT_DOUBLE_EQ(loss_mse(one_off, zeros), 1.0 / 24.0);
    EXPECT_THROW(loss_mse(ones, std::vector<double>(23, 0.0)), ShapeError);
}

TEST(Loss, MseGradientOnTape) {
    Tensor pred(1, 24);
    pred.value.setOnes();
    Tape tape;
    const Var loss = tape.mse(tape.parameter(pred), Matrix::Zero(1, 24));
    EXPECT_DOUBLE_EQ(tape.scalar(loss), 1.0);
    tape.backward(loss);
    for (Eigen::Index i = 0; i < 24; ++i) EXPECT_DOUBLE_EQ(pred.grad(0, i), 2.0 / 24.0);
}

TEST(Tape, SingleBackwardPerRecording) {
    Tensor t(1, 2);
    Tape tape;
    const Var loss = tape.mse(tape.parameter(t), Matrix::Ones(1, 2));
    tape.backward(loss);
    EXPECT_THROW(tape.backward(loss), StateError);
    EXPECT_THROW(tape.parameter(t), StateError);
    tape.reset();
    EXPECT_NO_THROW(tape.backward(tape.mse(tape.parameter(t), Matrix::Ones(1, 2))));
}

TEST(Tape, BackwardNeedsScalar) {
    Tensor t(2, 2);
    Tape tape;
    EXPECT_THROW(tape.backward(tape.parameter(t)), ShapeError);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
    // L = mean((w + w - 0)^2) over one entry = 4 w^2, dL/dw = 8 w.
    Tensor w(1, 1);
    w.value << 0.75;
    Tape tape;
    const Var a = tape.parameter(w);
    tape.backward(tape.mse(tape.add(a, a), Matrix::Zero(1, 1)));
    EXPECT_DOUBLE_EQ(w.grad(0, 0), 6.0);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
    auto p = make_model(toy_shape(Architecture::FCDNN));
    SplitMix64 rng(6);
    init_uniform(p, rng);
    const auto before = p;
    for (auto& t : p.tensors) {
        for (Eigen::Index i = 0; i < t.tensor.size(); ++i) t.tensor.grad.data()[i] = rng.gaussian() * 3.0;
    }
    Adam adam(AdamConfig{0.01});
    adam.step(p);
    for (std::size_t k = 0; k < p.tensors.size(); ++k) {
        const auto& t = p.tensors[k].tensor;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double g = t.grad.data()[i];
            const double delta = t.value.data()[i] - before.tensors[k].tensor.value.data()[i];
            EXPECT_NEAR(delta, -0.01 * (g > 0 ? 1.0 : -1.0), 1e-8);
        }
    }
    EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    auto p = make_model(toy_shape(Architecture::GRU));
    SplitMix64 rng(7);
    init_uniform(p, rng);
    const auto before = p;
    Adam adam;
    adam.step(p);
    adam.step(p);
    for (std::size_t k = 0; k < p.tensors.size(); ++k) {
        EXPECT_EQ(p.tensors[k].tensor.value, before.tensors[k].tensor.value);
    }
}

TEST(Adam, Deterministic) {
    auto run = [] {
        auto p = make_model(toy_shape(Architecture::LSTM));
        SplitMix64 rng(9);
        init_uniform(p, rng);
        Adam adam(AdamConfig{0.05});
        for (int s = 0; s < 2; ++s) {
            for (auto& t : p.tensors) t.tensor.grad = t.tensor.value * 0.5 + Matrix::Constant(t.tensor.rows(), t.tensor.cols(), 0.1);
            adam.step(p);
        }
        return p;
    };
    const auto a = run(), b = run();
    for (std::size_t k = 0; k < a.tensors.size(); ++k) EXPECT_EQ(a.tensors[k].tensor.value, b.tensors[k].tensor.value);
}

TEST(Adam, MismatchedModelIsShapeError) {
    auto p = make_model(toy_shape(Architecture::LSTM));
    auto q = make_model(toy_shape(Architecture::FCDNN));
    Adam adam;
    adam.step(p);
    EXPECT_THROW(adam.step(q), ShapeError);
}

TEST(Clip, GlobalNorm) {
    auto p = make_model(toy_shape(Architecture::FCDNN, 1, 1, 1, 1));
    for (auto& t : p.tensors) t.tensor.grad.setZero();
    p.tensors[0].tensor.grad(0, 0) = 30.0;
    p.tensors[1].tensor.grad(0, 0) = 40.0;
    EXPECT_DOUBLE_EQ(clip_global_norm(p, 5.0), 50.0);
    EXPECT_DOUBLE_EQ(p.tensors[0].tensor.grad(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(p.tensors[1].tensor.grad(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(clip_global_norm(p, 5.0), 5.0);
    EXPECT_DOUBLE_EQ(p.tensors[1].tensor.grad(0, 0), 4.0);
}

TEST(EarlyStopper, StopsAfterPatienceWithoutImprovement) {
    EarlyStopper s(5);
    EXPECT_TRUE(s.observe(1.0));
    for (int e = 2; e <= 5; ++e) {
        EXPECT_FALSE(s.observe(1.0 + e));
        EXPECT_FALSE(s.should_stop()) << e;
    }
    s.observe(10.0);
    EXPECT_TRUE(s.should_stop());
    EXPECT_EQ(s.best_epoch(), 1);
    EXPECT_EQ(s.best(), 1.0);
}

TEST(EarlyStopper, ImprovementResetsCount) {
    EarlyStopper s(2);
    s.observe(3.0);
    s.observe(4.0);
    s.observe(2.0);
    s.observe(2.5);
    EXPECT_FALSE(s.should_stop());
    s.observe(2.0);  // equal is not an improvement
    EXPECT_TRUE(s.should_stop());
    EXPECT_EQ(s.best_epoch(), 3);
}

TEST(Train, SameSeedSameWeights) {
    const auto ws = toy_windows(60, 1);
    for (auto a : {Architecture::FCDNN, Architecture::GRU}) {
        const auto r1 = train(a, ws, small_cfg());
        const auto r2 = train(a, ws, small_cfg());
        for (std::size_t k = 0; k < r1.model.tensors.size(); ++k) {
            EXPECT_EQ(r1.model.tensors[k].tensor.value, r2.model.tensors[k].tensor.value);
        }
        EXPECT_EQ(r1.trace.val_loss, r2.trace.val_loss);
    }
    auto other = small_cfg();
    other.seed = 2;
    EXPECT_NE(train(Architecture::FCDNN, ws, small_cfg()).model.tensors[0].tensor.value,
              train(Architecture::FCDNN, ws, other).model.tensors[0].tensor.value);
}

TEST(Train, ConstantTargetIsLearned) {
    auto cfg = small_cfg();
    cfg.epochs = 50;
    const auto r = train(Architecture::FCDNN, toy_windows(60, 2, true), cfg);
    EXPECT_TRUE(r.model.norm.target_constant);
    EXPECT_LT(r.trace.best_val_loss.back(), 1e-4);
    const auto probe = toy_windows(1, 99);
    for (double v : predict(r.model, probe.inputs[0])) EXPECT_NEAR(v, 5.0, 0.05);
}

TEST(Train, ValidationIsChronologicalTail) {
    auto ws = toy_windows(50, 3);
    // Reverse storage order; the split must still hold out the latest dates.
    std::reverse(ws.inputs.begin(), ws.inputs.end());
    std::reverse(ws.targets.begin(), ws.targets.end());
    std::reverse(ws.target_dates.begin(), ws.target_dates.end());
    std::reverse(ws.input_latest.begin(), ws.input_latest.end());
    auto cfg = small_cfg();
    cfg.epochs = 2;
    const auto r = train(Architecture::FCDNN, ws, cfg);
    EXPECT_EQ(r.trace.val_samples, 5u);
    EXPECT_EQ(r.trace.train_samples, 45u);
    // Normalization only saw the first 45 dates.
    const auto expected = fit_norm(toy_windows(50, 3).subset(0, 45));
    EXPECT_EQ(r.model.norm, expected);
}

TEST(Train, EarlyStoppingBoundsEpochs) {
    auto cfg = small_cfg();
    cfg.epochs = 200;
    cfg.patience = 3;
    cfg.learning_rate = 0.05;
    const auto r = train(Architecture::FCDNN, toy_windows(40, 4), cfg);
    const int ran = static_cast<int>(r.trace.val_loss.size());
    EXPECT_LE(ran, r.trace.best_epoch + cfg.patience);
    EXPECT_EQ(r.trace.best_val_loss.back(), r.trace.val_loss[static_cast<std::size_t>(r.trace.best_epoch - 1)]);
    // Returned weights reproduce the best validation loss.
    EXPECT_DOUBLE_EQ(validation_mse(r.model, toy_windows(40, 4).subset(36, 40)), r.trace.best_val_loss.back());
}

TEST(Train, RejectsTinyWindowSetsAndBadConfig) {
    EXPECT_THROW(train(Architecture::LSTM, toy_windows(5, 1), small_cfg()), DatasetError);
    auto cfg = small_cfg();
    cfg.epochs = 0;
    cfg.val_fraction = 0.7;
    try {
        train(Architecture::LSTM, toy_windows(20, 1), cfg);
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epochs"), std::string::npos);
        EXPECT_NE(msg.find("val_fraction"), std::string::npos);
    }
}

TEST(Train, WarmStartUsesGivenWeights) {
    auto cfg = small_cfg();
    cfg.epochs = 1;
    cfg.learning_rate = 1e-12;
    const auto ws = toy_windows(30, 5);
    auto warm = train(Architecture::FCDNN, ws, cfg).model;
    for (auto& t : warm.tensors) t.tensor.value.array() += 0.25;
    const auto r = train(Architecture::FCDNN, ws, cfg, &warm);
    EXPECT_NEAR(r.model.tensors[0].tensor.value(0, 0), warm.tensors[0].tensor.value(0, 0), 1e-9);
}

TEST(Checkpoint, RoundTripIsExact) {
    auto cfg = small_cfg();
    cfg.epochs = 3;
    const auto ws = toy_windows(30, 6);
    const auto fit = train(Architecture::LSTM, ws, cfg);
    const auto bytes = serialize_checkpoint(fit.model, cfg);
    const auto ck = deserialize_checkpoint(bytes);
    EXPECT_EQ(ck.config, cfg);
    EXPECT_EQ(ck.model.shape, fit.model.shape);
    EXPECT_EQ(ck.model.norm, fit.model.norm);
    ASSERT_EQ(ck.model.tensors.size(), fit.model.tensors.size());
    for (std::size_t k = 0; k < ck.model.tensors.size(); ++k) {
        EXPECT_EQ(ck.model.tensors[k].name, fit.model.tensors[k].name);
        EXPECT_EQ(ck.model.tensors[k].tensor.value, fit.model.tensors[k].tensor.value);
    }
    EXPECT_EQ(predict(ck.model, ws.inputs[3]), predict(fit.model, ws.inputs[3]));
    EXPECT_EQ(serialize_checkpoint(ck.model, ck.config), bytes);
}

TEST(Checkpoint, CorruptInputIsParseError) {
    auto cfg = small_cfg();
    cfg.epochs = 1;
    const auto bytes = serialize_checkpoint(train(Architecture::GRU, toy_windows(20, 7), cfg).model, cfg);
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
        EXPECT_THROW(deserialize_checkpoint(std::string_view(bytes).substr(0, cut)), ParseError) << cut;
    }
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad), ParseError);
    EXPECT_THROW(deserialize_checkpoint(bytes + "junk"), ParseError);
}
