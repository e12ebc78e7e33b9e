#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "diffmark/dataset.hpp"
#include "diffmark/denoiser.hpp"
#include "diffmark/training.hpp"

using namespace diffmark;

namespace {

const VarianceSchedule kT4 = make_linear_schedule(4, 0.1, 0.4);

WatermarkSpec small_spec() {
    WatermarkSpec spec;
    spec.pattern = make_pattern(MarkShape::square, MarkPosition::bottom_right, 3, 8, 8, 1, {1.0});
    spec.gamma = 0.8;
    spec.t_A = 2;
    spec.f1_mode = F1Mode::zero;
    return spec;
}

}  // namespace

TEST_CASE("analytic gradient matches finite differences on a 2-parameter linear denoiser") {
    // model: eps_hat = a*x + b, loss = mean((eps_hat - target)^2).
    // dL/da = mean(2 diff x), dL/db = mean(2 diff).
    const double a = 0.7, b = -0.2;
    const int n = 16;
    std::vector<double> xs(n), targets(n);
    Rng rng(4);
    for (int i = 0; i < n; ++i) {
        xs[i] = rng.normal();
        targets[i] = rng.normal();
    }
    auto loss_fn = [&](double av, double bv) {
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            double d = av * xs[i] + bv - targets[i];
            acc += d * d;
        }
        return acc / n;
    };
    double ga = 0, gb = 0;
    for (int i = 0; i < n; ++i) {
        double d = a * xs[i] + b - targets[i];
        ga += 2 * d * xs[i] / n;
        gb += 2 * d / n;
    }
    const double h = 1e-6;
    double fd_a = (loss_fn(a + h, b) - loss_fn(a - h, b)) / (2 * h);
    double fd_b = (loss_fn(a, b + h) - loss_fn(a, b - h)) / (2 * h);
    CHECK(std::abs(ga - fd_a) / std::abs(fd_a) < 1e-5);
    CHECK(std::abs(gb - fd_b) / std::abs(fd_b) < 1e-5);
}

TEST_CASE("ToyDenoiser backprop matches central finite differences") {
    ToyDenoiserConfig cfg;
    cfg.channels = 1;
    cfg.hidden_channels = 4;
    cfg.time_embed_dim = 8;
    cfg.time_hidden_dim = 8;
    ToyDenoiser model(cfg, 99);

    Rng rng(5);
    ImageBatch x, target;
    std::vector<int> ts;
    for (int i = 0; i < 3; ++i) {
        Image xi(5, 5, 1), ti(5, 5, 1);
        for (double& v : xi.data) v = rng.normal();
        for (double& v : ti.data) v = rng.normal();
        x.push_back(xi);
        target.push_back(ti);
        ts.push_back(1 + i);
    }

    ParamSet grads;
    model.loss_and_gradients(x, ts, target, grads);

    // probe a handful of parameters in every tensor
    Rng pick(12);
    for (size_t pi = 0; pi < model.parameters().size(); ++pi) {
        for (int probe = 0; probe < 3; ++probe) {
            size_t j = size_t(pick.uniform_int(0, int(model.parameters()[pi].size()) - 1));
            double orig = model.parameters()[pi][j];
            // step large enough that the central difference is not dominated
            // by cancellation in the O(1) loss
            const double h = 1e-4 * std::max(1.0, std::abs(orig));
            ParamSet dummy;
            model.parameters()[pi][j] = orig + h;
            double lp = model.loss_and_gradients(x, ts, target, dummy);
            model.parameters()[pi][j] = orig - h;
            double lm = model.loss_and_gradients(x, ts, target, dummy);
            model.parameters()[pi][j] = orig;
            double fd = (lp - lm) / (2 * h);
            double scale = std::max({std::abs(fd), std::abs(grads[pi][j]), 1e-6});
            CHECK(std::abs(grads[pi][j] - fd) / scale < 1e-5);
        }
    }
}

TEST_CASE("perfect denoiser has exactly zero loss") {
    ToyDenoiserConfig cfg;
    cfg.hidden_channels = 4;
    ToyDenoiser model(cfg, 1);
    Rng rng(6);
    ImageBatch x;
    std::vector<int> ts{2, 3};
    for (int i = 0; i < 2; ++i) {
        Image xi(4, 4, 1);
        for (double& v : xi.data) v = rng.normal();
        x.push_back(xi);
    }
    ImageBatch target = model.forward(x, ts);  // oracle: the model's own output
    ParamSet grads;
    double loss = model.loss_and_gradients(x, ts, target, grads);
    CHECK(loss == 0.0);
    for (const auto& g : grads)
        for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("deterministic forward pass") {
    ToyDenoiserConfig cfg;
    ToyDenoiser model(cfg, 7);
    Rng rng(8);
    ImageBatch x{Image(6, 6, 1)};
    for (double& v : x[0].data) v = rng.normal();
    ImageBatch a = model.forward(x, 3);
    ImageBatch b = model.forward(x, 3);
    CHECK(a[0].data == b[0].data);
    CHECK(a[0].same_shape(x[0]));
}

TEST_CASE("ema_update endpoints and closed-form geometric check") {
    ParamSet params{{1.0, 2.0}}, ema{{0.0, 0.0}};

    ParamSet e0 = ema;
    ema_update(params, e0, 0.0);
    CHECK(e0[0] == params[0]);  // rate 0: ema equals params

    ParamSet e1 = ema;
    ema_update(params, e1, 1.0);
    CHECK(e1[0] == ema[0]);  // rate 1: unchanged

    // 1000 updates at rate 0.999 from ema=0 toward params=1:
    // ema = 1 - 0.999^1000 ~ 0.6323
    ParamSet e{{0.0}};
    ParamSet one{{1.0}};
    for (int i = 0; i < 1000; ++i) ema_update(one, e, 0.999);
    CHECK(e[0][0] == doctest::Approx(1.0 - std::pow(0.999, 1000)).epsilon(1e-10));
    CHECK(e[0][0] == doctest::Approx(0.6323).epsilon(1e-3));

    ParamSet wrong{{1.0, 2.0, 3.0}};
    CHECK_THROWS(ema_update(params, wrong, 0.5));
}

TEST_CASE("zero-step training returns the initialization") {
    ImageBatch data = make_synthetic_dataset(1, 8, SyntheticKind::blobs, 42);
    TrainConfig tc;
    tc.steps = 0;
    tc.seed = 11;
    tc.ema_rate = 0.99;
    tc.model.hidden_channels = 4;
    WatermarkSpec spec = small_spec();
    Checkpoint ckpt = train(data, spec, kT4, tc);

    ToyDenoiserConfig mc = tc.model;
    mc.channels = 1;
    ToyDenoiser fresh(mc, derive_seed(11, 0x7261, 0));
    CHECK(ckpt.params == fresh.parameters());
    REQUIRE(ckpt.ema_params.has_value());
    CHECK(*ckpt.ema_params == fresh.parameters());  // EMA starts at init
    CHECK(ckpt.step == 0);
}

TEST_CASE("short training run reduces the loss") {
    ImageBatch data = make_synthetic_dataset(1, 8, SyntheticKind::blobs, 42);
    VarianceSchedule s = make_linear_schedule(20, 5e-3, 0.25);
    WatermarkSpec spec = small_spec();
    spec.t_A = 10;
    spec.scale_mode = ScaleMode::dynamic_batch_max;

    TrainConfig tc;
    tc.steps = 300;
    tc.batch_size = 8;
    tc.learning_rate = 3e-3;
    tc.seed = 3;
    tc.model.hidden_channels = 8;
    tc.loss_log_path = "test_loss_log.csv";
    Checkpoint ckpt = train(data, spec, s, tc);
    CHECK(ckpt.step == 300);

    // parse the loss CSV and compare early-vs-late smoothed loss
    std::FILE* f = std::fopen("test_loss_log.csv", "r");
    REQUIRE(f);
    char line[256];
    REQUIRE(std::fgets(line, sizeof(line), f));  // header
    std::vector<double> losses;
    int step, bucket;
    double loss;
    while (std::fscanf(f, "%d,%d,%lf", &step, &bucket, &loss) == 3) losses.push_back(loss);
    std::fclose(f);
    std::remove("test_loss_log.csv");
    REQUIRE(losses.size() > 400);
    double early = 0, late = 0;
    const size_t k = 200;
    for (size_t i = 0; i < k; ++i) {
        early += losses[i];
        late += losses[losses.size() - 1 - i];
    }
    CHECK(late < 0.8 * early);
}

TEST_CASE("training aborts on non-finite loss with context") {
    ImageBatch data = make_synthetic_dataset(1, 8, SyntheticKind::blobs, 42);
    TrainConfig tc;
    tc.steps = 50;
    tc.learning_rate = 1e12;  // guaranteed blow-up
    tc.optimizer = OptimizerKind::sgd;
    tc.seed = 3;
    WatermarkSpec spec = small_spec();
    CHECK_THROWS_WITH_AS(train(data, spec, kT4, tc),
                         doctest::Contains("non-finite loss"), std::runtime_error);
}

TEST_CASE("zero_watermark_config zeroes the pattern and nothing else") {
    WatermarkSpec spec = small_spec();
    WatermarkSpec zero = zero_watermark_config(spec);
    CHECK(zero.gamma == spec.gamma);
    CHECK(zero.t_A == spec.t_A);
    CHECK(zero.f1_mode == spec.f1_mode);
    for (double v : zero.pattern.data) CHECK(v == 0.0);

    // resulting target is gamma * eps everywhere
    Rng rng(1);
    Image x0(8, 8, 1, 0.25);
    TrainingPair p = build_training_pair(x0, 1, zero, kT4, rng);
    for (size_t i = 0; i < p.target.size(); ++i)
        CHECK(p.target.data[i] == doctest::Approx(0.8 * p.eps_prime.data[i]).epsilon(1e-15));
}

TEST_CASE("checkpoint round-trips bitwise and validates the schedule fingerprint") {
    ImageBatch data = make_synthetic_dataset(1, 8, SyntheticKind::blobs, 42);
    TrainConfig tc;
    tc.steps = 5;
    tc.batch_size = 2;
    tc.seed = 21;
    tc.ema_rate = 0.9;
    tc.model.hidden_channels = 4;
    WatermarkSpec spec = small_spec();
    Checkpoint ckpt = train(data, spec, kT4, tc);

    std::string path = "test_checkpoint.npz";
    save_checkpoint(ckpt, path);
    Checkpoint back = load_checkpoint(path, &kT4);
    CHECK(back.params == ckpt.params);
    REQUIRE(back.ema_params.has_value());
    CHECK(*back.ema_params == *ckpt.ema_params);
    CHECK(back.step == ckpt.step);
    CHECK(back.schedule_fingerprint == ckpt.schedule_fingerprint);

    // forward pass equality on a fixed batch
    ToyDenoiserConfig mc = ckpt.model;
    ToyDenoiser m1(mc, 0), m2(mc, 0);
    m1.set_parameters(ckpt.params);
    m2.set_parameters(back.params);
    Rng rng(2);
    ImageBatch x{Image(8, 8, 1)};
    for (double& v : x[0].data) v = rng.normal();
    CHECK(m1.forward(x, 2)[0].data == m2.forward(x, 2)[0].data);

    // loading against a different schedule fails loudly
    VarianceSchedule other = make_linear_schedule(4, 0.1, 0.39);
    CHECK_THROWS_WITH_AS(load_checkpoint(path, &other), doctest::Contains("fingerprint"),
                         std::runtime_error);
    std::remove(path.c_str());
}
