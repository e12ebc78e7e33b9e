#include "diffmark/training.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffmark/io_npz.hpp"
#include "diffmark/rng.hpp"

namespace diffmark {

namespace {

constexpr uint64_t kTrainStream = 0x7261;

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t step = 0;

    void init(const ParamSet& params) {
        m.resize(params.size());
        v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m[i].assign(params[i].size(), 0.0);
            v[i].assign(params[i].size(), 0.0);
        }
    }

    void update(ParamSet& params, const ParamSet& grads, double lr) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++step;
        double c1 = 1.0 - std::pow(b1, double(step));
        double c2 = 1.0 - std::pow(b2, double(step));
        for (size_t i = 0; i < params.size(); ++i)
            for (size_t j = 0; j < params[i].size(); ++j) {
                double g = grads[i][j];
                m[i][j] = b1 * m[i][j] + (1.0 - b1) * g;
                v[i][j] = b2 * v[i][j] + (1.0 - b2) * g * g;
                params[i][j] -= lr * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
            }
    }
};

std::string f1_mode_name(F1Mode m) { return m == F1Mode::zero ? "zero" : "theorem"; }
std::string shape_name(MarkShape s) {
    switch (s) {
        case MarkShape::square: return "square";
        case MarkShape::plus: return "plus";
        default: return "cross";
    }
}
std::string position_name(MarkPosition p) {
    return p == MarkPosition::center ? "center" : "bottom_right";
}

}  // namespace

std::string watermark_spec_json(const WatermarkSpec& spec) {
    nlohmann::json j;
    j["gamma"] = spec.gamma;
    j["t_A"] = spec.t_A;
    j["f1_mode"] = f1_mode_name(spec.f1_mode);
    j["shape"] = shape_name(spec.shape);
    j["position"] = position_name(spec.position);
    j["scale_mode"] =
        spec.scale_mode == ScaleMode::dynamic_batch_max ? "dynamic_batch_max" : "static";
    j["pattern_shape"] = {spec.pattern.height, spec.pattern.width, spec.pattern.channels};
    return j.dump();
}

Checkpoint train(const ImageBatch& dataset, const WatermarkSpec& spec,
                 const VarianceSchedule& schedule, const TrainConfig& config) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (config.steps < 0) throw std::invalid_argument("train: steps must be >= 0");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (config.ema_rate && (*config.ema_rate < 0.0 || *config.ema_rate >= 1.0))
        throw std::invalid_argument("train: ema_rate must be in [0,1)");
    spec.validate(schedule.T);

    ToyDenoiserConfig model_cfg = config.model;
    model_cfg.channels = dataset[0].channels;
    ToyDenoiser model(model_cfg, derive_seed(config.seed, kTrainStream, 0));
    Rng data_rng = Rng::derived(config.seed, kTrainStream, 1);
    Rng noise_rng = Rng::derived(config.seed, kTrainStream, 2);

    Checkpoint ckpt;
    ckpt.model = model_cfg;
    ckpt.schedule_fingerprint = schedule_fingerprint(schedule);
    ckpt.spec_json = watermark_spec_json(spec);
    if (config.ema_rate) ckpt.ema_params = model.parameters();

    AdamState adam;
    if (config.optimizer == OptimizerKind::adam) adam.init(model.parameters());

    std::FILE* log = nullptr;
    if (!config.loss_log_path.empty()) {
        log = std::fopen(config.loss_log_path.c_str(), "w");
        if (!log) throw std::runtime_error("train: cannot open loss log " + config.loss_log_path);
        std::fprintf(log, "step,t_bucket,loss\n");
    }

    ParamSet grads;
    std::vector<double> elem_loss;
    for (int step = 0; step < config.steps; ++step) {
        // uniform t per minibatch element; each element carries its own
        // dynamically scaled pattern
        std::vector<int> ts(config.batch_size);
        ImageBatch xs, targets;
        xs.reserve(config.batch_size);
        targets.reserve(config.batch_size);
        for (int b = 0; b < config.batch_size; ++b) {
            ts[b] = data_rng.uniform_int(1, schedule.T);
            const Image& x0 = dataset[data_rng.uniform_int(0, int(dataset.size()) - 1)];
            TrainingPair p = build_training_pair(x0, ts[b], spec, schedule, noise_rng);
            xs.push_back(std::move(p.x_t_prime));
            targets.push_back(std::move(p.target));
        }

        double loss = model.loss_and_gradients(xs, ts, targets, grads, log ? &elem_loss : nullptr);
        if (!std::isfinite(loss)) {
            if (log) std::fclose(log);
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                     ", t=" + std::to_string(ts[0]) +
                                     ", loss=" + std::to_string(loss));
        }
        if (log) {
            for (int b = 0; b < config.batch_size; ++b) {
                int bucket = (ts[b] - 1) * 10 / schedule.T;  // decile of the step range
                std::fprintf(log, "%d,%d,%.10g\n", step, bucket, elem_loss[b]);
            }
        }

        if (config.optimizer == OptimizerKind::adam) {
            adam.update(model.parameters(), grads, config.learning_rate);
        } else {
            ParamSet& params = model.parameters();
            for (size_t i = 0; i < params.size(); ++i)
                for (size_t j = 0; j < params[i].size(); ++j)
                    params[i][j] -= config.learning_rate * grads[i][j];
        }
        if (config.ema_rate) ema_update(model.parameters(), *ckpt.ema_params, *config.ema_rate);
        ckpt.step = step + 1;
    }
    if (log) std::fclose(log);

    ckpt.params = model.parameters();
    return ckpt;
}

void ema_update(const ParamSet& params, ParamSet& ema_params, double rate) {
    if (params.size() != ema_params.size())
        throw std::invalid_argument("ema_update: parameter sets not congruent");
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != ema_params[i].size())
            throw std::invalid_argument("ema_update: parameter sets not congruent at index " +
                                        std::to_string(i));
        for (size_t j = 0; j < params[i].size(); ++j)
            ema_params[i][j] = rate * ema_params[i][j] + (1.0 - rate) * params[i][j];
    }
}

WatermarkSpec zero_watermark_config(const WatermarkSpec& spec) {
    WatermarkSpec out = spec;
    for (double& v : out.pattern.data) v = 0.0;
    return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    NpzWriter w;
    nlohmann::json meta;
    meta["format_version"] = Checkpoint::kFormatVersion;
    meta["schedule_fingerprint"] = checkpoint.schedule_fingerprint;
    meta["spec"] = nlohmann::json::parse(checkpoint.spec_json);
    meta["step"] = checkpoint.step;
    meta["model"] = {{"channels", checkpoint.model.channels},
                     {"hidden_channels", checkpoint.model.hidden_channels},
                     {"time_embed_dim", checkpoint.model.time_embed_dim},
                     {"time_hidden_dim", checkpoint.model.time_hidden_dim}};
    meta["has_ema"] = checkpoint.ema_params.has_value();
    meta["param_count"] = checkpoint.params.size();
    w.add_raw("meta.json", meta.dump(2));
    for (size_t i = 0; i < checkpoint.params.size(); ++i)
        w.add_array("param_" + std::to_string(i), checkpoint.params[i],
                    {checkpoint.params[i].size()});
    if (checkpoint.ema_params)
        for (size_t i = 0; i < checkpoint.ema_params->size(); ++i)
            w.add_array("ema_" + std::to_string(i), (*checkpoint.ema_params)[i],
                        {(*checkpoint.ema_params)[i].size()});
    w.write(path);
}

Checkpoint load_checkpoint(const std::string& path, const VarianceSchedule* expected_schedule) {
    NpzReader r(path);
    nlohmann::json meta = nlohmann::json::parse(r.raw("meta.json"));
    if (meta.at("format_version").get<int>() != Checkpoint::kFormatVersion)
        throw std::runtime_error("load_checkpoint: unsupported format version in " + path);

    Checkpoint ckpt;
    ckpt.schedule_fingerprint = meta.at("schedule_fingerprint").get<std::string>();
    if (expected_schedule) {
        std::string want = schedule_fingerprint(*expected_schedule);
        if (want != ckpt.schedule_fingerprint)
            throw std::runtime_error(
                "load_checkpoint: schedule fingerprint mismatch (checkpoint was trained on a "
                "different beta schedule)");
    }
    ckpt.spec_json = meta.at("spec").dump();
    ckpt.step = meta.at("step").get<int64_t>();
    ckpt.model.channels = meta.at("model").at("channels").get<int>();
    ckpt.model.hidden_channels = meta.at("model").at("hidden_channels").get<int>();
    ckpt.model.time_embed_dim = meta.at("model").at("time_embed_dim").get<int>();
    ckpt.model.time_hidden_dim = meta.at("model").at("time_hidden_dim").get<int>();

    size_t count = meta.at("param_count").get<size_t>();
    ckpt.params.resize(count);
    for (size_t i = 0; i < count; ++i) ckpt.params[i] = r.array("param_" + std::to_string(i)).data;
    if (meta.at("has_ema").get<bool>()) {
        ParamSet ema(count);
        for (size_t i = 0; i < count; ++i) ema[i] = r.array("ema_" + std::to_string(i)).data;
        ckpt.ema_params = std::move(ema);
    }
    return ckpt;
}

}  // namespace diffmark
