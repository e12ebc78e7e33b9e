#include "diffmark/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffmark/dataset.hpp"
#include "diffmark/hash.hpp"
#include "diffmark/io_png.hpp"

namespace diffmark {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

MarkShape parse_shape(const std::string& s) {
    if (s == "square") return MarkShape::square;
    if (s == "plus") return MarkShape::plus;
    if (s == "cross") return MarkShape::cross;
    throw std::invalid_argument("config: unknown watermark shape '" + s + "'");
}
MarkPosition parse_position(const std::string& s) {
    if (s == "bottom_right") return MarkPosition::bottom_right;
    if (s == "center") return MarkPosition::center;
    throw std::invalid_argument("config: unknown watermark position '" + s + "'");
}
F1Mode parse_f1_mode(const std::string& s) {
    if (s == "theorem") return F1Mode::theorem;
    if (s == "zero") return F1Mode::zero;
    throw std::invalid_argument("config: unknown f1_mode '" + s + "'");
}
ScaleMode parse_scale_mode(const std::string& s) {
    if (s == "dynamic_batch_max") return ScaleMode::dynamic_batch_max;
    if (s == "static") return ScaleMode::static_pattern;
    throw std::invalid_argument("config: unknown scale_mode '" + s + "'");
}
SigmaMode parse_sigma_mode(const std::string& s) {
    if (s == "gamma_squared") return SigmaMode::gamma_squared;
    if (s == "vanilla") return SigmaMode::vanilla;
    throw std::invalid_argument("config: unknown sigma_mode '" + s + "'");
}
OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw std::invalid_argument("config: unknown optimizer '" + s + "'");
}

std::string shape_str(MarkShape s) {
    return s == MarkShape::square ? "square" : s == MarkShape::plus ? "plus" : "cross";
}

}  // namespace

std::vector<int> RunConfig::snapshot_steps() const {
    std::vector<int> steps;
    steps.reserve(snapshot_fractions.size() + 1);
    for (double f : snapshot_fractions) steps.push_back(int(f * T + 0.5));
    int ta = t_A();
    bool have_ta = false;
    for (int s : steps) have_ta = have_ta || s == ta;
    if (!have_ta) steps.push_back(ta);  // verification always needs the t_A snapshot
    return steps;
}

RunConfig parse_run_config_json(const std::string& json_text) {
    json root = json::parse(json_text);
    reject_unknown_keys(root, {"schedule", "watermark", "training", "sampling", "verification",
                               "paths", "seed"},
                        "top level");

    RunConfig c;
    if (root.contains("schedule")) {
        const json& b = root["schedule"];
        reject_unknown_keys(b, {"T", "beta_start", "beta_end"}, "schedule");
        maybe(b, "T", c.T);
        maybe(b, "beta_start", c.beta_start);
        maybe(b, "beta_end", c.beta_end);
    }
    if (root.contains("watermark")) {
        const json& b = root["watermark"];
        reject_unknown_keys(b,
                            {"shape", "position", "size", "color", "gamma", "t_a_fraction",
                             "f1_mode", "scale_mode", "pattern_png"},
                            "watermark");
        if (b.contains("shape")) c.shape = parse_shape(b["shape"].get<std::string>());
        if (b.contains("position")) c.position = parse_position(b["position"].get<std::string>());
        maybe(b, "size", c.mark_size);
        maybe(b, "color", c.color);
        maybe(b, "gamma", c.gamma);
        maybe(b, "t_a_fraction", c.t_A_fraction);
        if (b.contains("f1_mode")) c.f1_mode = parse_f1_mode(b["f1_mode"].get<std::string>());
        if (b.contains("scale_mode")) c.scale_mode = parse_scale_mode(b["scale_mode"].get<std::string>());
        maybe(b, "pattern_png", c.pattern_png);
    }
    if (root.contains("training")) {
        const json& b = root["training"];
        reject_unknown_keys(b,
                            {"learning_rate", "steps", "batch_size", "ema_rate", "optimizer",
                             "hidden_channels", "time_embed_dim", "time_hidden_dim"},
                            "training");
        maybe(b, "learning_rate", c.training.learning_rate);
        maybe(b, "steps", c.training.steps);
        maybe(b, "batch_size", c.training.batch_size);
        if (b.contains("ema_rate") && !b["ema_rate"].is_null())
            c.training.ema_rate = b["ema_rate"].get<double>();
        if (b.contains("optimizer")) c.training.optimizer = parse_optimizer(b["optimizer"].get<std::string>());
        maybe(b, "hidden_channels", c.training.model.hidden_channels);
        maybe(b, "time_embed_dim", c.training.model.time_embed_dim);
        maybe(b, "time_hidden_dim", c.training.model.time_hidden_dim);
    }
    if (root.contains("sampling")) {
        const json& b = root["sampling"];
        reject_unknown_keys(b, {"batch_size", "snapshot_fractions", "sigma_mode"}, "sampling");
        maybe(b, "batch_size", c.sample_batch);
        maybe(b, "snapshot_fractions", c.snapshot_fractions);
        if (b.contains("sigma_mode")) c.sigma_mode = parse_sigma_mode(b["sigma_mode"].get<std::string>());
    }
    if (root.contains("verification")) {
        const json& b = root["verification"];
        reject_unknown_keys(b,
                            {"threshold", "edgesconvert", "binary_threshold", "use_otsu",
                             "min_component_pixels", "hu_eps", "compactness_weight", "blur_size",
                             "blur_sigma", "hysteresis_low", "hysteresis_high"},
                            "verification");
        maybe(b, "threshold", c.threshold);
        maybe(b, "edgesconvert", c.edgesconvert);
        maybe(b, "binary_threshold", c.verify_params.binary_threshold);
        maybe(b, "use_otsu", c.verify_params.use_otsu);
        maybe(b, "min_component_pixels", c.verify_params.min_component_pixels);
        maybe(b, "hu_eps", c.verify_params.hu_eps);
        maybe(b, "compactness_weight", c.verify_params.compactness_weight);
        maybe(b, "blur_size", c.verify_params.blur_size);
        maybe(b, "blur_sigma", c.verify_params.blur_sigma);
        maybe(b, "hysteresis_low", c.verify_params.hysteresis_low);
        maybe(b, "hysteresis_high", c.verify_params.hysteresis_high);
    }
    if (root.contains("paths")) {
        const json& b = root["paths"];
        reject_unknown_keys(b, {"dataset", "output_dir"}, "paths");
        maybe(b, "dataset", c.dataset);
        maybe(b, "output_dir", c.output_dir);
    }
    maybe(root, "seed", c.seed);
    c.training.seed = c.seed;

    if (!(c.t_A_fraction > 0.0) || c.t_A_fraction > 1.0)
        throw std::invalid_argument("config: t_a_fraction must be in (0, 1]");
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config_json(ss.str());
}

std::string run_config_json(const RunConfig& c) {
    json root;
    root["schedule"] = {{"T", c.T}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
    root["watermark"] = {
        {"shape", shape_str(c.shape)},
        {"position", c.position == MarkPosition::center ? "center" : "bottom_right"},
        {"size", c.mark_size},
        {"color", c.color},
        {"gamma", c.gamma},
        {"t_a_fraction", c.t_A_fraction},
        {"f1_mode", c.f1_mode == F1Mode::zero ? "zero" : "theorem"},
        {"scale_mode",
         c.scale_mode == ScaleMode::dynamic_batch_max ? "dynamic_batch_max" : "static"},
        {"pattern_png", c.pattern_png}};
    json training = {{"learning_rate", c.training.learning_rate},
                     {"steps", c.training.steps},
                     {"batch_size", c.training.batch_size},
                     {"optimizer", c.training.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
                     {"hidden_channels", c.training.model.hidden_channels},
                     {"time_embed_dim", c.training.model.time_embed_dim},
                     {"time_hidden_dim", c.training.model.time_hidden_dim}};
    training["ema_rate"] = c.training.ema_rate ? json(*c.training.ema_rate) : json(nullptr);
    root["training"] = training;
    root["sampling"] = {{"batch_size", c.sample_batch},
                        {"snapshot_fractions", c.snapshot_fractions},
                        {"sigma_mode",
                         c.sigma_mode == SigmaMode::gamma_squared ? "gamma_squared" : "vanilla"}};
    root["verification"] = {{"threshold", c.threshold},
                            {"edgesconvert", c.edgesconvert},
                            {"binary_threshold", c.verify_params.binary_threshold},
                            {"use_otsu", c.verify_params.use_otsu},
                            {"min_component_pixels", c.verify_params.min_component_pixels},
                            {"hu_eps", c.verify_params.hu_eps},
                            {"compactness_weight", c.verify_params.compactness_weight},
                            {"blur_size", c.verify_params.blur_size},
                            {"blur_sigma", c.verify_params.blur_sigma},
                            {"hysteresis_low", c.verify_params.hysteresis_low},
                            {"hysteresis_high", c.verify_params.hysteresis_high}};
    root["paths"] = {{"dataset", c.dataset}, {"output_dir", c.output_dir}};
    root["seed"] = c.seed;
    return root.dump(2);
}

std::string config_hash(const RunConfig& config) { return sha256_hex(run_config_json(config)); }

VarianceSchedule schedule_from_config(const RunConfig& config) {
    return make_linear_schedule(config.T, config.beta_start, config.beta_end);
}

WatermarkSpec watermark_spec_from_config(const RunConfig& config, int canvas_h, int canvas_w,
                                         int channels) {
    WatermarkSpec spec;
    if (!config.pattern_png.empty()) {
        spec.pattern = read_png(config.pattern_png);
        if (spec.pattern.height != canvas_h || spec.pattern.width != canvas_w)
            throw std::invalid_argument("config: pattern PNG dimensions do not match the dataset");
    } else {
        std::vector<double> color = config.color;
        color.resize(channels, channels > 1 ? 0.0 : (color.empty() ? 1.0 : color[0]));
        spec.pattern =
            make_pattern(config.shape, config.position, config.mark_size, canvas_h, canvas_w,
                         channels, color);
    }
    spec.position = config.position;
    spec.shape = config.shape;
    spec.gamma = config.gamma;
    spec.t_A = config.t_A();
    spec.f1_mode = config.f1_mode;
    spec.scale_mode = config.scale_mode;
    // channel_mask mirrors which channels carry color
    spec.channel_mask.assign(channels, false);
    for (int ch = 0; ch < channels; ++ch) {
        for (int y = 0; y < spec.pattern.height && !spec.channel_mask[ch]; ++y)
            for (int x = 0; x < spec.pattern.width; ++x)
                if (spec.pattern.at(y, x, ch) != 0.0) {
                    spec.channel_mask[ch] = true;
                    break;
                }
    }
    return spec;
}

ImageBatch dataset_from_config(const RunConfig& config) {
    if (config.dataset.empty()) throw std::invalid_argument("config: paths.dataset not set");
    if (config.dataset.rfind("synthetic:", 0) == 0) {
        std::stringstream ss(config.dataset.substr(10));
        std::string kind_str, n_str, size_str;
        std::getline(ss, kind_str, ':');
        std::getline(ss, n_str, ':');
        std::getline(ss, size_str, ':');
        if (kind_str.empty() || n_str.empty() || size_str.empty())
            throw std::invalid_argument(
                "config: synthetic dataset spec must be synthetic:<kind>:<n>:<size>");
        SyntheticKind kind;
        if (kind_str == "blobs")
            kind = SyntheticKind::blobs;
        else if (kind_str == "digits")
            kind = SyntheticKind::digits_like;
        else
            throw std::invalid_argument("config: unknown synthetic kind '" + kind_str + "'");
        return make_synthetic_dataset(std::stoi(n_str), std::stoi(size_str), kind, config.seed);
    }
    return load_idx_dataset(config.dataset);
}

}  // namespace diffmark
