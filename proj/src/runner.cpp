#include "diffmark/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffmark/dataset.hpp"
#include "diffmark/denoiser.hpp"
#include "diffmark/forward.hpp"
#include "diffmark/hash.hpp"
#include "diffmark/io_npz.hpp"
#include "diffmark/io_png.hpp"
#include "diffmark/manifest.hpp"
#include "diffmark/metrics.hpp"
#include "diffmark/training.hpp"
#include "diffmark/verification.hpp"

namespace diffmark {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr uint64_t kSampleStream = 0x5a;
constexpr uint64_t kOracleStream = 0x0c;

RunResult fail(const std::string& stage, const std::string& message) {
    RunResult r;
    r.exit_code = 1;
    json j;
    j["error"] = {{"stage", stage}, {"message", message}};
    r.error = j.dump(2);
    return r;
}

Image to_unit_range(const Image& img) {
    // [-1,1] sample range -> [0,1] for PNG export
    Image out = img;
    for (double& v : out.data) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
    return out;
}

Image normalized_cell(const Image& img) {
    double lo = img.data[0], hi = img.data[0];
    for (double v : img.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Image out = img;
    if (hi > lo)
        for (double& v : out.data) v = (v - lo) / (hi - lo);
    else
        for (double& v : out.data) v = 0.0;
    return out;
}

void add_batch_array(NpzWriter& w, const std::string& name, const ImageBatch& batch) {
    if (batch.empty()) return;
    const Image& first = batch[0];
    std::vector<double> flat;
    flat.reserve(batch.size() * first.size());
    for (const Image& img : batch) flat.insert(flat.end(), img.data.begin(), img.data.end());
    std::vector<size_t> shape{batch.size(), size_t(first.height), size_t(first.width)};
    if (first.channels > 1) shape.push_back(size_t(first.channels));
    w.add_array(name, flat, shape);
}

Image grid_of(const ImageBatch& batch) {
    const Image& first = batch[0];
    int cols = int(std::ceil(std::sqrt(double(batch.size()))));
    int rows = int(std::ceil(double(batch.size()) / cols));
    Image grid(rows * first.height, cols * first.width, first.channels, 0.0);
    for (size_t i = 0; i < batch.size(); ++i) {
        int r = int(i) / cols, c = int(i) % cols;
        Image cell = to_unit_range(batch[i]);
        for (int y = 0; y < first.height; ++y)
            for (int x = 0; x < first.width; ++x)
                for (int ch = 0; ch < first.channels; ++ch)
                    grid.at(r * first.height + y, c * first.width + x, ch) = cell.at(y, x, ch);
    }
    return grid;
}

// Deterministic static scale for oracle sampling: the batch-max dynamic rule
// evaluated once on a vanilla-noised reference batch at t_A.
double oracle_pattern_scale(const Image& x0, const WatermarkSpec& spec,
                            const VarianceSchedule& schedule, int batch, uint64_t seed) {
    if (!(spec.pattern.max_value() > 0.0)) return 1.0;
    Rng rng = Rng::derived(seed, kOracleStream, 99);
    ImageBatch refs;
    refs.reserve(batch);
    for (int i = 0; i < batch; ++i) {
        Image eps(x0.height, x0.width, x0.channels);
        for (double& v : eps.data) v = rng.normal();
        refs.push_back(diffuse_vanilla(x0, spec.t_A, eps, schedule));
    }
    return dynamic_scale_factor(spec.pattern, refs);
}

}  // namespace

std::string resolve_output_dir(const RunConfig& config, const std::string& cli_out) {
    std::string dir = cli_out;
    if (dir.empty()) dir = config.output_dir;
    if (dir.empty()) {
        const char* root = std::getenv("DIFFMARK_OUT");
        dir = (root && *root) ? std::string(root) + "/run" : "diffmark_out";
    }
    fs::create_directories(dir);
    return dir;
}

RunResult run_train(const RunConfig& config, const std::string& out_dir) {
    try {
        ImageBatch dataset = dataset_from_config(config);
        VarianceSchedule schedule = schedule_from_config(config);
        WatermarkSpec spec = watermark_spec_from_config(config, dataset[0].height,
                                                        dataset[0].width, dataset[0].channels);
        RunManifest manifest(out_dir, config_hash(config), schedule_fingerprint(schedule), kVersion);

        TrainConfig tc = config.training;
        tc.seed = config.seed;
        tc.loss_log_path = out_dir + "/loss_log.csv";
        Checkpoint ckpt = train(dataset, spec, schedule, tc);

        std::string ckpt_path = out_dir + "/checkpoint.npz";
        save_checkpoint(ckpt, ckpt_path);
        std::string sched_path = out_dir + "/schedule.csv";
        write_schedule_csv(schedule, sched_path);
        std::string cfg_path = out_dir + "/config.json";
        std::ofstream(cfg_path) << run_config_json(config) << "\n";

        manifest.add_artifact(ckpt_path);
        manifest.add_artifact(tc.loss_log_path);
        manifest.add_artifact(sched_path);
        manifest.add_artifact(cfg_path);
        manifest.close();
        return {};
    } catch (const std::exception& e) {
        return fail("train", e.what());
    }
}

RunResult run_sample(const RunConfig& config, const std::string& out_dir,
                     const std::string& checkpoint_path, bool use_oracle_denoiser, bool use_ema) {
    try {
        ImageBatch dataset = dataset_from_config(config);
        VarianceSchedule schedule = schedule_from_config(config);
        WatermarkSpec spec = watermark_spec_from_config(config, dataset[0].height,
                                                        dataset[0].width, dataset[0].channels);
        RunManifest manifest(out_dir, config_hash(config), schedule_fingerprint(schedule), kVersion);

        Denoiser denoiser;
        ToyDenoiser model(config.training.model, 0);
        std::optional<OracleDenoiser> oracle;
        if (use_oracle_denoiser) {
            double scale = oracle_pattern_scale(dataset[0], spec, schedule, config.sample_batch,
                                                config.seed);
            oracle.emplace(dataset[0], spec, schedule, scale);
            denoiser = [&oracle](const ImageBatch& x, int t) { return oracle->predict(x, t); };
        } else {
            if (checkpoint_path.empty())
                throw std::invalid_argument("sample: need --checkpoint or --oracle");
            Checkpoint ckpt = load_checkpoint(checkpoint_path, &schedule);
            ToyDenoiserConfig mc = ckpt.model;
            model = ToyDenoiser(mc, 0);
            model.set_parameters(use_ema && ckpt.ema_params ? *ckpt.ema_params : ckpt.params);
            denoiser = [&model](const ImageBatch& x, int t) { return model.forward(x, t); };
        }

        SampleOptions opts;
        opts.batch_size = config.sample_batch;
        opts.snapshot_steps = config.snapshot_steps();
        opts.sigma_mode = config.sigma_mode;
        opts.height = dataset[0].height;
        opts.width = dataset[0].width;
        opts.channels = dataset[0].channels;

        Rng rng = Rng::derived(config.seed, kSampleStream, 0);
        TrajectoryBatch traj = sample(denoiser, schedule, spec, opts, rng);
        traj.seed = config.seed;

        // exports: batch grid, per-step average strip, raw arrays
        std::string grid_path = out_dir + "/finals_grid.png";
        write_png(grid_path, grid_of(traj.finals));

        std::vector<int> strip_steps = opts.snapshot_steps;
        std::sort(strip_steps.begin(), strip_steps.end(), std::greater<int>());
        strip_steps.push_back(0);
        std::string strip_path =
            emit_trajectory_plot({traj}, strip_steps, out_dir + "/trajectory_strip.png");

        Image x_avg = average_snapshot(traj.snapshots.at(spec.t_A));
        std::string xavg_path = out_dir + "/x_avg.png";
        write_png(xavg_path, normalized_cell(x_avg));

        NpzWriter w;
        add_batch_array(w, "finals", traj.finals);
        for (const auto& [t, batch] : traj.snapshots) add_batch_array(w, "snap_" + std::to_string(t), batch);
        w.add_array("x_avg", x_avg.data,
                    x_avg.channels > 1
                        ? std::vector<size_t>{size_t(x_avg.height), size_t(x_avg.width),
                                              size_t(x_avg.channels)}
                        : std::vector<size_t>{size_t(x_avg.height), size_t(x_avg.width)});
        json meta;
        meta["seed"] = traj.seed;
        meta["t_A"] = spec.t_A;
        meta["snapshot_steps"] = opts.snapshot_steps;
        meta["channels"] = opts.channels;
        meta["sigma_mode"] = traj.sigma_mode == SigmaMode::gamma_squared ? "gamma_squared" : "vanilla";
        w.add_raw("meta.json", meta.dump(2));
        std::string traj_path = out_dir + "/trajectory.npz";
        w.write(traj_path);

        manifest.add_artifact(grid_path);
        manifest.add_artifact(strip_path);
        manifest.add_artifact(xavg_path);
        manifest.add_artifact(traj_path);
        manifest.close();
        return {};
    } catch (const std::exception& e) {
        return fail("sample", e.what());
    }
}

Image load_verify_image(const std::string& path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".npz") {
        NpzReader r(path);
        NpyArray arr = r.array("x_avg");
        if (arr.shape.size() < 2 || arr.shape.size() > 3)
            throw std::runtime_error("load_verify_image: x_avg must be HxW or HxWxC");
        int h = int(arr.shape[0]), w = int(arr.shape[1]);
        int c = arr.shape.size() == 3 ? int(arr.shape[2]) : 1;
        Image img(h, w, c);
        img.data = std::move(arr.data);
        return img;
    }
    return read_png(path);
}

RunResult run_verify(const RunConfig& config, const std::string& out_dir,
                     const std::string& target_path, const std::string& pattern_path) {
    try {
        Image target = load_verify_image(target_path);
        Image pattern;
        if (!pattern_path.empty()) {
            pattern = load_verify_image(pattern_path);
        } else {
            pattern = make_pattern(config.shape, config.position, config.mark_size, target.height,
                                   target.width, target.channels,
                                   std::vector<double>(target.channels, 1.0));
        }
        RunManifest manifest(out_dir, config_hash(config), "-", kVersion);
        VerificationReport report =
            verify(target, pattern, config.threshold, config.edgesconvert, config.verify_params);
        std::string report_json = verification_report_json(report);
        std::string report_path = out_dir + "/verification_report.json";
        std::ofstream(report_path) << report_json << "\n";
        std::printf("%s\n", report_json.c_str());
        manifest.add_artifact(report_path);
        manifest.close();
        return {};
    } catch (const std::exception& e) {
        return fail("verify", e.what());
    }
}

RunResult run_metrics(const RunConfig& config, const std::string& out_dir,
                      const std::string& real_features, const std::string& gen_features,
                      const std::string& probs_path, int knn_k, int is_splits) {
    (void)config;
    try {
        json out;
        if (!real_features.empty() && !gen_features.empty()) {
            auto load_features = [](const std::string& path, FeatureSource src) {
                NpzReader r(path);
                NpyArray arr = r.array("features");
                if (arr.shape.size() != 2)
                    throw std::runtime_error("metrics: features array must be N x D in " + path);
                FeatureSet fs;
                fs.features = Matrix(int(arr.shape[0]), int(arr.shape[1]));
                fs.features.data = std::move(arr.data);
                fs.source = src;
                if (r.has("meta.json"))
                    fs.extractor_id =
                        json::parse(r.raw("meta.json")).value("extractor_id", std::string());
                return fs;
            };
            FeatureSet real = load_features(real_features, FeatureSource::real);
            FeatureSet gen = load_features(gen_features, FeatureSource::generated);
            bool spatial = real.extractor_id.rfind("spatial", 0) == 0;
            double fid = spatial ? sfid_from_features(real, gen) : fid_from_features(real, gen);
            out[spatial ? "sfid" : "fid"] = fid;
            auto [precision, recall] = precision_recall_knn(real, gen, knn_k);
            out["precision"] = precision;
            out["recall"] = recall;
            out["knn_k"] = knn_k;
            out["extractor_id"] = {{"real", real.extractor_id}, {"gen", gen.extractor_id}};
        }
        if (!probs_path.empty()) {
            NpzReader r(probs_path);
            NpyArray arr = r.array("probs");
            if (arr.shape.size() != 2)
                throw std::runtime_error("metrics: probs array must be N x C");
            Matrix probs(int(arr.shape[0]), int(arr.shape[1]));
            probs.data = std::move(arr.data);
            auto [mean, sd] = inception_score_from_probs(probs, is_splits);
            out["inception_score"] = {{"mean", mean}, {"std", sd}, {"splits", is_splits}};
        }
        if (out.empty()) throw std::invalid_argument("metrics: nothing to compute (no inputs given)");

        std::string path = out_dir + "/metrics.json";
        std::ofstream(path) << out.dump(2) << "\n";
        std::printf("%s\n", out.dump(2).c_str());
        return {};
    } catch (const std::exception& e) {
        return fail("metrics", e.what());
    }
}

std::string emit_trajectory_plot(const std::vector<TrajectoryBatch>& trajectories,
                                 const std::vector<int>& steps, const std::string& out_path,
                                 int cell_scale, int margin) {
    if (trajectories.empty() || steps.empty())
        throw std::invalid_argument("emit_trajectory_plot: nothing to draw");

    auto cell_for = [](const TrajectoryBatch& traj, int step) -> Image {
        if (step == 0) return normalized_cell(average_snapshot(traj.finals));
        auto it = traj.snapshots.find(step);
        if (it == traj.snapshots.end())
            throw std::invalid_argument("emit_trajectory_plot: snapshot step " +
                                        std::to_string(step) + " was not recorded");
        return normalized_cell(average_snapshot(it->second));
    };

    Image probe = cell_for(trajectories[0], steps[0]);
    const int ch = probe.height * cell_scale, cw = probe.width * cell_scale;
    const int rows = int(trajectories.size()), cols = int(steps.size());
    const int H = rows * ch + (rows + 1) * margin;
    const int W = cols * cw + (cols + 1) * margin;
    Image canvas(H, W, probe.channels, 0.0);

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            Image cell = cell_for(trajectories[r], steps[c]);
            int oy = margin + r * (ch + margin);
            int ox = margin + c * (cw + margin);
            for (int y = 0; y < ch; ++y)
                for (int x = 0; x < cw; ++x)
                    for (int k = 0; k < cell.channels; ++k)
                        canvas.at(oy + y, ox + x, k) = cell.at(y / cell_scale, x / cell_scale, k);
        }
    write_png(out_path, canvas);
    return out_path;
}

RunResult run_plot(const RunConfig& config, const std::string& out_dir,
                   const std::vector<std::string>& trajectory_files,
                   const std::vector<double>& step_fractions, int cell_scale, int margin) {
    try {
        if (trajectory_files.empty()) throw std::invalid_argument("plot: no trajectory files given");
        std::vector<TrajectoryBatch> trajectories;
        for (const std::string& path : trajectory_files) {
            NpzReader r(path);
            json meta = json::parse(r.raw("meta.json"));
            int channels = meta.value("channels", 1);
            TrajectoryBatch traj;
            auto load_batch = [&](const std::string& name) {
                NpyArray arr = r.array(name);
                size_t b = arr.shape[0], h = arr.shape[1], w = arr.shape[2];
                ImageBatch batch;
                batch.reserve(b);
                size_t per = h * w * channels;
                for (size_t i = 0; i < b; ++i) {
                    Image img(int(h), int(w), channels);
                    std::copy(arr.data.begin() + i * per, arr.data.begin() + (i + 1) * per,
                              img.data.begin());
                    batch.push_back(std::move(img));
                }
                return batch;
            };
            traj.finals = load_batch("finals");
            for (int s : meta.at("snapshot_steps").get<std::vector<int>>())
                traj.snapshots[s] = load_batch("snap_" + std::to_string(s));
            trajectories.push_back(std::move(traj));
        }

        std::vector<int> steps;
        for (double f : step_fractions) steps.push_back(int(f * config.T + 0.5));
        if (steps.empty()) {
            for (const auto& [t, _] : trajectories[0].snapshots) steps.push_back(t);
            std::sort(steps.begin(), steps.end(), std::greater<int>());
            steps.push_back(0);
        }

        RunManifest manifest(out_dir, config_hash(config), "-", kVersion);
        std::string path = emit_trajectory_plot(trajectories, steps, out_dir + "/comparison_grid.png",
                                                cell_scale, margin);
        manifest.add_artifact(path);
        manifest.close();
        return {};
    } catch (const std::exception& e) {
        return fail("plot", e.what());
    }
}

RunResult run_oracle_check(const RunConfig& config, const std::string& out_dir) {
    try {
        VarianceSchedule schedule = schedule_from_config(config);
        json items = json::array();
        bool all_ok = true;
        auto record = [&](const std::string& name, bool ok, const json& detail) {
            items.push_back({{"name", name}, {"pass", ok}, {"detail", detail}});
            all_ok = all_ok && ok;
        };

        {  // K / f2 normalization
            double max_f2 = 0.0;
            for (int t = 1; t <= schedule.T; ++t) max_f2 = std::max(max_f2, schedule.f2_table[t]);
            bool ok = schedule.f2_table[0] == 0.0 && std::abs(max_f2 - 1.0) < 1e-9;
            record("f2_normalization", ok, {{"max_f2", max_f2}, {"f2_at_0", schedule.f2_table[0]}});
        }

        {  // reduction: gamma=1, zero pattern reproduces the vanilla forward
            WatermarkSpec spec;
            spec.pattern = Image(1, 1, 1, 0.0);
            spec.gamma = 1.0;
            spec.t_A = std::max(1, schedule.T / 2);
            spec.f1_mode = F1Mode::theorem;
            Rng rng_a = Rng::derived(config.seed, kOracleStream, 1);
            Rng rng_b = Rng::derived(config.seed, kOracleStream, 1);
            Image x0(1, 1, 1, 0.5);
            double max_err = 0.0;
            for (int t = 1; t <= schedule.T; ++t) {
                TrainingPair p = build_training_pair(x0, t, spec, schedule, rng_a);
                double e1 = rng_b.normal();
                double want;
                if (t <= spec.t_A) {
                    want = std::sqrt(schedule.alpha_bar[t]) * 0.5 +
                           std::sqrt(1.0 - schedule.alpha_bar[t]) * e1;
                } else {
                    double xa = std::sqrt(schedule.alpha_bar[spec.t_A]) * 0.5 +
                                std::sqrt(1.0 - schedule.alpha_bar[spec.t_A]) * e1;
                    double r = schedule.alpha_bar[t] / schedule.alpha_bar[spec.t_A];
                    double e2 = rng_b.normal();
                    want = std::sqrt(r) * xa + std::sqrt(1.0 - r) * e2;
                }
                max_err = std::max(max_err, std::abs(p.x_t_prime.data[0] - want));
            }
            record("reduction_vanilla", max_err == 0.0, {{"max_abs_err", max_err}});
        }

        {  // posterior Monte-Carlo conditioning oracle on a T=4 scalar chain
            VarianceSchedule s4 = make_linear_schedule(4, 0.1, 0.4);
            const double gamma = 0.8, x0v = 0.5, xav = 1.0;
            WatermarkSpec spec;
            spec.pattern = Image(1, 1, 1, xav);
            spec.gamma = gamma;
            spec.t_A = 4;
            spec.f1_mode = F1Mode::theorem;
            spec.scale_mode = ScaleMode::static_pattern;
            Image x0(1, 1, 1, x0v);

            const int t = 3, n = 400000;
            Rng rng = Rng::derived(config.seed, kOracleStream, 2);
            std::vector<double> xt(n), xtm1(n);
            for (int i = 0; i < n; ++i) {
                // recursive chain so consecutive steps stay jointly distributed
                Image x = x0;
                double b0 = compute_f1(s4, 0, spec.f1_mode) * x0v;
                x.data[0] = gamma * x0v + (1 - gamma) * b0;
                for (int step = 1; step <= t; ++step) {
                    Image eps(1, 1, 1, rng.normal());
                    x = recursive_step(x, step, eps, x0, spec, s4);
                    if (step == t - 1) xtm1[i] = x.data[0];
                }
                xt[i] = x.data[0];
            }
            // condition on a bin around the median of x_t
            std::vector<double> sorted = xt;
            std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
            double center = sorted[n / 2], width = 0.05;
            double sum = 0, sum2 = 0, sum_xt = 0;
            int count = 0;
            for (int i = 0; i < n; ++i)
                if (std::abs(xt[i] - center) < width) {
                    sum += xtm1[i];
                    sum2 += xtm1[i] * xtm1[i];
                    sum_xt += xt[i];
                    ++count;
                }
            double emp_mean = sum / count;
            double emp_var = sum2 / count - emp_mean * emp_mean;
            double xt_mean = sum_xt / count;

            // analytic posterior values at the bin center
            double b_t = compute_f1(s4, t, spec.f1_mode) * x0v + s4.f2_table[t] * xav;
            double b_tm1 = compute_f1(s4, t - 1, spec.f1_mode) * x0v + s4.f2_table[t - 1] * xav;
            double b0 = x0v;
            double x0p = gamma * x0v + (1 - gamma) * b0;
            double eps_prime = (xt_mean - std::sqrt(s4.alpha_bar[t]) * x0p -
                                (1 - gamma) * (b_t - std::sqrt(s4.alpha_bar[t]) * b0)) /
                               (gamma * std::sqrt(1 - s4.alpha_bar[t]));
            double eps_pp = gamma * eps_prime + (1 - gamma) * std::sqrt(1 - s4.alpha_bar[t]) /
                                                    (1 - s4.alpha[t]) *
                                                    (b_t - std::sqrt(s4.alpha[t]) * b_tm1);
            double mu = xt_mean / std::sqrt(s4.alpha[t]) -
                        (1 - s4.alpha[t]) / (std::sqrt(1 - s4.alpha_bar[t]) * std::sqrt(s4.alpha[t])) *
                            eps_pp;
            double sigma2 = gamma * gamma * (1 - s4.alpha[t]) * (1 - s4.alpha_bar[t - 1]) /
                            (1 - s4.alpha_bar[t]);
            double se = std::sqrt(emp_var / count);
            bool mean_ok = std::abs(emp_mean - mu) < 3.5 * se;
            bool var_ok = std::abs(emp_var - sigma2) / sigma2 < 0.05;
            record("posterior_conditioning", mean_ok && var_ok,
                   {{"emp_mean", emp_mean},
                    {"mu_expected", mu},
                    {"emp_var", emp_var},
                    {"sigma2_expected", sigma2},
                    {"bin_count", count}});
        }

        {  // terminal Gaussianity of x_T'
            WatermarkSpec spec;
            spec.pattern = Image(1, 1, 1, 1.0);
            spec.gamma = config.gamma;
            spec.t_A = std::max(1, config.t_A());
            spec.f1_mode = config.f1_mode;
            Rng rng = Rng::derived(config.seed, kOracleStream, 3);
            const int n = 100000;
            double sum = 0, sum2 = 0;
            for (int i = 0; i < n; ++i) {
                Image x0(1, 1, 1, i % 2 == 0 ? 0.5 : -0.5);
                TrainingPair p = build_training_pair(x0, schedule.T, spec, schedule, rng);
                sum += p.x_t_prime.data[0];
                sum2 += p.x_t_prime.data[0] * p.x_t_prime.data[0];
            }
            double mean = sum / n, var = sum2 / n - mean * mean;
            bool ok = std::abs(mean) < 0.02 && std::abs(var - 1.0) < 0.03;
            record("terminal_gaussianity", ok, {{"mean", mean}, {"var", var}, {"n", n}});
        }

        json out;
        out["all_pass"] = all_ok;
        out["items"] = items;
        std::string path = out_dir + "/oracle_check.json";
        std::ofstream(path) << out.dump(2) << "\n";
        std::printf("%s\n", out.dump(2).c_str());

        RunResult r;
        r.exit_code = all_ok ? 0 : 1;
        if (!all_ok) r.error = out.dump(2);
        return r;
    } catch (const std::exception& e) {
        return fail("oracle-check", e.what());
    }
}

}  // namespace diffmark
