#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffmark/config.hpp"
#include "diffmark/dataset.hpp"
#include "diffmark/denoiser.hpp"
#include "diffmark/forward.hpp"
#include "diffmark/metrics.hpp"
#include "diffmark/reverse.hpp"
#include "diffmark/runner.hpp"
#include "diffmark/schedule.hpp"
#include "diffmark/training.hpp"
#include "diffmark/verification.hpp"
#include "diffmark/watermark.hpp"

namespace py = pybind11;
using namespace diffmark;

namespace {

Image image_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    py::buffer_info info = arr.request();
    if (info.ndim != 2 && info.ndim != 3)
        throw std::invalid_argument("expected an HxW or HxWxC array");
    int h = int(info.shape[0]), w = int(info.shape[1]);
    int c = info.ndim == 3 ? int(info.shape[2]) : 1;
    Image img(h, w, c);
    std::memcpy(img.data.data(), info.ptr, img.size() * sizeof(double));
    return img;
}

py::array_t<double> array_from_image(const Image& img) {
    std::vector<py::ssize_t> shape{img.height, img.width};
    if (img.channels > 1) shape.push_back(img.channels);
    py::array_t<double> arr(shape);
    std::memcpy(arr.mutable_data(), img.data.data(), img.size() * sizeof(double));
    return arr;
}

py::array_t<double> array_from_batch(const ImageBatch& batch) {
    const Image& first = batch[0];
    std::vector<py::ssize_t> shape{py::ssize_t(batch.size()), first.height, first.width};
    if (first.channels > 1) shape.push_back(first.channels);
    py::array_t<double> arr(shape);
    double* p = arr.mutable_data();
    for (const Image& img : batch) {
        std::memcpy(p, img.data.data(), img.size() * sizeof(double));
        p += img.size();
    }
    return arr;
}

ImageBatch batch_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                            int channels) {
    py::buffer_info info = arr.request();
    if (info.ndim != 3 && info.ndim != 4)
        throw std::invalid_argument("expected a BxHxW or BxHxWxC array");
    int b = int(info.shape[0]), h = int(info.shape[1]), w = int(info.shape[2]);
    int c = info.ndim == 4 ? int(info.shape[3]) : channels;
    ImageBatch batch;
    batch.reserve(b);
    const double* p = static_cast<const double*>(info.ptr);
    for (int i = 0; i < b; ++i) {
        Image img(h, w, c);
        std::memcpy(img.data.data(), p, img.size() * sizeof(double));
        p += img.size();
        batch.push_back(std::move(img));
    }
    return batch;
}

Matrix matrix_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    py::buffer_info info = arr.request();
    if (info.ndim != 2) throw std::invalid_argument("expected a 2-D array");
    Matrix m(int(info.shape[0]), int(info.shape[1]));
    std::memcpy(m.data.data(), info.ptr, m.data.size() * sizeof(double));
    return m;
}

}  // namespace

PYBIND11_MODULE(_diffmark, m) {
    m.doc() = "Diffusion-process watermarking core (schedule, forward/reverse process, "
              "verification, metrics)";
    m.attr("__version__") = kVersion;

    py::enum_<F1Mode>(m, "F1Mode")
        .value("theorem", F1Mode::theorem)
        .value("zero", F1Mode::zero);
    py::enum_<MarkShape>(m, "MarkShape")
        .value("square", MarkShape::square)
        .value("plus", MarkShape::plus)
        .value("cross", MarkShape::cross);
    py::enum_<MarkPosition>(m, "MarkPosition")
        .value("bottom_right", MarkPosition::bottom_right)
        .value("center", MarkPosition::center);
    py::enum_<ScaleMode>(m, "ScaleMode")
        .value("dynamic_batch_max", ScaleMode::dynamic_batch_max)
        .value("static_pattern", ScaleMode::static_pattern);
    py::enum_<SigmaMode>(m, "SigmaMode")
        .value("gamma_squared", SigmaMode::gamma_squared)
        .value("vanilla", SigmaMode::vanilla);

    py::class_<VarianceSchedule>(m, "VarianceSchedule")
        .def_readonly("T", &VarianceSchedule::T)
        .def_readonly("beta", &VarianceSchedule::beta)
        .def_readonly("alpha", &VarianceSchedule::alpha)
        .def_readonly("alpha_bar", &VarianceSchedule::alpha_bar)
        .def_readonly("K", &VarianceSchedule::K)
        .def_readonly("f2_table", &VarianceSchedule::f2_table)
        .def_readonly("f2_argmax", &VarianceSchedule::f2_argmax);

    m.def("make_linear_schedule", &make_linear_schedule, py::arg("T"), py::arg("beta_start"),
          py::arg("beta_end"));
    m.def("compute_K", &compute_K);
    m.def("compute_f1", &compute_f1, py::arg("schedule"), py::arg("t"), py::arg("mode"));
    m.def("compute_f2", &compute_f2, py::arg("schedule"), py::arg("t"));

    py::class_<WatermarkSpec>(m, "WatermarkSpec")
        .def(py::init([](py::array_t<double> pattern, double gamma, int t_A, F1Mode f1_mode,
                         ScaleMode scale_mode) {
                 WatermarkSpec s;
                 s.pattern = image_from_array(pattern);
                 s.gamma = gamma;
                 s.t_A = t_A;
                 s.f1_mode = f1_mode;
                 s.scale_mode = scale_mode;
                 return s;
             }),
             py::arg("pattern"), py::arg("gamma"), py::arg("t_A"),
             py::arg("f1_mode") = F1Mode::zero,
             py::arg("scale_mode") = ScaleMode::dynamic_batch_max)
        .def_property_readonly("pattern",
                               [](const WatermarkSpec& s) { return array_from_image(s.pattern); })
        .def_readwrite("gamma", &WatermarkSpec::gamma)
        .def_readwrite("t_A", &WatermarkSpec::t_A)
        .def_readwrite("f1_mode", &WatermarkSpec::f1_mode)
        .def_readwrite("scale_mode", &WatermarkSpec::scale_mode);

    m.def(
        "make_pattern",
        [](MarkShape shape, MarkPosition position, int mark_size, int height, int width,
           int channels, std::vector<double> color) {
            return array_from_image(
                make_pattern(shape, position, mark_size, height, width, channels, color));
        },
        py::arg("shape"), py::arg("position"), py::arg("mark_size"), py::arg("height"),
        py::arg("width"), py::arg("channels") = 1,
        py::arg("color") = std::vector<double>{1.0});

    m.def(
        "compute_bt",
        [](py::array_t<double> x0, py::array_t<double> scaled_pattern, double f1, double f2) {
            return array_from_image(
                compute_bt(image_from_array(x0), image_from_array(scaled_pattern), f1, f2));
        },
        py::arg("x0"), py::arg("scaled_pattern"), py::arg("f1"), py::arg("f2"));

    m.def(
        "diffuse_vanilla",
        [](py::array_t<double> x0, int t, py::array_t<double> eps, const VarianceSchedule& s) {
            return array_from_image(diffuse_vanilla(image_from_array(x0), t, image_from_array(eps), s));
        },
        py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

    m.def(
        "build_training_pair",
        [](py::array_t<double> x0, int t, const WatermarkSpec& spec, const VarianceSchedule& s,
           uint64_t seed) {
            Rng rng(seed);
            TrainingPair p = build_training_pair(image_from_array(x0), t, spec, s, rng);
            py::dict out;
            out["x_t_prime"] = array_from_image(p.x_t_prime);
            out["target"] = array_from_image(p.target);
            out["eps_prime"] = array_from_image(p.eps_prime);
            out["stage"] = p.stage == Stage::embedding ? "embedding" : "simulation";
            out["t"] = p.t;
            return out;
        },
        py::arg("x0"), py::arg("t"), py::arg("spec"), py::arg("schedule"), py::arg("seed"));

    m.def(
        "posterior_params",
        [](py::array_t<double> x, py::array_t<double> eps_hat, int t, const VarianceSchedule& s,
           double gamma, SigmaMode mode) {
            PosteriorParams p =
                posterior_params(image_from_array(x), image_from_array(eps_hat), t, s, gamma, mode);
            return py::make_tuple(array_from_image(p.mu), p.sigma_sq);
        },
        py::arg("x_t_prime"), py::arg("eps_hat"), py::arg("t"), py::arg("schedule"),
        py::arg("gamma"), py::arg("sigma_mode") = SigmaMode::gamma_squared);

    m.def(
        "sample",
        [](py::function denoiser, const VarianceSchedule& s, const WatermarkSpec& spec,
           int batch_size, std::vector<int> snapshot_steps, SigmaMode sigma_mode, int height,
           int width, int channels, uint64_t seed) {
            Denoiser dn = [&denoiser, channels](const ImageBatch& x, int t) {
                py::array out = denoiser(array_from_batch(x), t);
                return batch_from_array(out.cast<py::array_t<double>>(), channels);
            };
            SampleOptions opts;
            opts.batch_size = batch_size;
            opts.snapshot_steps = std::move(snapshot_steps);
            opts.sigma_mode = sigma_mode;
            opts.height = height;
            opts.width = width;
            opts.channels = channels;
            Rng rng(seed);
            TrajectoryBatch traj = sample(dn, s, spec, opts, rng);
            py::dict out;
            out["finals"] = array_from_batch(traj.finals);
            py::dict snaps;
            for (const auto& [t, batch] : traj.snapshots)
                snaps[py::int_(t)] = array_from_batch(batch);
            out["snapshots"] = snaps;
            return out;
        },
        py::arg("denoiser"), py::arg("schedule"), py::arg("spec"), py::arg("batch_size"),
        py::arg("snapshot_steps"), py::arg("sigma_mode") = SigmaMode::gamma_squared,
        py::arg("height") = 16, py::arg("width") = 16, py::arg("channels") = 1,
        py::arg("seed") = 0);

    m.def(
        "average_snapshot",
        [](py::array_t<double> batch) {
            return array_from_image(average_snapshot(batch_from_array(batch, 1)));
        },
        py::arg("batch"));

    m.def(
        "verify",
        [](py::array_t<double> x_avg, py::array_t<double> pattern, double threshold,
           bool edgesconvert) {
            VerificationReport r =
                verify(image_from_array(x_avg), image_from_array(pattern), threshold, edgesconvert);
            py::dict out;
            out["verdict"] = r.verdict;
            out["best_similarity"] = r.best_similarity;
            out["threshold"] = r.threshold;
            out["contour_counts"] = py::make_tuple(r.target_contours, r.pattern_contours);
            out["stages"] = r.stages;
            out["edgesconvert"] = r.edgesconvert;
            return out;
        },
        py::arg("x_avg"), py::arg("pattern"), py::arg("threshold") = 0.1,
        py::arg("edgesconvert") = false);

    m.def(
        "frechet_distance",
        [](py::array_t<double> mu1, py::array_t<double> cov1, py::array_t<double> mu2,
           py::array_t<double> cov2) {
            auto vec = [](py::array_t<double> a) {
                py::buffer_info i = a.request();
                std::vector<double> v(size_t(i.shape[0]));
                std::memcpy(v.data(), i.ptr, v.size() * sizeof(double));
                return v;
            };
            return frechet_distance(vec(mu1), matrix_from_array(cov1), vec(mu2),
                                    matrix_from_array(cov2));
        },
        py::arg("mu1"), py::arg("cov1"), py::arg("mu2"), py::arg("cov2"));

    m.def(
        "fid_from_features",
        [](py::array_t<double> real, py::array_t<double> gen) {
            FeatureSet r{matrix_from_array(real), FeatureSource::real, "py"};
            FeatureSet g{matrix_from_array(gen), FeatureSource::generated, "py"};
            return fid_from_features(r, g);
        },
        py::arg("real"), py::arg("gen"));

    m.def(
        "inception_score",
        [](py::array_t<double> probs, int splits) {
            return inception_score_from_probs(matrix_from_array(probs), splits);
        },
        py::arg("probs"), py::arg("splits") = 10);

    m.def(
        "precision_recall",
        [](py::array_t<double> real, py::array_t<double> gen, int k) {
            FeatureSet r{matrix_from_array(real), FeatureSource::real, "py"};
            FeatureSet g{matrix_from_array(gen), FeatureSource::generated, "py"};
            return precision_recall_knn(r, g, k);
        },
        py::arg("real"), py::arg("gen"), py::arg("k") = 3);

    m.def(
        "make_synthetic_dataset",
        [](int n, int size, const std::string& kind, uint64_t seed) {
            SyntheticKind k = kind == "blobs" ? SyntheticKind::blobs : SyntheticKind::digits_like;
            return array_from_batch(make_synthetic_dataset(n, size, k, seed));
        },
        py::arg("n"), py::arg("size"), py::arg("kind") = "blobs", py::arg("seed") = 0);

    m.def("load_idx_dataset",
          [](const std::string& path) { return array_from_batch(load_idx_dataset(path)); });
}
