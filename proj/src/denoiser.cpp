#include "diffmark/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "diffmark/rng.hpp"

namespace diffmark {

namespace {

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }
inline double silu_grad(double v) {
    double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
}

// Planar (B, C, H, W) scratch tensor used only inside the net.
struct Plane {
    int b = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;
    Plane() = default;
    Plane(int b_, int c_, int h_, int w_)
        : b(b_), c(c_), h(h_), w(w_), data(size_t(b_) * c_ * h_ * w_, 0.0) {}
    double* at(int bi, int ci) { return data.data() + ((size_t(bi) * c + ci) * h) * w; }
    const double* at(int bi, int ci) const { return data.data() + ((size_t(bi) * c + ci) * h) * w; }
};

// conv 3x3, pad 1. weights laid out [co][ci][ky][kx].
void conv3x3(const Plane& in, const std::vector<double>& weight, const std::vector<double>& bias,
             Plane& out) {
    const int H = in.h, W = in.w;
    for (int bi = 0; bi < in.b; ++bi)
        for (int co = 0; co < out.c; ++co) {
            double* o = out.at(bi, co);
            for (int i = 0; i < H * W; ++i) o[i] = bias[co];
            for (int ci = 0; ci < in.c; ++ci) {
                const double* src = in.at(bi, ci);
                const double* k = weight.data() + (size_t(co) * in.c + ci) * 9;
                for (int y = 0; y < H; ++y) {
                    for (int ky = 0; ky < 3; ++ky) {
                        int sy = y + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        const double* srow = src + size_t(sy) * W;
                        double* orow = o + size_t(y) * W;
                        for (int kx = 0; kx < 3; ++kx) {
                            double kv = k[ky * 3 + kx];
                            if (kv == 0.0) continue;
                            int x0 = kx == 0 ? 1 : 0;
                            int x1 = kx == 2 ? W - 1 : W;
                            for (int x = x0; x < x1; ++x) orow[x] += kv * srow[x + kx - 1];
                        }
                    }
                }
            }
        }
}

// Gradients of conv3x3 wrt input, weights and bias.
void conv3x3_backward(const Plane& in, const std::vector<double>& weight, const Plane& gout,
                      Plane& gin, std::vector<double>& gweight, std::vector<double>& gbias) {
    const int H = in.h, W = in.w;
    for (int bi = 0; bi < in.b; ++bi) {
        for (int co = 0; co < gout.c; ++co) {
            const double* go = gout.at(bi, co);
            for (int i = 0; i < H * W; ++i) gbias[co] += go[i];
            for (int ci = 0; ci < in.c; ++ci) {
                const double* src = in.at(bi, ci);
                double* gi = gin.at(bi, ci);
                const double* k = weight.data() + (size_t(co) * in.c + ci) * 9;
                double* gk = gweight.data() + (size_t(co) * in.c + ci) * 9;
                for (int y = 0; y < H; ++y) {
                    const double* grow = go + size_t(y) * W;
                    for (int ky = 0; ky < 3; ++ky) {
                        int sy = y + ky - 1;
                        if (sy < 0 || sy >= H) continue;
                        const double* srow = src + size_t(sy) * W;
                        double* girow = gi + size_t(sy) * W;
                        for (int kx = 0; kx < 3; ++kx) {
                            double kv = k[ky * 3 + kx];
                            double acc = 0.0;
                            int x0 = kx == 0 ? 1 : 0;
                            int x1 = kx == 2 ? W - 1 : W;
                            for (int x = x0; x < x1; ++x) {
                                double g = grow[x];
                                acc += g * srow[x + kx - 1];
                                girow[x + kx - 1] += kv * g;
                            }
                            gk[ky * 3 + kx] += acc;
                        }
                    }
                }
            }
        }
    }
}

std::vector<double> time_embedding(int t, int dim) {
    std::vector<double> e(dim);
    int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        double freq = std::exp(-std::log(10000.0) * k / (half > 1 ? half - 1 : 1));
        e[k] = std::sin(t * freq);
        e[half + k] = std::cos(t * freq);
    }
    return e;
}

enum ParamIndex {
    kW1 = 0, kB1, kW2, kB2, kW3, kB3, kWm1, kBm1, kWm2, kBm2, kParamCount
};

// Coordinate channels: raw ramps plus sin/cos Fourier features per axis.
// The Fourier pairs let the net place sharp spatial biases (the mark box)
// instead of the smeared boxes a two-layer map of raw ramps produces.
constexpr int kCoordFreqs = 3;
constexpr int kCoordChannels = 2 + 4 * kCoordFreqs;

void fill_coord_channels(Plane& inp, int first_channel, int bi) {
    const int H = inp.h, W = inp.w;
    const double pi = 3.14159265358979323846;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double cy = H > 1 ? 2.0 * y / (H - 1) - 1.0 : 0.0;
            double cx = W > 1 ? 2.0 * x / (W - 1) - 1.0 : 0.0;
            int c = first_channel;
            inp.at(bi, c++)[y * W + x] = cy;
            inp.at(bi, c++)[y * W + x] = cx;
            for (int f = 0; f < kCoordFreqs; ++f) {
                double k = pi * double(1 << f);
                inp.at(bi, c++)[y * W + x] = std::sin(k * cy);
                inp.at(bi, c++)[y * W + x] = std::cos(k * cy);
                inp.at(bi, c++)[y * W + x] = std::sin(k * cx);
                inp.at(bi, c++)[y * W + x] = std::cos(k * cx);
            }
        }
}

}  // namespace

ToyDenoiser::ToyDenoiser(const ToyDenoiserConfig& config, uint64_t init_seed) : config_(config) {
    const int C = config.channels, F = config.hidden_channels;
    const int E = config.time_embed_dim, HID = config.time_hidden_dim;
    const int Cin = C + kCoordChannels;

    names_ = {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b",
              "time1_w", "time1_b", "time2_w", "time2_b"};
    params_.resize(kParamCount);
    params_[kW1].assign(size_t(F) * Cin * 9, 0.0);
    params_[kB1].assign(F, 0.0);
    params_[kW2].assign(size_t(F) * F * 9, 0.0);
    params_[kB2].assign(F, 0.0);
    params_[kW3].assign(size_t(C) * F * 9, 0.0);
    params_[kB3].assign(C, 0.0);
    params_[kWm1].assign(size_t(E) * HID, 0.0);
    params_[kBm1].assign(HID, 0.0);
    params_[kWm2].assign(size_t(HID) * (4 * F + 1), 0.0);
    params_[kBm2].assign(4 * F + 1, 0.0);

    Rng rng(init_seed);
    auto he_init = [&rng](std::vector<double>& w, int fan_in, double gain = 1.0) {
        double sd = gain * std::sqrt(2.0 / fan_in);
        for (double& v : w) v = rng.normal() * sd;
    };
    he_init(params_[kW1], Cin * 9);
    he_init(params_[kW2], F * 9);
    he_init(params_[kW3], F * 9);
    he_init(params_[kWm1], E);
    he_init(params_[kWm2], HID, 0.1);  // FiLM starts near identity
    params_[kBm2].back() = 1.0;        // skip gate opens at 1: prediction ~ x at init
}

std::string ToyDenoiser::descriptor() const {
    return "conv_film_skip_v2 c" + std::to_string(config_.channels) + " f" +
           std::to_string(config_.hidden_channels) + " e" + std::to_string(config_.time_embed_dim) +
           " h" + std::to_string(config_.time_hidden_dim);
}

void ToyDenoiser::set_parameters(const ParamSet& params) {
    if (params.size() != params_.size())
        throw std::invalid_argument("ToyDenoiser::set_parameters: parameter count mismatch");
    for (size_t i = 0; i < params.size(); ++i)
        if (params[i].size() != params_[i].size())
            throw std::invalid_argument("ToyDenoiser::set_parameters: size mismatch at " + names_[i]);
    params_ = params;
}

namespace {

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
    Plane inp, c1, z1, a1, c2, z2, a2, out;
    std::vector<double> emb, th1, ta1, th2;  // per batch element, concatenated
    int B = 0;
};

}  // namespace

// Shared forward used by both inference and training. `trace` may be null.
static void run_forward(const ToyDenoiserConfig& cfg, const ParamSet& P, const ImageBatch& x,
                        const std::vector<int>& t, ImageBatch& out, ForwardTrace* trace) {
    if (x.empty()) throw std::invalid_argument("ToyDenoiser: empty batch");
    if (t.size() != x.size()) throw std::invalid_argument("ToyDenoiser: one step index per image");
    const int B = int(x.size());
    const int H = x[0].height, W = x[0].width, C = x[0].channels;
    if (C != cfg.channels) throw std::invalid_argument("ToyDenoiser: channel count mismatch");
    const int F = cfg.hidden_channels, E = cfg.time_embed_dim, HID = cfg.time_hidden_dim;
    const int Cin = C + kCoordChannels;

    Plane inp(B, Cin, H, W);
    for (int bi = 0; bi < B; ++bi) {
        require_same_shape(x[0], x[bi], "ToyDenoiser");
        for (int c = 0; c < C; ++c) {
            double* dst = inp.at(bi, c);
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) dst[y * W + xx] = x[bi].at(y, xx, c);
        }
        fill_coord_channels(inp, C, bi);
    }

    // time MLP: embedding -> SiLU hidden -> FiLM params + skip gate
    std::vector<double> emb(size_t(B) * E), th1(size_t(B) * HID), ta1(size_t(B) * HID),
        th2(size_t(B) * (4 * F + 1));
    for (int bi = 0; bi < B; ++bi) {
        std::vector<double> e = time_embedding(t[bi], E);
        std::copy(e.begin(), e.end(), emb.begin() + size_t(bi) * E);
        for (int j = 0; j < HID; ++j) {
            double acc = P[kBm1][j];
            for (int i = 0; i < E; ++i) acc += e[i] * P[kWm1][size_t(i) * HID + j];
            th1[size_t(bi) * HID + j] = acc;
            ta1[size_t(bi) * HID + j] = silu(acc);
        }
        for (int j = 0; j < 4 * F + 1; ++j) {
            double acc = P[kBm2][j];
            for (int i = 0; i < HID; ++i)
                acc += ta1[size_t(bi) * HID + i] * P[kWm2][size_t(i) * (4 * F + 1) + j];
            th2[size_t(bi) * (4 * F + 1) + j] = acc;
        }
    }

    Plane c1(B, F, H, W), z1(B, F, H, W), a1(B, F, H, W);
    Plane c2(B, F, H, W), z2(B, F, H, W), a2(B, F, H, W);
    Plane o(B, C, H, W);

    conv3x3(inp, P[kW1], P[kB1], c1);
    for (int bi = 0; bi < B; ++bi) {
        const double* film = th2.data() + size_t(bi) * (4 * F + 1);
        for (int f = 0; f < F; ++f) {
            const double scale = 1.0 + film[f], shift = film[F + f];
            const double* src = c1.at(bi, f);
            double* zd = z1.at(bi, f);
            double* ad = a1.at(bi, f);
            for (int i = 0; i < H * W; ++i) {
                zd[i] = src[i] * scale + shift;
                ad[i] = silu(zd[i]);
            }
        }
    }
    conv3x3(a1, P[kW2], P[kB2], c2);
    for (int bi = 0; bi < B; ++bi) {
        const double* film = th2.data() + size_t(bi) * (4 * F + 1);
        for (int f = 0; f < F; ++f) {
            const double scale = 1.0 + film[2 * F + f], shift = film[3 * F + f];
            const double* src = c2.at(bi, f);
            double* zd = z2.at(bi, f);
            double* ad = a2.at(bi, f);
            for (int i = 0; i < H * W; ++i) {
                zd[i] = src[i] * scale + shift;
                ad[i] = silu(zd[i]);
            }
        }
    }
    conv3x3(a2, P[kW3], P[kB3], o);

    out.assign(B, Image(H, W, C));
    for (int bi = 0; bi < B; ++bi) {
        double gate = th2[size_t(bi) * (4 * F + 1) + 4 * F];
        for (int c = 0; c < C; ++c) {
            const double* od = o.at(bi, c);
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    out[bi].at(y, xx, c) = od[y * W + xx] + gate * x[bi].at(y, xx, c);
        }
    }

    if (trace) {
        trace->inp = std::move(inp);
        trace->c1 = std::move(c1);
        trace->z1 = std::move(z1);
        trace->a1 = std::move(a1);
        trace->c2 = std::move(c2);
        trace->z2 = std::move(z2);
        trace->a2 = std::move(a2);
        trace->emb = std::move(emb);
        trace->th1 = std::move(th1);
        trace->ta1 = std::move(ta1);
        trace->th2 = std::move(th2);
        trace->B = B;
    }
}

ImageBatch ToyDenoiser::forward(const ImageBatch& x, const std::vector<int>& t) const {
    ImageBatch out;
    run_forward(config_, params_, x, t, out, nullptr);
    return out;
}

ImageBatch ToyDenoiser::forward(const ImageBatch& x, int t) const {
    return forward(x, std::vector<int>(x.size(), t));
}

double ToyDenoiser::loss_and_gradients(const ImageBatch& x, const std::vector<int>& t,
                                       const ImageBatch& target, ParamSet& grads,
                                       std::vector<double>* per_element_loss) const {
    ImageBatch pred;
    ForwardTrace trace;
    run_forward(config_, params_, x, t, pred, &trace);
    if (per_element_loss) per_element_loss->assign(x.size(), 0.0);

    const int B = trace.B;
    const int H = x[0].height, W = x[0].width, C = config_.channels;
    const int F = config_.hidden_channels, E = config_.time_embed_dim, HID = config_.time_hidden_dim;
    const int Cin = C + kCoordChannels;

    grads.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) grads[i].assign(params_[i].size(), 0.0);

    double loss = 0.0;
    const double inv_n = 1.0 / (double(B) * H * W * C);
    Plane gout(B, C, H, W);
    std::vector<double> gth2(size_t(B) * (4 * F + 1), 0.0);
    for (int bi = 0; bi < B; ++bi) {
        require_same_shape(x[bi], target[bi], "ToyDenoiser::loss");
        double ggate = 0.0;
        double elem_loss = 0.0;
        for (int c = 0; c < C; ++c) {
            double* g = gout.at(bi, c);
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    double diff = pred[bi].at(y, xx, c) - target[bi].at(y, xx, c);
                    elem_loss += diff * diff;
                    double gv = 2.0 * diff * inv_n;
                    g[y * W + xx] = gv;
                    ggate += gv * x[bi].at(y, xx, c);
                }
        }
        loss += elem_loss;
        if (per_element_loss) (*per_element_loss)[bi] = elem_loss / (double(H) * W * C);
        gth2[size_t(bi) * (4 * F + 1) + 4 * F] = ggate;
    }
    loss *= inv_n;

    // conv3 backward
    Plane ga2(B, F, H, W);
    conv3x3_backward(trace.a2, params_[kW3], gout, ga2, grads[kW3], grads[kB3]);

    // FiLM2 + SiLU backward
    Plane gc2(B, F, H, W);
    for (int bi = 0; bi < B; ++bi) {
        const double* film = trace.th2.data() + size_t(bi) * (4 * F + 1);
        double* gfilm = gth2.data() + size_t(bi) * (4 * F + 1);
        for (int f = 0; f < F; ++f) {
            const double scale = 1.0 + film[2 * F + f];
            const double* zd = trace.z2.at(bi, f);
            const double* cd = trace.c2.at(bi, f);
            const double* ga = ga2.at(bi, f);
            double* gc = gc2.at(bi, f);
            double gs = 0.0, gb = 0.0;
            for (int i = 0; i < H * W; ++i) {
                double gz = ga[i] * silu_grad(zd[i]);
                gc[i] = gz * scale;
                gs += gz * cd[i];
                gb += gz;
            }
            gfilm[2 * F + f] += gs;
            gfilm[3 * F + f] += gb;
        }
    }

    // conv2 backward
    Plane ga1(B, F, H, W);
    conv3x3_backward(trace.a1, params_[kW2], gc2, ga1, grads[kW2], grads[kB2]);

    // FiLM1 + SiLU backward
    Plane gc1(B, F, H, W);
    for (int bi = 0; bi < B; ++bi) {
        const double* film = trace.th2.data() + size_t(bi) * (4 * F + 1);
        double* gfilm = gth2.data() + size_t(bi) * (4 * F + 1);
        for (int f = 0; f < F; ++f) {
            const double scale = 1.0 + film[f];
            const double* zd = trace.z1.at(bi, f);
            const double* cd = trace.c1.at(bi, f);
            const double* ga = ga1.at(bi, f);
            double* gc = gc1.at(bi, f);
            double gs = 0.0, gb = 0.0;
            for (int i = 0; i < H * W; ++i) {
                double gz = ga[i] * silu_grad(zd[i]);
                gc[i] = gz * scale;
                gs += gz * cd[i];
                gb += gz;
            }
            gfilm[f] += gs;
            gfilm[F + f] += gb;
        }
    }

    // conv1 backward (input gradient discarded)
    Plane gin(B, Cin, H, W);
    conv3x3_backward(trace.inp, params_[kW1], gc1, gin, grads[kW1], grads[kB1]);

    // time MLP backward
    const int OUT2 = 4 * F + 1;
    for (int bi = 0; bi < B; ++bi) {
        const double* gh2 = gth2.data() + size_t(bi) * OUT2;
        const double* a1v = trace.ta1.data() + size_t(bi) * HID;
        const double* h1v = trace.th1.data() + size_t(bi) * HID;
        const double* ev = trace.emb.data() + size_t(bi) * E;
        for (int j = 0; j < OUT2; ++j) {
            grads[kBm2][j] += gh2[j];
            for (int i = 0; i < HID; ++i) grads[kWm2][size_t(i) * OUT2 + j] += a1v[i] * gh2[j];
        }
        for (int i = 0; i < HID; ++i) {
            double ga = 0.0;
            for (int j = 0; j < OUT2; ++j) ga += gh2[j] * params_[kWm2][size_t(i) * OUT2 + j];
            double gh = ga * silu_grad(h1v[i]);
            grads[kBm1][i] += gh;
            for (int k = 0; k < E; ++k) grads[kWm1][size_t(k) * HID + i] += ev[k] * gh;
        }
    }

    return loss;
}

// ---- OracleDenoiser ----

OracleDenoiser::OracleDenoiser(Image x0, const WatermarkSpec& spec,
                               const VarianceSchedule& schedule, double pattern_scale)
    : spec_(spec), schedule_(&schedule) {
    spec_.validate(schedule.T);
    scaled_pattern_ = spec.pattern;
    for (double& v : scaled_pattern_.data) v *= pattern_scale;
    double f1_0 = compute_f1(schedule, 0, spec.f1_mode);
    Image b0 = compute_bt(x0, scaled_pattern_, f1_0, 0.0);
    x0_prime_ = Image(x0.height, x0.width, x0.channels);
    for (size_t i = 0; i < x0.size(); ++i)
        x0_prime_.data[i] = spec.gamma * x0.data[i] + (1.0 - spec.gamma) * b0.data[i];
}

ImageBatch OracleDenoiser::predict(const ImageBatch& x, int t) const {
    const VarianceSchedule& s = *schedule_;
    const double g = spec_.gamma;
    ImageBatch out;
    out.reserve(x.size());

    if (t <= spec_.t_A) {
        // embedding stage: eps' is deterministic given x, so the posterior of
        // eps'' collapses: (x - mean)/sqrt(1-abar) + (1-g) K x_A
        double sqrt_abar = std::sqrt(s.alpha_bar[t]);
        double inv = 1.0 / std::sqrt(1.0 - s.alpha_bar[t]);
        double f2t = s.f2_table[t];
        for (const Image& img : x) {
            Image e(img.height, img.width, img.channels);
            for (size_t i = 0; i < img.size(); ++i) {
                double mean = sqrt_abar * x0_prime_.data[i] + (1.0 - g) * f2t * scaled_pattern_.data[i];
                e.data[i] = (img.data[i] - mean) * inv + (1.0 - g) * s.K * scaled_pattern_.data[i];
            }
            out.push_back(std::move(e));
        }
        return out;
    }

    // simulation stage: joint-Gaussian posterior mean of eps' given x
    double r = s.alpha_bar[t] / s.alpha_bar[spec_.t_A];
    double sqrt_r = std::sqrt(r);
    double v_a = g * g * (1.0 - s.alpha_bar[spec_.t_A]);
    double denom = r * v_a + (1.0 - r);
    double cov = std::sqrt(1.0 - r);
    double f2a = s.f2_table[spec_.t_A];
    double sqrt_abar_a = std::sqrt(s.alpha_bar[spec_.t_A]);
    for (const Image& img : x) {
        Image e(img.height, img.width, img.channels);
        for (size_t i = 0; i < img.size(); ++i) {
            double m_a = sqrt_abar_a * x0_prime_.data[i] + (1.0 - g) * f2a * scaled_pattern_.data[i];
            e.data[i] = cov * (img.data[i] - sqrt_r * m_a) / denom;
        }
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace diffmark
