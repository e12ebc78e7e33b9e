#include "diffmark/verification.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace diffmark {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int otsu_threshold(const ByteImage& gray) {
    int hist[256] = {0};
    for (uint8_t v : gray.data) ++hist[v];
    const double total = static_cast<double>(gray.data.size());
    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += i * static_cast<double>(hist[i]);
    double sum_b = 0.0, w_b = 0.0, best_var = -1.0;
    int best_t = 128;
    for (int t = 0; t < 256; ++t) {
        w_b += hist[t];
        if (w_b == 0) continue;
        double w_f = total - w_b;
        if (w_f == 0) break;
        sum_b += t * static_cast<double>(hist[t]);
        double m_b = sum_b / w_b;
        double m_f = (sum_all - sum_b) / w_f;
        double between = w_b * w_f * (m_b - m_f) * (m_b - m_f);
        if (between > best_var) {
            best_var = between;
            best_t = t + 1;
        }
    }
    return best_t;
}

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
    std::vector<double> k(size);
    int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        double d = i - half;
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian blur with edge replication, on double intensities.
std::vector<double> blur(const std::vector<double>& img, int h, int w, int size, double sigma) {
    std::vector<double> k = gaussian_kernel_1d(size, sigma);
    int half = size / 2;
    std::vector<double> tmp(img.size()), out(img.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < size; ++i) {
                int xx = std::clamp(x + i - half, 0, w - 1);
                acc += k[i] * img[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = 0; i < size; ++i) {
                int yy = std::clamp(y + i - half, 0, h - 1);
                acc += k[i] * tmp[static_cast<size_t>(yy) * w + x];
            }
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    return out;
}

// Sobel gradient magnitude followed by double-threshold hysteresis.
ByteImage edge_detect(const std::vector<double>& img, int h, int w, double lo, double hi) {
    std::vector<double> mag(img.size(), 0.0);
    auto px = [&](int y, int x) {
        y = std::clamp(y, 0, h - 1);
        x = std::clamp(x, 0, w - 1);
        return img[static_cast<size_t>(y) * w + x];
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = -px(y - 1, x - 1) - 2 * px(y, x - 1) - px(y + 1, x - 1) +
                        px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1);
            double gy = -px(y - 1, x - 1) - 2 * px(y - 1, x) - px(y - 1, x + 1) +
                        px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1);
            mag[static_cast<size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
        }
    ByteImage out(h, w, 0);
    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mag[static_cast<size_t>(y) * w + x] >= hi) {
                out.at(y, x) = 255;
                queue.emplace_back(y, x);
            }
    while (!queue.empty()) {
        auto [y, x] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                int ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                if (out.at(ny, nx) == 0 && mag[static_cast<size_t>(ny) * w + nx] >= lo) {
                    out.at(ny, nx) = 255;
                    queue.emplace_back(ny, nx);
                }
            }
    }
    return out;
}

}  // namespace

ByteImage preprocess(const Image& image, bool edgesconvert, const VerifyParams& params,
                     std::vector<std::string>* stages) {
    auto note = [stages](const char* name) {
        if (stages) stages->emplace_back(name);
    };

    // Range-normalize to [0,255]; constant images map to all zeros.
    double lo = kInf, hi = -kInf;
    for (double v : image.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("preprocess: non-finite pixel");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    note("uint8_convert");
    note("grayscale_convert");
    const int h = image.height, w = image.width;
    std::vector<double> gray8(static_cast<size_t>(h) * w, 0.0);
    if (hi > lo) {
        double scale = 255.0 / (hi - lo);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double lum;
                if (image.channels >= 3) {
                    lum = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
                          0.114 * image.at(y, x, 2);
                } else {
                    lum = image.at(y, x, 0);
                }
                gray8[static_cast<size_t>(y) * w + x] =
                    std::clamp(std::round((lum - lo) * scale), 0.0, 255.0);
            }
    }

    note(params.use_otsu ? "otsu_threshold" : "binary_threshold");
    int thr = params.binary_threshold;
    if (params.use_otsu) {
        ByteImage tmp(h, w);
        for (size_t i = 0; i < tmp.data.size(); ++i) tmp.data[i] = static_cast<uint8_t>(gray8[i]);
        thr = otsu_threshold(tmp);
    }
    ByteImage bin(h, w, 0);
    for (size_t i = 0; i < bin.data.size(); ++i) bin.data[i] = gray8[i] >= thr ? 255 : 0;

    if (!edgesconvert) return bin;

    note("gaussian_blur");
    std::vector<double> asdouble(bin.data.begin(), bin.data.end());
    std::vector<double> blurred = blur(asdouble, h, w, params.blur_size, params.blur_sigma);
    note("edge_detect");
    return edge_detect(blurred, h, w, params.hysteresis_low, params.hysteresis_high);
}

namespace {

// Moore neighborhood in clockwise order starting at West: W, NW, N, NE, E, SE, S, SW.
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

double signed_area(const std::vector<Contour::Point>& pts) {
    double a = 0.0;
    size_t n = pts.size();
    for (size_t i = 0; i < n; ++i) {
        const auto& p = pts[i ? i - 1 : n - 1];
        const auto& q = pts[i];
        a += static_cast<double>(p.x) * q.y - static_cast<double>(q.x) * p.y;
    }
    return 0.5 * a;
}

// Boundary trace of one component starting at its row-major-first pixel.
std::vector<Contour::Point> trace_boundary(const ByteImage& bin, const std::vector<int>& label,
                                           int this_label, int sy, int sx) {
    const int h = bin.height, w = bin.width;
    auto is_fg = [&](int y, int x) {
        return y >= 0 && y < h && x >= 0 && x < w &&
               label[static_cast<size_t>(y) * w + x] == this_label;
    };

    std::vector<Contour::Point> pts;
    pts.push_back({sx, sy});

    // Entry direction West: the scan order guarantees the pixel to the left
    // of the start is not part of this component.
    int cy = sy, cx = sx, backtrack = 0;
    bool have_first = false;
    int f_y = 0, f_x = 0, f_bt = 0;  // state right after the first move
    const size_t guard = static_cast<size_t>(h) * w * 8 + 16;
    for (size_t iter = 0; iter < guard; ++iter) {
        int found = -1;
        int prev_dir = backtrack;
        for (int k = 1; k <= 8; ++k) {
            int dir = (backtrack + k) % 8;
            int ny = cy + kDy[dir], nx = cx + kDx[dir];
            if (is_fg(ny, nx)) {
                found = dir;
                break;
            }
            prev_dir = dir;
        }
        if (found < 0) return pts;  // isolated pixel
        int ny = cy + kDy[found], nx = cx + kDx[found];
        // New backtrack points from the next pixel toward the last background
        // neighbor inspected before the hit.
        int by = cy + kDy[prev_dir], bx = cx + kDx[prev_dir];
        int nb = 0;
        for (int d = 0; d < 8; ++d)
            if (ny + kDy[d] == by && nx + kDx[d] == bx) {
                nb = d;
                break;
            }
        cy = ny;
        cx = nx;
        backtrack = nb;
        // The walk is deterministic in (pixel, backtrack): once the state
        // after the first move recurs, the cycle is closed. This also covers
        // components (such as diagonal pixel pairs) that never re-enter the
        // start with the initial backtrack.
        if (have_first && cy == f_y && cx == f_x && backtrack == f_bt) break;
        if (!have_first) {
            have_first = true;
            f_y = cy;
            f_x = cx;
            f_bt = backtrack;
        }
        pts.push_back({cx, cy});
    }
    if (pts.size() > 1 && pts.back().x == pts.front().x && pts.back().y == pts.front().y)
        pts.pop_back();
    return pts;
}

}  // namespace

std::vector<Contour> find_contours(const ByteImage& binary) {
    const int h = binary.height, w = binary.width;
    std::vector<int> label(static_cast<size_t>(h) * w, -1);
    std::vector<Contour> contours;

    int next_label = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (binary.at(y, x) == 0 || label[static_cast<size_t>(y) * w + x] >= 0) continue;
            // flood-fill the component (8-connected)
            int this_label = next_label++;
            int pixel_count = 0;
            std::deque<std::pair<int, int>> queue{{y, x}};
            label[static_cast<size_t>(y) * w + x] = this_label;
            while (!queue.empty()) {
                auto [cy, cx] = queue.front();
                queue.pop_front();
                ++pixel_count;
                for (int d = 0; d < 8; ++d) {
                    int ny = cy + kDy[d], nx = cx + kDx[d];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    size_t idx = static_cast<size_t>(ny) * w + nx;
                    if (binary.at(ny, nx) != 0 && label[idx] < 0) {
                        label[idx] = this_label;
                        queue.emplace_back(ny, nx);
                    }
                }
            }
            Contour c;
            c.component_pixels = pixel_count;
            c.points = trace_boundary(binary, label, this_label, y, x);
            if (signed_area(c.points) < 0.0)
                std::reverse(c.points.begin(), c.points.end());
            contours.push_back(std::move(c));
        }
    return contours;
}

ContourFeatures contour_features(const Contour& contour) {
    ContourFeatures f;
    const auto& pts = contour.points;
    const size_t n = pts.size();
    if (n < 3) return f;

    // Polygon moments over the closed polyline (Green's theorem).
    double a00 = 0, a10 = 0, a01 = 0, a20 = 0, a11 = 0, a02 = 0;
    double a30 = 0, a21 = 0, a12 = 0, a03 = 0;
    double perimeter = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double xp = pts[i ? i - 1 : n - 1].x, yp = pts[i ? i - 1 : n - 1].y;
        double xq = pts[i].x, yq = pts[i].y;
        double cross = xp * yq - xq * yp;
        a00 += cross;
        a10 += cross * (xp + xq);
        a01 += cross * (yp + yq);
        a20 += cross * (xp * xp + xp * xq + xq * xq);
        a11 += cross * (2 * xp * yp + xp * yq + xq * yp + 2 * xq * yq);
        a02 += cross * (yp * yp + yp * yq + yq * yq);
        a30 += cross * (xp * xp * xp + xp * xp * xq + xp * xq * xq + xq * xq * xq);
        a21 += cross * (3 * xp * xp * yp + 2 * xp * xq * yp + xq * xq * yp + xp * xp * yq +
                        2 * xp * xq * yq + 3 * xq * xq * yq);
        a12 += cross * (3 * yp * yp * xp + 2 * yp * yq * xp + yq * yq * xp + yp * yp * xq +
                        2 * yp * yq * xq + 3 * yq * yq * xq);
        a03 += cross * (yp * yp * yp + yp * yp * yq + yp * yq * yq + yq * yq * yq);
        perimeter += std::hypot(xq - xp, yq - yp);
    }
    double m00 = a00 / 2.0, m10 = a10 / 6.0, m01 = a01 / 6.0;
    double m20 = a20 / 12.0, m11 = a11 / 24.0, m02 = a02 / 12.0;
    double m30 = a30 / 20.0, m21 = a21 / 60.0, m12 = a12 / 60.0, m03 = a03 / 20.0;

    if (std::abs(m00) < 1e-9) return f;  // degenerate: thin or self-cancelling

    double xb = m10 / m00, yb = m01 / m00;
    double mu20 = m20 - xb * m10;
    double mu02 = m02 - yb * m01;
    double mu11 = m11 - xb * m01;
    double mu30 = m30 - 3 * xb * m20 + 2 * xb * xb * m10;
    double mu21 = m21 - 2 * xb * m11 - yb * m20 + 2 * xb * xb * m01;
    double mu12 = m12 - 2 * yb * m11 - xb * m02 + 2 * yb * yb * m10;
    double mu03 = m03 - 3 * yb * m02 + 2 * yb * yb * m01;

    double a = std::abs(m00);
    double s2 = a * a, s3 = a * a * std::sqrt(a);
    double sign = m00 < 0 ? -1.0 : 1.0;  // orientation flip flips odd moments
    double n20 = mu20 / s2, n02 = mu02 / s2, n11 = mu11 / s2;
    double n30 = sign * mu30 / s3, n21 = sign * mu21 / s3;
    double n12 = sign * mu12 / s3, n03 = sign * mu03 / s3;

    double q30 = n30 + n12, q03 = n21 + n03;
    f.hu[0] = n20 + n02;
    f.hu[1] = (n20 - n02) * (n20 - n02) + 4 * n11 * n11;
    f.hu[2] = (n30 - 3 * n12) * (n30 - 3 * n12) + (3 * n21 - n03) * (3 * n21 - n03);
    f.hu[3] = q30 * q30 + q03 * q03;
    f.hu[4] = (n30 - 3 * n12) * q30 * (q30 * q30 - 3 * q03 * q03) +
              (3 * n21 - n03) * q03 * (3 * q30 * q30 - q03 * q03);
    f.hu[5] = (n20 - n02) * (q30 * q30 - q03 * q03) + 4 * n11 * q30 * q03;
    f.hu[6] = (3 * n21 - n03) * q30 * (q30 * q30 - 3 * q03 * q03) -
              (n30 - 3 * n12) * q03 * (3 * q30 * q30 - q03 * q03);
    f.compactness = perimeter * perimeter / a;
    f.degenerate = false;
    return f;
}

std::optional<double> contour_similarity(const Contour& a, const Contour& b,
                                         const VerifyParams& params) {
    if (a.points.size() < 3 || b.points.size() < 3) return std::nullopt;
    ContourFeatures fa = contour_features(a);
    ContourFeatures fb = contour_features(b);
    if (fa.degenerate || fb.degenerate) return std::nullopt;

    double d = 0.0;
    int used = 0;
    for (int i = 0; i < 7; ++i) {
        double ma = std::abs(fa.hu[i]), mb = std::abs(fb.hu[i]);
        if (ma > params.hu_eps && mb > params.hu_eps) {
            double la = std::copysign(std::log10(ma), fa.hu[i]);
            double lb = std::copysign(std::log10(mb), fb.hu[i]);
            d += std::abs(la - lb);
            ++used;
        }
    }
    if (used == 0) return std::nullopt;
    if (fa.compactness > 0.0 && fb.compactness > 0.0)
        d += params.compactness_weight * std::abs(std::log10(fa.compactness) - std::log10(fb.compactness));
    return d;
}

VerificationReport verify(const Image& x_avg, const Image& pattern, double threshold,
                          bool edgesconvert, const VerifyParams& params) {
    VerificationReport report;
    report.threshold = threshold;
    report.edgesconvert = edgesconvert;

    ByteImage target_bin = preprocess(x_avg, edgesconvert, params, &report.stages);
    ByteImage pattern_bin = preprocess(pattern, edgesconvert, params);

    std::vector<Contour> target_cts = find_contours(target_bin);
    std::vector<Contour> pattern_cts = find_contours(pattern_bin);
    report.target_contours = static_cast<int>(target_cts.size());
    report.pattern_contours = static_cast<int>(pattern_cts.size());

    double best = kInf;
    for (const Contour& tc : target_cts) {
        if (tc.component_pixels < params.min_component_pixels) continue;
        for (const Contour& pc : pattern_cts) {
            if (pc.component_pixels < params.min_component_pixels) continue;
            std::optional<double> d = contour_similarity(tc, pc, params);
            if (d && *d < best) best = *d;
        }
    }
    report.best_similarity = best;
    report.verdict = best < threshold;
    return report;
}

std::string verification_report_json(const VerificationReport& report) {
    nlohmann::json j;
    j["verdict"] = report.verdict;
    if (std::isfinite(report.best_similarity))
        j["best_similarity"] = report.best_similarity;
    else
        j["best_similarity"] = nullptr;  // +inf: no comparable contour pair
    j["threshold"] = report.threshold;
    j["contour_counts"] = {{"target", report.target_contours}, {"pattern", report.pattern_contours}};
    j["stages"] = report.stages;
    j["edgesconvert"] = report.edgesconvert;
    return j.dump(2);
}

}  // namespace diffmark
