#include "diffmark/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace diffmark {

void WatermarkSpec::validate(int T) const {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw std::invalid_argument("WatermarkSpec: gamma must be in (0, 1]");
    if (t_A < 1 || t_A > T)
        throw std::invalid_argument("WatermarkSpec: t_A must be in [1, T]");
    if (pattern.size() == 0) throw std::invalid_argument("WatermarkSpec: pattern is empty");
    if (!channel_mask.empty() && channel_mask.size() != static_cast<size_t>(pattern.channels))
        throw std::invalid_argument("WatermarkSpec: channel_mask size mismatch");
}

namespace {

struct MarkOrigin {
    int y0, x0;
};

MarkOrigin mark_origin(MarkPosition position, int mark_size, int height, int width) {
    if (position == MarkPosition::center)
        return {(height - mark_size) / 2, (width - mark_size) / 2};
    // bottom_right keeps a 1 px margin when there is room, mirroring how the
    // corner mark sits inside the canvas rather than on its edge.
    int margin = (height - mark_size > 0 && width - mark_size > 0) ? 1 : 0;
    return {height - mark_size - margin, width - mark_size - margin};
}

}  // namespace

Image make_pattern(MarkShape shape, MarkPosition position, int mark_size, int height, int width,
                   int channels, const std::vector<double>& color) {
    if (mark_size < 1) throw std::invalid_argument("make_pattern: mark_size must be >= 1");
    if (mark_size > height || mark_size > width)
        throw std::invalid_argument("make_pattern: mark larger than canvas");
    if (color.size() != static_cast<size_t>(channels))
        throw std::invalid_argument("make_pattern: need one color value per channel");

    Image img(height, width, channels, 0.0);
    MarkOrigin o = mark_origin(position, mark_size, height, width);
    const int thick = mark_size >= 4 ? 2 : 1;

    auto put = [&](int y, int x) {
        if (y < 0 || y >= height || x < 0 || x >= width) return;
        for (int c = 0; c < channels; ++c) img.at(y, x, c) = color[c];
    };

    switch (shape) {
        case MarkShape::square:
            for (int y = 0; y < mark_size; ++y)
                for (int x = 0; x < mark_size; ++x) put(o.y0 + y, o.x0 + x);
            break;
        case MarkShape::plus: {
            int arm = (mark_size - thick) / 2;
            for (int y = 0; y < mark_size; ++y)
                for (int x = arm; x < arm + thick; ++x) put(o.y0 + y, o.x0 + x);
            for (int x = 0; x < mark_size; ++x)
                for (int y = arm; y < arm + thick; ++y) put(o.y0 + y, o.x0 + x);
            break;
        }
        case MarkShape::cross:
            for (int i = 0; i < mark_size; ++i) {
                for (int dt = 0; dt < thick; ++dt) {
                    put(o.y0 + i, o.x0 + std::min(i + dt, mark_size - 1));
                    put(o.y0 + i, o.x0 + std::max(mark_size - 1 - i - dt, 0));
                }
            }
            break;
    }
    return img;
}

double dynamic_scale_factor(const Image& pattern, const ImageBatch& reference_batch) {
    if (reference_batch.empty())
        throw std::invalid_argument("dynamic_scale_factor: empty reference batch");
    double pattern_max = pattern.max_value();
    if (!(pattern_max > 0.0))
        throw std::invalid_argument("dynamic_scale_factor: all-zero pattern has no defined scale");
    return batch_max_abs(reference_batch) / pattern_max;
}

Image scale_pattern_dynamic(const Image& pattern, const ImageBatch& reference_batch) {
    double s = dynamic_scale_factor(pattern, reference_batch);
    Image out = pattern;
    for (double& v : out.data) v *= s;
    return out;
}

Image compute_bt(const Image& x0, const Image& scaled_pattern, double f1, double f2) {
    require_same_shape(x0, scaled_pattern, "compute_bt");
    Image out(x0.height, x0.width, x0.channels);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = f1 * x0.data[i] + f2 * scaled_pattern.data[i];
    return out;
}

}  // namespace diffmark
