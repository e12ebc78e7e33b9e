#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffmark {

// Dense H x W x C image tensor, row-major with interleaved channels.
// Doubles throughout: schedule scalars and pixel math share one precision.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw std::invalid_argument("Image: dimensions must be positive");
    }

    size_t size() const { return data.size(); }

    double& at(int y, int x, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width && channels == other.channels;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) {
            double a = v < 0 ? -v : v;
            if (a > m) m = a;
        }
        return m;
    }

    double max_value() const {
        double m = data.empty() ? 0.0 : data[0];
        for (double v : data)
            if (v > m) m = v;
        return m;
    }
};

using ImageBatch = std::vector<Image>;

inline void require_same_shape(const Image& a, const Image& b, const std::string& where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(where + ": shape mismatch (" + std::to_string(a.height) + "x" +
                                    std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                                    std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                                    std::to_string(b.channels) + ")");
}

// Elementwise mean over a nonempty batch.
Image batch_mean(const ImageBatch& batch);

// Max absolute value over every element of every image in the batch.
double batch_max_abs(const ImageBatch& batch);

}  // namespace diffmark
