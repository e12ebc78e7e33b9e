#include "diffmark/tensor.hpp"

namespace diffmark {

Image batch_mean(const ImageBatch& batch) {
    if (batch.empty()) throw std::invalid_argument("batch_mean: empty batch");
    Image out(batch[0].height, batch[0].width, batch[0].channels, 0.0);
    for (const Image& img : batch) {
        require_same_shape(out, img, "batch_mean");
        for (size_t i = 0; i < out.size(); ++i) out.data[i] += img.data[i];
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    for (double& v : out.data) v *= inv;
    return out;
}

double batch_max_abs(const ImageBatch& batch) {
    double m = 0.0;
    for (const Image& img : batch) {
        double a = img.max_abs();
        if (a > m) m = a;
    }
    return m;
}

}  // namespace diffmark
