#pragma once

#include <vector>

#include "diffmark/schedule.hpp"
#include "diffmark/tensor.hpp"

namespace diffmark {

enum class MarkShape { square, plus, cross };
enum class MarkPosition { bottom_right, center };

// How the pattern amplitude tracks the noised samples. dynamic_batch_max
// rescales the pattern to the max absolute value of the reference batch at
// every step; static_pattern uses the pattern as stored (the strict-theorem
// mode, where x_A never changes).
enum class ScaleMode { dynamic_batch_max, static_pattern };

// Watermark pattern plus all embedding hyperparameters.
struct WatermarkSpec {
    Image pattern;                    // values in [0,1] before placement scaling
    MarkPosition position = MarkPosition::bottom_right;
    MarkShape shape = MarkShape::square;
    double gamma = 0.8;               // in (0, 1]; gamma = 1 is the no-watermark case
    int t_A = 1;                      // watermark step, in [1, T]
    F1Mode f1_mode = F1Mode::zero;
    ScaleMode scale_mode = ScaleMode::dynamic_batch_max;
    std::vector<bool> channel_mask;   // one flag per channel; empty = all channels

    void validate(int T) const;
};

// Deterministic rasterization of a mark onto an H x W x C canvas. Pixels
// outside the mark are exactly 0. `color` holds one value per channel;
// channels with color 0 stay empty (one-channel colored marks). Crosses and
// pluses are drawn with 2 px thick strokes so their traced outline encloses
// nonzero area.
Image make_pattern(MarkShape shape, MarkPosition position, int mark_size, int height, int width,
                   int channels, const std::vector<double>& color);

// Scale factor that matches the pattern peak to the largest absolute sample
// value: s = max|reference_batch| / max(pattern). Rejects all-zero patterns.
double dynamic_scale_factor(const Image& pattern, const ImageBatch& reference_batch);

// pattern * dynamic_scale_factor(pattern, reference_batch).
Image scale_pattern_dynamic(const Image& pattern, const ImageBatch& reference_batch);

// b_t = f1 * x0 + f2 * scaled_pattern, elementwise.
Image compute_bt(const Image& x0, const Image& scaled_pattern, double f1, double f2);

}  // namespace diffmark
