#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffmark/tensor.hpp"

namespace diffmark {

struct ByteImage {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;

    ByteImage() = default;
    ByteImage(int h, int w, uint8_t fill = 0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}
    uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Closed polyline through the pixel centers of one connected component's
// outer boundary, canonicalized to positive (counterclockwise) orientation.
// component_pixels is the filled size of the component the contour encloses.
struct Contour {
    struct Point {
        int x = 0, y = 0;
    };
    std::vector<Point> points;
    int component_pixels = 0;
};

struct VerifyParams {
    int binary_threshold = 128;       // fixed cut, used when use_otsu is off
    bool use_otsu = true;             // Otsu separates mark/background mass
                                      // far more reliably than a mid-range cut
                                      // on real snapshot averages
    int min_component_pixels = 9;     // speck filter for similarity candidates
    double hu_eps = 1e-5;             // Hu terms below this magnitude are skipped
    double compactness_weight = 1.0;  // weight of the perimeter^2/area log term
    int blur_size = 5;                // edge-mode Gaussian kernel
    double blur_sigma = 1.0;
    double hysteresis_low = 50.0;     // edge-mode gradient thresholds (8-bit scale)
    double hysteresis_high = 150.0;
};

struct VerificationReport {
    bool verdict = false;
    double best_similarity = 0.0;  // +inf when no comparable pair exists
    double threshold = 0.0;
    int target_contours = 0;
    int pattern_contours = 0;
    std::vector<std::string> stages;
    bool edgesconvert = false;
};

// Range-normalize to [0,255], reduce RGB to luminance, binarize; with
// edgesconvert, Gaussian blur and gradient-magnitude edge detection with
// hysteresis follow. A constant image maps to all zeros. `stages`, when
// given, collects the names of the stages applied.
ByteImage preprocess(const Image& image, bool edgesconvert, const VerifyParams& params = {},
                     std::vector<std::string>* stages = nullptr);

// Outer boundary of every 8-connected foreground component, via Moore
// neighbor tracing through pixel centers. Empty image -> empty list.
std::vector<Contour> find_contours(const ByteImage& binary);

// Seven Hu moment invariants from the polygon (Green's theorem) moments of
// the closed polyline. Degenerate contours (enclosed area ~ 0) have none.
struct ContourFeatures {
    std::array<double, 7> hu{};
    double compactness = 0.0;  // perimeter^2 / |area|
    bool degenerate = true;
};
ContourFeatures contour_features(const Contour& contour);

// Scale/translation/rotation-invariant shape distance; 0 means identical
// shape. Log-scaled Hu terms are compared where both magnitudes exceed
// hu_eps; an isoperimetric log-ratio term (weight compactness_weight) is
// added on top. nullopt = incomparable (degenerate contour or no usable
// Hu terms).
std::optional<double> contour_similarity(const Contour& a, const Contour& b,
                                         const VerifyParams& params = {});

// End-to-end verification: preprocess both images, extract
// contours, verdict true iff some (target, pattern) pair scores below the
// threshold. Components smaller than min_component_pixels do not take part
// in the similarity search.
VerificationReport verify(const Image& x_avg, const Image& pattern, double threshold,
                          bool edgesconvert, const VerifyParams& params = {});

std::string verification_report_json(const VerificationReport& report);

}  // namespace diffmark
