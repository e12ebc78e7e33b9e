#include "diffmark/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "diffmark/rng.hpp"

namespace diffmark {

ImageBatch load_idx_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_idx_dataset: cannot open " + path);

    unsigned char header[4];
    if (!f.read(reinterpret_cast<char*>(header), 4))
        throw std::runtime_error("load_idx_dataset: " + path + ": file shorter than IDX magic");
    if (header[0] != 0x00 || header[1] != 0x00 || header[2] != 0x08 || header[3] != 0x03)
        throw std::runtime_error("load_idx_dataset: " + path +
                                 ": bad IDX magic (want 00 00 08 03 for ubyte images)");

    auto read_be32 = [&f, &path]() {
        unsigned char b[4];
        if (!f.read(reinterpret_cast<char*>(b), 4))
            throw std::runtime_error("load_idx_dataset: " + path + ": truncated dimension header");
        return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
    };
    uint32_t n = read_be32();
    uint32_t h = read_be32();
    uint32_t w = read_be32();
    if (n == 0 || h == 0 || w == 0)
        throw std::runtime_error("load_idx_dataset: " + path + ": zero dimension in header");

    std::vector<unsigned char> payload(static_cast<size_t>(n) * h * w);
    f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<size_t>(f.gcount()) != payload.size())
        throw std::runtime_error("load_idx_dataset: " + path + ": payload truncated (expected " +
                                 std::to_string(payload.size()) + " pixel bytes, got " +
                                 std::to_string(f.gcount()) + ")");
    char extra;
    if (f.read(&extra, 1))
        throw std::runtime_error("load_idx_dataset: " + path +
                                 ": payload larger than header dimensions describe");

    ImageBatch out;
    out.reserve(n);
    size_t idx = 0;
    for (uint32_t i = 0; i < n; ++i) {
        Image img(int(h), int(w), 1);
        for (size_t p = 0; p < static_cast<size_t>(h) * w; ++p)
            img.data[p] = payload[idx++] / 127.5 - 1.0;
        out.push_back(std::move(img));
    }
    return out;
}

namespace {

Image blob_image(int size, Rng& rng) {
    Image img(size, size, 1, -1.0);
    // one elongated soft bar in the upper-left region. Both extents stay at
    // least two background pixels clear of the bottom-right mark corner, so
    // the subject cannot fuse with the mark even after a trained model smears
    // it by a pixel; the aspect ratio of at least 2.4 keeps the subject
    // clearly distinguishable from square marks. The dilated support keeps
    // the positive-pixel fraction in [0.05, 0.5].
    double len = (0.35 + 0.10 * rng.uniform()) * size;
    double wid = len / (2.4 + 0.8 * rng.uniform());
    bool horizontal = rng.uniform() < 0.5;
    double cross0 = 1.0 + std::max(0.0, 0.44 * size - wid - 1.0) * rng.uniform();
    double long0 = 1.0 + std::max(0.0, 0.44 * size - len - 1.0) * rng.uniform();

    double y0 = horizontal ? cross0 : long0;
    double x0 = horizontal ? long0 : cross0;
    double y1 = y0 + (horizontal ? wid : len);
    double x1 = x0 + (horizontal ? len : wid);

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double dy = std::max({y0 - y, 0.0, y - y1});
            double dx = std::max({x0 - x, 0.0, x - x1});
            double d = std::hypot(dx, dy);  // distance to the bar rectangle
            double val = 2.0 / (1.0 + std::exp(4.0 * (d - 0.5))) - 1.0;
            img.at(y, x) = std::clamp(val, -1.0, 1.0);
        }
    return img;
}

Image strokes_image(int size, Rng& rng) {
    Image img(size, size, 1, -1.0);
    int strokes = 2 + rng.uniform_int(0, 1);
    for (int s = 0; s < strokes; ++s) {
        double y = 2.0 + rng.uniform() * (0.6 * size);
        double x = 2.0 + rng.uniform() * (0.6 * size);
        double dir = rng.uniform() * 2.0 * 3.14159265358979323846;
        int len = size + rng.uniform_int(0, size / 2);
        for (int i = 0; i < len; ++i) {
            dir += (rng.uniform() - 0.5) * 0.7;
            y += std::sin(dir) * 0.7;
            x += std::cos(dir) * 0.7;
            // strokes stay in the upper-left region, clear of corner marks
            y = std::clamp(y, 1.0, 0.42 * size);
            x = std::clamp(x, 1.0, 0.42 * size);
            for (int oy = 0; oy <= 1; ++oy)
                for (int ox = 0; ox <= 1; ++ox) {
                    int py = int(y) + oy, px = int(x) + ox;
                    if (py >= 0 && py < size && px >= 0 && px < size) img.at(py, px) = 1.0;
                }
        }
    }
    return img;
}

}  // namespace

ImageBatch make_synthetic_dataset(int n, int size, SyntheticKind kind, uint64_t seed) {
    if (size < 8) throw std::invalid_argument("make_synthetic_dataset: size must be >= 8");
    if (n < 1) throw std::invalid_argument("make_synthetic_dataset: n must be >= 1");
    ImageBatch out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::derived(seed, /*stream=*/0x5d, i);
        out.push_back(kind == SyntheticKind::blobs ? blob_image(size, rng) : strokes_image(size, rng));
    }
    return out;
}

}  // namespace diffmark
