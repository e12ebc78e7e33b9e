#include "diffmark/io_png.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace diffmark {

namespace {

void put_be32(std::string& out, uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(char((v >> (8 * i)) & 0xff));
}

uint32_t get_be32(const std::string& s, size_t off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | uint8_t(s[off + i]);
    return v;
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_be32(out, uint32_t(payload.size()));
    size_t crc_start = out.size();
    out.append(type, 4);
    out += payload;
    uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                         static_cast<uInt>(4 + payload.size()));
    put_be32(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3)
        throw std::invalid_argument("write_png: only 1- or 3-channel images supported");

    const int h = image.height, w = image.width, c = image.channels;
    std::string raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * c));
    for (int y = 0; y < h; ++y) {
        raw.push_back('\0');  // filter type 0 per scanline
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) {
                double v = std::clamp(image.at(y, x, ch), 0.0, 1.0);
                raw.push_back(char(static_cast<int>(std::lround(v * 255.0))));
            }
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string compressed(bound, '\0');
    if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  9) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    compressed.resize(bound);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_be32(ihdr, uint32_t(w));
    put_be32(ihdr, uint32_t(h));
    ihdr.push_back(8);                      // bit depth
    ihdr.push_back(c == 1 ? 0 : 2);         // color type
    ihdr.push_back(0);                      // compression
    ihdr.push_back(0);                      // filter
    ihdr.push_back(0);                      // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_png: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write_png: short write");
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_png: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string buf = ss.str();

    if (buf.size() < 8 || std::memcmp(buf.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
        throw std::runtime_error("read_png: not a PNG file: " + path);

    int width = 0, height = 0, bit_depth = 0, color_type = 0;
    std::string idat;
    size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_be32(buf, pos);
        std::string type = buf.substr(pos + 4, 4);
        if (pos + 12 + len > buf.size()) throw std::runtime_error("read_png: truncated chunk");
        if (type == "IHDR") {
            width = int(get_be32(buf, pos + 8));
            height = int(get_be32(buf, pos + 12));
            bit_depth = uint8_t(buf[pos + 16]);
            color_type = uint8_t(buf[pos + 17]);
            if (uint8_t(buf[pos + 20]) != 0) throw std::runtime_error("read_png: interlaced PNG unsupported");
        } else if (type == "IDAT") {
            idat += buf.substr(pos + 8, len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw std::runtime_error("read_png: missing IHDR");
    if (bit_depth != 8 && bit_depth != 16)
        throw std::runtime_error("read_png: only 8/16-bit depth supported");

    int src_channels;
    switch (color_type) {
        case 0: src_channels = 1; break;
        case 2: src_channels = 3; break;
        case 4: src_channels = 2; break;
        case 6: src_channels = 4; break;
        default: throw std::runtime_error("read_png: palette/unknown color type unsupported");
    }

    const int bytes_per_sample = bit_depth / 8;
    const size_t stride = static_cast<size_t>(width) * src_channels * bytes_per_sample;
    std::string raw(static_cast<size_t>(height) * (stride + 1), '\0');
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw std::runtime_error("read_png: inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(idat.data());
    zs.avail_in = static_cast<uInt>(idat.size());
    zs.next_out = reinterpret_cast<Bytef*>(raw.data());
    zs.avail_out = static_cast<uInt>(raw.size());
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw std::runtime_error("read_png: corrupt image data");

    // reverse per-scanline filters in place
    const int bpp = src_channels * bytes_per_sample;
    std::vector<uint8_t> prev(stride, 0), cur(stride);
    std::vector<uint8_t> pixels;
    pixels.reserve(static_cast<size_t>(height) * stride);
    for (int y = 0; y < height; ++y) {
        uint8_t filter = uint8_t(raw[static_cast<size_t>(y) * (stride + 1)]);
        const uint8_t* line =
            reinterpret_cast<const uint8_t*>(raw.data() + static_cast<size_t>(y) * (stride + 1) + 1);
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= size_t(bpp) ? cur[i - bpp] : 0;
            int b = prev[i];
            int c = i >= size_t(bpp) ? prev[i - bpp] : 0;
            int x = line[i];
            switch (filter) {
                case 0: break;
                case 1: x += a; break;
                case 2: x += b; break;
                case 3: x += (a + b) / 2; break;
                case 4: x += paeth(a, b, c); break;
                default: throw std::runtime_error("read_png: bad filter type");
            }
            cur[i] = uint8_t(x & 0xff);
        }
        pixels.insert(pixels.end(), cur.begin(), cur.end());
        std::swap(prev, cur);
    }

    const int out_channels = src_channels >= 3 ? 3 : 1;
    Image img(height, width, out_channels);
    const double scale = bit_depth == 8 ? 1.0 / 255.0 : 1.0 / 65535.0;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int ch = 0; ch < out_channels; ++ch) {
                size_t off = (static_cast<size_t>(y) * width + x) * src_channels * bytes_per_sample +
                             static_cast<size_t>(ch) * bytes_per_sample;
                uint32_t v = pixels[off];
                if (bytes_per_sample == 2) v = (v << 8) | pixels[off + 1];
                img.at(y, x, ch) = v * scale;
            }
    return img;
}

}  // namespace diffmark
