#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "diffmark/dataset.hpp"
#include "diffmark/io_npz.hpp"
#include "diffmark/io_png.hpp"
#include "diffmark/rng.hpp"

using namespace diffmark;

namespace {

void write_idx(const std::string& path, const std::vector<unsigned char>& header_and_payload) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(header_and_payload.data()),
            std::streamsize(header_and_payload.size()));
}

std::vector<unsigned char> idx_bytes(uint32_t n, uint32_t h, uint32_t w, bool truncate = false,
                                     bool excess = false, unsigned char magic3 = 0x03) {
    std::vector<unsigned char> b{0x00, 0x00, 0x08, magic3};
    for (uint32_t v : {n, h, w})
        for (int i = 3; i >= 0; --i) b.push_back((v >> (8 * i)) & 0xff);
    size_t payload = size_t(n) * h * w;
    if (truncate) payload -= 3;
    for (size_t i = 0; i < payload; ++i) b.push_back((unsigned char)(i * 7 % 256));
    if (excess) b.push_back(0xff);
    return b;
}

}  // namespace

TEST_CASE("idx loader: header arithmetic and endpoint pixel mapping") {
    write_idx("t.idx", idx_bytes(10, 28, 28));
    ImageBatch images = load_idx_dataset("t.idx");
    REQUIRE(images.size() == 10);
    CHECK(images[0].height == 28);
    CHECK(images[0].width == 28);

    // independent minimal parser: re-read the file bytes directly
    std::ifstream f("t.idx", std::ios::binary);
    f.seekg(16);
    unsigned char byte0;
    f.read(reinterpret_cast<char*>(&byte0), 1);
    CHECK(images[0].data[0] == doctest::Approx(byte0 / 127.5 - 1.0).epsilon(1e-15));
    std::remove("t.idx");

    // endpoint mapping: 255 -> 1, 0 -> -1
    std::vector<unsigned char> small{0x00, 0x00, 0x08, 0x03};
    for (uint32_t v : {1u, 1u, 2u})
        for (int i = 3; i >= 0; --i) small.push_back((v >> (8 * i)) & 0xff);
    small.push_back(255);
    small.push_back(0);
    write_idx("t2.idx", small);
    ImageBatch two = load_idx_dataset("t2.idx");
    CHECK(two[0].data[0] == 1.0);
    CHECK(two[0].data[1] == -1.0);
    std::remove("t2.idx");
}

TEST_CASE("idx loader: distinct diagnostics for each malformation") {
    write_idx("bad_magic.idx", idx_bytes(2, 4, 4, false, false, 0x01));
    CHECK_THROWS_WITH_AS(load_idx_dataset("bad_magic.idx"), doctest::Contains("magic"),
                         std::runtime_error);
    std::remove("bad_magic.idx");

    write_idx("trunc.idx", idx_bytes(2, 4, 4, true));
    CHECK_THROWS_WITH_AS(load_idx_dataset("trunc.idx"), doctest::Contains("truncated"),
                         std::runtime_error);
    std::remove("trunc.idx");

    write_idx("excess.idx", idx_bytes(2, 4, 4, false, true));
    CHECK_THROWS_WITH_AS(load_idx_dataset("excess.idx"), doctest::Contains("larger"),
                         std::runtime_error);
    std::remove("excess.idx");

    CHECK_THROWS(load_idx_dataset("does_not_exist.idx"));
}

TEST_CASE("idx loader: real MNIST when present (skipped otherwise)") {
    const char* path = std::getenv("MNIST_TRAIN_IMAGES");
    if (!path) return;  // desk environments rarely carry the corpus
    ImageBatch mnist = load_idx_dataset(path);
    CHECK(mnist.size() == 60000);
    CHECK(mnist[0].height == 28);
}

TEST_CASE("npz round trip: f8, f4 and raw members") {
    NpzWriter w;
    std::vector<double> a{1.0, -2.5, 3.25, 0.0, 1e-12, 4e8};
    w.add_array("alpha", a, {2, 3});
    std::vector<float> b{0.5f, -1.5f};
    w.add_array_f32("features", b, {2, 1});
    w.add_raw("meta.json", "{\"extractor_id\": \"test\"}");
    w.write("t.npz");

    NpzReader r("t.npz");
    CHECK(r.has("alpha.npy"));
    NpyArray arr = r.array("alpha");
    REQUIRE(arr.shape == std::vector<size_t>{2, 3});
    CHECK(arr.data == a);
    NpyArray f32 = r.array("features");
    CHECK(f32.data[0] == 0.5);
    CHECK(f32.data[1] == -1.5);
    CHECK(r.raw("meta.json") == "{\"extractor_id\": \"test\"}");
    CHECK_THROWS(r.array("missing"));
    std::remove("t.npz");
}

TEST_CASE("npz writes are byte-stable across runs") {
    auto build = [](const std::string& path) {
        NpzWriter w;
        w.add_array("x", {1.0, 2.0, 3.0}, {3});
        w.add_raw("meta.json", "{}");
        w.write(path);
    };
    build("s1.npz");
    build("s2.npz");
    std::ifstream f1("s1.npz", std::ios::binary), f2("s2.npz", std::ios::binary);
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
    std::remove("s1.npz");
    std::remove("s2.npz");
}

TEST_CASE("png round trip: grayscale and rgb") {
    Rng rng(9);
    Image gray(13, 17, 1);
    for (double& v : gray.data) v = rng.uniform();
    write_png("t_gray.png", gray);
    Image back = read_png("t_gray.png");
    REQUIRE(back.same_shape(gray));
    for (size_t i = 0; i < gray.size(); ++i)
        CHECK(std::abs(back.data[i] - gray.data[i]) <= 0.5 / 255.0 + 1e-9);
    std::remove("t_gray.png");

    Image rgb(8, 9, 3);
    for (double& v : rgb.data) v = rng.uniform();
    write_png("t_rgb.png", rgb);
    Image rgb_back = read_png("t_rgb.png");
    REQUIRE(rgb_back.same_shape(rgb));
    for (size_t i = 0; i < rgb.size(); ++i)
        CHECK(std::abs(rgb_back.data[i] - rgb.data[i]) <= 0.5 / 255.0 + 1e-9);
    std::remove("t_rgb.png");

    CHECK_THROWS(read_png("missing.png"));
}

TEST_CASE("synthetic dataset: determinism and foreground fraction oracle") {
    ImageBatch a = make_synthetic_dataset(64, 16, SyntheticKind::blobs, 7);
    ImageBatch b = make_synthetic_dataset(64, 16, SyntheticKind::blobs, 7);
    REQUIRE(a.size() == 64);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].data == b[i].data);

    // direct pixel-count oracle: foreground = strictly positive values
    for (const Image& img : a) {
        int fg = 0;
        for (double v : img.data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
            fg += v > 0.0;
        }
        double fraction = double(fg) / img.size();
        CHECK(fraction >= 0.05);
        CHECK(fraction <= 0.5);
    }

    ImageBatch strokes = make_synthetic_dataset(4, 16, SyntheticKind::digits_like, 9);
    for (const Image& img : strokes) {
        int fg = 0;
        for (double v : img.data) fg += v > 0.0;
        CHECK(fg > 0);
    }

    ImageBatch single = make_synthetic_dataset(1, 16, SyntheticKind::blobs, 3);
    CHECK(single.size() == 1);

    CHECK_THROWS(make_synthetic_dataset(4, 4, SyntheticKind::blobs, 1));
}
