#pragma once

#include <cstdint>
#include <string>

#include "diffmark/tensor.hpp"

namespace diffmark {

enum class SyntheticKind { blobs, digits_like };

// IDX image file (magic 00 00 08 03, big-endian dims) loaded with pixels
// mapped from [0,255] to [-1,1] by x/127.5 - 1. Bad magic, truncated payload
// and dimension mismatches each raise a distinct diagnostic.
ImageBatch load_idx_dataset(const std::string& path);

// Deterministic synthetic corpus in [-1,1] for desk-scale runs. `blobs`
// places one elongated soft blob per image in the upper-left region (so a
// bottom-right mark never merges with the subject); `digits_like` draws
// random strokes. size >= 8.
ImageBatch make_synthetic_dataset(int n, int size, SyntheticKind kind, uint64_t seed);

}  // namespace diffmark
