#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace diffmark {

// Incremental SHA-256 (FIPS 180-4). Used for schedule fingerprints, config
// hashes and manifest artifact hashes.
class Sha256 {
  public:
    Sha256();
    void update(const void* data, size_t len);
    std::string hex_digest();  // finalizes; do not update() afterwards

  private:
    void process_block(const uint8_t* block);
    uint32_t state_[8];
    uint64_t total_len_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
    bool finalized_ = false;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& text);
std::string sha256_file_hex(const std::string& path);

}  // namespace diffmark
