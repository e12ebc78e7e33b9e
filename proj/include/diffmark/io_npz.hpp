#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace diffmark {

// Named-array container: a ZIP of NPY members plus optional raw members
// (meta.json and friends). Entries are stored uncompressed with constant
// timestamps so identical content yields identical bytes. numpy's load()
// reads these files directly; deflate-compressed members from other writers
// are handled on read.
class NpzWriter {
  public:
    void add_array(const std::string& name, const std::vector<double>& data,
                   const std::vector<size_t>& shape);
    void add_array_f32(const std::string& name, const std::vector<float>& data,
                       const std::vector<size_t>& shape);
    void add_raw(const std::string& name, const std::string& bytes);
    void write(const std::string& path) const;

  private:
    struct Entry {
        std::string name;
        std::string bytes;
    };
    std::vector<Entry> entries_;
};

struct NpyArray {
    std::vector<size_t> shape;
    std::vector<double> data;  // converted to double regardless of on-disk dtype

    size_t element_count() const {
        size_t n = 1;
        for (size_t s : shape) n *= s;
        return n;
    }
};

class NpzReader {
  public:
    explicit NpzReader(const std::string& path);

    bool has(const std::string& name) const { return members_.count(name) > 0; }
    std::vector<std::string> names() const;
    NpyArray array(const std::string& name) const;  // name without .npy suffix also accepted
    std::string raw(const std::string& name) const;

  private:
    std::map<std::string, std::string> members_;  // name -> decompressed bytes
};

}  // namespace diffmark
