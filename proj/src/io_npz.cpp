#include "diffmark/io_npz.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace diffmark {

namespace {

// Fixed DOS timestamp (1980-01-01) keeps archives byte-identical across runs.
constexpr uint16_t kDosTime = 0;
constexpr uint16_t kDosDate = 0x21;

void put16(std::string& out, uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8));
}
void put32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

uint16_t get16(const std::string& s, size_t off) {
    return uint16_t(uint8_t(s[off])) | (uint16_t(uint8_t(s[off + 1])) << 8);
}
uint32_t get32(const std::string& s, size_t off) {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | uint8_t(s[off + i]);
    return v;
}

std::string npy_encode(const void* data, size_t byte_len, const char* descr,
                       const std::vector<size_t>& shape) {
    std::ostringstream header;
    header << "{'descr': '" << descr << "', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < shape.size(); ++i) header << shape[i] << (shape.size() == 1 ? "," : (i + 1 < shape.size() ? ", " : ""));
    header << "), }";
    std::string h = header.str();
    size_t unpadded = 10 + h.size() + 1;
    size_t pad = (64 - unpadded % 64) % 64;
    h.append(pad, ' ');
    h.push_back('\n');

    std::string out;
    out.reserve(10 + h.size() + byte_len);
    out += "\x93NUMPY";
    out.push_back(1);
    out.push_back(0);
    put16(out, uint16_t(h.size()));
    out += h;
    out.append(static_cast<const char*>(data), byte_len);
    return out;
}

struct NpyHeader {
    std::string descr;
    std::vector<size_t> shape;
    size_t data_offset = 0;
};

NpyHeader npy_parse_header(const std::string& bytes, const std::string& name) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
        throw std::runtime_error("npz: member " + name + " is not an NPY array");
    uint8_t major = uint8_t(bytes[6]);
    size_t header_len, header_off;
    if (major == 1) {
        header_len = get16(bytes, 8);
        header_off = 10;
    } else {
        header_len = get32(bytes, 8);
        header_off = 12;
    }
    std::string h = bytes.substr(header_off, header_len);

    NpyHeader out;
    out.data_offset = header_off + header_len;
    size_t dp = h.find("'descr'");
    if (dp == std::string::npos) throw std::runtime_error("npz: bad NPY header in " + name);
    size_t q1 = h.find('\'', dp + 7) + 1;
    size_t q2 = h.find('\'', q1);
    out.descr = h.substr(q1, q2 - q1);

    size_t sp = h.find("'shape'");
    size_t p1 = h.find('(', sp);
    size_t p2 = h.find(')', p1);
    std::string tup = h.substr(p1 + 1, p2 - p1 - 1);
    std::istringstream ts(tup);
    std::string tok;
    while (std::getline(ts, tok, ',')) {
        std::string trimmed;
        for (char c : tok)
            if (!isspace(static_cast<unsigned char>(c))) trimmed += c;
        if (!trimmed.empty()) out.shape.push_back(std::stoull(trimmed));
    }
    if (h.find("'fortran_order': True") != std::string::npos)
        throw std::runtime_error("npz: fortran-order arrays unsupported (" + name + ")");
    return out;
}

std::string inflate_bytes(const std::string& compressed, size_t expected) {
    std::string out(expected, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw std::runtime_error("npz: inflateInit failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
    zs.avail_in = static_cast<uInt>(compressed.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw std::runtime_error("npz: inflate failed");
    return out;
}

}  // namespace

void NpzWriter::add_array(const std::string& name, const std::vector<double>& data,
                          const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t s : shape) n *= s;
    if (n != data.size()) throw std::invalid_argument("NpzWriter: shape does not match data size");
    entries_.push_back({name + ".npy", npy_encode(data.data(), data.size() * 8, "<f8", shape)});
}

void NpzWriter::add_array_f32(const std::string& name, const std::vector<float>& data,
                              const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t s : shape) n *= s;
    if (n != data.size()) throw std::invalid_argument("NpzWriter: shape does not match data size");
    entries_.push_back({name + ".npy", npy_encode(data.data(), data.size() * 4, "<f4", shape)});
}

void NpzWriter::add_raw(const std::string& name, const std::string& bytes) {
    entries_.push_back({name, bytes});
}

void NpzWriter::write(const std::string& path) const {
    std::string out;
    std::string central;
    uint16_t count = 0;
    for (const Entry& e : entries_) {
        uint32_t crc = crc32(0L, reinterpret_cast<const Bytef*>(e.bytes.data()),
                             static_cast<uInt>(e.bytes.size()));
        uint32_t offset = uint32_t(out.size());
        // local file header, method 0 (stored)
        put32(out, 0x04034b50);
        put16(out, 20);
        put16(out, 0);
        put16(out, 0);
        put16(out, kDosTime);
        put16(out, kDosDate);
        put32(out, crc);
        put32(out, uint32_t(e.bytes.size()));
        put32(out, uint32_t(e.bytes.size()));
        put16(out, uint16_t(e.name.size()));
        put16(out, 0);
        out += e.name;
        out += e.bytes;

        put32(central, 0x02014b50);
        put16(central, 20);
        put16(central, 20);
        put16(central, 0);
        put16(central, 0);
        put16(central, kDosTime);
        put16(central, kDosDate);
        put32(central, crc);
        put32(central, uint32_t(e.bytes.size()));
        put32(central, uint32_t(e.bytes.size()));
        put16(central, uint16_t(e.name.size()));
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put16(central, 0);
        put32(central, 0);
        put32(central, offset);
        central += e.name;
        ++count;
    }
    uint32_t central_offset = uint32_t(out.size());
    out += central;
    put32(out, 0x06054b50);
    put16(out, 0);
    put16(out, 0);
    put16(out, count);
    put16(out, count);
    put32(out, uint32_t(central.size()));
    put32(out, central_offset);
    put16(out, 0);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("NpzWriter: cannot open " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("NpzWriter: short write to " + path);
}

NpzReader::NpzReader(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("NpzReader: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string buf = ss.str();

    // locate EOCD (no archive comment support needed for our files, but scan
    // backwards a little to be tolerant)
    if (buf.size() < 22) throw std::runtime_error("NpzReader: " + path + " too small for a zip");
    size_t eocd = std::string::npos;
    size_t scan_from = buf.size() >= 22 + 512 ? buf.size() - 22 - 512 : 0;
    for (size_t i = buf.size() - 22 + 1; i-- > scan_from;) {
        if (get32(buf, i) == 0x06054b50) {
            eocd = i;
            break;
        }
    }
    if (eocd == std::string::npos) throw std::runtime_error("NpzReader: no zip directory in " + path);
    uint16_t count = get16(buf, eocd + 10);
    size_t central = get32(buf, eocd + 16);

    size_t pos = central;
    for (uint16_t i = 0; i < count; ++i) {
        if (get32(buf, pos) != 0x02014b50) throw std::runtime_error("NpzReader: corrupt central directory");
        uint16_t method = get16(buf, pos + 10);
        uint32_t csize = get32(buf, pos + 20);
        uint32_t usize = get32(buf, pos + 24);
        uint16_t name_len = get16(buf, pos + 28);
        uint16_t extra_len = get16(buf, pos + 30);
        uint16_t comment_len = get16(buf, pos + 32);
        uint32_t local_off = get32(buf, pos + 42);
        std::string name = buf.substr(pos + 46, name_len);
        pos += 46 + name_len + extra_len + comment_len;

        uint16_t lname = get16(buf, local_off + 26);
        uint16_t lextra = get16(buf, local_off + 28);
        size_t data_off = local_off + 30 + lname + lextra;
        std::string payload = buf.substr(data_off, csize);
        if (method == 8)
            payload = inflate_bytes(payload, usize);
        else if (method != 0)
            throw std::runtime_error("NpzReader: unsupported compression method in " + name);
        members_[name] = std::move(payload);
    }
}

std::vector<std::string> NpzReader::names() const {
    std::vector<std::string> out;
    out.reserve(members_.size());
    for (const auto& [name, _] : members_) out.push_back(name);
    return out;
}

NpyArray NpzReader::array(const std::string& name) const {
    auto it = members_.find(name);
    if (it == members_.end()) it = members_.find(name + ".npy");
    if (it == members_.end()) throw std::runtime_error("NpzReader: no member named " + name);

    NpyHeader h = npy_parse_header(it->second, name);
    NpyArray arr;
    arr.shape = h.shape;
    size_t n = arr.element_count();
    arr.data.resize(n);
    const char* p = it->second.data() + h.data_offset;
    size_t avail = it->second.size() - h.data_offset;
    auto need = [&](size_t bytes) {
        if (avail < bytes) throw std::runtime_error("NpzReader: truncated array " + name);
    };
    if (h.descr == "<f8") {
        need(n * 8);
        std::memcpy(arr.data.data(), p, n * 8);
    } else if (h.descr == "<f4") {
        need(n * 4);
        for (size_t i = 0; i < n; ++i) {
            float v;
            std::memcpy(&v, p + i * 4, 4);
            arr.data[i] = v;
        }
    } else if (h.descr == "|u1") {
        need(n);
        for (size_t i = 0; i < n; ++i) arr.data[i] = uint8_t(p[i]);
    } else if (h.descr == "<i8") {
        need(n * 8);
        for (size_t i = 0; i < n; ++i) {
            int64_t v;
            std::memcpy(&v, p + i * 8, 8);
            arr.data[i] = static_cast<double>(v);
        }
    } else {
        throw std::runtime_error("NpzReader: unsupported dtype " + h.descr + " in " + name);
    }
    return arr;
}

std::string NpzReader::raw(const std::string& name) const {
    auto it = members_.find(name);
    if (it == members_.end()) throw std::runtime_error("NpzReader: no member named " + name);
    return it->second;
}

}  // namespace diffmark
