#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace haptix {

// Little-endian length-checked binary streams for the codec and checkpoint
// formats. Doubles are written as their raw IEEE-754 bit patterns so a
// save/load cycle is bit-exact.
class BinaryWriter {
public:
    void bytes(const void* p, size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void i32(int32_t v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void f64s(const double* p, size_t n) { bytes(p, n * sizeof(double)); }

    const std::vector<unsigned char>& data() const { return buf_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw std::runtime_error("cannot write " + path.string());
        }
        out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
        if (!out) {
            throw std::runtime_error("short write to " + path.string());
        }
    }

private:
    std::vector<unsigned char> buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::vector<unsigned char> data) : buf_(std::move(data)) {}

    static BinaryReader load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw std::runtime_error("cannot open " + path.string());
        }
        std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinaryReader(std::move(data));
    }

    void bytes(void* p, size_t n) {
        if (pos_ + n > buf_.size()) {
            throw std::runtime_error("unexpected end of binary data");
        }
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint8_t u8() { uint8_t v; bytes(&v, 1); return v; }
    uint32_t u32() { uint32_t v; bytes(&v, 4); return v; }
    uint64_t u64() { uint64_t v; bytes(&v, 8); return v; }
    int32_t i32() { int32_t v; bytes(&v, 4); return v; }
    double f64() { double v; bytes(&v, 8); return v; }
    std::string str() {
        const uint32_t n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void f64s(double* p, size_t n) { bytes(p, n * sizeof(double)); }

    void expect_magic(const std::string& magic) {
        std::string got(magic.size(), '\0');
        bytes(got.data(), got.size());
        if (got != magic) {
            throw std::runtime_error("bad file magic, expected " + magic);
        }
    }

    bool at_end() const { return pos_ == buf_.size(); }

private:
    std::vector<unsigned char> buf_;
    size_t pos_ = 0;
};

} // namespace haptix
