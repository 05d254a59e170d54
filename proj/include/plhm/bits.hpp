#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace plhm {

// Bitmaps and packed symbols are little-endian at every level: bit i of a
// bitmap lives in byte i/8 at bit position i%8, and multi-bit symbols are
// appended least-significant-bit first.

inline bool bitmap_get(const std::vector<uint8_t>& bm, size_t i) {
    return (bm[i >> 3] >> (i & 7)) & 1;
}

inline void bitmap_set(std::vector<uint8_t>& bm, size_t i, bool v) {
    if (v)
        bm[i >> 3] |= static_cast<uint8_t>(1u << (i & 7));
    else
        bm[i >> 3] &= static_cast<uint8_t>(~(1u << (i & 7)));
}

inline size_t bitmap_bytes(size_t bits) { return (bits + 7) / 8; }

class BitWriter {
public:
    void put(uint32_t value, unsigned bits) {
        for (unsigned b = 0; b < bits; ++b) {
            if (pos_ == 0) bytes_.push_back(0);
            bytes_.back() |= static_cast<uint8_t>(((value >> b) & 1u) << pos_);
            pos_ = (pos_ + 1) & 7;
        }
    }
    void align() { pos_ = 0; }
    const std::vector<uint8_t>& bytes() const { return bytes_; }

private:
    std::vector<uint8_t> bytes_;
    unsigned pos_ = 0;
};

class BitReader {
public:
    BitReader(const uint8_t* data, size_t size) : data_(data), size_(size) {}
    uint32_t get(unsigned bits) {
        uint32_t v = 0;
        for (unsigned b = 0; b < bits; ++b) {
            if (byte_ >= size_) throw std::out_of_range("bit stream truncated");
            v |= static_cast<uint32_t>((data_[byte_] >> pos_) & 1u) << b;
            if (++pos_ == 8) {
                pos_ = 0;
                ++byte_;
            }
        }
        return v;
    }
    void align() {
        if (pos_ != 0) {
            pos_ = 0;
            ++byte_;
        }
    }
    size_t byte_offset() const { return byte_ + (pos_ ? 1 : 0); }

private:
    const uint8_t* data_;
    size_t size_;
    size_t byte_ = 0;
    unsigned pos_ = 0;
};

inline unsigned bits_per_symbol(uint32_t q) {
    unsigned b = 0;
    uint32_t v = q - 1;
    while (v > 0) {
        ++b;
        v >>= 1;
    }
    return b == 0 ? 1 : b;
}

// CRC-32 (reflected, polynomial 0xEDB88320), as in zlib.
inline uint32_t crc32_bytes(const uint8_t* data, size_t n, uint32_t crc = 0) {
    crc = ~crc;
    for (size_t i = 0; i < n; ++i) {
        crc ^= data[i];
        for (int b = 0; b < 8; ++b) {
            crc = (crc >> 1) ^ (0xEDB88320u & (~(crc & 1u) + 1u));
        }
    }
    return ~crc;
}

inline void put_u16le(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f64le(std::vector<uint8_t>& out, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64le(out, v);
}

}  // namespace plhm
