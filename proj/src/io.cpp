#include "plhm/io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "plhm/bits.hpp"

namespace plhm {

namespace {

using json = nlohmann::json;

std::vector<double> flat_rows(const json& rows, size_t nr, size_t nc, const char* what) {
    if (!rows.is_array() || rows.size() != nr)
        throw std::runtime_error(std::string("model: ") + what + " must have one row per state");
    std::vector<double> out;
    out.reserve(nr * nc);
    for (const auto& row : rows) {
        if (!row.is_array() || row.size() != nc)
            throw std::runtime_error(std::string("model: bad row width in ") + what);
        for (const auto& x : row) {
            if (!x.is_number()) throw std::runtime_error(std::string("model: non-number in ") + what);
            out.push_back(x.get<double>());
        }
    }
    return out;
}

json nested_rows(const std::vector<double>& flat, size_t nr, size_t nc) {
    json rows = json::array();
    for (size_t r = 0; r < nr; ++r) {
        json row = json::array();
        for (size_t c = 0; c < nc; ++c) row.push_back(flat[r * nc + c]);
        rows.push_back(std::move(row));
    }
    return rows;
}

json model_json_object(const HiddenMarkovSource& src) {
    const size_t ell = src.chain.ell;
    json j;
    j["q"] = src.mod.q;
    j["states"] = ell;
    j["transition"] = nested_rows(src.chain.transition, ell, ell);
    j["initial"] = src.chain.initial;
    j["emissions"] = nested_rows(src.emissions, ell, src.mod.q);
    if (src.declared_mixing_time) j["mixing_time"] = *src.declared_mixing_time;
    j["name"] = src.name;
    return j;
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

struct ByteReader {
    const std::vector<uint8_t>& b;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > b.size()) throw std::runtime_error("file truncated");
    }
    uint8_t u8() {
        need(1);
        return b[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::vector<uint8_t> bytes(size_t n) {
        need(n);
        std::vector<uint8_t> out(b.begin() + pos, b.begin() + pos + n);
        pos += n;
        return out;
    }
    void magic(const char* m4) {
        need(4);
        if (std::memcmp(b.data() + pos, m4, 4) != 0)
            throw std::runtime_error(std::string("bad magic, expected ") + m4);
        pos += 4;
    }
};

void put_magic(std::vector<uint8_t>& out, const char* m4) {
    out.insert(out.end(), m4, m4 + 4);
}

void put_symbol_array(std::vector<uint8_t>& out, const std::vector<uint16_t>& v) {
    put_u32le(out, static_cast<uint32_t>(v.size()));
    for (uint16_t s : v) put_u16le(out, s);
}

std::vector<uint16_t> get_symbol_array(ByteReader& rd) {
    uint32_t n = rd.u32();
    std::vector<uint16_t> v(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = rd.u16();
    return v;
}

uint32_t checked_power(uint32_t k, uint32_t t) {
    uint64_t m = 1;
    for (uint32_t i = 0; i < t; ++i) {
        m *= k;
        if (m > (uint64_t(1) << 20)) throw std::runtime_error("transform size k^t too large");
    }
    return static_cast<uint32_t>(m);
}

}  // namespace

HiddenMarkovSource parse_model_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model: invalid json: ") + e.what());
    }
    if (!j.is_object()) throw std::runtime_error("model: expected a json object");
    for (const char* key : {"q", "states", "transition", "initial", "emissions"})
        if (!j.contains(key)) throw std::runtime_error(std::string("model: missing field ") + key);

    HiddenMarkovSource src;
    if (!j["q"].is_number_unsigned()) throw std::runtime_error("model: q must be a positive integer");
    src.mod = FieldModulus(j["q"].get<uint32_t>());
    if (!j["states"].is_number_unsigned() || j["states"].get<uint64_t>() == 0 ||
        j["states"].get<uint64_t>() > 4096)
        throw std::runtime_error("model: states must be in [1, 4096]");
    const size_t ell = j["states"].get<size_t>();
    src.chain.ell = ell;
    src.chain.transition = flat_rows(j["transition"], ell, ell, "transition");
    if (!j["initial"].is_array() || j["initial"].size() != ell)
        throw std::runtime_error("model: initial must have one entry per state");
    src.chain.initial = j["initial"].get<std::vector<double>>();
    src.emissions = flat_rows(j["emissions"], ell, src.mod.q, "emissions");
    if (j.contains("mixing_time") && !j["mixing_time"].is_null()) {
        if (!j["mixing_time"].is_number()) throw std::runtime_error("model: mixing_time must be a number");
        src.declared_mixing_time = j["mixing_time"].get<double>();
    }
    if (j.contains("name")) {
        if (!j["name"].is_string()) throw std::runtime_error("model: name must be a string");
        src.name = j["name"].get<std::string>();
    }
    validate_source(src);
    return src;
}

std::string model_to_json(const HiddenMarkovSource& src, bool pretty) {
    json j = model_json_object(src);
    return pretty ? j.dump(2) + "\n" : j.dump();
}

uint64_t model_hash(const HiddenMarkovSource& src) {
    return fnv1a64(model_json_object(src).dump());
}

std::vector<uint8_t> encode_sets(const SetsFile& f) {
    validate_sets(f.sets);
    std::vector<uint8_t> out;
    put_magic(out, "PLHS");
    out.push_back(1);
    put_u16le(out, f.meta.q);
    out.push_back(f.meta.k);
    out.push_back(f.meta.t);
    put_f64le(out, f.sets.epsilon);
    put_f64le(out, f.meta.threshold);
    put_f64le(out, f.meta.gamma);
    put_u32le(out, f.meta.samples);
    put_u64le(out, f.meta.seed);
    put_u64le(out, f.meta.model_hash);
    for (const auto& bm : f.sets.bitmaps) out.insert(out.end(), bm.begin(), bm.end());
    return out;
}

SetsFile decode_sets(const std::vector<uint8_t>& bytes) {
    ByteReader rd{bytes};
    rd.magic("PLHS");
    uint8_t ver = rd.u8();
    if (ver != 1) throw std::runtime_error("sets file: unsupported version");
    SetsFile f;
    f.meta.q = rd.u16();
    f.meta.k = rd.u8();
    f.meta.t = rd.u8();
    if (f.meta.k < 2) throw std::runtime_error("sets file: bad kernel size");
    const uint32_t m = checked_power(f.meta.k, f.meta.t);
    f.meta.epsilon = rd.f64();
    f.meta.threshold = rd.f64();
    f.meta.gamma = rd.f64();
    f.meta.samples = rd.u32();
    f.meta.seed = rd.u64();
    f.meta.model_hash = rd.u64();
    f.sets = SelectionSets(m, f.meta.epsilon);
    for (uint32_t j = 0; j < m; ++j) f.sets.bitmaps[j] = rd.bytes(bitmap_bytes(m));
    if (rd.pos != bytes.size()) throw std::runtime_error("sets file: trailing bytes");
    validate_sets(f.sets);
    return f;
}

std::vector<uint8_t> encode_payload(const CompressedPayload& p) {
    std::vector<uint8_t> out;
    put_magic(out, "PLHM");
    out.push_back(1);
    put_u16le(out, p.q);
    out.push_back(p.k);
    out.push_back(p.t);
    put_f64le(out, p.epsilon);
    out.push_back(p.flags);
    put_u64le(out, p.model_hash);
    const uint32_t m = p.m();
    const uint32_t jstar = p.jstar();
    const unsigned bits = bits_per_symbol(p.q);
    if (p.bitmaps.size() != jstar || p.columns.size() != m)
        throw std::runtime_error("payload: inconsistent column counts");
    for (uint32_t j = 0; j < m; ++j) {
        if (j < jstar) out.insert(out.end(), p.bitmaps[j].begin(), p.bitmaps[j].end());
        BitWriter bw;
        for (uint16_t s : p.columns[j]) bw.put(s, bits);
        out.insert(out.end(), bw.bytes().begin(), bw.bytes().end());
    }
    if (p.has_crc()) put_u32le(out, p.crc);
    return out;
}

CompressedPayload decode_payload(const std::vector<uint8_t>& bytes) {
    ByteReader rd{bytes};
    rd.magic("PLHM");
    uint8_t ver = rd.u8();
    if (ver != 1) throw std::runtime_error("payload: unsupported version");
    CompressedPayload p;
    p.q = rd.u16();
    p.k = rd.u8();
    p.t = rd.u8();
    if (p.q < 2 || p.k < 2) throw std::runtime_error("payload: bad field or kernel size");
    p.epsilon = rd.f64();
    if (!(p.epsilon > 0) || !(p.epsilon < 1)) throw std::runtime_error("payload: bad epsilon");
    p.flags = rd.u8();
    p.model_hash = rd.u64();
    const uint32_t m = checked_power(p.k, p.t);
    const uint32_t jstar = p.jstar();
    const unsigned bits = bits_per_symbol(p.q);
    p.bitmaps.resize(jstar);
    p.columns.resize(m);
    for (uint32_t j = 0; j < m; ++j) {
        size_t count = m;
        if (j < jstar) {
            p.bitmaps[j] = rd.bytes(bitmap_bytes(m));
            count = 0;
            for (uint32_t i = 0; i < m; ++i)
                if (bitmap_get(p.bitmaps[j], i)) ++count;
        }
        auto packed = rd.bytes((count * bits + 7) / 8);
        BitReader br(packed.data(), packed.size());
        p.columns[j].resize(count);
        for (size_t i = 0; i < count; ++i) {
            uint32_t s = br.get(bits);
            if (s >= p.q) throw std::runtime_error("payload: symbol out of range");
            p.columns[j][i] = static_cast<uint16_t>(s);
        }
    }
    if (p.has_crc()) p.crc = rd.u32();
    if (rd.pos != bytes.size()) throw std::runtime_error("payload: trailing bytes");
    return p;
}

std::vector<uint8_t> encode_transcript(const ChannelTranscript& tr) {
    std::vector<uint8_t> out;
    put_magic(out, "PLHT");
    out.push_back(1);
    put_u16le(out, tr.q);
    put_u64le(out, tr.model_hash);
    put_symbol_array(out, tr.x);
    put_symbol_array(out, tr.c);
    put_symbol_array(out, tr.y);
    put_symbol_array(out, tr.z);
    return out;
}

ChannelTranscript decode_transcript(const std::vector<uint8_t>& bytes) {
    ByteReader rd{bytes};
    rd.magic("PLHT");
    uint8_t ver = rd.u8();
    if (ver != 1) throw std::runtime_error("transcript: unsupported version");
    ChannelTranscript tr;
    tr.q = rd.u16();
    tr.model_hash = rd.u64();
    tr.x = get_symbol_array(rd);
    tr.c = get_symbol_array(rd);
    tr.y = get_symbol_array(rd);
    tr.z = get_symbol_array(rd);
    if (rd.pos != bytes.size()) throw std::runtime_error("transcript: trailing bytes");
    return tr;
}

std::vector<uint8_t> encode_symbols(const std::vector<uint16_t>& syms) {
    std::vector<uint8_t> out;
    out.reserve(syms.size() * 2);
    for (uint16_t s : syms) put_u16le(out, s);
    return out;
}

std::vector<uint16_t> decode_symbols(const std::vector<uint8_t>& bytes) {
    if (bytes.size() % 2 != 0) throw std::runtime_error("symbol file has odd length");
    std::vector<uint16_t> out(bytes.size() / 2);
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("error reading " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("error writing " + path);
}

std::string read_text_file(const std::string& path) {
    auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << text;
    if (!out) throw std::runtime_error("error writing " + path);
}

}  // namespace plhm
