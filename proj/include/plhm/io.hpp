#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "plhm/codec.hpp"
#include "plhm/hmm.hpp"

namespace plhm {

// Model files are JSON: q, states, transition, initial, emissions, optional
// mixing_time, name. The hash is FNV-1a 64 over the canonical compact dump
// (sorted keys), so formatting and key order in the file do not matter.
HiddenMarkovSource parse_model_json(const std::string& text);
std::string model_to_json(const HiddenMarkovSource& src, bool pretty = true);
uint64_t model_hash(const HiddenMarkovSource& src);

// Selection-set files: "PLHS", version, field and transform shape, the
// preprocessing parameters that produced the sets, and one bitmap per column.
struct SetsFileMeta {
    uint16_t q = 2;
    uint8_t k = 2;
    uint8_t t = 1;
    double epsilon = 0;
    double threshold = 0;
    double gamma = 0;
    uint32_t samples = 0;
    uint64_t seed = 0;
    uint64_t model_hash = 0;
};

struct SetsFile {
    SetsFileMeta meta;
    SelectionSets sets;
};

std::vector<uint8_t> encode_sets(const SetsFile& f);
SetsFile decode_sets(const std::vector<uint8_t>& bytes);

// Payload files: "PLHM", version, header, then per column j < jstar a row
// bitmap followed by that column's selected symbols (bit-packed, one column
// per byte boundary), then the tail columns in full, then an optional crc.
std::vector<uint8_t> encode_payload(const CompressedPayload& p);
CompressedPayload decode_payload(const std::vector<uint8_t>& bytes);

// Channel transcripts: "PLHT", version, q, model hash, then message,
// codeword, noise, and received word as length-prefixed symbol arrays
// (empty until the corresponding stage has run).
struct ChannelTranscript {
    uint16_t q = 2;
    uint64_t model_hash = 0;
    std::vector<uint16_t> x, c, y, z;
};

std::vector<uint8_t> encode_transcript(const ChannelTranscript& tr);
ChannelTranscript decode_transcript(const std::vector<uint8_t>& bytes);

// Sequence files are headerless little-endian u16 symbols.
std::vector<uint8_t> encode_symbols(const std::vector<uint16_t>& syms);
std::vector<uint16_t> decode_symbols(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace plhm
