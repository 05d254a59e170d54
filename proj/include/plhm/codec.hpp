#pragma once

#include <cstdint>
#include <vector>

#include "plhm/field.hpp"
#include "plhm/hmm.hpp"
#include "plhm/kernel.hpp"

namespace plhm {

// Per-column selected index sets. Column j < jstar() emits only the rows in
// its bitmap; every later column is emitted whole.
struct SelectionSets {
    uint32_t m = 0;
    double epsilon = 0;                          // in (0,1)
    std::vector<std::vector<uint8_t>> bitmaps;   // m bitmaps, ceil(m/8) bytes

    SelectionSets() = default;
    SelectionSets(uint32_t m_, double eps);

    uint32_t jstar() const;  // floor((1 - epsilon) * m)
    bool selected(uint32_t col, uint32_t row) const;
    void set_selected(uint32_t col, uint32_t row, bool v);
    void fill_column(uint32_t col);
    size_t column_count(uint32_t col) const;
    size_t total_selected() const;               // tail columns count as full
    double achieved_rate() const;                // total_selected / m^2

    bool operator==(const SelectionSets&) const = default;
};

// Throws when shape is off or a tail column is not full.
void validate_sets(const SelectionSets& s);

struct CompressedPayload {
    uint16_t q = 2;
    uint8_t k = 2;
    uint8_t t = 1;
    double epsilon = 0;
    uint8_t flags = 0;  // bit0: crc32 of the source matrix appended
    uint64_t model_hash = 0;
    std::vector<std::vector<uint8_t>> bitmaps;   // one per column j < jstar
    std::vector<std::vector<uint16_t>> columns;  // selected symbols / full tail columns
    uint32_t crc = 0;

    uint32_t m() const;
    uint32_t jstar() const;
    size_t total_symbols() const;
    bool has_crc() const { return flags & 1; }
};

// One marginal per coordinate of the column vector being decoded.
using ProductPrior = std::vector<std::vector<double>>;

// Holes in partially known vectors are -1.
using PartialVector = std::vector<int32_t>;

uint32_t matrix_crc(const FieldMatrix& Z);

// Column-wise transform, then per-column selection. Linear in Z for fixed
// sets (when crc is off).
CompressedPayload compress(const FieldMatrix& Z, const SelectionSets& sets,
                           const TensorTransform& tt, uint64_t model_hash = 0,
                           bool with_crc = false);

struct SCOracleResult {
    FieldVector u;
    bool zero_conditioning = false;
};

// Sequential decoding over the explicitly materialized joint law of
// U = M^(tensor t) Z. Coordinates are fixed in index order: known symbols are
// copied, holes take the argmax of the current conditional marginal (ties go
// to the smallest field element). Conditioning on a zero-probability known
// symbol is flagged; marginals from then on are uniform. Exponential-time
// test oracle, m <= 16.
SCOracleResult sc_decode_oracle(const ProductPrior& prior, const PartialVector& known,
                                const TensorTransform& tt);

// Product-prior successive-cancellation decoder, O(m log m * q^k * k).
// Returns zhat such that applying the transform to zhat reproduces the
// oracle's output exactly, for every input.
FieldVector fast_decode(const ProductPrior& prior, const PartialVector& known,
                        const TensorTransform& tt);

struct DecodeReport {
    FieldMatrix z;
    bool inference_ok = true;  // a forward step hit a zero-likelihood symbol
    bool crc_ok = true;        // meaningful only when the payload carries a crc
    bool ok() const { return inference_ok && crc_ok; }
};

// Column-by-column reconstruction: priors from one forward state per row,
// advanced once per decoded column; full tail columns are inverted directly.
DecodeReport decompress(const HiddenMarkovSource& src, const CompressedPayload& payload,
                        const SelectionSets& sets, const TensorTransform& tt);

struct ProbeReport {
    size_t trials = 0;
    size_t failures = 0;            // decoded matrix differs from the source matrix
    size_t inference_failures = 0;  // decoder reported a dead forward state
    double achieved_rate = 0;       // emitted symbols / n
    double failure_rate() const { return trials ? static_cast<double>(failures) / trials : 0; }
};

struct ProbeOptions {
    bool row_independent = false;  // sample m i.i.d. rows instead of one stream
    unsigned jobs = 1;
};

// Round-trip harness: sample, compress, decompress, compare to ground truth.
ProbeReport decompress_success_probe(const HiddenMarkovSource& src, const SelectionSets& sets,
                                     const TensorTransform& tt, size_t trials, uint64_t seed,
                                     const ProbeOptions& opts = {});

}  // namespace plhm
