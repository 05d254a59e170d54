#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "plhm/codec.hpp"
#include "plhm/field.hpp"
#include "plhm/hmm.hpp"
#include "plhm/kernel.hpp"

namespace plhm {

// Additive-noise code built on the compressor: codewords are exactly the
// vectors whose compressed transform coordinates are all zero, so message
// symbols live in the unselected coordinates.
struct ChannelCode {
    uint32_t n = 0;  // block length, m*m symbols
    uint32_t r = 0;  // message length
    // (column, row) pairs in lexicographic order, one per message symbol
    std::vector<std::pair<uint32_t, uint32_t>> message_coords;

    ChannelCode(const SelectionSets& sets, const TensorTransform& tt);
};

// Zero the selected coordinates, place the message in the rest, and undo the
// column transform. Output has n symbols in time order.
FieldVector channel_encode(const ChannelCode& code, const SelectionSets& sets,
                           const TensorTransform& tt, const FieldVector& x);

// Add one sampled noise sequence to the codeword.
FieldVector channel_transmit(const FieldVector& c, const HiddenMarkovSource& noise, uint64_t seed);

struct ChannelDecodeResult {
    FieldVector x_hat;
    FieldVector y_hat;   // reconstructed noise sequence
    FieldVector c_hat;   // received minus reconstructed noise
    bool inference_ok = true;
};

// Compress the received word, run the source decoder to estimate the noise,
// subtract, and read the message coordinates back out of the transform.
ChannelDecodeResult channel_decode(const ChannelCode& code, const SelectionSets& sets,
                                   const TensorTransform& tt, const HiddenMarkovSource& noise,
                                   const FieldVector& z);

}  // namespace plhm
