#include "plhm/channel.hpp"

#include <stdexcept>

namespace plhm {

namespace {

FieldMatrix matrix_from_flat(const FieldVector& v, uint32_t m) {
    FieldMatrix Z(v.mod, m, m);
    for (uint32_t i = 0; i < m; ++i)
        for (uint32_t j = 0; j < m; ++j) Z.at(i, j) = v.v[static_cast<size_t>(i) * m + j];
    return Z;
}

FieldVector flatten(const FieldMatrix& Z) {
    FieldVector v(Z.mod, static_cast<size_t>(Z.rows) * Z.cols);
    for (uint32_t i = 0; i < Z.rows; ++i)
        for (uint32_t j = 0; j < Z.cols; ++j) v.v[static_cast<size_t>(i) * Z.cols + j] = Z.at(i, j);
    return v;
}

}  // namespace

ChannelCode::ChannelCode(const SelectionSets& sets, const TensorTransform& tt) {
    if (sets.m != tt.m) throw std::invalid_argument("selection sets do not match transform size");
    validate_sets(sets);
    const uint32_t m = sets.m;
    n = m * m;
    for (uint32_t j = 0; j < m; ++j)
        for (uint32_t i = 0; i < m; ++i)
            if (!sets.selected(j, i)) message_coords.emplace_back(j, i);
    r = static_cast<uint32_t>(message_coords.size());
    if (r == 0) throw std::invalid_argument("selection sets leave no message coordinates");
}

FieldVector channel_encode(const ChannelCode& code, const SelectionSets& sets,
                           const TensorTransform& tt, const FieldVector& x) {
    if (x.mod.q != tt.kernel.mod.q) throw std::invalid_argument("message field mismatch");
    if (x.v.size() != code.r) throw std::invalid_argument("message length mismatch");
    const uint32_t m = tt.m;
    (void)sets;
    FieldMatrix U(x.mod, m, m);
    for (uint32_t idx = 0; idx < code.r; ++idx) {
        auto [j, i] = code.message_coords[idx];
        U.at(i, j) = x.v[idx];
    }
    FieldMatrix C = tt.apply_columns_inverse(U);
    return flatten(C);
}

FieldVector channel_transmit(const FieldVector& c, const HiddenMarkovSource& noise, uint64_t seed) {
    if (c.mod.q != noise.mod.q) throw std::invalid_argument("noise field mismatch");
    FieldVector y = sample_sequence(noise, c.v.size(), seed);
    FieldVector z(c.mod, c.v.size());
    for (size_t i = 0; i < c.v.size(); ++i)
        z.v[i] = static_cast<uint16_t>(fadd(c.v[i], y.v[i], c.mod.q));
    return z;
}

ChannelDecodeResult channel_decode(const ChannelCode& code, const SelectionSets& sets,
                                   const TensorTransform& tt, const HiddenMarkovSource& noise,
                                   const FieldVector& z) {
    if (z.v.size() != code.n) throw std::invalid_argument("received word has wrong length");
    if (z.mod.q != noise.mod.q) throw std::invalid_argument("received word field mismatch");
    const uint32_t m = tt.m;
    FieldMatrix Z = matrix_from_flat(z, m);
    CompressedPayload payload = compress(Z, sets, tt);
    DecodeReport rep = decompress(noise, payload, sets, tt);

    ChannelDecodeResult out;
    out.inference_ok = rep.inference_ok;
    out.y_hat = flatten(rep.z);
    out.c_hat = FieldVector(z.mod, code.n);
    for (uint32_t i = 0; i < code.n; ++i)
        out.c_hat.v[i] = static_cast<uint16_t>(fsub(z.v[i], out.y_hat.v[i], z.mod.q));
    FieldMatrix U = tt.apply_columns(matrix_from_flat(out.c_hat, m));
    out.x_hat = FieldVector(z.mod, code.r);
    for (uint32_t idx = 0; idx < code.r; ++idx) {
        auto [j, i] = code.message_coords[idx];
        out.x_hat.v[idx] = U.at(i, j);
    }
    return out;
}

}  // namespace plhm
