#include "plhm/kernel.hpp"

#include <algorithm>

namespace plhm {

MixingValidation validate_mixing(const FieldMatrix& M) {
    MixingValidation out;
    if (M.rows != M.cols || M.rows == 0) {
        out.reason = "not a square matrix";
        return out;
    }
    auto inv = mat_inverse(M);
    if (!inv) {
        out.reason = "singular";
        return out;
    }
    const size_t k = M.rows;
    std::vector<size_t> first_nonzero(k, k);
    for (size_t c = 0; c < k; ++c) {
        for (size_t r = 0; r < k; ++r) {
            if (M.at(r, c) != 0) {
                first_nonzero[c] = r;
                break;
            }
        }
    }
    // Column c can sit in diagonal slot d iff f_c >= d (all entries above the
    // diagonal must vanish). Sorting and matching greedily decides whether a
    // full assignment exists (Hall's condition collapses to f_(i) >= i).
    std::sort(first_nonzero.begin(), first_nonzero.end());
    bool triangularizable = true;
    for (size_t i = 0; i < k; ++i) {
        if (first_nonzero[i] < i) {
            triangularizable = false;
            break;
        }
    }
    if (triangularizable) {
        out.reason = "a column permutation is lower-triangular";
        return out;
    }
    out.ok = true;
    out.kernel = MixingKernel{M.mod, static_cast<uint32_t>(k), M, *inv};
    return out;
}

TensorTransform::TensorTransform(MixingKernel kk, uint32_t t_) : kernel(std::move(kk)), t(t_) {
    if (kernel.k < 2 || kernel.k > 64) throw std::invalid_argument("kernel size out of range");
    m = 1;
    for (uint32_t s = 0; s < t; ++s) {
        uint64_t next = static_cast<uint64_t>(m) * kernel.k;
        if (next > (1u << 20)) throw std::invalid_argument("transform size k^t too large");
        m = static_cast<uint32_t>(next);
    }
}

void TensorTransform::apply_inplace(uint16_t* z, const FieldMatrix& K) const {
    const uint32_t k = kernel.k;
    const uint32_t q = kernel.mod.q;
    uint32_t x[64];
    // One pass per tensor level; stride selects the digit the kernel acts on.
    for (uint32_t stride = m / k; stride >= 1; stride /= k) {
        for (uint32_t base = 0; base < m; base += stride * k) {
            for (uint32_t off = 0; off < stride; ++off) {
                uint16_t* p = z + base + off;
                for (uint32_t d = 0; d < k; ++d) x[d] = p[d * stride];
                for (uint32_t r = 0; r < k; ++r) {
                    uint32_t acc = 0;
                    for (uint32_t d = 0; d < k; ++d) {
                        acc = fadd_mul(acc, K.at(r, d), x[d], q);
                    }
                    p[r * stride] = static_cast<uint16_t>(acc);
                }
            }
        }
        if (stride == 1) break;
    }
}

FieldVector TensorTransform::apply(const FieldVector& z) const {
    if (z.mod != kernel.mod) throw std::invalid_argument("apply: modulus mismatch");
    if (z.size() != m) throw std::invalid_argument("apply: length mismatch");
    FieldVector u = z;
    if (t > 0) apply_inplace(u.v.data(), kernel.M);
    return u;
}

FieldVector TensorTransform::apply_inverse(const FieldVector& u) const {
    if (u.mod != kernel.mod) throw std::invalid_argument("apply_inverse: modulus mismatch");
    if (u.size() != m) throw std::invalid_argument("apply_inverse: length mismatch");
    FieldVector z = u;
    if (t > 0) apply_inplace(z.v.data(), kernel.M_inv);
    return z;
}

FieldMatrix TensorTransform::apply_columns(const FieldMatrix& Z) const {
    if (Z.rows != m || Z.cols != m) throw std::invalid_argument("apply_columns: shape mismatch");
    FieldMatrix U = Z;
    std::vector<uint16_t> col(m);
    for (uint32_t j = 0; j < m; ++j) {
        for (uint32_t i = 0; i < m; ++i) col[i] = Z.at(i, j);
        if (t > 0) apply_inplace(col.data(), kernel.M);
        for (uint32_t i = 0; i < m; ++i) U.at(i, j) = col[i];
    }
    return U;
}

FieldMatrix TensorTransform::apply_columns_inverse(const FieldMatrix& U) const {
    if (U.rows != m || U.cols != m) throw std::invalid_argument("apply_columns_inverse: shape mismatch");
    FieldMatrix Z = U;
    std::vector<uint16_t> col(m);
    for (uint32_t j = 0; j < m; ++j) {
        for (uint32_t i = 0; i < m; ++i) col[i] = U.at(i, j);
        if (t > 0) apply_inplace(col.data(), kernel.M_inv);
        for (uint32_t i = 0; i < m; ++i) Z.at(i, j) = col[i];
    }
    return Z;
}

FieldMatrix kronecker_power(const FieldMatrix& M, uint32_t t) {
    FieldMatrix P = identity_matrix(M.mod, 1);
    const uint32_t q = M.mod.q;
    for (uint32_t s = 0; s < t; ++s) {
        FieldMatrix next(M.mod, P.rows * M.rows, P.cols * M.cols);
        for (size_t pr = 0; pr < P.rows; ++pr) {
            for (size_t pc = 0; pc < P.cols; ++pc) {
                uint32_t pv = P.at(pr, pc);
                if (pv == 0) continue;
                for (size_t mr = 0; mr < M.rows; ++mr) {
                    for (size_t mc = 0; mc < M.cols; ++mc) {
                        next.at(pr * M.rows + mr, pc * M.cols + mc) =
                            static_cast<uint16_t>(fmul(pv, M.at(mr, mc), q));
                    }
                }
            }
        }
        P = std::move(next);
    }
    return P;
}

MixingKernel default_kernel(FieldModulus mod) {
    FieldMatrix M(mod, 2, 2, {1, 1, 0, 1});
    auto v = validate_mixing(M);
    return v.kernel;
}

}  // namespace plhm
