#pragma once

#include <string>

#include "plhm/field.hpp"

namespace plhm {

// Invertible k x k matrix over F_q, no column permutation of which is
// lower-triangular. These are exactly the kernels whose tensor powers
// polarize conditional entropies.
struct MixingKernel {
    FieldModulus mod;
    uint32_t k = 0;
    FieldMatrix M;
    FieldMatrix M_inv;
};

struct MixingValidation {
    bool ok = false;
    std::string reason;  // set when rejected
    MixingKernel kernel; // valid only when ok
};

// Accepts iff M is square, invertible, and no column permutation is
// lower-triangular. The permutation check uses first-nonzero-row indices:
// with f_c = index of the first nonzero row of column c, a lower-
// triangularizing permutation exists iff the sorted multiset satisfies
// f_(i) >= i for all i (match columns to diagonal slots greedily).
MixingValidation validate_mixing(const FieldMatrix& M);

// P_m = M^(tensor t), applied by a t-stage k-ary butterfly.
// Index convention: digits (i_1..i_t), i = sum (i_s - 1) * k^(t-s),
// first tensor factor on the most significant digit. No reversal.
struct TensorTransform {
    MixingKernel kernel;
    uint32_t t = 0;
    uint32_t m = 1;  // k^t

    TensorTransform() = default;
    TensorTransform(MixingKernel kk, uint32_t t_);

    FieldVector apply(const FieldVector& z) const;
    FieldVector apply_inverse(const FieldVector& u) const;

    // Transform applied independently to each column of an m x m matrix.
    FieldMatrix apply_columns(const FieldMatrix& Z) const;
    FieldMatrix apply_columns_inverse(const FieldMatrix& U) const;

    void apply_inplace(uint16_t* z, const FieldMatrix& K) const;
};

// Explicit m x m Kronecker power, for oracle checks.
FieldMatrix kronecker_power(const FieldMatrix& M, uint32_t t);

// Default kernel [[1,1],[0,1]], mixing over every prime field.
MixingKernel default_kernel(FieldModulus mod);

}  // namespace plhm
