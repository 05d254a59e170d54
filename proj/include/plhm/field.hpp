#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace plhm {

// Prime modulus, 2 <= q <= 2^16. Products of two elements fit in 32 bits.
struct FieldModulus {
    uint32_t q = 2;

    FieldModulus() = default;
    explicit FieldModulus(uint32_t q_);

    bool operator==(const FieldModulus&) const = default;
};

bool is_prime(uint32_t n);

inline uint32_t fadd(uint32_t a, uint32_t b, uint32_t q) {
    uint32_t s = a + b;
    return s >= q ? s - q : s;
}

inline uint32_t fsub(uint32_t a, uint32_t b, uint32_t q) {
    return a >= b ? a - b : a + q - b;
}

inline uint32_t fmul(uint32_t a, uint32_t b, uint32_t q) {
    return (a * b) % q;
}

// a + b*c mod q. b*c + a < 2^32 for q <= 2^16.
inline uint32_t fadd_mul(uint32_t a, uint32_t b, uint32_t c, uint32_t q) {
    return (a + b * c) % q;
}

inline uint32_t fneg(uint32_t a, uint32_t q) {
    return a == 0 ? 0 : q - a;
}

// Multiplicative inverse by Fermat: a^(q-2). Throws on a == 0.
uint32_t finv(uint32_t a, uint32_t q);

struct FieldVector {
    FieldModulus mod;
    std::vector<uint16_t> v;

    FieldVector() = default;
    FieldVector(FieldModulus m, size_t n) : mod(m), v(n, 0) {}
    FieldVector(FieldModulus m, std::vector<uint16_t> data);

    size_t size() const { return v.size(); }
    uint16_t operator[](size_t i) const { return v[i]; }
    uint16_t& operator[](size_t i) { return v[i]; }
    bool operator==(const FieldVector&) const = default;
};

struct FieldMatrix {
    FieldModulus mod;
    size_t rows = 0, cols = 0;
    std::vector<uint16_t> a;  // row-major

    FieldMatrix() = default;
    FieldMatrix(FieldModulus m, size_t r, size_t c) : mod(m), rows(r), cols(c), a(r * c, 0) {}
    FieldMatrix(FieldModulus m, size_t r, size_t c, std::vector<uint16_t> data);

    uint16_t at(size_t r, size_t c) const { return a[r * cols + c]; }
    uint16_t& at(size_t r, size_t c) { return a[r * cols + c]; }
    bool operator==(const FieldMatrix&) const = default;
};

FieldMatrix identity_matrix(FieldModulus mod, size_t n);

FieldVector mat_vec(const FieldMatrix& M, const FieldVector& x);
FieldMatrix mat_mul(const FieldMatrix& A, const FieldMatrix& B);

// Gaussian elimination mod q. Empty optional when singular.
std::optional<FieldMatrix> mat_inverse(const FieldMatrix& M);

FieldVector vec_add(const FieldVector& a, const FieldVector& b);
FieldVector vec_sub(const FieldVector& a, const FieldVector& b);
FieldVector vec_scale(uint32_t c, const FieldVector& a);

}  // namespace plhm
