#include "plhm/field.hpp"

namespace plhm {

bool is_prime(uint32_t n) {
    if (n < 2) return false;
    for (uint32_t d = 2; d * d <= n; ++d) {
        if (n % d == 0) return false;
    }
    return true;
}

FieldModulus::FieldModulus(uint32_t q_) : q(q_) {
    if (q < 2 || q > 65536u || !is_prime(q)) {
        throw std::invalid_argument("modulus must be a prime in [2, 2^16]");
    }
}

uint32_t finv(uint32_t a, uint32_t q) {
    if (a % q == 0) throw std::domain_error("inverse of zero");
    uint32_t base = a % q, result = 1;
    uint32_t e = q - 2;
    while (e > 0) {
        if (e & 1) result = fmul(result, base, q);
        base = fmul(base, base, q);
        e >>= 1;
    }
    return result;
}

FieldVector::FieldVector(FieldModulus m, std::vector<uint16_t> data) : mod(m), v(std::move(data)) {
    for (uint16_t x : v) {
        if (x >= mod.q) throw std::invalid_argument("vector entry out of field range");
    }
}

FieldMatrix::FieldMatrix(FieldModulus m, size_t r, size_t c, std::vector<uint16_t> data)
    : mod(m), rows(r), cols(c), a(std::move(data)) {
    if (a.size() != rows * cols) throw std::invalid_argument("matrix data size mismatch");
    for (uint16_t x : a) {
        if (x >= mod.q) throw std::invalid_argument("matrix entry out of field range");
    }
}

FieldMatrix identity_matrix(FieldModulus mod, size_t n) {
    FieldMatrix I(mod, n, n);
    for (size_t i = 0; i < n; ++i) I.at(i, i) = 1;
    return I;
}

FieldVector mat_vec(const FieldMatrix& M, const FieldVector& x) {
    if (M.mod != x.mod) throw std::invalid_argument("mat_vec: modulus mismatch");
    if (M.cols != x.size()) throw std::invalid_argument("mat_vec: dimension mismatch");
    const uint32_t q = M.mod.q;
    FieldVector y(M.mod, M.rows);
    for (size_t r = 0; r < M.rows; ++r) {
        uint32_t acc = 0;
        for (size_t c = 0; c < M.cols; ++c) {
            acc = fadd_mul(acc, M.at(r, c), x[c], q);
        }
        y[r] = static_cast<uint16_t>(acc);
    }
    return y;
}

FieldMatrix mat_mul(const FieldMatrix& A, const FieldMatrix& B) {
    if (A.mod != B.mod) throw std::invalid_argument("mat_mul: modulus mismatch");
    if (A.cols != B.rows) throw std::invalid_argument("mat_mul: dimension mismatch");
    const uint32_t q = A.mod.q;
    FieldMatrix C(A.mod, A.rows, B.cols);
    for (size_t r = 0; r < A.rows; ++r) {
        for (size_t k = 0; k < A.cols; ++k) {
            uint32_t arc = A.at(r, k);
            if (arc == 0) continue;
            for (size_t c = 0; c < B.cols; ++c) {
                C.at(r, c) = static_cast<uint16_t>(fadd_mul(C.at(r, c), arc, B.at(k, c), q));
            }
        }
    }
    return C;
}

std::optional<FieldMatrix> mat_inverse(const FieldMatrix& M) {
    if (M.rows != M.cols) throw std::invalid_argument("mat_inverse: matrix not square");
    const size_t n = M.rows;
    const uint32_t q = M.mod.q;
    FieldMatrix work = M;
    FieldMatrix inv = identity_matrix(M.mod, n);

    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        while (pivot < n && work.at(pivot, col) == 0) ++pivot;
        if (pivot == n) return std::nullopt;
        if (pivot != col) {
            for (size_t c = 0; c < n; ++c) {
                std::swap(work.at(pivot, c), work.at(col, c));
                std::swap(inv.at(pivot, c), inv.at(col, c));
            }
        }
        uint32_t scale = finv(work.at(col, col), q);
        for (size_t c = 0; c < n; ++c) {
            work.at(col, c) = static_cast<uint16_t>(fmul(work.at(col, c), scale, q));
            inv.at(col, c) = static_cast<uint16_t>(fmul(inv.at(col, c), scale, q));
        }
        for (size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            uint32_t f = work.at(r, col);
            if (f == 0) continue;
            for (size_t c = 0; c < n; ++c) {
                work.at(r, c) = static_cast<uint16_t>(
                    fsub(work.at(r, c), fmul(f, work.at(col, c), q), q));
                inv.at(r, c) = static_cast<uint16_t>(
                    fsub(inv.at(r, c), fmul(f, inv.at(col, c), q), q));
            }
        }
    }
    return inv;
}

FieldVector vec_add(const FieldVector& a, const FieldVector& b) {
    if (a.mod != b.mod || a.size() != b.size()) throw std::invalid_argument("vec_add: mismatch");
    FieldVector out(a.mod, a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = static_cast<uint16_t>(fadd(a[i], b[i], a.mod.q));
    return out;
}

FieldVector vec_sub(const FieldVector& a, const FieldVector& b) {
    if (a.mod != b.mod || a.size() != b.size()) throw std::invalid_argument("vec_sub: mismatch");
    FieldVector out(a.mod, a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = static_cast<uint16_t>(fsub(a[i], b[i], a.mod.q));
    return out;
}

FieldVector vec_scale(uint32_t c, const FieldVector& a) {
    FieldVector out(a.mod, a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = static_cast<uint16_t>(fmul(c, a[i], a.mod.q));
    return out;
}

}  // namespace plhm
