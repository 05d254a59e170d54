#include <doctest.h>

#include <cmath>
#include <random>

#include "plhm/codec.hpp"
#include "plhm/hmm.hpp"
#include "plhm/kernel.hpp"

using namespace plhm;

namespace {

MixingKernel kernel3(FieldModulus mod) {
    auto v = validate_mixing(FieldMatrix(mod, 3, 3, {1, 1, 0, 0, 1, 1, 0, 0, 1}));
    REQUIRE(v.ok);
    return v.kernel;
}

SelectionSets random_sets(std::mt19937_64& rng, uint32_t m, double eps) {
    SelectionSets sets(m, eps);
    for (uint32_t j = 0; j < sets.jstar(); ++j)
        for (uint32_t i = 0; i < m; ++i) sets.set_selected(j, i, rng() % 2 == 0);
    return sets;
}

FieldMatrix random_matrix(std::mt19937_64& rng, FieldModulus mod, uint32_t m) {
    FieldMatrix Z(mod, m, m);
    for (auto& x : Z.a) x = static_cast<uint16_t>(rng() % mod.q);
    return Z;
}

// instance generator shared by the equivalence checks; mixes smooth, sparse,
// and point-mass priors so zero-probability conditioning shows up too
void random_instance(std::mt19937_64& rng, uint32_t q, uint32_t m, ProductPrior& prior,
                     PartialVector& known) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    prior.assign(m, {});
    for (auto& row : prior) {
        row.assign(q, 0.0);
        switch (rng() % 3) {
            case 0:
                row[rng() % q] = 1.0;
                break;
            case 1: {
                double s = 0;
                for (auto& x : row) {
                    x = (rng() % 2) ? uni(rng) : 0.0;
                    s += x;
                }
                if (s == 0) row[rng() % q] = 1.0;
                break;
            }
            default: {
                for (auto& x : row) x = uni(rng) + 1e-3;
                break;
            }
        }
        double s = 0;
        for (double x : row) s += x;
        for (auto& x : row) x /= s;
    }
    known.assign(m, -1);
    for (auto& kx : known)
        if (rng() % 2) kx = static_cast<int32_t>(rng() % q);
}

}  // namespace

TEST_CASE("selection set mechanics") {
    SelectionSets sets(8, 0.25);
    CHECK(sets.jstar() == 6);
    for (uint32_t j = 6; j < 8; ++j) CHECK(sets.column_count(j) == 8);  // tail starts full
    CHECK(sets.column_count(0) == 0);
    sets.set_selected(0, 3, true);
    CHECK(sets.selected(0, 3));
    CHECK(sets.column_count(0) == 1);
    CHECK(sets.total_selected() == 17);
    CHECK(sets.achieved_rate() == doctest::Approx(17.0 / 64));

    CHECK_THROWS_AS(SelectionSets(8, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(SelectionSets(8, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(SelectionSets(0, 0.5), std::invalid_argument);

    SUBCASE("tail columns must stay full") {
        sets.set_selected(7, 0, false);
        CHECK_THROWS_AS(validate_sets(sets), std::invalid_argument);
    }
}

TEST_CASE("compress fixed behaviors") {
    std::mt19937_64 rng(301);
    FieldModulus f2(2);
    TensorTransform tt(default_kernel(f2), 2);

    SUBCASE("all-full sets emit the whole column transform, invertibly") {
        SelectionSets sets(4, 0.5);
        for (uint32_t j = 0; j < 4; ++j) sets.fill_column(j);
        FieldMatrix Z = random_matrix(rng, f2, 4);
        CompressedPayload p = compress(Z, sets, tt);
        FieldMatrix U = tt.apply_columns(Z);
        FieldMatrix back(f2, 4, 4);
        for (uint32_t j = 0; j < 4; ++j) {
            REQUIRE(p.columns[j].size() == 4);
            for (uint32_t i = 0; i < 4; ++i) {
                CHECK(p.columns[j][i] == U.at(i, j));
                back.at(i, j) = p.columns[j][i];
            }
        }
        CHECK(tt.apply_columns_inverse(back) == Z);
    }
    SUBCASE("zero input gives an all-zero payload") {
        SelectionSets sets = random_sets(rng, 4, 0.4);
        CompressedPayload p = compress(FieldMatrix(f2, 4, 4), sets, tt);
        for (const auto& col : p.columns)
            for (uint16_t s : col) CHECK(s == 0);
    }
    SUBCASE("payload symbols are the selected rows of the explicit-matrix transform") {
        FieldMatrix P = kronecker_power(tt.kernel.M, 2);
        for (int it = 0; it < 20; ++it) {
            SelectionSets sets = random_sets(rng, 4, 0.3);
            FieldMatrix Z = random_matrix(rng, f2, 4);
            CompressedPayload p = compress(Z, sets, tt);
            for (uint32_t j = 0; j < 4; ++j) {
                FieldVector col(f2, 4);
                for (uint32_t i = 0; i < 4; ++i) col[i] = Z.at(i, j);
                FieldVector u = mat_vec(P, col);
                size_t pos = 0;
                for (uint32_t i = 0; i < 4; ++i) {
                    if (j < sets.jstar() && !sets.selected(j, i)) continue;
                    CHECK(p.columns[j][pos++] == u[i]);
                }
                CHECK(pos == p.columns[j].size());
            }
        }
    }
    SUBCASE("shape mismatches are rejected") {
        SelectionSets sets(8, 0.25);
        CHECK_THROWS_AS(compress(random_matrix(rng, f2, 4), sets, tt), std::invalid_argument);
    }
}

TEST_CASE("compression is linear in the input") {
    std::mt19937_64 rng(302);
    for (uint32_t q : {2u, 3u}) {
        FieldModulus mod(q);
        TensorTransform tt(default_kernel(mod), 3);
        SelectionSets sets = random_sets(rng, 8, 0.3);
        for (int it = 0; it < 25; ++it) {
            FieldMatrix Z1 = random_matrix(rng, mod, 8);
            FieldMatrix Z2 = random_matrix(rng, mod, 8);
            uint32_t alpha = static_cast<uint32_t>(rng() % q);
            FieldMatrix Zs(mod, 8, 8);
            for (size_t i = 0; i < Zs.a.size(); ++i)
                Zs.a[i] = static_cast<uint16_t>(fadd_mul(Z2.a[i], alpha, Z1.a[i], q));
            CompressedPayload p1 = compress(Z1, sets, tt);
            CompressedPayload p2 = compress(Z2, sets, tt);
            CompressedPayload ps = compress(Zs, sets, tt);
            for (uint32_t j = 0; j < 8; ++j) {
                REQUIRE(ps.columns[j].size() == p1.columns[j].size());
                for (size_t i = 0; i < ps.columns[j].size(); ++i) {
                    CHECK(ps.columns[j][i] ==
                          fadd_mul(p2.columns[j][i], alpha, p1.columns[j][i], q));
                }
            }
        }
    }
}

TEST_CASE("sequential oracle decoder") {
    FieldModulus f2(2);
    TensorTransform tt(default_kernel(f2), 1);

    SUBCASE("point-mass prior reproduces the transform of the point") {
        ProductPrior prior{{0.0, 1.0}, {1.0, 0.0}};  // z = (1, 0)
        PartialVector known{-1, -1};
        auto res = sc_decode_oracle(prior, known, tt);
        CHECK(res.u == tt.apply(FieldVector(f2, {1, 0})));
        CHECK(!res.zero_conditioning);
    }
    SUBCASE("a hole is decided from the prefix marginal before later knowns land") {
        // Bernoulli(0.1) inputs: P(U1=0) = 0.82, so the hole takes 0 even
        // though the later known coordinate would have pointed the other way.
        ProductPrior prior{{0.9, 0.1}, {0.9, 0.1}};
        PartialVector known{-1, 1};
        auto res = sc_decode_oracle(prior, known, tt);
        CHECK(res.u == FieldVector(f2, {0, 1}));
        CHECK(!res.zero_conditioning);
    }
    SUBCASE("ties break toward the smallest symbol") {
        ProductPrior prior{{0.5, 0.5}, {0.5, 0.5}};
        PartialVector known{-1, -1};
        auto res = sc_decode_oracle(prior, known, tt);
        CHECK(res.u == FieldVector(f2, {0, 0}));
    }
    SUBCASE("conditioning on an impossible symbol raises the flag") {
        ProductPrior prior{{1.0, 0.0}, {1.0, 0.0}};
        PartialVector known{-1, 1};
        auto res = sc_decode_oracle(prior, known, tt);
        CHECK(res.zero_conditioning);
        CHECK(res.u == FieldVector(f2, {0, 1}));
    }
    SUBCASE("size guards") {
        TensorTransform big(default_kernel(f2), 5);
        ProductPrior prior(32, {0.5, 0.5});
        PartialVector known(32, -1);
        CHECK_THROWS_AS(sc_decode_oracle(prior, known, big), std::invalid_argument);
    }
}

TEST_CASE("fast decoder fixed behaviors") {
    FieldModulus f2(2);
    TensorTransform tt(default_kernel(f2), 2);

    SUBCASE("all coordinates known inverts the transform") {
        std::mt19937_64 rng(303);
        for (int it = 0; it < 20; ++it) {
            ProductPrior prior(4, {0.5, 0.5});
            PartialVector known(4);
            FieldVector u(f2, 4);
            for (uint32_t i = 0; i < 4; ++i) {
                u[i] = static_cast<uint16_t>(rng() % 2);
                known[i] = u[i];
            }
            CHECK(fast_decode(prior, known, tt) == tt.apply_inverse(u));
        }
    }
    SUBCASE("point-mass prior with no knowns returns the point") {
        ProductPrior prior{{0.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
        PartialVector known(4, -1);
        CHECK(fast_decode(prior, known, tt) == FieldVector(f2, {1, 0, 1, 0}));
    }
    SUBCASE("depth zero is a single argmax") {
        TensorTransform t0(default_kernel(f2), 0);
        ProductPrior prior{{0.4, 0.6}};
        PartialVector known{-1};
        CHECK(fast_decode(prior, known, t0) == FieldVector(f2, std::vector<uint16_t>{1}));
        known[0] = 0;
        CHECK(fast_decode(prior, known, t0) == FieldVector(f2, std::vector<uint16_t>{0}));
    }
}

TEST_CASE("fast decoder equals the sequential oracle on random instances") {
    std::mt19937_64 rng(304);
    ProductPrior prior;
    PartialVector known;
    size_t zero_cond = 0;

    SUBCASE("q=2, k=2, t up to 3") {
        FieldModulus mod(2);
        TensorTransform tts[] = {TensorTransform(default_kernel(mod), 1),
                                 TensorTransform(default_kernel(mod), 2),
                                 TensorTransform(default_kernel(mod), 3)};
        for (int it = 0; it < 200; ++it) {
            const TensorTransform& tt = tts[it % 3];
            random_instance(rng, 2, tt.m, prior, known);
            auto oracle = sc_decode_oracle(prior, known, tt);
            zero_cond += oracle.zero_conditioning;
            CHECK(tt.apply(fast_decode(prior, known, tt)) == oracle.u);
        }
        CHECK(zero_cond > 0);  // the sample must hit the degenerate branch too
    }
    SUBCASE("q=3, k=2") {
        FieldModulus mod(3);
        for (uint32_t t : {1u, 2u}) {
            TensorTransform tt(default_kernel(mod), t);
            for (int it = 0; it < 60; ++it) {
                random_instance(rng, 3, tt.m, prior, known);
                auto oracle = sc_decode_oracle(prior, known, tt);
                CHECK(tt.apply(fast_decode(prior, known, tt)) == oracle.u);
            }
        }
    }
    SUBCASE("q=2, k=3 kernel") {
        FieldModulus mod(2);
        MixingKernel K = kernel3(mod);
        for (uint32_t t : {1u, 2u}) {
            TensorTransform tt(K, t);
            for (int it = 0; it < 60; ++it) {
                random_instance(rng, 2, tt.m, prior, known);
                auto oracle = sc_decode_oracle(prior, known, tt);
                CHECK(tt.apply(fast_decode(prior, known, tt)) == oracle.u);
            }
        }
    }
}

TEST_CASE("decompress fixed behaviors") {
    FieldModulus f3(3);
    TensorTransform tt(default_kernel(f3), 2);
    auto const2 = build_iid_source(f3, {0.0, 0.0, 1.0}, "const2");

    SUBCASE("deterministic source needs no selected coordinates") {
        SelectionSets sets(4, 0.45);  // jstar = 2, both leading columns empty
        FieldMatrix Z(f3, 4, 4);
        for (auto& x : Z.a) x = 2;
        CompressedPayload p = compress(Z, sets, tt);
        CHECK(p.columns[0].empty());
        DecodeReport rep = decompress(const2, p, sets, tt);
        CHECK(rep.ok());
        CHECK(rep.z == Z);
    }
    SUBCASE("payload and sets must agree") {
        SelectionSets sets(4, 0.45);
        FieldMatrix Z(f3, 4, 4);
        CompressedPayload p = compress(Z, sets, tt);
        SelectionSets other = sets;
        other.set_selected(0, 1, true);
        CHECK_THROWS_AS(decompress(const2, p, other, tt), std::invalid_argument);
    }
    SUBCASE("crc verifies clean payloads and catches corruption") {
        std::mt19937_64 rng(305);
        auto src = build_iid_source(FieldModulus(2), {0.8, 0.2});
        TensorTransform tb(default_kernel(FieldModulus(2)), 2);
        SelectionSets sets(4, 0.3);
        for (uint32_t j = 0; j < sets.jstar(); ++j) sets.fill_column(j);
        FieldMatrix Z = random_matrix(rng, FieldModulus(2), 4);
        CompressedPayload p = compress(Z, sets, tb, 0, true);
        CHECK(p.has_crc());
        DecodeReport clean = decompress(src, p, sets, tb);
        CHECK(clean.crc_ok);
        CHECK(clean.z == Z);
        p.columns[3][0] ^= 1;  // corrupt one tail symbol
        DecodeReport bad = decompress(src, p, sets, tb);
        CHECK(!bad.crc_ok);
        CHECK(!bad.ok());
    }
}

TEST_CASE("round-trip probe") {
    FieldModulus f2(2);
    TensorTransform tt(default_kernel(f2), 2);

    SUBCASE("deterministic source never fails") {
        auto src = build_iid_source(f2, {1.0, 0.0});
        SelectionSets sets(4, 0.45);
        ProbeReport rep = decompress_success_probe(src, sets, tt, 50, 1);
        CHECK(rep.failures == 0);
        CHECK(rep.inference_failures == 0);
        CHECK(rep.achieved_rate == doctest::Approx(0.5));
    }
    SUBCASE("all-full sets never fail, any source") {
        auto ge = build_gilbert_elliott(0.05, 0.1, 0.1);
        SelectionSets sets(4, 0.45);
        for (uint32_t j = 0; j < 4; ++j) sets.fill_column(j);
        ProbeReport rep = decompress_success_probe(ge, sets, tt, 50, 2);
        CHECK(rep.failures == 0);
        CHECK(rep.achieved_rate == doctest::Approx(1.0));
    }
    SUBCASE("empirical failure rate matches exhaustive per-column success") {
        // Memoryless rows keep the forward prior constant, so columns decode
        // independently and the block success factorizes exactly.
        const double p1 = 0.05;
        auto src = build_iid_source(f2, {1 - p1, p1});
        SelectionSets sets(4, 0.45);        // leading columns 0 and 1
        sets.set_selected(1, 0, true);      // column 0 keeps nothing, column 1 keeps row 0
        ProductPrior prior(4, {1 - p1, p1});

        double block_success = 1.0;
        for (uint32_t j = 0; j < sets.jstar(); ++j) {
            double col_success = 0;
            for (uint32_t zi = 0; zi < 16; ++zi) {
                FieldVector z(f2, 4);
                double pz = 1;
                for (uint32_t i = 0; i < 4; ++i) {
                    z[i] = (zi >> i) & 1;
                    pz *= z[i] ? p1 : 1 - p1;
                }
                FieldVector u = tt.apply(z);
                PartialVector known(4, -1);
                for (uint32_t i = 0; i < 4; ++i)
                    if (sets.selected(j, i)) known[i] = u[i];
                if (fast_decode(prior, known, tt) == z) col_success += pz;
            }
            block_success *= col_success;
        }
        double pfail = 1 - block_success;
        REQUIRE(pfail > 0.05);  // the instance is only interesting if it can fail
        REQUIRE(pfail < 0.95);

        const size_t trials = 4000;
        ProbeReport rep = decompress_success_probe(src, sets, tt, trials, 7, {false, 4});
        double phat = rep.failure_rate();
        double sigma = std::sqrt(pfail * (1 - pfail) / trials);
        CHECK(std::abs(phat - pfail) < 3.5 * sigma);
        CHECK(rep.inference_failures == 0);
    }
    SUBCASE("row-independent sampling and jobs do not change the bookkeeping") {
        auto ge = build_gilbert_elliott(0.05, 0.1, 0.1);
        SelectionSets sets(4, 0.45);
        for (uint32_t j = 0; j < 4; ++j) sets.fill_column(j);
        ProbeReport a = decompress_success_probe(ge, sets, tt, 40, 3, {true, 1});
        ProbeReport b = decompress_success_probe(ge, sets, tt, 40, 3, {true, 4});
        CHECK(a.trials == 40);
        CHECK(a.failures == b.failures);
        CHECK(a.failures == 0);
    }
}

TEST_CASE("matrix crc changes when the matrix does") {
    std::mt19937_64 rng(306);
    FieldModulus f2(2);
    FieldMatrix Z = random_matrix(rng, f2, 4);
    uint32_t c = matrix_crc(Z);
    CHECK(c == matrix_crc(Z));
    Z.at(2, 2) ^= 1;
    CHECK(c != matrix_crc(Z));
}
