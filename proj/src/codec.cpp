#include "plhm/codec.hpp"

#include <atomic>
#include <cmath>
#include <thread>

#include "plhm/bits.hpp"
#include "plhm/rng.hpp"

namespace plhm {

SelectionSets::SelectionSets(uint32_t m_, double eps) : m(m_), epsilon(eps) {
    if (!(eps > 0.0) || !(eps < 1.0)) throw std::invalid_argument("epsilon must be in (0,1)");
    if (m == 0) throw std::invalid_argument("m must be positive");
    bitmaps.assign(m, std::vector<uint8_t>(bitmap_bytes(m), 0));
    for (uint32_t j = jstar(); j < m; ++j) fill_column(j);
}

uint32_t SelectionSets::jstar() const {
    return static_cast<uint32_t>(std::floor((1.0 - epsilon) * m));
}

bool SelectionSets::selected(uint32_t col, uint32_t row) const {
    return bitmap_get(bitmaps[col], row);
}

void SelectionSets::set_selected(uint32_t col, uint32_t row, bool v) {
    bitmap_set(bitmaps[col], row, v);
}

void SelectionSets::fill_column(uint32_t col) {
    for (uint32_t i = 0; i < m; ++i) bitmap_set(bitmaps[col], i, true);
}

size_t SelectionSets::column_count(uint32_t col) const {
    size_t c = 0;
    for (uint32_t i = 0; i < m; ++i) c += selected(col, i);
    return c;
}

size_t SelectionSets::total_selected() const {
    size_t c = 0;
    for (uint32_t j = 0; j < m; ++j) c += column_count(j);
    return c;
}

double SelectionSets::achieved_rate() const {
    return static_cast<double>(total_selected()) / (static_cast<double>(m) * m);
}

void validate_sets(const SelectionSets& s) {
    if (s.m == 0) throw std::invalid_argument("sets: m is zero");
    if (!(s.epsilon > 0.0) || !(s.epsilon < 1.0)) throw std::invalid_argument("sets: bad epsilon");
    if (s.bitmaps.size() != s.m) throw std::invalid_argument("sets: bitmap count mismatch");
    for (const auto& bm : s.bitmaps) {
        if (bm.size() != bitmap_bytes(s.m)) throw std::invalid_argument("sets: bitmap size");
    }
    for (uint32_t j = s.jstar(); j < s.m; ++j) {
        if (s.column_count(j) != s.m) {
            throw std::invalid_argument("sets: tail column is not full");
        }
    }
}

uint32_t CompressedPayload::m() const {
    uint32_t v = 1;
    for (uint8_t s = 0; s < t; ++s) v *= k;
    return v;
}

uint32_t CompressedPayload::jstar() const {
    return static_cast<uint32_t>(std::floor((1.0 - epsilon) * m()));
}

size_t CompressedPayload::total_symbols() const {
    size_t c = 0;
    for (const auto& col : columns) c += col.size();
    return c;
}

uint32_t matrix_crc(const FieldMatrix& Z) {
    std::vector<uint8_t> bytes;
    bytes.reserve(Z.a.size() * 2);
    for (uint16_t s : Z.a) put_u16le(bytes, s);
    return crc32_bytes(bytes.data(), bytes.size());
}

CompressedPayload compress(const FieldMatrix& Z, const SelectionSets& sets,
                           const TensorTransform& tt, uint64_t model_hash, bool with_crc) {
    validate_sets(sets);
    const uint32_t m = tt.m;
    if (sets.m != m || Z.rows != m || Z.cols != m) {
        throw std::invalid_argument("compress: shape mismatch");
    }
    CompressedPayload p;
    p.q = static_cast<uint16_t>(tt.kernel.mod.q);
    p.k = static_cast<uint8_t>(tt.kernel.k);
    p.t = static_cast<uint8_t>(tt.t);
    p.epsilon = sets.epsilon;
    p.flags = with_crc ? 1 : 0;
    p.model_hash = model_hash;
    const uint32_t jstar = sets.jstar();
    p.columns.resize(m);
    p.bitmaps.assign(sets.bitmaps.begin(), sets.bitmaps.begin() + jstar);

    std::vector<uint16_t> col(m);
    for (uint32_t j = 0; j < m; ++j) {
        for (uint32_t i = 0; i < m; ++i) col[i] = Z.at(i, j);
        if (tt.t > 0) tt.apply_inplace(col.data(), tt.kernel.M);
        if (j < jstar) {
            for (uint32_t i = 0; i < m; ++i) {
                if (sets.selected(j, i)) p.columns[j].push_back(col[i]);
            }
        } else {
            p.columns[j] = col;
        }
    }
    if (with_crc) p.crc = matrix_crc(Z);
    return p;
}

namespace {

uint16_t argmax_smallest(const std::vector<double>& p) {
    size_t best = 0;
    for (size_t x = 1; x < p.size(); ++x) {
        if (p[x] > p[best]) best = x;
    }
    return static_cast<uint16_t>(best);
}

void check_prior(const ProductPrior& prior, uint32_t m, uint32_t q) {
    if (prior.size() != m) throw std::invalid_argument("prior length mismatch");
    for (const auto& row : prior) {
        if (row.size() != q) throw std::invalid_argument("prior row size mismatch");
    }
}

}  // namespace

SCOracleResult sc_decode_oracle(const ProductPrior& prior, const PartialVector& known,
                                const TensorTransform& tt) {
    const uint32_t m = tt.m;
    const uint32_t q = tt.kernel.mod.q;
    if (m > 16) throw std::invalid_argument("sc_decode_oracle: m > 16");
    check_prior(prior, m, q);
    if (known.size() != m) throw std::invalid_argument("known length mismatch");

    uint64_t total = 1;
    for (uint32_t i = 0; i < m; ++i) {
        total *= q;
        if (total > (1ull << 22)) throw std::invalid_argument("sc_decode_oracle: q^m too large");
    }
    std::vector<uint64_t> pw(m + 1, 1);
    for (uint32_t i = 1; i <= m; ++i) pw[i] = pw[i - 1] * q;

    // Joint law of U, indexed big-endian: digit i has weight q^(m-1-i).
    std::vector<double> joint(total, 0.0);
    std::vector<uint16_t> buf(m);
    for (uint64_t zi = 0; zi < total; ++zi) {
        double w = 1.0;
        for (uint32_t i = 0; i < m; ++i) {
            uint32_t digit = static_cast<uint32_t>((zi / pw[m - 1 - i]) % q);
            buf[i] = static_cast<uint16_t>(digit);
            w *= prior[i][digit];
        }
        if (w == 0.0) continue;
        if (tt.t > 0) tt.apply_inplace(buf.data(), tt.kernel.M);
        uint64_t ui = 0;
        for (uint32_t i = 0; i < m; ++i) ui += static_cast<uint64_t>(buf[i]) * pw[m - 1 - i];
        joint[ui] += w;
    }

    SCOracleResult res;
    res.u = FieldVector(tt.kernel.mod, m);
    uint64_t base = 0;  // start of the block matching the decided prefix
    for (uint32_t i = 0; i < m; ++i) {
        const uint64_t sub = pw[m - 1 - i];
        uint16_t choice;
        if (res.zero_conditioning) {
            choice = known[i] >= 0 ? static_cast<uint16_t>(known[i]) : 0;
        } else {
            std::vector<double> mass(q, 0.0);
            for (uint32_t x = 0; x < q; ++x) {
                const uint64_t off = base + x * sub;
                double s = 0;
                for (uint64_t idx = 0; idx < sub; ++idx) s += joint[off + idx];
                mass[x] = s;
            }
            choice = known[i] >= 0 ? static_cast<uint16_t>(known[i]) : argmax_smallest(mass);
            if (mass[choice] <= 0.0) res.zero_conditioning = true;
        }
        res.u[i] = choice;
        base += choice * sub;
    }
    return res;
}

namespace {

// Recursive product-prior SC decoder. The transform factors as
// W (x) M with M on the least-significant digit; each node of size k^s keeps
// k sub-decoders over its stride-k subsequences and decodes one kernel block
// at a time: pull the children's next-output laws, run SC over the block's k
// transformed coordinates, then solve the kernel and push the inputs back
// down. Once any conditioning event has zero probability the whole decoder
// degrades to uniform laws, matching the oracle's convention.
class FastDecoder {
public:
    FastDecoder(const ProductPrior& prior, const TensorTransform& tt)
        : prior_(prior), q_(tt.kernel.mod.q), k_(tt.kernel.k),
          M_(tt.kernel.M), Minv_(tt.kernel.M_inv) {
        qk_ = 1;
        for (uint32_t s = 0; s < k_; ++s) {
            if (qk_ > (1u << 22) / q_) throw std::invalid_argument("q^k block table too large");
            qk_ *= q_;
        }
        root_ = build(0, 1, tt.m);
    }

    std::vector<double> law_of_next() { return law(root_); }
    void fix_next(uint16_t u) { fix(root_, u); }

    void collect(std::vector<uint16_t>& out) const {
        for (const Node& nd : nodes_) {
            if (nd.size == 1) out[nd.offset] = static_cast<uint16_t>(nd.zhat);
        }
    }

private:
    struct Node {
        uint32_t size = 1;
        uint32_t offset = 0;
        int32_t kids = -1;           // index into children_ for internal nodes
        std::vector<double> ujoint;  // q^k, current block joint in the transformed domain
        uint32_t block_fixed = 0;
        uint32_t packed_prefix = 0;  // fixed block outputs, digit a has weight q^a
        bool block_ready = false;
        int32_t zhat = -1;
    };

    int32_t build(uint32_t offset, uint32_t stride, uint32_t size) {
        int32_t id = static_cast<int32_t>(nodes_.size());
        nodes_.emplace_back();
        nodes_[id].size = size;
        nodes_[id].offset = offset;
        if (size > 1) {
            std::vector<int32_t> kids(k_);
            for (uint32_t a = 0; a < k_; ++a) {
                kids[a] = build(offset + a * stride, stride * k_, size / k_);
            }
            children_.push_back(std::move(kids));
            nodes_[id].kids = static_cast<int32_t>(children_.size()) - 1;
        }
        return id;
    }

    int32_t child(const Node& nd, uint32_t a) const { return children_[nd.kids][a]; }

    std::vector<double> uniform_law() const {
        return std::vector<double>(q_, 1.0 / static_cast<double>(q_));
    }

    std::vector<double> law(int32_t ni) {
        Node& nd = nodes_[ni];
        if (nd.size == 1) {
            if (poisoned_) return uniform_law();
            const std::vector<double>& p = prior_[nd.offset];
            double s = 0;
            for (double x : p) s += x;
            std::vector<double> out(q_);
            for (uint32_t x = 0; x < q_; ++x) out[x] = p[x] / s;
            return out;
        }
        if (!nd.block_ready) start_block(ni);
        if (poisoned_) return uniform_law();
        Node& nd2 = nodes_[ni];
        const uint32_t div = qpow(nd2.block_fixed);
        std::vector<double> mass(q_, 0.0);
        for (uint32_t u = 0; u < qk_; ++u) {
            if (u % div == nd2.packed_prefix) mass[(u / div) % q_] += nd2.ujoint[u];
        }
        double total = 0;
        for (double x : mass) total += x;
        if (total <= 0.0) {
            poisoned_ = true;
            return uniform_law();
        }
        for (double& x : mass) x /= total;
        return mass;
    }

    void start_block(int32_t ni) {
        {
            Node& nd = nodes_[ni];
            nd.packed_prefix = 0;
            nd.block_fixed = 0;
            nd.block_ready = true;
            nd.ujoint.assign(qk_, 0.0);
        }
        if (poisoned_) return;
        std::vector<std::vector<double>> L(k_);
        for (uint32_t a = 0; a < k_; ++a) L[a] = law(child(nodes_[ni], a));
        if (poisoned_) return;
        Node& nd = nodes_[ni];
        std::vector<uint32_t> v(k_), u(k_);
        for (uint32_t vi = 0; vi < qk_; ++vi) {
            double w = 1.0;
            uint32_t rem = vi;
            for (uint32_t a = 0; a < k_; ++a) {
                v[a] = rem % q_;
                rem /= q_;
                w *= L[a][v[a]];
            }
            if (w == 0.0) continue;
            uint32_t packed = 0;
            for (uint32_t r = 0; r < k_; ++r) {
                uint32_t acc = 0;
                for (uint32_t a = 0; a < k_; ++a) acc = fadd_mul(acc, M_.at(r, a), v[a], q_);
                packed += acc * qpow(r);
            }
            nd.ujoint[packed] += w;
        }
    }

    void fix(int32_t ni, uint16_t x) {
        Node& nd = nodes_[ni];
        if (nd.size == 1) {
            nd.zhat = x;
            return;
        }
        if (!nd.block_ready) {
            nd.packed_prefix = 0;
            nd.block_fixed = 0;
            nd.block_ready = true;  // ujoint untouched; only reachable when poisoned
        }
        const uint32_t div = qpow(nd.block_fixed);
        if (!poisoned_) {
            const uint32_t npref = nd.packed_prefix + x * div;
            const uint32_t ndiv = div * q_;
            double total = 0;
            for (uint32_t u = 0; u < qk_; ++u) {
                if (u % ndiv == npref) total += nd.ujoint[u];
            }
            if (total <= 0.0) poisoned_ = true;
        }
        nd.packed_prefix += x * div;
        nd.block_fixed += 1;
        if (nd.block_fixed == k_) {
            // Block complete: invert the kernel and hand the inputs down.
            std::vector<uint32_t> u(k_);
            uint32_t rem = nd.packed_prefix;
            for (uint32_t a = 0; a < k_; ++a) {
                u[a] = rem % q_;
                rem /= q_;
            }
            std::vector<uint16_t> v(k_);
            for (uint32_t a = 0; a < k_; ++a) {
                uint32_t acc = 0;
                for (uint32_t r = 0; r < k_; ++r) acc = fadd_mul(acc, Minv_.at(a, r), u[r], q_);
                v[a] = static_cast<uint16_t>(acc);
            }
            nd.block_ready = false;
            for (uint32_t a = 0; a < k_; ++a) fix(child(nd, a), v[a]);
        }
    }

    uint32_t qpow(uint32_t e) const {
        uint32_t r = 1;
        for (uint32_t i = 0; i < e; ++i) r *= q_;
        return r;
    }

    const ProductPrior& prior_;
    uint32_t q_, k_, qk_ = 1;
    const FieldMatrix& M_;
    const FieldMatrix& Minv_;
    std::vector<Node> nodes_;
    std::vector<std::vector<int32_t>> children_;
    int32_t root_ = 0;
    bool poisoned_ = false;
};

}  // namespace

FieldVector fast_decode(const ProductPrior& prior, const PartialVector& known,
                        const TensorTransform& tt) {
    const uint32_t m = tt.m;
    const uint32_t q = tt.kernel.mod.q;
    check_prior(prior, m, q);
    if (known.size() != m) throw std::invalid_argument("known length mismatch");

    FieldVector z(tt.kernel.mod, m);
    if (tt.t == 0) {
        std::vector<double> p = prior[0];
        double s = 0;
        for (double x : p) s += x;
        for (double& x : p) x /= s;
        z[0] = known[0] >= 0 ? static_cast<uint16_t>(known[0]) : argmax_smallest(p);
        return z;
    }
    FastDecoder dec(prior, tt);
    for (uint32_t i = 0; i < m; ++i) {
        std::vector<double> law = dec.law_of_next();
        uint16_t u = known[i] >= 0 ? static_cast<uint16_t>(known[i]) : argmax_smallest(law);
        dec.fix_next(u);
    }
    std::vector<uint16_t> out(m, 0);
    dec.collect(out);
    z.v = std::move(out);
    return z;
}

namespace {

void check_payload(const CompressedPayload& payload, const SelectionSets& sets,
                   const TensorTransform& tt) {
    validate_sets(sets);
    if (payload.q != tt.kernel.mod.q || payload.k != tt.kernel.k || payload.t != tt.t) {
        throw std::invalid_argument("payload header does not match the transform");
    }
    if (sets.m != tt.m || payload.epsilon != sets.epsilon) {
        throw std::invalid_argument("payload header does not match the selection sets");
    }
    const uint32_t jstar = sets.jstar();
    if (payload.bitmaps.size() != jstar || payload.columns.size() != tt.m) {
        throw std::invalid_argument("payload column structure mismatch");
    }
    for (uint32_t j = 0; j < jstar; ++j) {
        if (payload.bitmaps[j] != sets.bitmaps[j]) {
            throw std::invalid_argument("payload selection bitmap differs from the sets file");
        }
        if (payload.columns[j].size() != sets.column_count(j)) {
            throw std::invalid_argument("payload column symbol count mismatch");
        }
    }
    for (uint32_t j = jstar; j < tt.m; ++j) {
        if (payload.columns[j].size() != tt.m) {
            throw std::invalid_argument("payload tail column not full");
        }
    }
}

}  // namespace

DecodeReport decompress(const HiddenMarkovSource& src, const CompressedPayload& payload,
                        const SelectionSets& sets, const TensorTransform& tt) {
    check_payload(payload, sets, tt);
    if (src.mod.q != tt.kernel.mod.q) throw std::invalid_argument("source modulus mismatch");
    const uint32_t m = tt.m;
    const uint32_t q = src.mod.q;
    const uint32_t jstar = sets.jstar();

    DecodeReport rep;
    rep.z = FieldMatrix(src.mod, m, m);

    std::vector<ForwardState> states(m, initial_forward_state(src));
    std::vector<char> dead(m, 0);
    const std::vector<double> uniform(q, 1.0 / static_cast<double>(q));

    ProductPrior prior(m);
    PartialVector known(m);
    std::vector<uint16_t> col(m);
    for (uint32_t j = 0; j < m; ++j) {
        if (j < jstar) {
            for (uint32_t i = 0; i < m; ++i) {
                prior[i] = dead[i] ? uniform : next_symbol_distribution(src, states[i]);
            }
            size_t pos = 0;
            for (uint32_t i = 0; i < m; ++i) {
                known[i] = sets.selected(j, i)
                               ? static_cast<int32_t>(payload.columns[j][pos++])
                               : -1;
            }
            FieldVector zc = fast_decode(prior, known, tt);
            for (uint32_t i = 0; i < m; ++i) rep.z.at(i, j) = zc[i];
            for (uint32_t i = 0; i < m; ++i) {
                if (dead[i]) continue;
                try {
                    forward_step(src, states[i], zc[i]);
                } catch (const InferenceError&) {
                    dead[i] = 1;
                    rep.inference_ok = false;
                }
            }
        } else {
            for (uint32_t i = 0; i < m; ++i) col[i] = payload.columns[j][i];
            if (tt.t > 0) tt.apply_inplace(col.data(), tt.kernel.M_inv);
            for (uint32_t i = 0; i < m; ++i) rep.z.at(i, j) = col[i];
        }
    }
    if (payload.has_crc()) rep.crc_ok = (matrix_crc(rep.z) == payload.crc);
    return rep;
}

ProbeReport decompress_success_probe(const HiddenMarkovSource& src, const SelectionSets& sets,
                                     const TensorTransform& tt, size_t trials, uint64_t seed,
                                     const ProbeOptions& opts) {
    validate_sets(sets);
    if (sets.m != tt.m) throw std::invalid_argument("probe: sets/transform mismatch");
    const uint32_t m = tt.m;

    std::vector<char> fail(trials, 0), inffail(trials, 0);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t r = next.fetch_add(1);
            if (r >= trials) break;
            uint64_t sr = derive_seed(seed, 0x7472690000ULL + r);
            FieldMatrix Z(src.mod, m, m);
            if (opts.row_independent) {
                Z = sample_independent_rows(src, m, sr);
            } else {
                FieldVector stream = sample_sequence(src, static_cast<size_t>(m) * m, sr);
                for (uint32_t i = 0; i < m; ++i) {
                    for (uint32_t j = 0; j < m; ++j) Z.at(i, j) = stream[i * m + j];
                }
            }
            CompressedPayload payload = compress(Z, sets, tt);
            DecodeReport rep = decompress(src, payload, sets, tt);
            if (!(rep.z == Z)) fail[r] = 1;
            if (!rep.inference_ok) inffail[r] = 1;
        }
    };
    unsigned jobs = opts.jobs == 0 ? 1 : opts.jobs;
    if (jobs <= 1 || trials <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ProbeReport rep;
    rep.trials = trials;
    for (size_t r = 0; r < trials; ++r) {
        rep.failures += fail[r];
        rep.inference_failures += inffail[r];
    }
    rep.achieved_rate = sets.achieved_rate();
    return rep;
}

}  // namespace plhm
