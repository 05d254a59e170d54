#include "plhm/preprocess.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <queue>
#include <stdexcept>
#include <thread>

#include "plhm/rng.hpp"

namespace plhm {

EpsilonNet::EpsilonNet(uint32_t q_, double eps_) : q(q_), eps(eps_) {
    if (q < 2) throw std::invalid_argument("net needs q >= 2");
    if (!(eps > 0) || !(eps <= 2.0)) throw std::invalid_argument("net resolution must be in (0, 2]");
    double d = std::ceil(static_cast<double>(q) / eps);
    if (d > 1e12) throw std::invalid_argument("net resolution too fine");
    denom = std::max<uint64_t>(1, static_cast<uint64_t>(d));
}

uint64_t simplex_grid_size(uint32_t q, uint64_t denom) {
    // C(denom + q - 1, q - 1), saturating
    const uint64_t cap = uint64_t(1) << 62;
    unsigned __int128 acc = 1;
    for (uint32_t i = 1; i < q; ++i) {
        acc = acc * (denom + i) / i;
        if (acc > cap) return cap;
    }
    return static_cast<uint64_t>(acc);
}

namespace {

// reusable buffers for the rounding inner loop; one set per thread
struct RoundScratch {
    std::vector<double> rem;
    std::vector<uint32_t> order;
};

void counts_at_into(const double* p, uint32_t q, uint64_t D, uint64_t* c, RoundScratch& rs) {
    rs.rem.resize(q);
    rs.order.resize(q);
    double dd = static_cast<double>(D);
    for (uint32_t i = 0; i < q; ++i) {
        double x = p[i] * dd;
        if (x < 0) x = 0;
        // nudge so values that are grid points up to fp noise floor cleanly
        double f = std::floor(x * (1.0 + 4e-12) + 1e-9);
        if (f > dd) f = dd;
        c[i] = static_cast<uint64_t>(f);
        rs.rem[i] = x - f;
    }
    uint64_t sum = 0;
    for (uint32_t i = 0; i < q; ++i) sum += c[i];
    for (uint32_t i = 0; i < q; ++i) rs.order[i] = i;
    const auto& rem = rs.rem;
    if (sum < D) {
        uint64_t units = D - sum;
        std::sort(rs.order.begin(), rs.order.end(), [&](uint32_t a, uint32_t b) {
            if (rem[a] != rem[b]) return rem[a] > rem[b];
            return a < b;
        });
        for (uint64_t u = 0; u < units; ++u) c[rs.order[u % q]] += 1;
    } else if (sum > D) {
        uint64_t units = sum - D;
        std::sort(rs.order.begin(), rs.order.end(), [&](uint32_t a, uint32_t b) {
            if (rem[a] != rem[b]) return rem[a] < rem[b];
            return a > b;
        });
        for (uint64_t u = 0; u < units && u < 4 * static_cast<uint64_t>(q); ++u) {
            uint32_t i = rs.order[u % q];
            if (c[i] > 0) c[i] -= 1;
        }
    }
}

std::vector<uint64_t> counts_at(const SimplexPoint& p, uint32_t q, uint64_t D) {
    std::vector<uint64_t> c(q, 0);
    RoundScratch rs;
    counts_at_into(p.data(), q, D, c.data(), rs);
    return c;
}

}  // namespace

std::vector<uint64_t> round_to_net_counts(const EpsilonNet& net, const SimplexPoint& p) {
    if (p.size() != net.q) throw std::invalid_argument("point dimension does not match net");
    return counts_at(p, net.q, net.denom);
}

SimplexPoint round_to_net(const EpsilonNet& net, const SimplexPoint& p) {
    auto c = round_to_net_counts(net, p);
    SimplexPoint out(net.q);
    for (uint32_t i = 0; i < net.q; ++i)
        out[i] = static_cast<double>(c[i]) / static_cast<double>(net.denom);
    return out;
}

ConditionalDistribution ConditionalDistribution::point_mass(const SimplexPoint& d) {
    ConditionalDistribution out;
    out.q = static_cast<uint32_t>(d.size());
    out.support.push_back({d, 1.0});
    return out;
}

void validate_conditional(const ConditionalDistribution& d) {
    if (d.q < 2) throw std::invalid_argument("conditional distribution needs q >= 2");
    if (d.support.empty()) throw std::invalid_argument("conditional distribution has empty support");
    double total = 0;
    for (const auto& wp : d.support) {
        if (wp.dist.size() != d.q) throw std::invalid_argument("support point has wrong dimension");
        if (wp.weight < -1e-12) throw std::invalid_argument("negative support weight");
        double s = 0;
        for (double x : wp.dist) {
            if (x < -1e-9) throw std::invalid_argument("negative probability in support point");
            s += x;
        }
        if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("support point does not sum to 1");
        total += wp.weight;
    }
    if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("support weights do not sum to 1");
}

double shannon_entropy(const SimplexPoint& p) {
    double h = 0;
    for (double x : p)
        if (x > 0) h -= x * std::log(x);
    return h;
}

double cond_entropy(const ConditionalDistribution& d) {
    double h = 0;
    for (const auto& wp : d.support)
        if (wp.weight > 0) h += wp.weight * shannon_entropy(wp.dist);
    return h / std::log(static_cast<double>(d.q));
}

namespace {

// min-cost max-flow, successive shortest paths with potentials
struct FlowEdge {
    int to;
    double cap;
    double cost;
    int rev;
};

struct FlowGraph {
    std::vector<std::vector<FlowEdge>> adj;

    explicit FlowGraph(int n) : adj(n) {}

    void add(int u, int v, double cap, double cost) {
        adj[u].push_back({v, cap, cost, static_cast<int>(adj[v].size())});
        adj[v].push_back({u, 0.0, -cost, static_cast<int>(adj[u].size()) - 1});
    }

    double min_cost_flow(int s, int t) {
        const int n = static_cast<int>(adj.size());
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> pot(n, 0.0);
        double total_cost = 0;
        for (;;) {
            std::vector<double> dist(n, inf);
            std::vector<int> pe(n, -1), pv(n, -1);
            dist[s] = 0;
            using Item = std::pair<double, int>;
            std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
            pq.push({0.0, s});
            while (!pq.empty()) {
                auto [du, u] = pq.top();
                pq.pop();
                if (du > dist[u] + 1e-12) continue;
                for (int ei = 0; ei < static_cast<int>(adj[u].size()); ++ei) {
                    const FlowEdge& e = adj[u][ei];
                    if (e.cap <= 1e-15) continue;
                    double nd = dist[u] + e.cost + pot[u] - pot[e.to];
                    if (nd < dist[e.to] - 1e-15) {
                        dist[e.to] = nd;
                        pv[e.to] = u;
                        pe[e.to] = ei;
                        pq.push({nd, e.to});
                    }
                }
            }
            if (!(dist[t] < inf)) break;
            for (int v = 0; v < n; ++v)
                if (dist[v] < inf) pot[v] += dist[v];
            double push = inf;
            for (int v = t; v != s; v = pv[v]) push = std::min(push, adj[pv[v]][pe[v]].cap);
            if (!(push > 1e-15)) break;
            for (int v = t; v != s; v = pv[v]) {
                FlowEdge& e = adj[pv[v]][pe[v]];
                e.cap -= push;
                adj[v][e.rev].cap += push;
                total_cost += push * e.cost;
            }
        }
        return total_cost;
    }
};

double l1_dist(const SimplexPoint& a, const SimplexPoint& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

}  // namespace

double conditional_distance(const ConditionalDistribution& A, const ConditionalDistribution& B) {
    validate_conditional(A);
    validate_conditional(B);
    if (A.q != B.q) throw std::invalid_argument("dimension mismatch in conditional distance");
    const int na = static_cast<int>(A.support.size());
    const int nb = static_cast<int>(B.support.size());
    if (static_cast<long long>(na) * nb > 4'000'000)
        throw std::runtime_error("conditional distance: supports too large");
    FlowGraph g(na + nb + 2);
    const int src = 0, snk = na + nb + 1;
    for (int i = 0; i < na; ++i) g.add(src, 1 + i, A.support[i].weight, 0.0);
    for (int j = 0; j < nb; ++j) g.add(1 + na + j, snk, B.support[j].weight, 0.0);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j)
            g.add(1 + i, 1 + na + j, std::numeric_limits<double>::infinity(),
                  l1_dist(A.support[i].dist, B.support[j].dist));
    return g.min_cost_flow(src, snk);
}

namespace {

uint64_t ipow(uint64_t b, uint32_t e) {
    uint64_t r = 1;
    while (e--) r *= b;
    return r;
}

// shared core of kernel_step: enumerate support tuples and field inputs,
// deliver (conditional law, weight) pairs for coordinate j
template <typename Sink>
void kernel_step_scan(const ConditionalDistribution& cur, uint32_t j, const MixingKernel& M,
                      Sink&& sink) {
    const uint32_t q = cur.q;
    if (M.mod.q != q) throw std::invalid_argument("kernel field does not match distribution");
    const uint32_t k = M.k;
    if (j < 1 || j > k) throw std::invalid_argument("kernel coordinate out of range");
    const size_t s = cur.support.size();
    if (s == 0) throw std::invalid_argument("kernel step on empty support");
    double work = std::pow(static_cast<double>(s), static_cast<double>(k)) *
                  std::pow(static_cast<double>(q), static_cast<double>(k));
    if (work > 5e8) throw std::runtime_error("kernel step: support too large");

    const uint64_t qk = ipow(q, k);
    const uint64_t prefixes = ipow(q, j - 1);
    // z -> (packed prefix of Mz, coordinate j of Mz), independent of the tuple
    std::vector<uint64_t> pre(qk);
    std::vector<uint32_t> zrow(qk * k);
    std::vector<uint16_t> uj(qk);
    {
        std::vector<uint32_t> z(k, 0);
        for (uint64_t zi = 0; zi < qk; ++zi) {
            uint64_t p = 0;
            for (uint32_t r = 0; r + 1 < j; ++r) {
                uint32_t ur = 0;
                for (uint32_t c = 0; c < k; ++c) ur = fadd_mul(ur, M.M.at(r, c), z[c], q);
                p = p * q + ur;
            }
            uint32_t u = 0;
            for (uint32_t c = 0; c < k; ++c) u = fadd_mul(u, M.M.at(j - 1, c), z[c], q);
            pre[zi] = p;
            uj[zi] = static_cast<uint16_t>(u);
            for (uint32_t c = 0; c < k; ++c) zrow[zi * k + c] = z[c];
            for (uint32_t c = k; c-- > 0;) {
                if (++z[c] < q) break;
                z[c] = 0;
            }
        }
    }

    std::vector<double> table(prefixes * q);
    std::vector<size_t> idx(k, 0);
    std::vector<const double*> comp(k);
    SimplexPoint point(q);
    const size_t tuples = static_cast<size_t>(std::llround(std::pow(static_cast<double>(s), static_cast<double>(k))));
    for (size_t ti = 0; ti < tuples; ++ti) {
        double w = 1.0;
        for (uint32_t a = 0; a < k; ++a) {
            const auto& wp = cur.support[idx[a]];
            w *= wp.weight;
            comp[a] = wp.dist.data();
        }
        if (w > 0) {
            std::fill(table.begin(), table.end(), 0.0);
            for (uint64_t zi = 0; zi < qk; ++zi) {
                double pz = w;
                const uint32_t* zd = &zrow[zi * k];
                for (uint32_t a = 0; a < k; ++a) pz *= comp[a][zd[a]];
                if (pz > 0) table[pre[zi] * q + uj[zi]] += pz;
            }
            for (uint64_t p = 0; p < prefixes; ++p) {
                double mass = 0;
                for (uint32_t x = 0; x < q; ++x) mass += table[p * q + x];
                if (mass <= 0) continue;
                for (uint32_t x = 0; x < q; ++x) point[x] = table[p * q + x] / mass;
                sink(point, mass);
            }
        }
        for (uint32_t a = k; a-- > 0;) {
            if (++idx[a] < s) break;
            idx[a] = 0;
        }
    }
}

// one grid cell: total weight plus the weighted sum of the original points,
// so a capped support can fall back to cell means instead of grid corners.
// Cells sit in flat arrays behind an open-addressing index so the fused
// scan/round/merge loop stays allocation-free; the scan over a 512-point
// support visits ~0.5M sinks per kernel edge and a node-based map was the
// dominant cost of preprocessing.
struct CellBank {
    uint32_t q = 2;
    std::vector<uint64_t> keys;   // q grid counts per cell
    std::vector<double> wsum;     // q weighted coordinates per cell, in psum
    std::vector<double> psum;
    std::vector<uint32_t> table;  // open addressing, slot -> cell index + 1
    size_t mask = 0;

    size_t size() const { return wsum.size(); }

    static uint64_t hash_key(const uint64_t* k, uint32_t n) {
        uint64_t h = 1469598103934665603ULL;
        for (uint32_t i = 0; i < n; ++i) {
            h ^= k[i];
            h *= 1099511628211ULL;
        }
        h ^= h >> 31;
        return h;
    }

    // hint: expected cell count; table shrinks back for small jobs so a large
    // run does not leave every later call clearing megabytes of slots
    void reset(uint32_t q_, size_t hint) {
        q = q_;
        keys.clear();
        wsum.clear();
        psum.clear();
        size_t want = 2048;
        while (want < 2 * hint && want < (size_t(1) << 22)) want <<= 1;
        table.assign(want, 0);
        mask = want - 1;
    }

    void rehash() {
        size_t want = (mask + 1) * 2;
        table.assign(want, 0);
        mask = want - 1;
        for (size_t b = 0; b < size(); ++b) {
            size_t i = hash_key(&keys[b * q], q) & mask;
            while (table[i] != 0) i = (i + 1) & mask;
            table[i] = static_cast<uint32_t>(b) + 1;
        }
    }

    void add(const uint64_t* key, const double* point, double w) {
        if ((size() + 1) * 10 >= (mask + 1) * 7) rehash();
        size_t i = hash_key(key, q) & mask;
        for (;;) {
            uint32_t slot = table[i];
            if (slot == 0) {
                table[i] = static_cast<uint32_t>(size()) + 1;
                keys.insert(keys.end(), key, key + q);
                wsum.push_back(w);
                for (uint32_t x = 0; x < q; ++x) psum.push_back(w * point[x]);
                return;
            }
            const uint64_t* kk = &keys[static_cast<size_t>(slot - 1) * q];
            bool same = true;
            for (uint32_t x = 0; x < q; ++x) {
                if (kk[x] != key[x]) {
                    same = false;
                    break;
                }
            }
            if (same) {
                size_t b = slot - 1;
                wsum[b] += w;
                double* ps = &psum[b * q];
                for (uint32_t x = 0; x < q; ++x) ps[x] += w * point[x];
                return;
            }
            i = (i + 1) & mask;
        }
    }
};

struct RoundWorkspace {
    CellBank bank;
    CellBank spare;
    RoundScratch rs;
    std::vector<uint64_t> keybuf;
};

RoundWorkspace& round_ws() {
    thread_local RoundWorkspace ws;
    return ws;
}

// Within the cap, supports live on the grid (counts / D). When the support
// exceeds the cap the grid is halved and each surviving cell is represented
// by its weighted mean, which keeps near-deterministic laws from being
// quantized up to the grid floor. Emits sorted by grid counts.
ConditionalDistribution cap_and_emit(RoundWorkspace& ws, uint64_t D, const RoundingPolicy& pol) {
    CellBank& bank = ws.bank;
    const uint32_t q = bank.q;
    bool capped = bank.size() > pol.support_cap;
    SimplexPoint mean(q);
    ws.keybuf.resize(q);
    while (bank.size() > pol.support_cap && D > 1) {
        uint64_t nd = std::max<uint64_t>(1, D / 2);
        ws.spare.reset(q, bank.size());
        for (size_t b = 0; b < bank.size(); ++b) {
            double w = bank.wsum[b];
            const double* ps = &bank.psum[b * q];
            for (uint32_t i = 0; i < q; ++i) mean[i] = ps[i] / w;
            counts_at_into(mean.data(), q, nd, ws.keybuf.data(), ws.rs);
            ws.spare.add(ws.keybuf.data(), mean.data(), w);
        }
        std::swap(bank, ws.spare);
        D = nd;
    }
    const size_t n = bank.size();
    std::vector<uint32_t> ord(n);
    std::iota(ord.begin(), ord.end(), 0u);
    std::sort(ord.begin(), ord.end(), [&](uint32_t a, uint32_t b) {
        const uint64_t* ka = &bank.keys[static_cast<size_t>(a) * q];
        const uint64_t* kb = &bank.keys[static_cast<size_t>(b) * q];
        return std::lexicographical_compare(ka, ka + q, kb, kb + q);
    });
    ConditionalDistribution out;
    out.q = q;
    out.support.reserve(n);
    double total = 0;
    for (size_t b = 0; b < n; ++b) total += bank.wsum[b];
    if (total <= 0) throw std::runtime_error("rounded support lost all mass");
    for (uint32_t b : ord) {
        SimplexPoint p(q);
        if (capped) {
            const double* ps = &bank.psum[static_cast<size_t>(b) * q];
            for (uint32_t i = 0; i < q; ++i) p[i] = ps[i] / bank.wsum[b];
        } else {
            const uint64_t* kk = &bank.keys[static_cast<size_t>(b) * q];
            for (uint32_t i = 0; i < q; ++i)
                p[i] = static_cast<double>(kk[i]) / static_cast<double>(D);
        }
        out.support.push_back({std::move(p), bank.wsum[b] / total});
    }
    return out;
}

RoundingPolicy clamp_policy(RoundingPolicy pol, uint32_t q, uint32_t k) {
    if (pol.support_cap < 2) pol.support_cap = 2;
    // keep the tuple enumeration in kernel_step within budget
    const double budget = static_cast<double>(uint64_t(1) << 26);
    while (pol.support_cap > 16 &&
           std::pow(static_cast<double>(pol.support_cap), static_cast<double>(k)) *
                   std::pow(static_cast<double>(q), static_cast<double>(k)) >
               budget)
        pol.support_cap /= 2;
    return pol;
}

// kernel step fused with prune + round, never materializing the raw support
ConditionalDistribution kernel_step_rounded(const ConditionalDistribution& cur, uint32_t j,
                                            const MixingKernel& M, double eps_net,
                                            const RoundingPolicy& pol) {
    EpsilonNet net(cur.q, eps_net);
    RoundWorkspace& ws = round_ws();
    double sinks = std::pow(static_cast<double>(cur.support.size()), static_cast<double>(M.k)) *
                   std::pow(static_cast<double>(cur.q), static_cast<double>(j > 0 ? j - 1 : 0));
    ws.bank.reset(cur.q, static_cast<size_t>(std::min(sinks, 4.0e6)));
    ws.keybuf.resize(cur.q);
    kernel_step_scan(cur, j, M, [&](const SimplexPoint& p, double w) {
        if (w < pol.prune_below) return;
        counts_at_into(p.data(), cur.q, net.denom, ws.keybuf.data(), ws.rs);
        ws.bank.add(ws.keybuf.data(), p.data(), w);
    });
    if (ws.bank.size() == 0) throw std::runtime_error("kernel step lost all mass");
    return cap_and_emit(ws, net.denom, pol);
}

}  // namespace

ConditionalDistribution kernel_step(const ConditionalDistribution& cur, uint32_t j,
                                    const MixingKernel& M) {
    ConditionalDistribution out;
    out.q = cur.q;
    kernel_step_scan(cur, j, M, [&](const SimplexPoint& p, double w) {
        out.support.push_back({p, w});
    });
    return out;
}

ConditionalDistribution round_support(const ConditionalDistribution& d, double eps_net,
                                      const RoundingPolicy& pol) {
    EpsilonNet net(d.q, eps_net);
    RoundWorkspace& ws = round_ws();
    ws.bank.reset(d.q, d.support.size());
    ws.keybuf.resize(d.q);
    for (const auto& wp : d.support) {
        if (wp.weight <= 0) continue;
        counts_at_into(wp.dist.data(), d.q, net.denom, ws.keybuf.data(), ws.rs);
        ws.bank.add(ws.keybuf.data(), wp.dist.data(), wp.weight);
    }
    if (ws.bank.size() == 0) throw std::runtime_error("rounding lost all mass");
    return cap_and_emit(ws, net.denom, pol);
}

ConditionalDistribution approx_dist(const ConditionalDistribution& base, double eps, uint32_t t,
                                    const std::vector<uint32_t>& I, const MixingKernel& M,
                                    const RoundingPolicy& pol) {
    if (I.size() != t) throw std::invalid_argument("coordinate path length does not match depth");
    if (!(eps > 0)) throw std::invalid_argument("tolerance must be positive");
    RoundingPolicy eff = clamp_policy(pol, base.q, M.k);
    if (t == 0) return base;
    std::vector<uint32_t> head(I.begin(), I.end() - 1);
    double sub_eps = eps / (2.0 * static_cast<double>(M.k));
    ConditionalDistribution sub = approx_dist(base, sub_eps, t - 1, head, M, eff);
    return kernel_step_rounded(sub, I[t - 1], M, eps / 2.0, eff);
}

EntropyEstimates approx_entropy(const ConditionalDistribution& base, double gamma, uint32_t t,
                                const MixingKernel& M, const RoundingPolicy& pol) {
    if (!(gamma > 0) || !(gamma <= 1)) throw std::invalid_argument("gamma must be in (0, 1]");
    RoundingPolicy eff = clamp_policy(pol, base.q, M.k);
    const uint32_t k = M.k;
    const double eps_top = gamma * gamma;
    uint64_t mm = ipow(k, t);
    if (mm > (uint64_t(1) << 20)) throw std::invalid_argument("entropy estimate: k^t too large");
    EntropyEstimates out(mm, 0.0);

    // shared-prefix trie over coordinate paths; depth d applies the kernel at
    // tolerance eps_top / (2k)^(t-d-1), rounding to the half-tolerance net
    struct Walker {
        const MixingKernel& M;
        const RoundingPolicy& eff;
        uint32_t t;
        uint32_t k;
        double eps_top;
        EntropyEstimates& out;

        void walk(const ConditionalDistribution& cur, uint32_t depth, uint64_t idx) {
            if (depth == t) {
                out[idx] = cond_entropy(cur);
                return;
            }
            double tol = eps_top;
            for (uint32_t d = 0; d + depth + 1 < t; ++d) tol /= 2.0 * static_cast<double>(k);
            for (uint32_t j = 1; j <= k; ++j) {
                ConditionalDistribution child = kernel_step_rounded(cur, j, M, tol / 2.0, eff);
                walk(child, depth + 1, idx * k + (j - 1));
            }
        }
    };
    Walker w{M, eff, t, k, eps_top, out};
    w.walk(base, 0, 0);
    return out;
}

namespace {

std::vector<uint64_t> serialize_support(const ConditionalDistribution& d) {
    std::vector<uint64_t> key;
    key.reserve(d.support.size() * (d.q + 1));
    for (const auto& wp : d.support) {
        for (double x : wp.dist) key.push_back(std::bit_cast<uint64_t>(x));
        key.push_back(std::bit_cast<uint64_t>(wp.weight));
    }
    return key;
}

}  // namespace

SelectionSets polar_preprocess(const HiddenMarkovSource& src, const TensorTransform& tt,
                               const PreprocessOptions& opts) {
    if (src.mod.q != tt.kernel.mod.q)
        throw std::invalid_argument("source and transform field mismatch");
    if (opts.samples == 0) throw std::invalid_argument("need at least one sample per column");
    if (!(opts.gamma > 0) || !(opts.gamma <= 1))
        throw std::invalid_argument("gamma must be in (0, 1]");
    const uint32_t q = src.mod.q;
    const uint32_t m = tt.m;
    SelectionSets sets(m, opts.epsilon);
    const uint32_t jstar = sets.jstar();
    if (jstar == 0) return sets;

    RoundingPolicy eff = clamp_policy(opts.rounding, q, tt.kernel.k);
    EpsilonNet gnet(q, opts.gamma);

    std::vector<EntropyEstimates> hs(jstar);
    std::map<std::vector<uint64_t>, EntropyEstimates> memo;
    std::mutex memo_mu;
    std::atomic<uint32_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;

    auto column_entropies = [&](uint32_t cj) {
        const uint64_t col_seed = opts.seed ^ static_cast<uint64_t>(cj + 1);
        RoundWorkspace& ws = round_ws();
        ws.bank.reset(q, opts.samples);
        ws.keybuf.resize(q);
        const double wr = 1.0 / static_cast<double>(opts.samples);
        for (uint32_t r = 0; r < opts.samples; ++r) {
            FieldVector prefix = sample_sequence(src, cj, derive_seed(col_seed, r));
            SimplexPoint law = conditional_after_prefix(src, prefix.v);
            counts_at_into(law.data(), q, gnet.denom, ws.keybuf.data(), ws.rs);
            ws.bank.add(ws.keybuf.data(), law.data(), wr);
        }
        ConditionalDistribution base = cap_and_emit(ws, gnet.denom, eff);
        auto key = serialize_support(base);
        {
            std::lock_guard<std::mutex> lk(memo_mu);
            auto it = memo.find(key);
            if (it != memo.end()) {
                hs[cj] = it->second;
                return;
            }
        }
        EntropyEstimates h = approx_entropy(base, opts.gamma, tt.t, tt.kernel, eff);
        {
            std::lock_guard<std::mutex> lk(memo_mu);
            memo.emplace(std::move(key), h);
        }
        hs[cj] = std::move(h);
    };

    unsigned jobs = std::max(1u, opts.jobs);
    unsigned nthreads = std::min<unsigned>(jobs, jstar);
    auto worker = [&]() {
        for (;;) {
            uint32_t cj = next.fetch_add(1);
            if (cj >= jstar) return;
            try {
                column_entropies(cj);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (unsigned i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    for (uint32_t cj = 0; cj < jstar; ++cj) {
        if (hs[cj].size() != m) throw std::runtime_error("entropy estimate has wrong length");
        for (uint32_t i = 0; i < m; ++i)
            if (hs[cj][i] > opts.threshold) sets.set_selected(cj, i, true);
    }
    return sets;
}

}  // namespace plhm
