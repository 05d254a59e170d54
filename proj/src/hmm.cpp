#include "plhm/hmm.hpp"

#include <cmath>
#include <numeric>

#include "plhm/rng.hpp"

namespace plhm {

namespace {

constexpr double kProbTol = 1e-9;

void check_distribution(const std::vector<double>& p, const char* what) {
    double sum = 0;
    for (double x : p) {
        if (x < 0) throw ModelError(std::string(what) + ": negative probability");
        sum += x;
    }
    if (std::abs(sum - 1.0) > kProbTol) {
        throw ModelError(std::string(what) + ": probabilities do not sum to 1");
    }
}

}  // namespace

void validate_chain(const MarkovChain& c) {
    if (c.ell == 0) throw ModelError("chain has no states");
    if (c.transition.size() != c.ell * c.ell) throw ModelError("transition matrix shape");
    if (c.initial.size() != c.ell) throw ModelError("initial distribution shape");
    for (size_t i = 0; i < c.ell; ++i) {
        std::vector<double> row(c.transition.begin() + i * c.ell,
                                c.transition.begin() + (i + 1) * c.ell);
        check_distribution(row, "transition row");
    }
    check_distribution(c.initial, "initial distribution");
}

void validate_source(const HiddenMarkovSource& src) {
    validate_chain(src.chain);
    const size_t ell = src.chain.ell;
    const uint32_t q = src.mod.q;
    if (src.emissions.size() != ell * q) throw ModelError("emission matrix shape");
    for (size_t i = 0; i < ell; ++i) {
        std::vector<double> row(src.emissions.begin() + i * q, src.emissions.begin() + (i + 1) * q);
        check_distribution(row, "emission row");
    }
}

namespace {

// Strong connectivity of the support graph by forward+backward reachability,
// then aperiodicity via gcd of (d[u] + 1 - d[v]) over edges u->v of a BFS
// labeling d.
bool irreducible_aperiodic(const MarkovChain& c) {
    const size_t n = c.ell;
    auto reach = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<size_t> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            size_t u = stack.back();
            stack.pop_back();
            for (size_t v = 0; v < n; ++v) {
                double w = transpose ? c.trans(v, u) : c.trans(u, v);
                if (w > 0 && !seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
            }
        }
        for (char s : seen)
            if (!s) return false;
        return true;
    };
    if (!reach(false) || !reach(true)) return false;

    std::vector<long> depth(n, -1);
    std::vector<size_t> queue{0};
    depth[0] = 0;
    for (size_t h = 0; h < queue.size(); ++h) {
        size_t u = queue[h];
        for (size_t v = 0; v < n; ++v) {
            if (c.trans(u, v) > 0 && depth[v] < 0) {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }
    long g = 0;
    for (size_t u = 0; u < n; ++u) {
        for (size_t v = 0; v < n; ++v) {
            if (c.trans(u, v) > 0) {
                g = std::gcd(g, depth[u] + 1 - depth[v]);
            }
        }
    }
    return std::abs(g) == 1;
}

}  // namespace

std::vector<double> stationary_distribution(const MarkovChain& chain) {
    validate_chain(chain);
    if (!irreducible_aperiodic(chain)) {
        throw ModelError("chain is not irreducible and aperiodic");
    }
    const size_t n = chain.ell;
    std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
    const int cap = 200000;
    for (int it = 0; it < cap; ++it) {
        for (size_t j = 0; j < n; ++j) next[j] = 0;
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < n; ++j) next[j] += pi[i] * chain.trans(i, j);
        }
        double norm = std::accumulate(next.begin(), next.end(), 0.0);
        for (double& x : next) x /= norm;
        double dist = 0;
        for (size_t j = 0; j < n; ++j) dist += std::abs(next[j] - pi[j]);
        pi.swap(next);
        if (dist <= 1e-14) {
            // Converged iterate; confirm the fixed-point residual.
            double resid = 0;
            for (size_t j = 0; j < n; ++j) {
                double pj = 0;
                for (size_t i = 0; i < n; ++i) pj += pi[i] * chain.trans(i, j);
                resid += std::abs(pj - pi[j]);
            }
            if (resid <= 1e-10) return pi;
        }
    }
    throw std::runtime_error("stationary distribution did not converge");
}

bool starts_stationary(const HiddenMarkovSource& src) {
    try {
        auto pi = stationary_distribution(src.chain);
        double dist = 0;
        for (size_t i = 0; i < src.chain.ell; ++i) dist += std::abs(pi[i] - src.chain.initial[i]);
        return dist <= 1e-6;
    } catch (const std::exception&) {
        return false;
    }
}

FieldVector sample_sequence(const HiddenMarkovSource& src, size_t n, uint64_t seed) {
    const size_t ell = src.chain.ell;
    Rng rng(seed);
    FieldVector out(src.mod, n);
    std::vector<double> row(ell);
    // X_0 emits nothing.
    for (size_t i = 0; i < ell; ++i) row[i] = src.chain.initial[i];
    size_t state = rng.sample_discrete(row);
    for (size_t tpos = 0; tpos < n; ++tpos) {
        for (size_t j = 0; j < ell; ++j) row[j] = src.chain.trans(state, j);
        state = rng.sample_discrete(row);
        std::vector<double> em(src.emissions.begin() + state * src.mod.q,
                               src.emissions.begin() + (state + 1) * src.mod.q);
        out[tpos] = static_cast<uint16_t>(rng.sample_discrete(em));
    }
    return out;
}

FieldMatrix sample_independent_rows(const HiddenMarkovSource& src, size_t m, uint64_t seed) {
    FieldMatrix Z(src.mod, m, m);
    for (size_t i = 0; i < m; ++i) {
        FieldVector row = sample_sequence(src, m, derive_seed(seed, i));
        for (size_t j = 0; j < m; ++j) Z.at(i, j) = row[j];
    }
    return Z;
}

ForwardState initial_forward_state(const HiddenMarkovSource& src) {
    return ForwardState{src.chain.initial};
}

std::vector<double> predict_state(const HiddenMarkovSource& src, const ForwardState& st) {
    const size_t ell = src.chain.ell;
    std::vector<double> pred(ell, 0.0);
    for (size_t i = 0; i < ell; ++i) {
        double si = st.belief[i];
        if (si == 0) continue;
        for (size_t j = 0; j < ell; ++j) pred[j] += si * src.chain.trans(i, j);
    }
    return pred;
}

void forward_step(const HiddenMarkovSource& src, ForwardState& st, uint32_t observed) {
    const size_t ell = src.chain.ell;
    std::vector<double> pred = predict_state(src, st);
    double norm = 0;
    for (size_t j = 0; j < ell; ++j) {
        pred[j] *= src.emit(j, observed);
        norm += pred[j];
    }
    if (norm <= 0) {
        throw InferenceError("observation has zero likelihood");
    }
    for (size_t j = 0; j < ell; ++j) pred[j] /= norm;
    st.belief.swap(pred);
}

std::vector<double> next_symbol_distribution(const HiddenMarkovSource& src,
                                             const ForwardState& st) {
    const uint32_t q = src.mod.q;
    std::vector<double> pred = predict_state(src, st);
    std::vector<double> law(q, 0.0);
    for (size_t j = 0; j < src.chain.ell; ++j) {
        double pj = pred[j];
        if (pj == 0) continue;
        for (uint32_t x = 0; x < q; ++x) law[x] += pj * src.emit(j, x);
    }
    double norm = std::accumulate(law.begin(), law.end(), 0.0);
    for (double& x : law) x /= norm;
    return law;
}

std::vector<double> conditional_after_prefix(const HiddenMarkovSource& src,
                                             const std::vector<uint16_t>& prefix) {
    ForwardState st = initial_forward_state(src);
    for (uint16_t s : prefix) forward_step(src, st, s);
    return next_symbol_distribution(src, st);
}

EntropyEstimate estimate_entropy_rate(const HiddenMarkovSource& src, size_t n, size_t trials,
                                      uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    const double logq = std::log(static_cast<double>(src.mod.q));
    std::vector<double> per_trial(trials, 0.0);
    for (size_t r = 0; r < trials; ++r) {
        FieldVector z = sample_sequence(src, n, derive_seed(seed, 0x7472ULL * (r + 1)));
        ForwardState st = initial_forward_state(src);
        double nll = 0;
        for (size_t tpos = 0; tpos < n; ++tpos) {
            std::vector<double> law = next_symbol_distribution(src, st);
            nll += -std::log(law[z[tpos]]);
            forward_step(src, st, z[tpos]);
        }
        per_trial[r] = nll / (static_cast<double>(n) * logq);
    }
    EntropyEstimate est;
    est.trials = trials;
    est.mean = std::accumulate(per_trial.begin(), per_trial.end(), 0.0) / trials;
    if (trials > 1) {
        double ss = 0;
        for (double x : per_trial) ss += (x - est.mean) * (x - est.mean);
        est.stderr_ = std::sqrt(ss / (trials * (trials - 1.0)));
    }
    return est;
}

HiddenMarkovSource build_gilbert_elliott(double delta, double p, double q_switch) {
    if (delta < 0 || delta > 0.5) throw ModelError("delta must be in [0, 1/2]");
    if (p < 0 || p > 1 || q_switch < 0 || q_switch > 1) {
        throw ModelError("switch probabilities must be in [0, 1]");
    }
    HiddenMarkovSource src;
    src.mod = FieldModulus(2);
    src.name = "gilbert_elliott";
    src.chain.ell = 2;
    // State 0 = Nice, state 1 = Noisy.
    src.chain.transition = {1 - q_switch, q_switch, p, 1 - p};
    src.emissions = {1 - delta, delta, 0.5 + delta, 0.5 - delta};
    // Closed-form stationary point: flow balance pi(Nice)*q_switch =
    // pi(Noisy)*p. Covers degenerate switch probabilities that power
    // iteration would reject.
    if (p + q_switch > 0) {
        src.chain.initial = {p / (p + q_switch), q_switch / (p + q_switch)};
    } else {
        src.chain.initial = {0.5, 0.5};
    }
    validate_source(src);
    return src;
}

HiddenMarkovSource build_lpn_source(const std::vector<uint8_t>& a, double eta) {
    const size_t l = a.size();
    if (l < 1) throw ModelError("lpn: secret must be nonempty");
    if (eta < 0 || eta > 0.5) throw ModelError("lpn: eta must be in [0, 1/2]");
    for (uint8_t b : a) {
        if (b > 1) throw ModelError("lpn: secret must be a bit vector");
    }
    // State (i, b, c), i in [1, l+1]: position in the block, running parity
    // of <a_1..a_{i-1}, x_1..x_{i-1}>, and the current bit. Layers 1..l emit
    // c (= x_i); layer l+1 emits the block parity xor Bernoulli(eta) noise.
    const size_t layers = l + 1;
    const size_t ns = layers * 4;
    auto id = [&](size_t i, uint32_t b, uint32_t c) { return ((i - 1) * 2 + b) * 2 + c; };

    HiddenMarkovSource src;
    src.mod = FieldModulus(2);
    src.name = "lpn";
    src.chain.ell = ns;
    src.chain.transition.assign(ns * ns, 0.0);
    src.chain.initial.assign(ns, 0.0);
    src.emissions.assign(ns * 2, 0.0);

    auto trans = [&](size_t from, size_t to, double w) {
        src.chain.transition[from * ns + to] += w;
    };
    for (size_t i = 1; i <= l; ++i) {
        for (uint32_t b = 0; b < 2; ++b) {
            for (uint32_t c = 0; c < 2; ++c) {
                size_t s = id(i, b, c);
                src.emissions[s * 2 + c] = 1.0;  // emits x_i
                uint32_t b2 = b ^ (a[i - 1] & c);
                if (i < l) {
                    trans(s, id(i + 1, b2, 0), 0.5);
                    trans(s, id(i + 1, b2, 1), 0.5);
                } else {
                    trans(s, id(l + 1, b2, c), 1.0);
                }
            }
        }
    }
    for (uint32_t b = 0; b < 2; ++b) {
        for (uint32_t c = 0; c < 2; ++c) {
            size_t s = id(l + 1, b, c);
            src.emissions[s * 2 + b] = 1.0 - eta;      // parity
            src.emissions[s * 2 + (b ^ 1)] += eta;     // flipped by noise
            trans(s, id(1, 0, 0), 0.5);
            trans(s, id(1, 0, 1), 0.5);
        }
    }
    // Start in the final layer so the first emitted symbol is x_1 of a block.
    for (uint32_t b = 0; b < 2; ++b) {
        for (uint32_t c = 0; c < 2; ++c) src.chain.initial[id(l + 1, b, c)] = 0.25;
    }
    validate_source(src);
    return src;
}

HiddenMarkovSource build_iid_source(FieldModulus mod, const std::vector<double>& emission,
                                    std::string name) {
    if (emission.size() != mod.q) throw ModelError("iid: emission size must equal q");
    HiddenMarkovSource src;
    src.mod = mod;
    src.name = std::move(name);
    src.chain.ell = 1;
    src.chain.transition = {1.0};
    src.chain.initial = {1.0};
    src.emissions = emission;
    validate_source(src);
    return src;
}

}  // namespace plhm
