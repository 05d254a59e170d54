#pragma once

#include <optional>
#include <string>
#include <vector>

#include "plhm/field.hpp"

namespace plhm {

struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& w) : std::runtime_error(w) {}
};

struct InferenceError : std::runtime_error {
    explicit InferenceError(const std::string& w) : std::runtime_error(w) {}
};

struct MarkovChain {
    size_t ell = 1;
    std::vector<double> transition;  // row-major ell x ell, rows sum to 1
    std::vector<double> initial;     // distribution over [ell]

    double trans(size_t from, size_t to) const { return transition[from * ell + to]; }
};

void validate_chain(const MarkovChain& c);

// Power iteration; requires an irreducible aperiodic support graph.
std::vector<double> stationary_distribution(const MarkovChain& chain);

// Hidden Markov source: X_0 ~ initial emits nothing; each later state X_t
// emits one symbol from its emission row.
struct HiddenMarkovSource {
    MarkovChain chain;
    FieldModulus mod;
    std::vector<double> emissions;  // ell x q row-major
    std::optional<double> declared_mixing_time;
    std::string name;

    double emit(size_t state, uint32_t sym) const { return emissions[state * mod.q + sym]; }
};

void validate_source(const HiddenMarkovSource& src);

// True when the declared initial distribution matches the stationary one
// (all per-column guarantees assume a stationary start). False for chains
// where the stationary distribution is undefined.
bool starts_stationary(const HiddenMarkovSource& src);

FieldVector sample_sequence(const HiddenMarkovSource& src, size_t n, uint64_t seed);

// m independent rows, each a fresh length-m sample; row i uses a sub-seed
// derived from (seed, i).
FieldMatrix sample_independent_rows(const HiddenMarkovSource& src, size_t m, uint64_t seed);

struct ForwardState {
    std::vector<double> belief;  // posterior over hidden states given emitted prefix
};

ForwardState initial_forward_state(const HiddenMarkovSource& src);

// Posterior over the next hidden state: transition applied to the belief.
std::vector<double> predict_state(const HiddenMarkovSource& src, const ForwardState& st);

// Conditions on one observed symbol. Throws InferenceError when the symbol
// has zero likelihood under the predicted belief.
void forward_step(const HiddenMarkovSource& src, ForwardState& st, uint32_t observed);

// Law of the next emitted symbol given the current belief.
std::vector<double> next_symbol_distribution(const HiddenMarkovSource& src, const ForwardState& st);

// Exact conditional P(next = sym | prefix); convenience for tests.
std::vector<double> conditional_after_prefix(const HiddenMarkovSource& src,
                                             const std::vector<uint16_t>& prefix);

struct EntropyEstimate {
    double mean = 0;       // per-symbol entropy, normalized by log q, in [0,1]
    double stderr_ = 0;    // standard error across trials
    size_t trials = 0;
};

EntropyEstimate estimate_entropy_rate(const HiddenMarkovSource& src, size_t n, size_t trials,
                                      uint64_t seed);

// Two-state bursty bit-flip source: Nice emits 1 w.p. delta, Noisy emits 1
// w.p. 1/2 - delta; Nice->Noisy w.p. q_switch, Noisy->Nice w.p. p; starts
// stationary.
HiddenMarkovSource build_gilbert_elliott(double delta, double p, double q_switch);

// Parity-with-noise stream: blocks (x_1..x_l, <a,x> + z) over F_2 with
// z ~ Bernoulli(eta). States (i,b,c) track position, running parity, and the
// current bit; the final layer emits the noisy parity.
HiddenMarkovSource build_lpn_source(const std::vector<uint8_t>& a, double eta);

// Single-state i.i.d. source with the given emission law.
HiddenMarkovSource build_iid_source(FieldModulus mod, const std::vector<double>& emission,
                                    std::string name = "iid");

}  // namespace plhm
