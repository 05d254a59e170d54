#pragma once

#include <cstdint>
#include <vector>

#include "plhm/codec.hpp"
#include "plhm/hmm.hpp"
#include "plhm/kernel.hpp"

namespace plhm {

// Distribution over F_q as a dense weight vector.
using SimplexPoint = std::vector<double>;

// Grid of rational points with denominator ceil(q/eps); every simplex point
// is within L1 distance eps of the grid.
struct EpsilonNet {
    uint32_t q = 2;
    double eps = 1;
    uint64_t denom = 1;

    EpsilonNet() = default;
    EpsilonNet(uint32_t q_, double eps_);
};

// Number of grid points with the given denominator; saturates at 2^62.
uint64_t simplex_grid_size(uint32_t q, uint64_t denom);

// Floor to the grid, then hand the leftover mass greedily to the largest
// rounding remainders (ties to the lowest coordinate). Returns grid counts.
std::vector<uint64_t> round_to_net_counts(const EpsilonNet& net, const SimplexPoint& p);
SimplexPoint round_to_net(const EpsilonNet& net, const SimplexPoint& p);

struct WeightedPoint {
    SimplexPoint dist;
    double weight = 0;
};

// Finitely supported distribution over distributions on F_q.
struct ConditionalDistribution {
    uint32_t q = 2;
    std::vector<WeightedPoint> support;

    static ConditionalDistribution point_mass(const SimplexPoint& d);
};

void validate_conditional(const ConditionalDistribution& d);

// Exact earth-mover distance between the weighted supports, ground cost L1,
// by min-cost max-flow on the bipartite support graph. Test-scale only.
double conditional_distance(const ConditionalDistribution& A, const ConditionalDistribution& B);

// Normalized conditional entropy: sum of weight * H(point) / log q, in [0,1].
double cond_entropy(const ConditionalDistribution& d);

// Shannon entropy in nats.
double shannon_entropy(const SimplexPoint& p);

// One tensor level: k independent copies of `current`, transformed by M;
// emits the law of U_j given each prefix value of U_{<j} (j is 1-based),
// weighted by the prefix probability. Output is unrounded.
ConditionalDistribution kernel_step(const ConditionalDistribution& current, uint32_t j,
                                    const MixingKernel& M);

struct RoundingPolicy {
    size_t support_cap = 512;   // coarsen the net until the support fits
    double prune_below = 1e-15; // drop and renormalize after each kernel step
};

// Round every support point to the eps_net grid and merge coincident points;
// the grid is repeatedly halved while the support exceeds the cap. Output
// support is sorted by grid counts.
ConditionalDistribution round_support(const ConditionalDistribution& d, double eps_net,
                                      const RoundingPolicy& pol);

// Recursive approximation of the conditional law of U_I given its prefix:
// recurse at tolerance eps/(2k), apply kernel step I_t, round to the
// eps/2-net. I holds 1-based kernel indices, innermost first.
ConditionalDistribution approx_dist(const ConditionalDistribution& base, double eps, uint32_t t,
                                    const std::vector<uint32_t>& I, const MixingKernel& M,
                                    const RoundingPolicy& pol = {});

// Per-coordinate entropy estimates, one per I in [k]^t enumerated along a
// shared prefix trie, each at net tolerance gamma^2.
using EntropyEstimates = std::vector<double>;

EntropyEstimates approx_entropy(const ConditionalDistribution& base, double gamma, uint32_t t,
                                const MixingKernel& M, const RoundingPolicy& pol = {});

struct PreprocessOptions {
    double epsilon = 0.1;   // fraction of trailing columns emitted whole
    uint32_t samples = 2000;  // sampled prefixes per column
    double gamma = 0.01;      // empirical-law net resolution
    double threshold = 0.04;  // select coordinates with entropy estimate above this
    uint64_t seed = 1;
    unsigned jobs = 1;
    RoundingPolicy rounding;
};

// Per column j <= jstar: sample `samples` prefixes of length j-1, take each
// forward-inferred next-symbol law rounded to the gamma net, form the
// empirical law-of-laws, estimate per-coordinate entropies, and keep the
// coordinates above the threshold. Tail columns are selected in full.
SelectionSets polar_preprocess(const HiddenMarkovSource& src, const TensorTransform& tt,
                               const PreprocessOptions& opts);

}  // namespace plhm
