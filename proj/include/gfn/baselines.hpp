#pragma once
#include <functional>
#include <string>
#include <vector>

#include "gfn/dag_env.hpp"
#include "gfn/exact_eval.hpp"
#include "gfn/rng.hpp"
#include "gfn/scores.hpp"

namespace gfn {

struct ChainTrace {
    std::vector<std::string> states;  // recorded after burn-in, every `thin` steps
    std::vector<double> log_scores;
    std::vector<char> accepted;       // acceptance flag of the step that produced each record
    long accepts = 0, steps = 0, burn_in = 0, thin = 1;
    long zero_reverse = 0;            // proposals rejected because the reverse move has density 0
    double acceptance_rate() const { return steps ? double(accepts) / double(steps) : 0.0; }
    void write_csv(const std::string& path) const;  // step,key,log_score,accepted
};

struct ChainOptions {
    long steps = 10000;
    double burn_frac = 0.1;
    long thin = 10;
    bool hastings = true;  // off only to demonstrate the bias it removes
};

struct Proposal {
    std::function<std::string(const std::string&, Rng&)> sample;
    std::function<double(const std::string& from, const std::string& to)> log_density;
};

ChainTrace metropolis_hastings(const std::function<double(const std::string&)>& log_target, const Proposal& proposal,
                               const std::string& init, const ChainOptions& opt, Rng& rng);

enum class MoveKind { add, remove, reverse };
struct Move {
    MoveKind kind;
    int u, v;  // the edge u -> v as it exists (remove, reverse) or will exist (add)
};

struct Mc3Options {
    ChainOptions chain;
    bool reversals = true;
    MaskOptions mask;
};

// Adds in mask order, removals and reversals in row-major edge order.
std::vector<Move> legal_moves(const DagState& g, const Mc3Options& opt);
DagState apply_move(const DagState& g, const Move& m);
double move_delta(const DagState& g, const Move& m, const LocalScoreCache& cache, const GraphPrior& prior);

ChainTrace structure_mc3(const LocalScoreCache& cache, const GraphPrior& prior, int d, const Mc3Options& opt, Rng& rng,
                         const DagState* init = nullptr);

// Row-stochastic transition matrix of the MC3 kernel over an enumerated space.
std::vector<std::vector<double>> mc3_kernel(const DagSpace& space, const LocalScoreCache& cache,
                                            const GraphPrior& prior, const Mc3Options& opt);

}  // namespace gfn
