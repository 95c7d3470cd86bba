#pragma once
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gfn/dag_env.hpp"
#include "gfn/flow_core.hpp"
#include "gfn/policy_nn.hpp"
#include "gfn/rng.hpp"
#include "gfn/scores.hpp"

namespace gfn {

inline constexpr int kMaxEnumerableNodes = 5;

// Every DAG on d nodes reachable under the mask, in BFS order (so by edge count, parents first).
struct DagSpace {
    int d = 0;
    MaskOptions opt;
    std::vector<DagState> dags;
    std::vector<std::string> keys;
    std::unordered_map<std::string, int> index;
    std::vector<std::vector<std::pair<int, EdgeAction>>> children;
    std::vector<std::vector<int>> parents;

    int find(const std::string& key) const;
    std::size_t transitions() const;
};

DagSpace dag_space(int d, const MaskOptions& opt = {});
std::vector<DagState> enumerate_dags(int d, const MaskOptions& opt = {});

std::vector<double> space_log_rewards(const DagSpace& space, const LocalScoreCache& cache, const GraphPrior& prior = {});

struct PosteriorTable {
    int d = 0;
    std::vector<std::string> keys;
    std::vector<double> logp;
    double log_evidence = 0.0;  // log sum of unnormalized rewards
    std::unordered_map<std::string, int> index;

    double at(const std::string& key) const;
    std::vector<double> probs() const;
    void write(const std::string& path) const;  // "key-hex log-prob" per line
    static PosteriorTable read(const std::string& path, int d);
};

PosteriorTable posterior_from_log_rewards(const DagSpace& space, const std::vector<double>& log_reward);
PosteriorTable exact_posterior(const DagSpace& space, const LocalScoreCache& cache, const GraphPrior& prior = {});

// Tabulated hierarchical policy: one HierDist per DAG of the space.
using SpacePolicy = std::vector<HierDist>;
SpacePolicy tabulate_policy(const DagSpace& space, const DagPolicy& policy);
using HierFn = std::function<HierDist(const DagState&)>;
HierFn hier_fn(const DagPolicy& policy, const MaskOptions& opt = {});
HierFn hier_fn(const DagSpace& space, const SpacePolicy& policy);
ForwardPolicy space_forward_policy(const DagSpace& space, const SpacePolicy& policy);

// log P_F^T over the space, by one forward sweep
std::vector<double> space_log_terminating(const DagSpace& space, const SpacePolicy& policy);

// log P_B(parent | child)
using SpaceLogPb = std::function<double(int parent, int child)>;
SpaceLogPb uniform_space_log_pb(const DagSpace& space);

// The unique forward policy satisfying modified detailed balance for the given P_B, by
// back-substitution from the complete graphs down to the empty graph.
SpacePolicy solve_forward_policy(const DagSpace& space, const std::vector<double>& log_reward, const SpaceLogPb& log_pb);

struct FeatureReport {
    int d = 0;
    std::vector<double> edge, path, markov;  // d*d row-major, [i*d+j]
};
FeatureReport features(const std::map<std::string, double>& dist, int d);
std::map<std::string, double> space_distribution(const DagSpace& space, const std::vector<double>& probs);

double jsd(const std::vector<double>& p, const std::vector<double>& q);

int shd(const DagState& a, const DagState& b);
struct StructuralMetrics {
    double e_shd;
    double auroc;  // NaN when the reference has no edges or is complete
};
StructuralMetrics structural_metrics(const std::vector<DagState>& samples, const DagState& g_star,
                                     const std::vector<double>& edge_marginals);

struct BeamStep {
    double min_kept = 0;    // lowest kept score at this expansion
    double max_pruned = 0;  // best discarded score, -inf if nothing was pruned
};
struct BeamResult {
    std::vector<std::vector<int>> orders;  // edge indices into edges_of(g)
    std::vector<double> log_pf;            // full trajectory log-probability, stop included
    std::vector<BeamStep> steps;
};
std::vector<std::pair<int, int>> edges_of(const DagState& g);
double order_log_prob(const HierFn& pf, const DagState& g, const std::vector<int>& order);
BeamResult beam_search(const HierFn& pf, const DagState& g, int width);

struct Estimate {
    double log_p;
    double stderr_p;      // standard error of the linear-domain estimate
    bool exact;
    int capped = 0;       // Monte Carlo draws dropped after 100 rejected proposals
};
Estimate estimate_log_pftop(const HierFn& pf, const DagState& g, int beam_width, int mc_samples, Rng& rng);

struct CorrelationReport {
    double slope, intercept, r;
    double trimmed_slope, trimmed_intercept, trimmed_r;
    std::size_t n, trimmed_n;
};
// OLS of the estimate (first) on the log reward (second); the trimmed fit drops the 5% largest residuals.
CorrelationReport correlation_report(const std::vector<std::pair<double, double>>& pairs);

}  // namespace gfn
