#include "gfn/baselines.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "gfn/logmath.hpp"

namespace gfn {

void ChainTrace::write_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(17);
    f << "step,key,log_score,accepted\n";
    for (std::size_t i = 0; i < states.size(); ++i)
        f << burn_in + long(i) * thin << "," << key_hex(states[i]) << "," << log_scores[i] << "," << int(accepted[i])
          << "\n";
}

namespace {

void check_chain(const ChainOptions& opt) {
    if (opt.steps <= 0) throw std::invalid_argument("chain needs a positive step count");
    if (opt.thin <= 0) throw std::invalid_argument("thinning stride must be positive");
    if (opt.burn_frac < 0 || opt.burn_frac >= 1) throw std::invalid_argument("burn-in fraction must lie in [0,1)");
}

}  // namespace

ChainTrace metropolis_hastings(const std::function<double(const std::string&)>& log_target, const Proposal& proposal,
                               const std::string& init, const ChainOptions& opt, Rng& rng) {
    check_chain(opt);
    ChainTrace tr;
    tr.burn_in = long(opt.burn_frac * double(opt.steps));
    tr.thin = opt.thin;
    std::string x = init;
    double lx = log_target(x);
    for (long t = 0; t < opt.steps; ++t) {
        std::string y = proposal.sample(x, rng);
        double ly = log_target(y);
        double log_a = ly - lx;
        bool ok = true;
        if (opt.hastings) {
            double back = proposal.log_density(y, x), fwd = proposal.log_density(x, y);
            if (back == kNegInf) {
                ++tr.zero_reverse;
                ok = false;
            }
            log_a += back - fwd;
        }
        bool acc = ok && (log_a >= 0 || std::log(rng.uniform()) < log_a);
        if (acc) {
            x = std::move(y);
            lx = ly;
            ++tr.accepts;
        }
        ++tr.steps;
        if (t >= tr.burn_in && (t - tr.burn_in) % tr.thin == 0) {
            tr.states.push_back(x);
            tr.log_scores.push_back(lx);
            tr.accepted.push_back(acc);
        }
    }
    return tr;
}

std::vector<Move> legal_moves(const DagState& g, const Mc3Options& opt) {
    std::vector<Move> out;
    BitMatrix m = action_mask(g, opt.mask);
    for (int u = 0; u < g.d; ++u)
        for (int v = 0; v < g.d; ++v)
            if (mask_at(m, u, v)) out.push_back({MoveKind::add, u, v});
    for (int u = 0; u < g.d; ++u)
        for (int v = 0; v < g.d; ++v)
            if (g.has_edge(u, v)) out.push_back({MoveKind::remove, u, v});
    if (opt.reversals)
        for (int u = 0; u < g.d; ++u)
            for (int v = 0; v < g.d; ++v)
                if (g.has_edge(u, v)) {
                    BitMatrix adj = g.adj;
                    adj[u] &= ~(1ULL << v);
                    DagState h = dag_from_adjacency(g.d, adj);
                    if (mask_at(action_mask(h, opt.mask), v, u)) out.push_back({MoveKind::reverse, u, v});
                }
    return out;
}

DagState apply_move(const DagState& g, const Move& m) {
    BitMatrix adj = g.adj;
    switch (m.kind) {
        case MoveKind::add: adj[m.u] |= 1ULL << m.v; break;
        case MoveKind::remove: adj[m.u] &= ~(1ULL << m.v); break;
        case MoveKind::reverse:
            adj[m.u] &= ~(1ULL << m.v);
            adj[m.v] |= 1ULL << m.u;
            break;
    }
    if (!is_acyclic(g.d, adj)) throw InvalidAction("move creates a cycle");
    return dag_from_adjacency(g.d, adj);
}

double move_delta(const DagState& g, const Move& m, const LocalScoreCache& cache, const GraphPrior& prior) {
    if (m.kind == MoveKind::add) return delta_score(g, {m.u, m.v, false}, cache, prior);
    BitMatrix adj = g.adj;
    adj[m.u] &= ~(1ULL << m.v);
    DagState h = dag_from_adjacency(g.d, adj);
    double out = -delta_score(h, {m.u, m.v, false}, cache, prior);
    if (m.kind == MoveKind::reverse) out += delta_score(h, {m.v, m.u, false}, cache, prior);
    return out;
}

ChainTrace structure_mc3(const LocalScoreCache& cache, const GraphPrior& prior, int d, const Mc3Options& opt, Rng& rng,
                         const DagState* init) {
    check_chain(opt.chain);
    ChainTrace tr;
    tr.burn_in = long(opt.chain.burn_frac * double(opt.chain.steps));
    tr.thin = opt.chain.thin;
    DagState g = init ? *init : initial_dag_state(d);
    double score = log_reward(g, cache, prior);
    auto moves = legal_moves(g, opt);
    for (long t = 0; t < opt.chain.steps; ++t) {
        bool acc = false;
        if (!moves.empty()) {
            const Move& m = moves[rng.below(moves.size())];
            DagState h = apply_move(g, m);
            auto back = legal_moves(h, opt);
            double log_a = move_delta(g, m, cache, prior);
            if (opt.chain.hastings) log_a += std::log(double(moves.size())) - std::log(double(back.size()));
            if (log_a >= 0 || std::log(rng.uniform()) < log_a) {
                score += move_delta(g, m, cache, prior);
                g = std::move(h);
                moves = std::move(back);
                acc = true;
                ++tr.accepts;
            }
        }
        ++tr.steps;
        if (t >= tr.burn_in && (t - tr.burn_in) % tr.thin == 0) {
            tr.states.push_back(canonical_key(g));
            tr.log_scores.push_back(score);
            tr.accepted.push_back(acc);
        }
    }
    return tr;
}

std::vector<std::vector<double>> mc3_kernel(const DagSpace& space, const LocalScoreCache& cache,
                                            const GraphPrior& prior, const Mc3Options& opt) {
    std::size_t n = space.dags.size();
    std::vector<std::vector<double>> K(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const DagState& g = space.dags[i];
        auto moves = legal_moves(g, opt);
        double stay = 1.0;
        for (auto& m : moves) {
            DagState h = apply_move(g, m);
            int j = space.find(canonical_key(h));
            if (j < 0) throw std::out_of_range("move leaves the enumerated space");
            double log_a = move_delta(g, m, cache, prior);
            if (opt.chain.hastings)
                log_a += std::log(double(moves.size())) - std::log(double(legal_moves(h, opt).size()));
            double p = std::exp(std::min(0.0, log_a)) / double(moves.size());
            K[i][j] += p;
            stay -= p;
        }
        K[i][i] += stay;
    }
    return K;
}

}  // namespace gfn
