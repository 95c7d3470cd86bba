#include "gfn/exact_eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gfn/logmath.hpp"

namespace gfn {

// ---- enumeration ---------------------------------------------------------------

int DagSpace::find(const std::string& key) const {
    auto it = index.find(key);
    return it == index.end() ? -1 : it->second;
}

std::size_t DagSpace::transitions() const {
    std::size_t n = 0;
    for (auto& c : children) n += c.size();
    return n;
}

DagSpace dag_space(int d, const MaskOptions& opt) {
    if (d < 1 || d > kMaxEnumerableNodes) throw std::invalid_argument("enumeration supports 1 <= d <= 5");
    DagSpace sp;
    sp.d = d;
    sp.opt = opt;
    auto add = [&](DagState g) {
        std::string k = canonical_key(g);
        auto [it, fresh] = sp.index.emplace(k, int(sp.dags.size()));
        if (fresh) {
            sp.dags.push_back(std::move(g));
            sp.keys.push_back(std::move(k));
            sp.children.emplace_back();
            sp.parents.emplace_back();
        }
        return it->second;
    };
    add(initial_dag_state(d));
    for (std::size_t i = 0; i < sp.dags.size(); ++i) {
        BitMatrix m = action_mask(sp.dags[i], opt);
        for (int u = 0; u < d; ++u)
            for (int v = 0; v < d; ++v)
                if (mask_at(m, u, v)) {
                    EdgeAction a{u, v, false};
                    int j = add(apply_edge(sp.dags[i], a, opt));
                    sp.children[i].push_back({j, a});
                    sp.parents[j].push_back(int(i));
                }
    }
    return sp;
}

std::vector<DagState> enumerate_dags(int d, const MaskOptions& opt) { return dag_space(d, opt).dags; }

std::vector<double> space_log_rewards(const DagSpace& space, const LocalScoreCache& cache, const GraphPrior& prior) {
    std::vector<double> out;
    out.reserve(space.dags.size());
    for (auto& g : space.dags) out.push_back(log_reward(g, cache, prior));
    return out;
}

// ---- posterior -----------------------------------------------------------------

double PosteriorTable::at(const std::string& key) const {
    auto it = index.find(key);
    if (it == index.end()) throw std::out_of_range("graph not in the posterior table");
    return logp[it->second];
}

std::vector<double> PosteriorTable::probs() const {
    std::vector<double> p;
    for (double x : logp) p.push_back(std::exp(x));
    return p;
}

void PosteriorTable::write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.precision(17);
    for (std::size_t i = 0; i < keys.size(); ++i) f << key_hex(keys[i]) << " " << logp[i] << "\n";
}

PosteriorTable PosteriorTable::read(const std::string& path, int d) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    PosteriorTable t;
    t.d = d;
    std::string hex;
    double lp;
    while (f >> hex >> lp) {
        t.index[key_from_hex(hex)] = int(t.keys.size());
        t.keys.push_back(key_from_hex(hex));
        t.logp.push_back(lp);
    }
    return t;
}

PosteriorTable posterior_from_log_rewards(const DagSpace& space, const std::vector<double>& log_reward) {
    if (log_reward.size() != space.dags.size()) throw std::invalid_argument("one log-reward per graph expected");
    PosteriorTable t;
    t.d = space.d;
    t.keys = space.keys;
    t.index = space.index;
    t.log_evidence = logsumexp(log_reward);
    for (double x : log_reward) t.logp.push_back(x - t.log_evidence);
    return t;
}

PosteriorTable exact_posterior(const DagSpace& space, const LocalScoreCache& cache, const GraphPrior& prior) {
    return posterior_from_log_rewards(space, space_log_rewards(space, cache, prior));
}

// ---- tabulated policies --------------------------------------------------------

SpacePolicy tabulate_policy(const DagSpace& space, const DagPolicy& policy) {
    SpacePolicy out;
    out.reserve(space.dags.size());
    for (auto& g : space.dags) out.push_back(hierarchical_forward(policy, g, action_mask(g, space.opt)));
    return out;
}

HierFn hier_fn(const DagPolicy& policy, const MaskOptions& opt) {
    return [&policy, opt](const DagState& g) { return hierarchical_forward(policy, g, action_mask(g, opt)); };
}

HierFn hier_fn(const DagSpace& space, const SpacePolicy& policy) {
    return [&space, &policy](const DagState& g) {
        int i = space.find(canonical_key(g));
        if (i < 0) throw std::out_of_range("graph outside the enumerated space");
        return policy[i];
    };
}

ForwardPolicy space_forward_policy(const DagSpace& space, const SpacePolicy& policy) {
    return [&space, &policy](const StateId& s) {
        int i = space.find(s.key);
        if (i < 0 || s.terminal) throw SupportViolation("state outside the enumerated space");
        TransitionDistribution out;
        for (auto& [j, a] : space.children[i])
            out.push_back({StateId::of(space.keys[j]), policy[i].log_edge[a.u * space.d + a.v]});
        out.push_back({StateId::bottom(), policy[i].log_stop});
        return out;
    };
}

std::vector<double> space_log_terminating(const DagSpace& space, const SpacePolicy& policy) {
    std::size_t n = space.dags.size();
    std::vector<double> logF(n, kNegInf), term(n, kNegInf);
    logF[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        term[i] = logF[i] + policy[i].log_stop;
        for (auto& [j, a] : space.children[i])
            logF[j] = logaddexp(logF[j], logF[i] + policy[i].log_edge[a.u * space.d + a.v]);
    }
    return term;
}

SpaceLogPb uniform_space_log_pb(const DagSpace& space) {
    return [&space](int, int child) { return -std::log(double(space.parents[child].size())); };
}

SpacePolicy solve_forward_policy(const DagSpace& space, const std::vector<double>& log_reward, const SpaceLogPb& log_pb) {
    std::size_t n = space.dags.size();
    if (log_reward.size() != n) throw std::invalid_argument("one log-reward per graph expected");
    for (double r : log_reward)
        if (!std::isfinite(r)) throw std::invalid_argument("rewards must be positive and finite");
    int d = space.d;
    SpacePolicy pol(n);
    for (std::size_t k = n; k-- > 0;) {
        HierDist& h = pol[k];
        h.log_edge.assign(std::size_t(d) * d, kNegInf);
        h.p_edge_given_continue.assign(std::size_t(d) * d, 0.0);
        h.forced_stop = space.children[k].empty();
        // x_j = P_F(G_j | G) / P_F(stop | G), fixed by the child's already-solved stop probability
        std::vector<double> lx;
        for (auto& [j, a] : space.children[k])
            lx.push_back(log_reward[j] + log_pb(int(k), j) - log_reward[k] - pol[j].log_stop);
        double lsum = lx.empty() ? kNegInf : logsumexp(lx);
        h.log_stop = -logaddexp(0.0, lsum);
        h.p_stop = std::exp(h.log_stop);
        for (std::size_t c = 0; c < lx.size(); ++c) {
            auto a = space.children[k][c].second;
            h.log_edge[a.u * d + a.v] = h.log_stop + lx[c];
            h.p_edge_given_continue[a.u * d + a.v] = std::exp(lx[c] - lsum);
        }
    }
    return pol;
}

// ---- features and divergences -------------------------------------------------

FeatureReport features(const std::map<std::string, double>& dist, int d) {
    double total = 0;
    for (auto& [k, p] : dist) {
        if (p < 0) throw std::invalid_argument("negative probability");
        total += p;
    }
    if (std::abs(total - 1) > 1e-6) throw std::invalid_argument("distribution is not normalized");
    FeatureReport r;
    r.d = d;
    r.edge.assign(std::size_t(d) * d, 0.0);
    r.path = r.edge;
    r.markov = r.edge;
    for (auto& [k, p] : dist) {
        if (p == 0) continue;
        DagState g = dag_from_key(k, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                if (i == j) continue;
                if (g.has_edge(i, j)) r.edge[i * d + j] += p;
                if (g.reaches(i, j)) r.path[i * d + j] += p;
                bool mb = g.has_edge(i, j) || g.has_edge(j, i) || (g.adj[i] & g.adj[j]) != 0;
                if (mb) r.markov[i * d + j] += p;
            }
    }
    return r;
}

std::map<std::string, double> space_distribution(const DagSpace& space, const std::vector<double>& probs) {
    if (probs.size() != space.keys.size()) throw std::invalid_argument("one probability per graph expected");
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < probs.size(); ++i) out[space.keys[i]] = probs[i];
    return out;
}

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("distributions over different supports");
    double out = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0 || q[i] < 0) throw std::invalid_argument("negative probability");
        double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0) out += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0) out += 0.5 * q[i] * std::log(q[i] / m);
    }
    return std::clamp(out, 0.0, std::log(2.0));
}

int shd(const DagState& a, const DagState& b) {
    if (a.d != b.d) throw std::invalid_argument("graphs on different node sets");
    int n = 0;
    for (int i = 0; i < a.d; ++i)
        for (int j = i + 1; j < a.d; ++j) {
            int sa = a.has_edge(i, j) ? 1 : a.has_edge(j, i) ? 2 : 0;
            int sb = b.has_edge(i, j) ? 1 : b.has_edge(j, i) ? 2 : 0;
            n += sa != sb;
        }
    return n;
}

StructuralMetrics structural_metrics(const std::vector<DagState>& samples, const DagState& g_star,
                                     const std::vector<double>& edge_marginals) {
    if (samples.empty()) throw std::invalid_argument("no samples");
    int d = g_star.d;
    if (edge_marginals.size() != std::size_t(d) * d) throw std::invalid_argument("edge marginals must be d x d");
    StructuralMetrics m{};
    for (auto& g : samples) m.e_shd += shd(g, g_star);
    m.e_shd /= double(samples.size());

    std::vector<std::pair<double, bool>> pts;
    int pos = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) {
                pts.push_back({edge_marginals[i * d + j], g_star.has_edge(i, j)});
                pos += g_star.has_edge(i, j);
            }
    int neg = int(pts.size()) - pos;
    if (pos == 0 || neg == 0) {
        m.auroc = std::nan("");
        return m;
    }
    std::sort(pts.begin(), pts.end(), [](auto& a, auto& b) { return a.first > b.first; });
    double tp = 0, fp = 0, prev_tpr = 0, prev_fpr = 0, area = 0;
    for (std::size_t k = 0; k < pts.size();) {
        std::size_t e = k;
        while (e < pts.size() && pts[e].first == pts[k].first) {
            (pts[e].second ? tp : fp) += 1;
            ++e;
        }
        double tpr = tp / pos, fpr = fp / neg;
        area += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
        prev_tpr = tpr, prev_fpr = fpr;
        k = e;
    }
    m.auroc = area;
    return m;
}

// ---- beam search and the terminating-probability estimator ---------------------

std::vector<std::pair<int, int>> edges_of(const DagState& g) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j)
            if (g.has_edge(i, j)) e.push_back({i, j});
    return e;
}

double order_log_prob(const HierFn& pf, const DagState& g, const std::vector<int>& order) {
    auto edges = edges_of(g);
    DagState cur = initial_dag_state(g.d);
    double lp = 0;
    for (int k : order) {
        auto [u, v] = edges[k];
        lp += pf(cur).log_edge[u * g.d + v];
        cur = apply_edge(cur, {u, v, false});
    }
    return lp + pf(g).log_stop;
}

BeamResult beam_search(const HierFn& pf, const DagState& g, int width) {
    if (width < 1) throw std::invalid_argument("beam width must be positive");
    auto edges = edges_of(g);
    int K = int(edges.size()), d = g.d;
    struct Node {
        std::vector<int> order;
        DagState cur;
        double score;
    };
    std::vector<Node> beam{{{}, initial_dag_state(d), 0.0}};
    BeamResult out;
    for (int step = 0; step < K; ++step) {
        std::vector<Node> cand;
        for (auto& n : beam) {
            HierDist h = pf(n.cur);
            for (int k = 0; k < K; ++k) {
                if (std::find(n.order.begin(), n.order.end(), k) != n.order.end()) continue;
                auto [u, v] = edges[k];
                Node c{n.order, apply_edge(n.cur, {u, v, false}), n.score + h.log_edge[u * d + v]};
                c.order.push_back(k);
                cand.push_back(std::move(c));
            }
        }
        std::stable_sort(cand.begin(), cand.end(), [](const Node& a, const Node& b) {
            return a.score != b.score ? a.score > b.score : a.order < b.order;
        });
        BeamStep st;
        st.max_pruned = cand.size() > std::size_t(width) ? cand[width].score : kNegInf;
        if (cand.size() > std::size_t(width)) cand.resize(width);
        st.min_kept = cand.back().score;
        out.steps.push_back(st);
        beam = std::move(cand);
    }
    double ls = pf(g).log_stop;
    for (auto& n : beam) {
        out.orders.push_back(n.order);
        out.log_pf.push_back(n.score + ls);
    }
    return out;
}

Estimate estimate_log_pftop(const HierFn& pf, const DagState& g, int beam_width, int mc_samples, Rng& rng) {
    if (beam_width <= 0 && mc_samples <= 0) throw std::invalid_argument("beam width and sample count are both zero");
    if (beam_width < 0 || mc_samples < 0) throw std::invalid_argument("negative beam width or sample count");
    int K = g.num_edges();
    if (K == 0) return {pf(g).log_stop, 0.0, true};
    double log_kfact = log_factorial(K);
    BeamResult beam;
    if (beam_width > 0) beam = beam_search(pf, g, beam_width);
    double nb = double(beam.orders.size());
    // the beam covers every ordering exactly when its size reaches K!
    bool full = K <= 20 ? nb >= std::exp(log_kfact) - 0.5 : false;
    double log_top = beam.log_pf.empty() ? kNegInf : logsumexp(beam.log_pf);
    if (full) return {log_top, 0.0, true};
    if (mc_samples == 0) throw std::invalid_argument("a partial beam needs Monte Carlo samples");

    std::set<std::vector<int>> in_beam(beam.orders.begin(), beam.orders.end());
    std::vector<double> logs;
    Estimate est{0, 0, false, 0};
    for (int m = 0; m < mc_samples; ++m) {
        std::vector<int> order(K);
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            std::iota(order.begin(), order.end(), 0);
            for (int i = K - 1; i > 0; --i) std::swap(order[i], order[rng.below(std::uint64_t(i) + 1)]);
            ok = !in_beam.count(order);
        }
        if (!ok) {
            ++est.capped;
            continue;
        }
        logs.push_back(order_log_prob(pf, g, order));
    }
    if (logs.empty()) throw std::runtime_error("every Monte Carlo draw landed in the beam");
    double M = double(logs.size());
    double log_rest = log_kfact + std::log1p(-nb / std::exp(log_kfact));
    double log_mean = logsumexp(logs) - std::log(M);
    est.log_p = logaddexp(log_top, log_rest + log_mean);
    double mean = std::exp(log_mean), var = 0;
    for (double l : logs) var += (std::exp(l) - mean) * (std::exp(l) - mean);
    var = M > 1 ? var / (M - 1) : 0.0;
    est.stderr_p = std::exp(log_rest) * std::sqrt(var / M);
    return est;
}

// ---- correlation ---------------------------------------------------------------

namespace {

struct Fit {
    double slope, intercept, r;
};

Fit ols(const std::vector<std::pair<double, double>>& pts) {
    double n = double(pts.size()), mx = 0, my = 0;
    for (auto& [y, x] : pts) mx += x / n, my += y / n;
    double sxx = 0, syy = 0, sxy = 0;
    for (auto& [y, x] : pts) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    auto tiny = [&](double s, double m) { return s <= 1e-24 * n * (1 + m * m); };
    if (tiny(sxx, mx) || tiny(syy, my)) throw std::invalid_argument("degenerate variance in correlation input");
    double slope = sxy / sxx;
    return {slope, my - slope * mx, sxy / std::sqrt(sxx * syy)};
}

}  // namespace

CorrelationReport correlation_report(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 3) throw std::invalid_argument("correlation needs at least three pairs");
    Fit f = ols(pairs);
    std::size_t drop = std::size_t(std::floor(0.05 * double(pairs.size())));
    std::vector<std::pair<double, double>> kept = pairs;
    if (drop > 0 && pairs.size() - drop >= 3) {
        std::vector<std::pair<double, std::size_t>> res;
        for (std::size_t i = 0; i < pairs.size(); ++i)
            res.push_back({std::abs(pairs[i].first - (f.intercept + f.slope * pairs[i].second)), i});
        std::stable_sort(res.begin(), res.end(), [](auto& a, auto& b) { return a.first > b.first; });
        std::vector<char> gone(pairs.size(), 0);
        for (std::size_t k = 0; k < drop; ++k) gone[res[k].second] = 1;
        kept.clear();
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (!gone[i]) kept.push_back(pairs[i]);
    }
    Fit t = ols(kept);
    return {f.slope, f.intercept, f.r, t.slope, t.intercept, t.r, pairs.size(), kept.size()};
}

}  // namespace gfn
