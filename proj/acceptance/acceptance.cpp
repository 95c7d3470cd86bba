#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gfn/baselines.hpp"
#include "gfn/data.hpp"
#include "gfn/envs.hpp"
#include "gfn/exact_eval.hpp"
#include "gfn/objectives.hpp"
#include "gfn/stats.hpp"
#include "gfn/trainer.hpp"

using namespace gfn;

namespace {

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;
    void check(bool ok, const std::string& what) {
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
        pass = pass && ok;
    }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double normal(Rng& rng) {
    double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
    return std::sqrt(-2 * std::log(u1)) * std::cos(2 * M_PI * u2);
}

std::shared_ptr<LocalScoreCache> bge_cache(int d, std::uint64_t seed = 7) {
    Rng rng(seed, 0);
    auto g = sample_er_dag(d, 1.0, rng);
    auto bn = sample_lingauss_bn(g, rng);
    auto ds = standardize(ancestral_sample(bn, 100, rng));
    return std::make_shared<LocalScoreCache>(std::make_shared<BgeScore>(ds));
}

std::vector<double> space_probs(const DagSpace& sp, const DagPolicy& pol) {
    std::vector<double> p;
    for (double x : space_log_terminating(sp, tabulate_policy(sp, pol))) p.push_back(std::exp(x));
    return p;
}

// ---- 1 ----------------------------------------------------------------------------

Verdict enumeration_counts() {
    Verdict o;
    auto s3 = dag_space(3);
    o.check(s3.dags.size() == 25, fmt("d=3 DAGs %.0f (want 25)", double(s3.dags.size())));
    o.check(s3.transitions() == 48, fmt("d=3 transitions %.0f (want 48)", double(s3.transitions())));
    DagEnv env(3, [](const DagState&) { return 0.0; });
    auto en = enumerate_env(env);
    o.check(en.size() == 25 && en.transitions() == 48,
            fmt("generic BFS over the DAG env: %.0f states, %.0f transitions", double(en.size()),
                double(en.transitions())));
    auto s5 = dag_space(5);
    o.check(s5.dags.size() == 29281, fmt("d=5 DAGs %.0f (want 29281)", double(s5.dags.size())));
    return o;
}

// ---- 2 ----------------------------------------------------------------------------

Verdict exact_routes() {
    Verdict o;
    for (int d : {3, 4}) {
        auto cache = bge_cache(d);
        auto sp = dag_space(d);
        auto logR = space_log_rewards(sp, *cache);
        double mx = *std::max_element(logR.begin(), logR.end());

        DagEnv env(d, [&](const DagState& g) { return log_reward(g, *cache); });
        std::map<StateId, double> R;
        for (std::size_t i = 0; i < sp.dags.size(); ++i) R[StateId::of(sp.keys[i])] = std::exp(logR[i] - mx);
        auto flow = construct_flow_from_reward(env, R);
        auto dp = terminating_distribution_dp(env, policy_from_flow(flow));

        auto solved = solve_forward_policy(sp, logR, uniform_space_log_pb(sp));
        auto lt = space_log_terminating(sp, solved);
        auto post = exact_posterior(sp, *cache);

        double ab = 0, bc = 0, ac = 0;
        for (std::size_t i = 0; i < sp.dags.size(); ++i) {
            double a = dp.at(StateId::of(sp.keys[i])), b = std::exp(lt[i]), c = std::exp(post.logp[i]);
            ab = std::max(ab, std::abs(a - b));
            bc = std::max(bc, std::abs(b - c));
            ac = std::max(ac, std::abs(a - c));
        }
        double worst = std::max({ab, bc, ac});
        o.check(worst <= 1e-9, fmt("d=%.0f max |flow-DP - solved|=%.2e |solved - posterior|=%.2e |flow-DP - posterior|=%.2e",
                                   d, ab, bc, ac));
    }
    return o;
}

// ---- 3 ----------------------------------------------------------------------------

// reach[i][j]: path i ~> j, reflexive
std::vector<std::vector<char>> floyd_warshall(int d, const BitMatrix& adj) {
    std::vector<std::vector<char>> r(d, std::vector<char>(d, 0));
    for (int i = 0; i < d; ++i) {
        r[i][i] = 1;
        for (int j = 0; j < d; ++j)
            if ((adj[i] >> j) & 1u) r[i][j] = 1;
    }
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                if (r[i][k] && r[k][j]) r[i][j] = 1;
    return r;
}

bool dfs_reaches(int d, const BitMatrix& adj, int from, int to) {
    std::vector<char> seen(d, 0);
    std::vector<int> stack{from};
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        if (u == to) return true;
        if (seen[u]) continue;
        seen[u] = 1;
        for (int w = 0; w < d; ++w)
            if ((adj[u] >> w) & 1u) stack.push_back(w);
    }
    return false;
}

Verdict mask_correctness() {
    Verdict o;
    Rng rng(3, 0);
    for (int d = 3; d <= 8; ++d) {
        long closure_bad = 0, mask_bad = 0, cycles = 0, steps = 0;
        for (int seq = 0; seq < 200; ++seq) {
            DagState g = initial_dag_state(d);
            while (true) {
                auto reach = floyd_warshall(d, g.adj);
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        if (bool((g.closT[j] >> i) & 1u) != bool(reach[i][j])) ++closure_bad;
                BitMatrix m = action_mask(g);
                std::vector<std::pair<int, int>> acts;
                for (int u = 0; u < d; ++u)
                    for (int v = 0; v < d; ++v) {
                        bool allowed = u != v && !g.has_edge(u, v) && !reach[v][u];
                        if (mask_at(m, u, v) != allowed) ++mask_bad;
                        if (!mask_at(m, u, v)) continue;
                        acts.push_back({u, v});
                        BitMatrix a = g.adj;
                        a[u] |= 1ULL << v;
                        if (dfs_reaches(d, a, v, u)) ++cycles;
                    }
                if (acts.empty()) break;
                auto [u, v] = acts[rng.below(acts.size())];
                g = apply_edge(g, {u, v, false});
                ++steps;
            }
        }
        o.check(closure_bad == 0 && mask_bad == 0 && cycles == 0,
                fmt("d=%.0f %.0f insertions: closure mismatches %.0f, mask mismatches %.0f", d,
                    double(steps), double(closure_bad), double(mask_bad)) +
                    fmt(", cyclic actions %.0f", double(cycles)));
    }
    return o;
}

// ---- 4 ----------------------------------------------------------------------------

struct Instance {
    ExplicitEnv env;
    Enumerated en;
    std::vector<double> logF, E;
    std::vector<std::vector<double>> logPF;                     // over out_edges, sink last
    std::vector<std::map<int, double>> logPB;                   // child -> parent -> log P_B
    double pf(int s, int child) const {                         // child = -1 for the sink
        const auto& ch = en.children[s];
        for (std::size_t a = 0; a < ch.size(); ++a)
            if (ch[a] == child) return logPF[s][a];
        return logPF[s].back();
    }
};

std::vector<double> random_log_softmax(int n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = 1.5 * normal(rng);
    log_normalize(v);
    return v;
}

Instance random_instance(Rng& rng, double alpha, bool all_terminating) {
    int n = 3 + int(rng.below(6));
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("q" + std::to_string(i));
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<char> has_child(n, 0);
    for (int j = 1; j < n; ++j) {
        int p = int(rng.below(j));
        for (int i = 0; i < j; ++i)
            if (i == p || rng.uniform() < 0.3) {
                edges.push_back({names[i], names[j]});
                has_child[i] = 1;
            }
    }
    std::map<std::string, double> rewards;
    for (int i = 0; i < n; ++i)
        if (all_terminating || !has_child[i] || rng.uniform() < 0.5) rewards[names[i]] = std::exp(-normal(rng));
    ExplicitEnv env = ExplicitEnv(names, edges, rewards).tempered(alpha);
    Instance I{env, enumerate_env(env), {}, {}, {}, {}};
    std::size_t m = I.en.size();
    I.logF.resize(m);
    I.E.assign(m, 0.0);
    I.logPF.resize(m);
    I.logPB.resize(m);
    for (std::size_t s = 0; s < m; ++s) {
        I.logF[s] = normal(rng);
        if (I.en.terminating[s]) I.E[s] = I.env.energy(I.en.states[s]);
        int k = int(I.en.children[s].size()) + (I.en.terminating[s] ? 1 : 0);
        I.logPF[s] = random_log_softmax(k, rng);
        if (!I.en.parents[s].empty()) {
            auto pb = random_log_softmax(int(I.en.parents[s].size()), rng);
            for (std::size_t a = 0; a < pb.size(); ++a) I.logPB[s][I.en.parents[s][a]] = pb[a];
        }
    }
    return I;
}

BackwardPolicy table_pb(const Instance& I) {
    return [&I](const StateId& s) {
        TransitionDistribution out;
        int i = I.en.find(s);
        for (auto [p, lp] : I.logPB[i]) out.push_back({I.en.states[p], lp});
        return out;
    };
}

Verdict equivalences() {
    Verdict o;
    Rng rng(4, 0);
    for (double alpha : {0.5, 1.0, 2.0}) {
        double sql = 0, pcl = 0, pisql = 0;
        long n_sql = 0, n_pcl = 0, n_pisql = 0;
        for (int inst = 0; inst < 200; ++inst) {
            // SQL and PCL on general instances with the sparse correction
            {
                Instance I = random_instance(rng, alpha, false);
                const Enumerated& en = I.en;
                auto pb = table_pb(I);
                auto energy = [&I](const StateId& s) { return I.env.energy(s); };
                auto rw = corrected_reward(I.env, pb, energy, alpha, RewardScheme::sparse);
                auto Q = [&](int s) {
                    std::vector<double> q;
                    for (double lp : I.logPF[s]) q.push_back(alpha * (I.logF[s] + lp));
                    return q;
                };
                for (std::size_t s = 0; s < en.size(); ++s) {
                    auto qs = Q(int(s));
                    for (std::size_t a = 0; a < en.children[s].size(); ++a) {
                        int c = en.children[s][a];
                        double dsql = sql_residual(qs[a], rw.at(en.states[s], en.states[c]), Q(c), alpha);
                        double ddb = db_residual(I.logF[s], I.logPF[s][a], I.logF[c], I.logPB[c].at(int(s)));
                        sql = std::max(sql, std::abs(dsql - alpha * ddb));
                        ++n_sql;
                    }
                    if (en.terminating[s]) {
                        double dsql = sql_residual(qs.back(), rw.at(en.states[s], StateId::bottom()), {}, alpha);
                        double ddb = db_terminal_residual(I.logF[s], I.logPF[s].back(), en.log_reward[s]);
                        sql = std::max(sql, std::abs(dsql - alpha * ddb));
                        ++n_sql;
                    }
                }
                // every segment of 1..3 steps, sink-terminated ones included
                std::function<void(std::vector<int>)> walk = [&](std::vector<int> path) {
                    int last = path.back();
                    if (path.size() > 1) {
                        std::vector<double> r, lpi, lpf, lpb;
                        for (std::size_t t = 0; t + 1 < path.size(); ++t) {
                            double f = I.pf(path[t], path[t + 1]);
                            lpi.push_back(f);
                            lpf.push_back(f);
                            if (path[t + 1] < 0) {
                                r.push_back(rw.at(en.states[path[t]], StateId::bottom()));
                            } else {
                                r.push_back(rw.at(en.states[path[t]], en.states[path[t + 1]]));
                                lpb.push_back(I.logPB[path[t + 1]].at(path[t]));
                            }
                        }
                        double Vm = alpha * I.logF[path[0]];
                        double dp, ds;
                        if (last < 0) {
                            int x = path[path.size() - 2];
                            dp = pcl_residual(Vm, 0.0, r, lpi, alpha);
                            ds = subtb_terminal_residual(I.logF[path[0]], lpf, lpb, en.log_reward[x]);
                        } else {
                            dp = pcl_residual(Vm, alpha * I.logF[last], r, lpi, alpha);
                            ds = subtb_residual(I.logF[path[0]], lpf, lpb, I.logF[last]);
                        }
                        pcl = std::max(pcl, std::abs(dp - alpha * ds));
                        ++n_pcl;
                    }
                    if (last < 0 || path.size() > 3) return;
                    for (int c : en.children[last]) {
                        auto p = path;
                        p.push_back(c);
                        walk(p);
                    }
                    if (en.terminating[last]) {
                        auto p = path;
                        p.push_back(-1);
                        walk(p);
                    }
                };
                for (std::size_t s = 0; s < en.size(); ++s) walk({int(s)});
            }
            // pi-SQL on all-terminating instances with the dense correction
            {
                Instance I = random_instance(rng, alpha, true);
                const Enumerated& en = I.en;
                auto pb = table_pb(I);
                auto energy = [&I](const StateId& s) { return I.env.energy(s); };
                auto step = [&I](const StateId& s, const StateId& n) { return I.env.energy(n) - I.env.energy(s); };
                auto rw = corrected_reward(I.env, pb, energy, alpha, RewardScheme::dense, step);
                for (std::size_t s = 0; s < en.size(); ++s)
                    for (std::size_t a = 0; a < en.children[s].size(); ++a) {
                        int c = en.children[s][a];
                        double lpf = I.logPF[s][a], ls = I.logPF[s].back(), lsn = I.logPF[c].back();
                        double lpb = I.logPB[c].at(int(s));
                        double dq = pisql_residual(lpf, ls, lsn, rw.at(en.states[s], en.states[c]), alpha);
                        double dm = modified_db_energy_residual(lpf, ls, lsn, lpb, I.E[s], I.E[c], alpha);
                        pisql = std::max(pisql, std::abs(dq - alpha * dm));
                        ++n_pisql;
                    }
            }
        }
        o.check(sql <= 1e-10, fmt("alpha=%.1f SQL vs alpha*DB: max gap %.2e over %.0f edges", alpha, sql, double(n_sql)));
        o.check(pcl <= 1e-10,
                fmt("alpha=%.1f PCL vs alpha*SubTB: max gap %.2e over %.0f segments", alpha, pcl, double(n_pcl)));
        o.check(pisql <= 1e-10,
                fmt("alpha=%.1f pi-SQL vs alpha*MDB: max gap %.2e over %.0f edges", alpha, pisql, double(n_pisql)));
    }
    return o;
}

// ---- 5 ----------------------------------------------------------------------------

Verdict maxent_bias() {
    Verdict o;
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto energy = [&env](const StateId& s) { return env.energy(s); };
    auto report = [&](const std::map<StateId, double>& dist, const std::vector<double>& want, double tol,
                      const std::string& label) {
        double gap = 0;
        const char* names[] = {"x3", "x4", "x5"};
        for (int i = 0; i < 3; ++i) gap = std::max(gap, std::abs(dist.at(StateId::of(names[i])) - want[i]));
        o.check(gap <= tol, label + fmt(" (%.6f, %.6f, %.6f), max gap %.2e", dist.at(StateId::of("x3")),
                                        dist.at(StateId::of("x4")), dist.at(StateId::of("x5")), gap));
    };
    auto plain = soft_value_iteration(env, terminal_reward(env, energy), 1.0);
    report(terminating_distribution_dp(env, plain.policy()), {0.25, 0.5, 0.25}, 1e-12, "uncorrected reward:");
    auto fixed = soft_value_iteration(
        env, corrected_reward(env, uniform_backward_policy(env), energy, 1.0, RewardScheme::sparse), 1.0);
    report(terminating_distribution_dp(env, fixed.policy()), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-10,
           "corrected reward, uniform P_B:");
    return o;
}

// ---- 6 ----------------------------------------------------------------------------

Verdict subtb_insufficiency() {
    Verdict o;
    ExplicitEnv env = explicit_env(fixture_subtb_text());
    auto en = enumerate_env(env);
    std::map<std::string, double> F{{"s0", 4}, {"s1", 2}, {"s2", 2}, {"s3", 2}, {"s4", 1}};
    auto pf = [&](const std::string& s, const std::string& n) {
        if (s == "s1") return 0.5;
        (void)n;
        return 1.0;
    };
    // P_B is 1 everywhere: every state has one parent
    double worst = 0;
    int segments = 0;
    for (std::size_t a = 0; a < en.size(); ++a)
        for (int b : en.children[a])
            for (int c : en.children[b]) {
                const auto &sa = en.states[a].key, &sb = en.states[b].key, &sc = en.states[c].key;
                double r = subtb_residual(std::log(F[sa]), {std::log(pf(sa, sb)), std::log(pf(sb, sc))}, {0.0, 0.0},
                                          std::log(F[sc]));
                worst = std::max(worst, std::abs(r));
                ++segments;
            }
    o.check(segments == 3 && worst <= 1e-12,
            fmt("%.0f length-2 segments, max |residual| %.2e", double(segments), worst));
    double inflow = 0;
    for (std::size_t i = 0; i < en.size(); ++i)
        if (en.terminating[i]) inflow += F[en.states[i].key];  // P_F(stop) = 1 at both leaves
    double out0 = F["s0"];
    o.check(inflow == 3 && out0 == 4 && inflow != out0,
            fmt("terminating inflow %.0f vs initial outflow %.0f: not a valid flow", inflow, out0));
    double db01 = db_residual(std::log(F["s0"]), 0.0, std::log(F["s1"]), 0.0);
    o.check(std::abs(db01) > 0.1, fmt("the skipped transition s0->s1 has detailed-balance residual %.4f", db01));
    return o;
}

// ---- 7 ----------------------------------------------------------------------------

struct TrainSetup {
    int d;
    std::shared_ptr<LocalScoreCache> cache;
    DagSpace space;
    std::vector<double> post;
    std::unique_ptr<DagEnv> env;
    explicit TrainSetup(int dd) : d(dd), cache(bge_cache(dd)), space(dag_space(dd)) {
        post = exact_posterior(space, *cache).probs();
        auto c = cache;
        env = std::make_unique<DagEnv>(d, [c](const DagState& g) { return log_reward(g, *c); });
    }
};

double mdb_jsd(TrainSetup& S, long steps, std::uint64_t seed) {
    DagTabularPolicy pol(S.d);
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch = 256;
    cfg.seed = seed;
    cfg.log_every = steps;
    train_modified_db(*S.env, *S.cache, {}, pol, cfg);
    return jsd(space_probs(S.space, pol), S.post);
}

double tb_jsd(TrainSetup& S, long steps, std::uint64_t seed, bool on_policy, Objective obj) {
    DagTabularPolicy pol(S.d);
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch = 64;
    cfg.seed = seed;
    cfg.on_policy = on_policy;
    cfg.objective = obj;
    cfg.log_every = steps;
    train_tb_dag(*S.env, pol, cfg);
    return jsd(space_probs(S.space, pol), S.post);
}

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Verdict training_quality() {
    Verdict o;
    TrainSetup s3(3);
    auto t0 = Clock::now();
    double j = mdb_jsd(s3, 50000, 1);
    double dt = since(t0);
    o.check(j <= 1e-2 && dt < 600, fmt("modified DB d=3, 50k steps: JSD %.3g (<= 1e-2) in %.0f s", j, dt));
    t0 = Clock::now();
    j = tb_jsd(s3, 50000, 1, false, Objective::tb);
    dt = since(t0);
    o.check(j <= 1e-2 && dt < 600, fmt("off-policy TB d=3, 50k steps: JSD %.3g (<= 1e-2) in %.0f s", j, dt));
    {
        TrainSetup s5(5);
        t0 = Clock::now();
        j = mdb_jsd(s5, 200000, 1);
        dt = since(t0);
        o.check(j <= 5e-2 && dt < 2700, fmt("modified DB d=5, 200k steps: JSD %.3g (<= 5e-2) in %.0f s", j, dt));
    }
    std::vector<double> tb, rkl;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        tb.push_back(tb_jsd(s3, 20000, seed, true, Objective::tb));
        rkl.push_back(tb_jsd(s3, 20000, seed, true, Objective::reverse_kl));
        o.notes.push_back(fmt("     seed %.0f: on-policy TB JSD %.3g, reverse KL (local baseline) JSD %.3g", double(seed),
                              tb.back(), rkl.back()));
    }
    auto t = paired_t_test(tb, rkl);
    o.check(t.p_value > 0.05, fmt("on-policy TB vs reverse KL, paired t over 5 seeds: t=%.3f p=%.4f (> 0.05)", t.statistic,
                                  t.p_value));
    return o;
}

// ---- 8 ----------------------------------------------------------------------------

Verdict convergence_bounds() {
    Verdict o;
    auto summarize = [&](const std::vector<BoundCheck>& b, const std::string& label) {
        long bad = 0;
        double worst_z = 0, worst_s = 0;
        for (auto& c : b) {
            if (!c.ok()) ++bad;
            if (c.max_residual < 1e-6) continue;  // ratios are rounding noise once training has converged
            worst_z = std::max(worst_z, c.logz_gap / std::max(c.max_residual, 1e-300));
            worst_s = std::max(worst_s, c.max_state_gap / std::max(c.max_residual, 1e-300));
        }
        o.check(!b.empty() && bad == 0,
                label + fmt(": %.0f checkpoints, %.0f violations, max logZ gap/M %.3f, max state gap/M %.3f (where M > 1e-6)",
                            double(b.size()), double(bad), worst_z, worst_s));
    };
    {
        ExplicitEnv env = explicit_env(fixture_markov_text());
        TabularPolicy pol(env);
        FlatModel model(pol);
        TrainConfig cfg;
        cfg.steps = 3000;
        cfg.batch = 16;
        cfg.log_every = 25;
        cfg.check_bounds = true;
        cfg.seed = 8;
        auto r = train_tb(env, model, uniform_backward_policy(env), cfg);
        summarize(r.bounds, "markov fixture, TB");
    }
    {
        TrainSetup s3(3);
        DagTabularPolicy pol(3);
        TrainConfig cfg;
        cfg.steps = 10000;
        cfg.batch = 64;
        cfg.log_every = 250;
        cfg.check_bounds = true;
        cfg.seed = 8;
        auto r = train_tb_dag(*s3.env, pol, cfg);
        summarize(r.bounds, "d=3 BGe, TB");
    }
    return o;
}

// ---- 9 ----------------------------------------------------------------------------

Verdict estimator_soundness() {
    Verdict o;
    Rng rng(9, 0);
    for (int d : {3, 4}) {
        MlpPolicy pol(d, 32, 99 + d);
        for (double& w : pol.params()) w *= 3.0;
        auto sp = dag_space(d);
        auto spol = tabulate_policy(sp, pol);
        auto lt = space_log_terminating(sp, spol);
        auto pf = hier_fn(sp, spol);
        double worst = 0;
        int n = 0;
        bool all_exact = true;
        for (std::size_t i = 0; i < sp.dags.size(); ++i) {
            int K = sp.dags[i].num_edges();
            if (K > 3) continue;
            auto e = estimate_log_pftop(pf, sp.dags[i], 6, 0, rng);
            all_exact = all_exact && e.exact;
            worst = std::max(worst, std::abs(e.log_p - lt[i]));
            ++n;
        }
        o.check(all_exact && worst <= 1e-12,
                fmt("d=%.0f full beam on %.0f graphs with K <= 3: max |estimate - DP| %.2e", d, double(n), worst));
    }
    // B=10, M=100 over 1000 repetitions: the densest d=3 graph, then a d=4 graph whose beam is partial
    for (int d : {3, 4}) {
        MlpPolicy pol(d, 32, 199 + d);
        for (double& w : pol.params()) w *= 3.0;
        auto sp = dag_space(d);
        auto spol = tabulate_policy(sp, pol);
        auto lt = space_log_terminating(sp, spol);
        auto pf = hier_fn(sp, spol);
        int pick = 0;
        int want = d == 3 ? 3 : 5;
        for (std::size_t i = 0; i < sp.dags.size(); ++i)
            if (sp.dags[i].num_edges() == want) {
                pick = int(i);
                break;
            }
        const DagState& g = sp.dags[pick];
        double truth = std::exp(lt[pick]);
        std::vector<double> est;
        bool exact = true;
        for (int rep = 0; rep < 1000; ++rep) {
            auto e = estimate_log_pftop(pf, g, 10, 100, rng);
            exact = exact && e.exact;
            est.push_back(std::exp(e.log_p));
        }
        double mean = 0, var = 0;
        for (double x : est) mean += x / est.size();
        for (double x : est) var += (x - mean) * (x - mean) / (est.size() - 1);
        double se = std::sqrt(var / est.size());
        // 1e-12 relative covers rounding in the mean when every repetition is exact
        bool ok = std::abs(mean - truth) <= 3 * se + 1e-12 * truth;
        o.check(ok, fmt("d=%.0f K=%.0f B=10 M=100: DP %.4g, |mean - DP| = %.3g", d, want, truth, std::abs(mean - truth)) +
                        fmt(" vs 3 SE = %.3g", 3 * se) +
                        (exact ? " (beam covers every order)" : ""));
    }
    {
        auto cache = bge_cache(4);
        auto sp = dag_space(4);
        auto logR = space_log_rewards(sp, *cache);
        auto solved = solve_forward_policy(sp, logR, uniform_space_log_pb(sp));
        auto pf = hier_fn(sp, solved);
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t i = 0; i < sp.dags.size(); ++i)
            pairs.push_back({estimate_log_pftop(pf, sp.dags[i], 10, 100, rng).log_p, logR[i]});
        auto c = correlation_report(pairs);
        o.check(std::abs(c.slope - 1) <= 0.02 && c.r >= 0.999,
                fmt("d=4 exact policy, %.0f graphs: slope %.5f, r %.6f", double(c.n), c.slope, c.r));
    }
    return o;
}

// ---- 10 ---------------------------------------------------------------------------

// skeleton plus v-structures
std::string equivalence_signature(const DagState& g) {
    std::string s;
    int d = g.d;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) s += (g.has_edge(i, j) || g.has_edge(j, i)) ? '1' : '0';
    s += '|';
    for (int k = 0; k < d; ++k)
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j)
                if (g.has_edge(i, k) && g.has_edge(j, k) && !g.has_edge(i, j) && !g.has_edge(j, i))
                    s += std::to_string(i) + std::to_string(k) + std::to_string(j) + ",";
    return s;
}

Verdict score_properties() {
    Verdict o;
    auto dags = enumerate_dags(3);
    std::vector<std::pair<std::string, std::shared_ptr<LocalScoreCache>>> scores;
    scores.push_back({"BGe", bge_cache(3, 10)});
    {
        Rng rng(10, 1);
        auto g = sample_er_dag(3, 1.0, rng);
        auto bn = sample_discrete_bn(g, 3, rng);
        auto ds = ancestral_sample(bn, 200, rng);
        scores.push_back({"BDe", std::make_shared<LocalScoreCache>(std::make_shared<BdeScore>(ds))});
    }
    for (auto& [name, cache] : scores) {
        double worst = 0;
        int pairs = 0;
        std::set<std::string> classes;
        for (std::size_t a = 0; a < dags.size(); ++a) {
            classes.insert(equivalence_signature(dags[a]));
            for (std::size_t b = a + 1; b < dags.size(); ++b)
                if (equivalence_signature(dags[a]) == equivalence_signature(dags[b])) {
                    worst = std::max(worst, std::abs(log_reward(dags[a], *cache) - log_reward(dags[b], *cache)));
                    ++pairs;
                }
        }
        o.check(worst <= 1e-9 && classes.size() == 11,
                name + fmt(": %.0f equivalent pairs in %.0f classes, max score gap %.2e", pairs, double(classes.size()),
                           worst));
    }
    Rng rng(10, 2);
    double worst = 0;
    int cases = 0;
    std::vector<std::shared_ptr<LocalScoreCache>> by_d(9);
    for (int d = 2; d <= 8; ++d) by_d[d] = bge_cache(d, 20 + d);
    while (cases < 1000) {
        int d = 2 + int(rng.below(7));
        GraphPrior prior{rng.uniform() < 0.5 ? 0.0 : 2.0 * rng.uniform()};
        DagState g = initial_dag_state(d);
        int len = int(rng.below(std::uint64_t(d * (d - 1) / 2)));
        for (int k = 0; k < len; ++k) {
            BitMatrix m = action_mask(g);
            if (!mask_count(m)) break;
            std::vector<std::pair<int, int>> acts;
            for (int u = 0; u < d; ++u)
                for (int v = 0; v < d; ++v)
                    if (mask_at(m, u, v)) acts.push_back({u, v});
            auto [u, v] = acts[rng.below(acts.size())];
            g = apply_edge(g, {u, v, false});
        }
        BitMatrix m = action_mask(g);
        std::vector<std::pair<int, int>> acts;
        for (int u = 0; u < d; ++u)
            for (int v = 0; v < d; ++v)
                if (mask_at(m, u, v)) acts.push_back({u, v});
        if (acts.empty()) continue;
        auto [u, v] = acts[rng.below(acts.size())];
        DagState h = apply_edge(g, {u, v, false});
        const LocalScore& sc = by_d[d]->score();
        double full = log_reward_uncached(h, sc, prior) - log_reward_uncached(g, sc, prior);
        double fast = delta_score(g, {u, v, false}, *by_d[d], prior);
        worst = std::max(worst, std::abs(full - fast));
        ++cases;
    }
    o.check(worst <= 1e-9, fmt("delta score vs full recomputation, %.0f cases (d=2..8): max gap %.2e", cases, worst));
    return o;
}

// ---- 11 ---------------------------------------------------------------------------

Verdict baseline_correctness() {
    Verdict o;
    {
        auto sp = dag_space(3);
        LocalScoreCache cache(std::make_shared<UniformScore>(3));
        Mc3Options opt;
        opt.chain.steps = 1000000;
        opt.chain.thin = 10;
        Rng rng(11, 0);
        auto tr = structure_mc3(cache, {}, 3, opt, rng);
        std::vector<double> counts(sp.dags.size(), 0.0), expect(sp.dags.size(), 1.0 / sp.dags.size());
        for (auto& k : tr.states) counts[sp.find(k)] += 1;
        auto t = chi_square_test(counts, expect);
        o.check(t.p_value > 0.001, fmt("MC3 uniform score d=3, 1e6 steps (%.0f kept): chi2 %.2f, p %.4f (> 0.001)",
                                       double(tr.states.size()), t.statistic, t.p_value));
    }
    {
        auto sp = dag_space(2);
        auto cache = bge_cache(2, 12);
        auto K = mc3_kernel(sp, *cache, {}, Mc3Options{});
        auto post = exact_posterior(sp, *cache).probs();
        double gap = 0, rows = 0;
        for (std::size_t i = 0; i < K.size(); ++i) {
            double s = 0;
            for (std::size_t j = 0; j < K.size(); ++j) {
                s += K[i][j];
                gap = std::max(gap, std::abs(post[i] * K[i][j] - post[j] * K[j][i]));
            }
            rows = std::max(rows, std::abs(s - 1));
        }
        o.check(gap <= 1e-10 && rows <= 1e-12,
                fmt("d=2 BGe kernel: max |pi_i K_ij - pi_j K_ji| %.2e, max row-sum error %.2e", gap, rows));
    }
    return o;
}

// ---- 12 ---------------------------------------------------------------------------

struct GradCheck {
    double worst = 0;
    int cases = 0;
    // f over n inputs, returning the Dual (with gradient) and a double evaluator
    void run(int n, Rng& rng, const std::function<Dual(const std::vector<Dual>&)>& fd,
             const std::function<double(const std::vector<double>&)>& fv) {
        std::vector<double> x(n);
        for (double& v : x) v = normal(rng);
        std::vector<Dual> xd;
        for (int i = 0; i < n; ++i) xd.push_back(Dual::var(x[i], i));
        auto g = fd(xd).dense(n);
        for (int i = 0; i < n; ++i) {
            double h = 1e-5 * std::max(1.0, std::abs(x[i]));
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            double num = (fv(xp) - fv(xm)) / (2 * h);
            worst = std::max(worst, rel(g[i], num));
        }
        ++cases;
    }
    static double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-2}); }
};

template <class T>
std::vector<T> slice(const std::vector<T>& x, int from, int n) {
    return std::vector<T>(x.begin() + from, x.begin() + from + n);
}

Verdict gradient_checks() {
    Verdict o;
    Rng rng(12, 0);
    auto report = [&](const std::string& name, const GradCheck& g) {
        o.check(g.worst <= 1e-4, name + fmt(": %.0f cases, max relative error %.2e", g.cases, g.worst));
    };
    const double alpha = 0.7;
    const double E1 = 0.3, E2 = -1.1;
    std::vector<double> rr{0.2, -0.4, 0.9};

#define CHECK_RESIDUAL(NAME, N, EXPR)                                                      \
    {                                                                                      \
        GradCheck gc;                                                                      \
        auto f = [&](const auto& x) { using T = std::decay_t<decltype(x[0])>; (void)sizeof(T); return EXPR; }; \
        for (int c = 0; c < 100; ++c)                                                      \
            gc.run(N, rng, [&](const std::vector<Dual>& x) { return Dual(f(x)); },          \
                   [&](const std::vector<double>& x) { return double(f(x)); });            \
        report(NAME, gc);                                                                  \
    }

    CHECK_RESIDUAL("flow matching", 6,
                   fm_residual<T>(slice(x, 0, 2), slice(x, 2, 3), std::optional<T>(x[5])))
    CHECK_RESIDUAL("detailed balance", 4, db_residual<T>(x[0], x[1], x[2], x[3]))
    CHECK_RESIDUAL("detailed balance, terminal", 3, db_terminal_residual<T>(x[0], x[1], x[2]))
    CHECK_RESIDUAL("trajectory balance", 7, tb_residual<T>(x[0], slice(x, 1, 3), slice(x, 4, 2), x[6]))
    CHECK_RESIDUAL("sub-trajectory balance", 6, subtb_residual<T>(x[0], slice(x, 1, 2), slice(x, 3, 2), x[5]))
    CHECK_RESIDUAL("modified detailed balance", 5, modified_db_residual<T>(x[0], x[1], x[2], x[3], x[4]))
    CHECK_RESIDUAL("modified detailed balance, energy form", 4,
                   modified_db_energy_residual<T>(x[0], x[1], x[2], x[3], E1, E2, alpha))
    CHECK_RESIDUAL("forward-looking detailed balance", 4, fl_db_residual<T>(x[0], x[1], x[2], x[3], E1, alpha))
    CHECK_RESIDUAL("soft Q-learning", 4, sql_residual<T>(x[0], E1, slice(x, 1, 3), alpha))
    CHECK_RESIDUAL("path consistency", 5, pcl_residual<T>(x[0], x[1], rr, slice(x, 2, 3), alpha))
    CHECK_RESIDUAL("pi-SQL", 3, pisql_residual<T>(x[0], x[1], x[2], E2, alpha))
#undef CHECK_RESIDUAL

    // policy log-probabilities
    {
        ExplicitEnv env = explicit_env(fixture_multipath_text());
        GradCheck gc;
        for (int c = 0; c < 100; ++c) {
            TabularPolicy pol(env);
            auto en = enumerate_env(env);
            for (std::size_t i = 0; i < en.size(); ++i) pol.offset(en.states[i]);
            for (double& w : pol.params()) w = normal(rng);
            StateId s = en.states[rng.below(en.size())];
            int a = int(rng.below(pol.actions(s).size()));
            auto g = pol.log_prob(s, a).dense(int(pol.params().size()));
            for (std::size_t i = 0; i < pol.params().size(); ++i) {
                double keep = pol.params()[i], h = 1e-5;
                pol.params()[i] = keep + h;
                double up = pol.log_probs(s)[a];
                pol.params()[i] = keep - h;
                double dn = pol.log_probs(s)[a];
                pol.params()[i] = keep;
                gc.worst = std::max(gc.worst, GradCheck::rel(g[i], (up - dn) / (2 * h)));
            }
            ++gc.cases;
        }
        report("flat tabular policy log-probability", gc);
    }
    auto dag_check = [&](const std::string& name, const std::function<std::unique_ptr<DagPolicy>(int)>& make) {
        GradCheck gc;
        for (int c = 0; c < 100; ++c) {
            int d = 3 + int(rng.below(2));
            auto pol = make(d);
            DagState g = initial_dag_state(d);
            int len = int(rng.below(4));
            for (int k = 0; k < len; ++k) {
                BitMatrix m = action_mask(g);
                std::vector<EdgeAction> acts;
                for (int u = 0; u < d; ++u)
                    for (int v = 0; v < d; ++v)
                        if (mask_at(m, u, v)) acts.push_back({u, v, false});
                if (acts.empty()) break;
                g = apply_edge(g, acts[rng.below(acts.size())]);
            }
            BitMatrix m = action_mask(g);
            std::vector<EdgeAction> acts{EdgeAction::stop_action()};
            for (int u = 0; u < d; ++u)
                for (int v = 0; v < d; ++v)
                    if (mask_at(m, u, v)) acts.push_back({u, v, false});
            EdgeAction a = acts[rng.below(acts.size())];
            pol->param_span(g);
            for (double& w : pol->params()) w = normal(rng);
            auto ag = log_prob_action(*pol, g, m, a);
            auto value = [&]() {
                auto h = hierarchical_forward(*pol, g, m);
                return a.stop ? h.log_stop : h.log_edge[a.u * d + a.v];
            };
            auto& p = pol->params();
            for (std::size_t i = 0; i < p.size(); ++i) {
                double keep = p[i], h = 1e-5;
                p[i] = keep + h;
                double up = value();
                p[i] = keep - h;
                double dn = value();
                p[i] = keep;
                gc.worst = std::max(gc.worst, GradCheck::rel(ag.grad[i], (up - dn) / (2 * h)));
            }
            ++gc.cases;
        }
        report(name, gc);
    };
    dag_check("DAG tabular policy log-probability", [](int d) { return std::make_unique<DagTabularPolicy>(d); });
    dag_check("DAG MLP policy log-probability", [&](int d) { return std::make_unique<MlpPolicy>(d, 16, rng()); });
    return o;
}

struct Criterion {
    int id;
    std::string name;
    double limit_s;
    Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<Criterion> all{
        {1, "enumeration counts", 5, enumeration_counts},
        {2, "exact-route agreement", 30, exact_routes},
        {3, "mask correctness", 60, mask_correctness},
        {4, "equivalence of objectives", 60, equivalences},
        {5, "MaxEnt bias and reward correction", 5, maxent_bias},
        {6, "sub-trajectory balance insufficiency", 1, subtb_insufficiency},
        {7, "training quality", 3300, training_quality},
        {8, "convergence bounds during training", 600, convergence_bounds},
        {9, "estimator soundness", 300, estimator_soundness},
        {10, "score properties", 60, score_properties},
        {11, "baseline correctness", 300, baseline_correctness},
        {12, "gradient checks", 120, gradient_checks},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        auto t0 = Clock::now();
        Verdict o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("threw: ") + e.what());
        }
        double dt = since(t0);
        bool in_time = dt < c.limit_s;
        bool pass = o.pass && in_time;
        for (auto& n : o.notes) std::printf("    %s\n", n.c_str());
        std::printf("%s  %2d %s (%.2f s, budget %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), dt, c.limit_s);
        std::fflush(stdout);
        if (!pass) ++failed;
    }
    std::printf("%d criteria failed\n", failed);
    return failed ? 1 : 0;
}
