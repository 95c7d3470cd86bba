#include <cmath>
#include <filesystem>
#include <memory>

#include "doctest.h"
#include "gfn/data.hpp"
#include "gfn/envs.hpp"
#include "gfn/exact_eval.hpp"
#include "gfn/trainer.hpp"

using namespace gfn;

TEST_SUITE("exact_eval") {

TEST_CASE("back-substitution on a three-state chain") {
    // G0 -> G1 = {0->1} -> G2 = {0->1, 1->2}, rewards 1, 2, 3, one parent each
    MaskOptions opt;
    opt.filter = [](const DagState& g, int u, int v) {
        if (u == 0 && v == 1) return true;
        return u == 1 && v == 2 && g.has_edge(0, 1);
    };
    auto sp = dag_space(3, opt);
    REQUIRE(sp.dags.size() == 3);
    std::vector<double> logR;
    for (auto& g : sp.dags) logR.push_back(std::log(1.0 + g.num_edges()));
    auto pol = solve_forward_policy(sp, logR, uniform_space_log_pb(sp));
    CHECK(std::exp(pol[0].log_stop) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(std::exp(pol[1].log_stop) == doctest::Approx(2.0 / 5).epsilon(1e-12));
    CHECK(std::exp(pol[2].log_stop) == doctest::Approx(1.0).epsilon(1e-12));
    auto lt = space_log_terminating(sp, pol);
    for (int i = 0; i < 3; ++i) CHECK(std::exp(lt[i]) == doctest::Approx((1.0 + i) / 6).epsilon(1e-12));
}

TEST_CASE("uniform backward policy maximizes trajectory entropy among exact solutions") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto E = [&env](const StateId& s) { return env.energy(s); };
    auto entropy_for = [&](double q) {
        BackwardPolicy pb = [q](const StateId& s) {
            if (s.key == "x4") return TransitionDistribution{{StateId::of("s1"), std::log(q)}, {StateId::of("s2"), std::log1p(-q)}};
            if (s.key == "x3") return TransitionDistribution{{StateId::of("s1"), 0.0}};
            if (s.key == "x5") return TransitionDistribution{{StateId::of("s2"), 0.0}};
            if (s.key == "s1" || s.key == "s2") return TransitionDistribution{{StateId::of("s0"), 0.0}};
            return TransitionDistribution{};
        };
        auto T = soft_value_iteration(env, corrected_reward(env, pb, E, 1.0, RewardScheme::sparse), 1.0);
        auto pf = T.policy();
        auto dist = terminating_distribution_dp(env, pf);
        for (auto& [s, p] : dist) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-10));
        double h = 0;
        for (auto& t : enumerate_trajectories(env)) {
            double p = std::exp(trajectory_logprob(t, pf, Direction::forward).value);
            h -= p * std::log(p);
        }
        return h;
    };
    double best = entropy_for(0.5);
    CHECK(best == doctest::Approx(std::log(3.0) + std::log(2.0) / 3).epsilon(1e-12));
    for (double q : {0.1, 0.3, 0.45, 0.7, 0.9}) CHECK(entropy_for(q) < best);
}

TEST_CASE("beam search keeps the best partial orders") {
    MlpPolicy pol(4, 16, 3);
    for (double& w : pol.params()) w *= 3;
    auto pf = hier_fn(pol);
    DagState g = dag_from_edges(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 2}});
    auto b = beam_search(pf, g, 7);
    CHECK(b.orders.size() == 7);
    for (auto& s : b.steps) CHECK(s.min_kept >= s.max_pruned);
    for (std::size_t i = 0; i < b.orders.size(); ++i)
        CHECK(b.log_pf[i] == doctest::Approx(order_log_prob(pf, g, b.orders[i])).epsilon(1e-12));
    // the full beam sums every order
    auto all = beam_search(pf, g, 200);
    CHECK(all.orders.size() == 120);
}

TEST_CASE("estimator edge cases") {
    MlpPolicy pol(3, 8, 1);
    auto pf = hier_fn(pol);
    Rng rng(1, 0);
    DagState empty = initial_dag_state(3);
    auto e = estimate_log_pftop(pf, empty, 1, 0, rng);
    CHECK(e.exact);
    CHECK(e.log_p == doctest::Approx(pf(empty).log_stop));
    DagState g = dag_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    CHECK_THROWS(estimate_log_pftop(pf, g, 2, 0, rng));
    CHECK_THROWS(estimate_log_pftop(pf, g, 0, 0, rng));
}

TEST_CASE("features of a point mass are its own indicators") {
    DagState g = dag_from_edges(3, {{0, 1}, {2, 1}});
    auto f = features({{canonical_key(g), 1.0}}, 3);
    CHECK(f.edge[0 * 3 + 1] == 1.0);
    CHECK(f.edge[1 * 3 + 0] == 0.0);
    CHECK(f.path[2 * 3 + 1] == 1.0);
    CHECK(f.markov[0 * 3 + 2] == 1.0);  // co-parents
    CHECK_THROWS(features({{canonical_key(g), 0.5}}, 3));
}

TEST_CASE("divergences and distances") {
    std::vector<double> p{0.5, 0.5, 0.0}, q{0.0, 0.0, 1.0};
    CHECK(jsd(p, p) == doctest::Approx(0.0));
    CHECK(jsd(p, q) == doctest::Approx(std::log(2.0)));
    std::vector<double> r{0.2, 0.3, 0.5};
    CHECK(jsd(p, r) == doctest::Approx(jsd(r, p)));
    DagState a = dag_from_edges(3, {{0, 1}, {1, 2}}), b = dag_from_edges(3, {{1, 0}});
    CHECK(shd(a, b) == 2);
    CHECK(shd(a, a) == 0);
}

TEST_CASE("structural metrics") {
    DagState star = dag_from_edges(3, {{0, 1}});
    std::vector<double> m(9, 0.0);
    m[0 * 3 + 1] = 0.9;
    m[1 * 3 + 2] = 0.2;
    auto s = structural_metrics({star, dag_from_edges(3, {{0, 1}, {1, 2}})}, star, m);
    CHECK(s.e_shd == doctest::Approx(0.5));
    CHECK(s.auroc == doctest::Approx(1.0));
    CHECK(std::isnan(structural_metrics({star}, initial_dag_state(3), m).auroc));
}

TEST_CASE("posterior tables round-trip through files") {
    Rng rng(3, 0);
    auto bn = sample_lingauss_bn(sample_er_dag(3, 1.0, rng), rng);
    LocalScoreCache cache(std::make_shared<BgeScore>(standardize(ancestral_sample(bn, 50, rng))));
    auto sp = dag_space(3);
    auto post = exact_posterior(sp, cache);
    double tot = 0;
    for (double p : post.probs()) tot += p;
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
    auto path = (std::filesystem::temp_directory_path() / "gfn_post_test.txt").string();
    post.write(path);
    auto back = PosteriorTable::read(path, 3);
    for (std::size_t i = 0; i < sp.keys.size(); ++i) CHECK(back.at(sp.keys[i]) == post.logp[i]);
    std::filesystem::remove(path);
}

TEST_CASE("correlation report recovers a line and rejects constant input") {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 40; ++i) pts.push_back({2.0 * i - 1.0, double(i)});
    pts[5].first += 30;  // one outlier, dropped by the trimmed fit
    auto c = correlation_report(pts);
    CHECK(c.trimmed_slope == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(c.trimmed_r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.r < 1.0);
    std::vector<std::pair<double, double>> flat(5, {1.0, 1.0});
    CHECK_THROWS(correlation_report(flat));
}

}
