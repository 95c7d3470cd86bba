#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gfn/envs.hpp"
#include "gfn/policy_nn.hpp"

using namespace gfn;

TEST_SUITE("policy_nn") {

TEST_CASE("behavior policy mixes with uniform then tempers") {
    auto b = behavior_policy({std::log(0.9), std::log(0.1)}, 0.5);
    CHECK(std::exp(b[0]) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(std::exp(b[1]) == doctest::Approx(0.3).epsilon(1e-12));
    auto t = behavior_policy({std::log(0.9), std::log(0.1), kNegInf}, 0.0, 2.0);
    CHECK(std::exp(t[0]) == doctest::Approx(3.0 / 4).epsilon(1e-12));
    CHECK(t[2] == kNegInf);
    CHECK_THROWS(behavior_policy({kNegInf}, 0.1));
    CHECK_THROWS(behavior_policy({0.0}, 1.5));
}

TEST_CASE("hierarchical policy is normalized and stops when nothing is allowed") {
    MlpPolicy pol(3, 8, 4);
    DagState g = dag_from_edges(3, {{0, 1}});
    auto h = hierarchical_forward(pol, g, action_mask(g));
    double tot = std::exp(h.log_stop);
    for (double x : h.log_edge) tot += std::exp(x);
    CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(h.log_edge[1 * 3 + 0] == kNegInf);
    DagState full = dag_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    auto hf = hierarchical_forward(pol, full, action_mask(full));
    CHECK(hf.forced_stop);
    CHECK(hf.log_stop == 0.0);
    CHECK_THROWS_AS(log_prob_action(pol, g, action_mask(g), {1, 0, false}), InvalidAction);
}

TEST_CASE("flat tabular policy starts uniform") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    TabularPolicy pol(env);
    auto lp = pol.log_probs(env.initial());
    REQUIRE(lp.size() == 2);
    CHECK(std::exp(lp[0]) == doctest::Approx(0.5));
    CHECK(pol.log_probs(StateId::of("x4")).size() == 1);
}

TEST_CASE("Adam moves against the gradient and rejects non-finite input") {
    std::vector<double> p{1.0, -1.0};
    AdamState a;
    a.lr = 0.1;
    optimizer_step(p, {2.0, -3.0}, a);
    CHECK(p[0] == doctest::Approx(0.9));
    CHECK(p[1] == doctest::Approx(-0.9));
    auto keep = p;
    CHECK_THROWS(optimizer_step(p, {std::nan(""), 0.0}, a));
    CHECK(p == keep);
}

TEST_CASE("sparse Adam leaves untouched spans alone") {
    std::vector<double> p(6, 0.0), g{1, 1, 1, 1, 1, 1};
    AdamState a;
    optimizer_step_sparse(p, g, {{0, 2}, {1, 2}}, a);
    CHECK(p[0] < 0);
    CHECK(p[2] < 0);
    CHECK(p[3] == 0.0);
    CHECK(a.v[4] == 0.0);
    CHECK(a.step == 1);
    CHECK_THROWS(optimizer_step_sparse(p, g, {{5, 2}}, a));
}

TEST_CASE("target copy refreshes on its period") {
    DagTabularPolicy pol(3);
    TargetCopy t{nullptr, 10};
    CHECK(sync_target(pol, t, 3));
    CHECK_FALSE(sync_target(pol, t, 4));
    CHECK(sync_target(pol, t, 10));
}

TEST_CASE("checkpoints round-trip both policy kinds") {
    auto dir = std::filesystem::temp_directory_path() / "gfn_ckpt_test";
    std::filesystem::create_directories(dir);
    MlpPolicy mlp(4, 6, 11);
    save_checkpoint((dir / "mlp").string(), mlp, -3.5, 42, 9);
    double z = 0;
    auto back = load_checkpoint((dir / "mlp").string(), &z);
    CHECK(z == -3.5);
    CHECK(back->kind() == "mlp");
    CHECK(back->params() == mlp.params());

    DagTabularPolicy tab(3);
    DagState g = dag_from_edges(3, {{2, 0}});
    tab.offset(g);
    for (double& w : tab.params()) w = 0.25;
    save_checkpoint((dir / "tab").string(), tab, 1.0, 1, 1);
    auto tb = load_checkpoint((dir / "tab").string());
    double s1, s2;
    std::vector<double> e1, e2;
    tab.logits(g, s1, e1);
    tb->logits(g, s2, e2);
    CHECK(s1 == s2);
    CHECK(e1 == e2);
    std::filesystem::remove_all(dir);
}

}
