#include <cmath>
#include <memory>

#include "doctest.h"
#include "gfn/data.hpp"
#include "gfn/scores.hpp"

using namespace gfn;

namespace {

Dataset small_continuous() {
    Dataset ds;
    ds.n = 5;
    ds.d = 2;
    ds.values = {0.3, -1.2, 1.1, 0.4, -0.7, -0.5, 2.0, 1.7, -0.2, 0.9};
    ds.names = {"a", "b"};
    return ds;
}

Dataset small_binary() {
    Dataset ds;
    ds.kind = Dataset::Kind::categorical;
    ds.K = 2;
    ds.n = 7;
    ds.d = 2;
    ds.values = {0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 1, 0, 1, 1};
    return ds;
}

}  // namespace

TEST_SUITE("scores") {

// reference values: tests/oracles/scores_oracle.py, 50-digit arithmetic
TEST_CASE("BGe local scores match the high-precision oracle") {
    auto ds = small_continuous();
    BgeHyper h{1.0, 4.0};
    CHECK(bge_local_score(ds, 0, {}, h) == doctest::Approx(-9.5468960586823424995).epsilon(1e-12));
    CHECK(bge_local_score(ds, 1, {}, h) == doctest::Approx(-9.8944162668909370596).epsilon(1e-12));
    CHECK(bge_local_score(ds, 1, {0}, h) == doctest::Approx(-10.041433792945577022).epsilon(1e-12));
    CHECK(bge_local_score(ds, 0, {1}, h) == doctest::Approx(-9.6939135847369824621).epsilon(1e-12));
    // default alpha_w is d + 2
    CHECK(bge_local_score(ds, 1, {0}) == doctest::Approx(-10.041433792945577022).epsilon(1e-12));
}

TEST_CASE("BDeu local scores match the high-precision oracle") {
    auto ds = small_binary();
    CHECK(bde_local_score(ds, 0, {}) == doctest::Approx(-6.015181073725298029).epsilon(1e-12));
    CHECK(bde_local_score(ds, 1, {0}) == doctest::Approx(-6.797940412974930471).epsilon(1e-12));
}

TEST_CASE("Markov-equivalent two-node graphs score the same") {
    auto s = std::make_shared<BgeScore>(small_continuous());
    LocalScoreCache c(s);
    double a = log_reward(dag_from_edges(2, {{0, 1}}), c), b = log_reward(dag_from_edges(2, {{1, 0}}), c);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
    LocalScoreCache cb(std::make_shared<BdeScore>(small_binary()));
    CHECK(log_reward(dag_from_edges(2, {{0, 1}}), cb) == doctest::Approx(log_reward(dag_from_edges(2, {{1, 0}}), cb)));
}

TEST_CASE("cache memoizes family scores") {
    LocalScoreCache c(std::make_shared<BgeScore>(small_continuous()));
    DagState g = dag_from_edges(2, {{0, 1}});
    double first = log_reward(g, c);
    auto n = c.size();
    CHECK(log_reward(g, c) == first);
    CHECK(c.size() == n);
}

TEST_CASE("delta score equals the log-reward difference with an edge prior") {
    LocalScoreCache c(std::make_shared<BgeScore>(small_continuous()));
    GraphPrior prior{0.7};
    DagState g = initial_dag_state(2);
    DagState h = apply_edge(g, {1, 0, false});
    CHECK(delta_score(g, {1, 0, false}, c, prior) ==
          doctest::Approx(log_reward(h, c, prior) - log_reward(g, c, prior)).epsilon(1e-12));
    CHECK_THROWS_AS(delta_score(h, {0, 1, false}, c, prior), InvalidAction);
}

TEST_CASE("standardize centers and scales each column") {
    auto ds = standardize(small_continuous());
    for (int j = 0; j < 2; ++j) {
        double m = 0, v = 0;
        for (int i = 0; i < ds.n; ++i) m += ds.at(i, j) / ds.n;
        for (int i = 0; i < ds.n; ++i) v += (ds.at(i, j) - m) * (ds.at(i, j) - m);
        CHECK(std::abs(m) < 1e-12);
        CHECK(v / ds.n == doctest::Approx(1.0).epsilon(1e-12));  // population variance
    }
}

TEST_CASE("dataset checks reject bad shapes and categories") {
    auto ds = small_binary();
    ds.values[3] = 2;
    CHECK_THROWS(ds.check());
    auto c = small_continuous();
    c.values.pop_back();
    CHECK_THROWS(c.check());
}

TEST_CASE("uniform score gives every graph the same reward") {
    LocalScoreCache c(std::make_shared<UniformScore>(3));
    CHECK(log_reward(dag_from_edges(3, {{0, 1}, {1, 2}}), c) == 0.0);
    GraphPrior p{1.5};
    CHECK(log_reward(dag_from_edges(3, {{0, 1}, {1, 2}}), c, p) == doctest::Approx(-3.0));
}

}
