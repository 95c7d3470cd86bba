#include "doctest.h"
#include "gfn/dag_env.hpp"
#include "gfn/exact_eval.hpp"

using namespace gfn;

TEST_SUITE("dag_env") {

TEST_CASE("DAG counts for d = 1..4") {
    // brute-force counts over all directed graphs, see tests/oracles/scores_oracle.py
    int want[] = {1, 3, 25, 543};
    for (int d = 1; d <= 4; ++d) CHECK(dag_space(d).dags.size() == std::size_t(want[d - 1]));
}

TEST_CASE("mask excludes self loops, present edges and cycle-closing edges") {
    DagState g = dag_from_edges(3, {{0, 1}, {1, 2}});
    BitMatrix m = action_mask(g);
    CHECK(mask_at(m, 0, 2));
    CHECK_FALSE(mask_at(m, 0, 1));
    CHECK_FALSE(mask_at(m, 2, 0));
    CHECK_FALSE(mask_at(m, 1, 0));
    CHECK_FALSE(mask_at(m, 1, 1));
    CHECK(mask_count(m) == 1);
    CHECK_THROWS_AS(apply_edge(g, {2, 0, false}), InvalidAction);
    CHECK_THROWS_AS(apply_edge(g, EdgeAction::stop_action()), InvalidAction);
}

TEST_CASE("incremental closure matches recomputation") {
    DagState g = initial_dag_state(5);
    g = apply_edge(g, {3, 1, false});
    g = apply_edge(g, {1, 4, false});
    g = apply_edge(g, {0, 3, false});
    CHECK(g.closT == closure_transpose(5, g.adj));
    CHECK(g.reaches(0, 4));
    CHECK_FALSE(g.reaches(4, 0));
}

TEST_CASE("max parents and user filters restrict the mask") {
    MaskOptions opt;
    opt.max_parents = 1;
    DagState g = dag_from_edges(3, {{0, 2}});
    BitMatrix m = action_mask(g, opt);
    CHECK_FALSE(mask_at(m, 1, 2));
    CHECK(mask_at(m, 1, 0));
    opt.filter = [](const DagState&, int u, int) { return u != 1; };
    CHECK_FALSE(mask_at(action_mask(g, opt), 1, 0));
}

TEST_CASE("canonical keys round-trip") {
    DagState g = dag_from_edges(6, {{0, 5}, {2, 3}, {4, 1}});
    auto k = canonical_key(g);
    CHECK(k.size() == 5);
    CHECK(dag_from_key(k, 6) == g);
    CHECK(key_from_hex(key_hex(k)) == k);
    CHECK(edge_list(g) == "0->5 2->3 4->1");
}

TEST_CASE("parent states undo one edge each") {
    DagState g = dag_from_edges(4, {{0, 1}, {1, 2}, {0, 3}});
    auto ps = parent_states(g);
    CHECK(ps.size() == 3);
    for (auto& [p, a] : ps) {
        CHECK(p.num_edges() == 2);
        CHECK(apply_edge(p, a) == g);
    }
}

TEST_CASE("DagEnv exposes the construction graph") {
    DagEnv env(3, [](const DagState& g) { return double(g.num_edges()); });
    CHECK(env.children(env.initial()).size() == 6);
    CHECK(env.parents(env.initial()).empty());
    CHECK(env.terminating(env.initial()));
    StateId full = StateId::of(canonical_key(dag_from_edges(3, {{0, 1}, {1, 2}, {0, 2}})));
    CHECK(env.children(full).empty());
    CHECK(env.parents(full).size() == 3);
    CHECK(env.log_reward(full) == 3.0);
}

}
