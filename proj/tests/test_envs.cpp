#include <cmath>

#include "doctest.h"
#include "gfn/envs.hpp"

using namespace gfn;

TEST_SUITE("envs") {

TEST_CASE("text format parses states, edges and rewards") {
    ExplicitEnv env = explicit_env(fixture_markov_text());
    CHECK(env.initial() == StateId::of("s0"));
    CHECK(env.children(StateId::of("s0")).size() == 2);
    CHECK(env.terminating(StateId::of("s2")));
    CHECK_FALSE(env.terminating(StateId::of("s1")));
    CHECK(env.log_reward(StateId::of("s3")) == doctest::Approx(std::log(3.0)));
    CHECK(env.energy(StateId::of("s2")) == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("malformed specs are rejected") {
    CHECK_THROWS(explicit_env("[states]\na b\n[edges]\na c\n"));
    CHECK_THROWS(explicit_env("[states]\na b\n[edges]\na b\n[rewards]\nb -1\n"));
    CHECK_THROWS(explicit_env("[states]\na b\n[edges]\na b\nb a\n[rewards]\nb 1\n"));
    CHECK_THROWS(fixture_text("nope"));
}

TEST_CASE("tempering divides log rewards by alpha") {
    ExplicitEnv env = explicit_env(fixture_markov_text()).tempered(2.0);
    CHECK(env.log_reward(StateId::of("s3")) == doctest::Approx(0.5 * std::log(3.0)));
    CHECK(env.rewards().at(StateId::of("s2")) == doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS(env.tempered(0.0));
}

TEST_CASE("factor graph energy decomposes over the construction order") {
    FactorSpec spec{3, 2, {{{0, 1}, {0.0, 1.0, 2.0, 3.0}}, {{2}, {0.5, -0.5}}}};
    auto env = factor_graph_env(spec, {2, 0, 1});
    auto en = enumerate_env(env);
    int full = 0;
    for (auto& s : en.states) {
        if (!env.terminating(s)) continue;
        ++full;
        auto x = env.assignment(s);
        double e = spec.factors[0].table[x[0] * 2 + x[1]] + spec.factors[1].table[x[2]];
        CHECK(env.energy(s) == doctest::Approx(e));
    }
    CHECK(full == 8);
    // step energies telescope to the full energy
    Rng rng(2, 0);
    StateId s = env.initial();
    double acc = 0;
    while (!env.terminating(s)) {
        auto ch = env.children(s);
        StateId n = ch[rng.below(ch.size())];
        acc += env.energy_increment(s, n);
        s = n;
    }
    CHECK(acc == doctest::Approx(env.energy(s)));
}

}
