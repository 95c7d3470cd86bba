#include <cmath>
#include <map>

#include "doctest.h"
#include "gfn/envs.hpp"
#include "gfn/flow_core.hpp"

using namespace gfn;

TEST_SUITE("flow_core") {

TEST_CASE("constructed flow conserves mass and matches rewards") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    std::map<StateId, double> R{{StateId::of("x3"), 1.0}, {StateId::of("x4"), 2.0}, {StateId::of("x5"), 3.0}};
    auto flow = construct_flow_from_reward(env, R);
    for (auto& [s, r] : flow_residual_report(flow, env, R)) CHECK(std::abs(r) < 1e-12);
    CHECK(flow.outflow(env.initial()) == doctest::Approx(6.0).epsilon(1e-12));
    auto dist = terminating_distribution_dp(env, policy_from_flow(flow));
    CHECK(dist.at(StateId::of("x3")) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(dist.at(StateId::of("x4")) == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(dist.at(StateId::of("x5")) == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("galton board terminating distribution is binomial") {
    auto g = galton_env(6, 0.3);
    auto dist = terminating_distribution_dp(g.env, g.policy);
    for (int k = 0; k <= 6; ++k) {
        double b = std::exp(std::lgamma(7.0) - std::lgamma(k + 1.0) - std::lgamma(7.0 - k) + (6 - k) * std::log(0.3) +
                            k * std::log(0.7));
        CHECK(dist.at(StateId::of(galton_key(6, k))) == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("sampled trajectories follow the forward policy") {
    auto g = galton_env(3, 0.5);
    Rng rng(1, 0);
    std::map<std::string, int> counts;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        auto t = sample_trajectory(g.env, g.policy, rng);
        CHECK(t.states.back().terminal);
        counts[t.last_state().key]++;
    }
    CHECK(counts[galton_key(3, 0)] / double(n) == doctest::Approx(0.125).epsilon(0.05));
    CHECK(counts[galton_key(3, 1)] / double(n) == doctest::Approx(0.375).epsilon(0.05));
}

TEST_CASE("trajectory log-probabilities") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto pb = uniform_backward_policy(env);
    Trajectory t{{StateId::of("s0"), StateId::of("s1"), StateId::of("x4"), StateId::bottom()}};
    auto lb = trajectory_logprob(t, pb, Direction::backward);
    CHECK(lb.value == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK_FALSE(lb.zero_step);
    for (auto& s : enumerate_env(env).states) {
        double tot = 0;
        for (auto& o : pb(s)) tot += std::exp(o.logp);
        if (s != env.initial()) CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("enumeration counts trajectories and states") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    CHECK(enumerate_env(env).size() == 6);
    CHECK(enumerate_trajectories(env).size() == 4);
    CHECK_THROWS_AS(enumerate_env(env, 3), BudgetExceeded);
}

TEST_CASE("validation reports cycles and dead ends") {
    ExplicitEnv env({"a", "b", "c"}, {{"a", "b"}, {"b", "c"}}, {{"c", 1.0}});
    CHECK(validate_env(env).ok());
    env.add_edge("c", "b");
    CHECK_FALSE(validate_env(env).cycles.empty());
    ExplicitEnv dead({"a", "b", "c"}, {{"a", "b"}, {"a", "c"}}, {{"c", 1.0}});
    auto rep = validate_env(dead);
    REQUIRE(rep.dead_ends.size() == 1);
    CHECK(rep.dead_ends[0] == "b");
}

TEST_CASE("Markov check separates product flows from history-dependent ones") {
    ExplicitEnv env = explicit_env(fixture_markov_text());
    auto trajs = enumerate_trajectories(env);
    auto flow = construct_flow_from_reward(env, env.rewards());
    auto pf = policy_from_flow(flow);
    std::map<Trajectory, double> markov, skewed;
    for (auto& t : trajs) markov[t] = 5.0 * std::exp(trajectory_logprob(t, pf, Direction::forward).value);
    CHECK(is_markovian_table(markov, env).markovian);
    skewed = markov;
    for (auto& [t, f] : skewed)
        if (t.states.size() == 4 && t.states[1] == StateId::of("s1")) f *= 1.5;  // s0 s1 s2 stop only
    CHECK_FALSE(is_markovian_table(skewed, env).markovian);
}

}
