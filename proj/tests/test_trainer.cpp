#include <cmath>
#include <memory>
#include <set>

#include "doctest.h"
#include "gfn/envs.hpp"
#include "gfn/exact_eval.hpp"
#include "gfn/trainer.hpp"

using namespace gfn;

TEST_SUITE("trainer") {

TEST_CASE("epsilon decays linearly then holds") {
    TrainConfig cfg;
    cfg.steps = 100;
    CHECK(epsilon_at(cfg, 0) == doctest::Approx(1.0));
    CHECK(epsilon_at(cfg, 25) == doctest::Approx(0.55));
    CHECK(epsilon_at(cfg, 50) == doctest::Approx(0.1));
    CHECK(epsilon_at(cfg, 99) == doctest::Approx(0.1));
    cfg.on_policy = true;
    CHECK(epsilon_at(cfg, 0) == 0.0);
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.batch = 0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.eps_min = 1.5;
    CHECK_THROWS(cfg.validate());
    CHECK(TrainConfig{}.describe().size() > 10);
}

TEST_CASE("replay buffer overwrites oldest entries and samples distinct ones") {
    ReplayBuffer buf(4);
    for (int i = 0; i < 6; ++i) buf.push({std::to_string(i), {0, 1, false}, double(i)});
    CHECK(buf.size() == 4);
    Rng rng(1, 0);
    auto s = buf.sample(4, rng);
    std::set<double> seen;
    for (auto* t : s) seen.insert(t->delta);
    CHECK(seen == std::set<double>{2, 3, 4, 5});
    CHECK(buf.sample(10, rng).size() == 4);
}

TEST_CASE("TB learns the markov fixture") {
    ExplicitEnv env = explicit_env(fixture_markov_text());
    TabularPolicy pol(env);
    FlatModel model(pol);
    TrainConfig cfg;
    cfg.steps = 3000;
    cfg.seed = 2;
    auto r = train_tb(env, model, uniform_backward_policy(env), cfg);
    auto dist = terminating_distribution_dp(env, pol.forward());
    CHECK(dist.at(StateId::of("s2")) == doctest::Approx(0.4).epsilon(0.02));
    CHECK(r.logZ == doctest::Approx(std::log(5.0)).epsilon(0.01));
}

TEST_CASE("reverse KL requires on-policy sampling") {
    ExplicitEnv env = explicit_env(fixture_markov_text());
    TabularPolicy pol(env);
    FlatModel model(pol);
    TrainConfig cfg;
    cfg.objective = Objective::reverse_kl;
    CHECK_THROWS(train_tb(env, model, uniform_backward_policy(env), cfg));
}

TEST_CASE("modified DB runs with a target network") {
    auto cache = std::make_shared<LocalScoreCache>(std::make_shared<UniformScore>(3));
    DagEnv env(3, [cache](const DagState& g) { return log_reward(g, *cache); });
    DagTabularPolicy pol(3);
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch = 32;
    cfg.log_every = 500;
    auto r = train_modified_db(env, *cache, {}, pol, cfg);
    CHECK(r.target_syncs >= 20);
    CHECK(r.stop_trace.size() == 4);
    auto sp = dag_space(3);
    double worst = 0;
    for (double l : space_log_terminating(sp, tabulate_policy(sp, pol))) worst = std::max(worst, std::abs(std::exp(l) - 1.0 / 25));
    CHECK(worst < 0.02);
}

TEST_CASE("SQL applies the soft Bellman semi-gradient update") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto E = [&env](const StateId& s) { return env.energy(s); };
    auto rw = corrected_reward(env, uniform_backward_policy(env), E, 1.0, RewardScheme::sparse);
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.batch = 4;
    cfg.sql_rate = 0.3;
    cfg.alpha = 0.8;
    auto out = train_sql(env, rw, cfg, 200);
    REQUIRE(out.log.size() == 200);
    for (auto& u : out.log) {
        double v = 0;
        if (!u.q_next.empty()) {
            double m = *std::max_element(u.q_next.begin(), u.q_next.end()), s = 0;
            for (double q : u.q_next) s += std::exp((q - m) / cfg.alpha);
            v = m + cfg.alpha * std::log(s);
        }
        CHECK(u.q_after == doctest::Approx(u.q_before + 0.3 * (u.reward + v - u.q_before)).epsilon(1e-12));
    }
}

TEST_CASE("soft value iteration satisfies the soft Bellman equations") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto E = [&env](const StateId& s) { return env.energy(s); };
    auto rw = corrected_reward(env, uniform_backward_policy(env), E, 1.0, RewardScheme::sparse);
    auto T = soft_value_iteration(env, rw, 1.0);
    for (std::size_t s = 0; s < T.en->size(); ++s) {
        auto acts = T.actions(int(s));
        for (std::size_t a = 0; a < acts.size(); ++a) {
            double v = acts[a].terminal ? 0.0 : T.value(T.en->find(acts[a]));
            CHECK(T.q[s][a] == doctest::Approx(rw.at(T.en->states[s], acts[a]) + v).epsilon(1e-12));
        }
    }
    // V(s0) = log Z
    CHECK(T.value(0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("tabular SQL approaches the corrected MaxEnt solution") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto E = [&env](const StateId& s) { return env.energy(s); };
    auto rw = corrected_reward(env, uniform_backward_policy(env), E, 1.0, RewardScheme::sparse);
    TrainConfig cfg;
    cfg.steps = 4000;
    cfg.batch = 4;
    cfg.sql_rate = 0.05;
    auto out = train_sql(env, rw, cfg);
    auto dist = terminating_distribution_dp(env, out.table.policy());
    for (auto& [s, p] : dist) CHECK(p == doctest::Approx(1.0 / 3).epsilon(0.1));
}

}
