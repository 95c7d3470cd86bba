#include <cmath>

#include "doctest.h"
#include "gfn/envs.hpp"
#include "gfn/objectives.hpp"

using namespace gfn;

TEST_SUITE("objectives") {

TEST_CASE("residuals vanish on an exact flow") {
    // F(s)=4 -> s' with P_F=1/2, F(s')=2 with P_B=1
    CHECK(db_residual(std::log(4.0), std::log(0.5), std::log(2.0), 0.0) == doctest::Approx(0.0));
    CHECK(db_terminal_residual(std::log(2.0), std::log(0.25), std::log(0.5)) == doctest::Approx(0.0));
    CHECK(fm_residual<double>({std::log(1.0), std::log(2.0)}, {std::log(2.5)}, std::log(0.5)) == doctest::Approx(0.0));
    CHECK(tb_residual<double>(std::log(6.0), {std::log(0.5), std::log(0.5), 0.0}, {std::log(0.5)}, std::log(3.0)) ==
          doctest::Approx(0.0));
}

TEST_CASE("one-step sub-trajectory residual is the negated detailed-balance residual") {
    double a = 0.3, pf = -0.7, b = 1.1, pb = -0.2;
    CHECK(subtb_residual<double>(a, {pf}, {pb}, b) == doctest::Approx(-db_residual(a, pf, b, pb)));
}

TEST_CASE("energy form of modified detailed balance negates the reward form") {
    Rng rng(5, 0);
    for (int i = 0; i < 50; ++i) {
        double pf = -rng.uniform() * 3, st = -rng.uniform(), stn = -rng.uniform(), pb = -rng.uniform() * 2;
        double Es = rng.uniform() * 4 - 2, En = rng.uniform() * 4 - 2, alpha = 0.5 + rng.uniform();
        double delta = -(En - Es) / alpha;  // log R(s') - log R(s)
        double reward_form = modified_db_residual(delta, pb, st, pf, stn);
        CHECK(modified_db_energy_residual(pf, st, stn, pb, Es, En, alpha) == doctest::Approx(-reward_form).epsilon(1e-12));
    }
}

TEST_CASE("soft value of an empty child list is the sink value") {
    CHECK(soft_value<double>({}, 1.0) == 0.0);
    CHECK(soft_value<double>({0.0, 0.0}, 2.0) == doctest::Approx(2.0 * std::log(2.0)));
}

TEST_CASE("corrected rewards on the multipath fixture") {
    ExplicitEnv env = explicit_env(fixture_multipath_text());
    auto E = [&env](const StateId& s) { return env.energy(s); };
    auto sparse = corrected_reward(env, uniform_backward_policy(env), E, 1.0, RewardScheme::sparse);
    CHECK(sparse.at(StateId::of("s1"), StateId::of("x4")) == doctest::Approx(std::log(0.5)));
    CHECK(sparse.at(StateId::of("s1"), StateId::of("x3")) == doctest::Approx(0.0));
    CHECK(sparse.at(StateId::of("x4"), StateId::bottom()) == doctest::Approx(0.0));
    auto plain = terminal_reward(env, E);
    CHECK(plain.at(StateId::of("s1"), StateId::of("x4")) == 0.0);
    CHECK_THROWS(corrected_reward(env, uniform_backward_policy(env), E, 1.0, RewardScheme::dense));
}

TEST_CASE("loss aggregation skips non-finite residuals") {
    auto r = loss_aggregate({1.0, -3.0, std::nan("")}, {LossKind::huber, 1.0});
    CHECK(r.skipped == 1);
    CHECK(r.loss == doctest::Approx((0.5 + 2.5) / 3));
    CHECK(r.weights[0] == doctest::Approx(1.0 / 3));
    CHECK(r.weights[1] == doctest::Approx(-1.0 / 3));
    CHECK(r.weights[2] == 0.0);
    auto s = loss_aggregate({2.0, -1.0});
    CHECK(s.loss == doctest::Approx(1.25));
    CHECK_THROWS(loss_aggregate({}));
}

TEST_CASE("reverse-KL estimator and its baselines") {
    std::vector<TrajectoryTerm> batch{{-1.0, 0.0, -2.0, {1.0, 0.0}}, {-2.0, 0.0, -1.0, {0.0, 1.0}}};
    BaselineState st;
    auto loc = reverse_kl_gradient(batch, BaselineKind::local, st);
    // c = (1, -1), local baseline 0
    CHECK(loc.b_local == doctest::Approx(0.0));
    CHECK(loc.grad[0] == doctest::Approx(0.5));
    CHECK(loc.grad[1] == doctest::Approx(-0.5));
    st.value = 2.0;
    st.eta = 0.5;
    auto glob = reverse_kl_gradient(batch, BaselineKind::global, st);
    CHECK(glob.b_used == doctest::Approx(2.0));
    CHECK(st.value == doctest::Approx(1.0));
    CHECK(glob.grad[0] == doctest::Approx(-0.5));
    CHECK_THROWS(reverse_kl_gradient(batch, BaselineKind::local, st, false));
}

TEST_CASE("dual numbers carry exact gradients through lse") {
    Dual a = Dual::var(0.2, 0), b = Dual::var(-0.4, 1);
    Dual l = lse(std::vector<Dual>{a, b});
    double z = std::exp(0.2) + std::exp(-0.4);
    auto g = l.dense(2);
    CHECK(g[0] == doctest::Approx(std::exp(0.2) / z));
    CHECK(g[1] == doctest::Approx(std::exp(-0.4) / z));
}

}
