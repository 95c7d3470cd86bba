#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>

#include "doctest.h"
#include "gfn/baselines.hpp"
#include "gfn/data.hpp"

using namespace gfn;

namespace {

// states "0".."3" on a line; right moves proposed with probability 0.8, reflecting ends
Proposal lopsided() {
    auto density = [](const std::string& a, const std::string& b) {
        int i = std::stoi(a), j = std::stoi(b);
        if (i == 0) return j == 1 ? 0.0 : kNegInf;
        if (i == 3) return j == 2 ? 0.0 : kNegInf;
        if (j == i + 1) return std::log(0.8);
        if (j == i - 1) return std::log(0.2);
        return kNegInf;
    };
    auto sample = [](const std::string& a, Rng& rng) {
        int i = std::stoi(a);
        if (i == 0) return std::string("1");
        if (i == 3) return std::string("2");
        return std::to_string(rng.uniform() < 0.8 ? i + 1 : i - 1);
    };
    return {sample, density};
}

std::map<std::string, double> frequencies(const ChainTrace& t) {
    std::map<std::string, double> f;
    for (auto& s : t.states) f[s] += 1.0 / t.states.size();
    return f;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("Metropolis-Hastings targets the distribution only with the Hastings ratio") {
    auto target = [](const std::string&) { return 0.0; };
    ChainOptions opt;
    opt.steps = 200000;
    opt.thin = 5;
    Rng rng(1, 0);
    auto fair = frequencies(metropolis_hastings(target, lopsided(), "0", opt, rng));
    for (auto& [s, p] : fair) CHECK(p == doctest::Approx(0.25).epsilon(0.06));
    opt.hastings = false;
    auto biased = frequencies(metropolis_hastings(target, lopsided(), "0", opt, rng));
    CHECK(biased["2"] > 0.35);
}

TEST_CASE("chain bookkeeping") {
    auto target = [](const std::string& s) { return -double(std::stoi(s)); };
    ChainOptions opt;
    opt.steps = 1000;
    opt.burn_frac = 0.2;
    opt.thin = 10;
    Rng rng(2, 0);
    auto t = metropolis_hastings(target, lopsided(), "0", opt, rng);
    CHECK(t.steps == 1000);
    CHECK(t.burn_in == 200);
    CHECK(t.states.size() == 80);
    CHECK(t.acceptance_rate() >= 0.0);
    CHECK(t.acceptance_rate() <= 1.0);
    opt.thin = 0;
    CHECK_THROWS(metropolis_hastings(target, lopsided(), "0", opt, rng));
}

TEST_CASE("MC3 move sets") {
    Mc3Options opt;
    DagState empty = initial_dag_state(3);
    CHECK(legal_moves(empty, opt).size() == 6);
    DagState chain = dag_from_edges(3, {{0, 1}, {1, 2}});
    // 1 add, 2 removals, 2 reversals (reversing either edge stays acyclic)
    CHECK(legal_moves(chain, opt).size() == 5);
    DagState tri = dag_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    // reversing 0->2 would close a cycle
    CHECK(legal_moves(tri, opt).size() == 5);
    opt.reversals = false;
    CHECK(legal_moves(tri, opt).size() == 3);
    CHECK_THROWS_AS(apply_move(tri, {MoveKind::reverse, 0, 2}), InvalidAction);
}

TEST_CASE("move deltas match full score differences") {
    Rng rng(4, 0);
    auto bn = sample_lingauss_bn(sample_er_dag(4, 1.0, rng), rng);
    LocalScoreCache cache(std::make_shared<BgeScore>(standardize(ancestral_sample(bn, 60, rng))));
    GraphPrior prior{0.5};
    Mc3Options opt;
    DagState g = dag_from_edges(4, {{0, 1}, {1, 2}, {3, 2}});
    for (auto& m : legal_moves(g, opt)) {
        DagState h = apply_move(g, m);
        CHECK(move_delta(g, m, cache, prior) ==
              doctest::Approx(log_reward(h, cache, prior) - log_reward(g, cache, prior)).epsilon(1e-12));
    }
}

TEST_CASE("MC3 kernel rows are stochastic and the trace file is written") {
    auto sp = dag_space(3);
    LocalScoreCache cache(std::make_shared<UniformScore>(3));
    auto K = mc3_kernel(sp, cache, {}, Mc3Options{});
    for (auto& row : K) {
        double s = 0;
        for (double x : row) {
            CHECK(x >= 0);
            s += x;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Mc3Options opt;
    opt.chain.steps = 500;
    Rng rng(5, 0);
    auto t = structure_mc3(cache, {}, 3, opt, rng);
    auto path = (std::filesystem::temp_directory_path() / "gfn_trace_test.csv").string();
    t.write_csv(path);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "step,key,log_score,accepted");
    std::filesystem::remove(path);
}

}
