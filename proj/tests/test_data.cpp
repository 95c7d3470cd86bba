#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gfn/data.hpp"

using namespace gfn;

namespace {
std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }
}  // namespace

TEST_SUITE("data") {

TEST_CASE("ER graphs have the requested expected edge count") {
    Rng rng(1, 0);
    double total = 0;
    const int reps = 4000;
    for (int i = 0; i < reps; ++i) total += sample_er_dag(6, 1.0, rng).num_edges();
    CHECK(total / reps == doctest::Approx(6.0).epsilon(0.03));
    CHECK(sample_er_dag(3, 5.0, rng).num_edges() == 3);
    CHECK_THROWS(sample_er_dag(0, 1.0, rng));
}

TEST_CASE("topological order respects every edge") {
    DagState g = dag_from_edges(5, {{4, 0}, {0, 2}, {3, 2}, {2, 1}});
    auto order = topological_order(g);
    std::vector<int> pos(5);
    for (int i = 0; i < 5; ++i) pos[order[i]] = i;
    for (int u = 0; u < 5; ++u)
        for (int v = 0; v < 5; ++v)
            if (g.has_edge(u, v)) CHECK(pos[u] < pos[v]);
}

TEST_CASE("linear-Gaussian samples match the implied covariance") {
    Rng rng(2, 0);
    DagState g = dag_from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    auto bn = sample_lingauss_bn(g, rng, 0.5);
    auto S = lingauss_covariance(bn);
    auto ds = ancestral_sample(bn, 200000, rng);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            double c = 0;
            for (int i = 0; i < ds.n; ++i) c += ds.at(i, a) * ds.at(i, b) / ds.n;
            CHECK(c == doctest::Approx(S(a, b)).epsilon(0.03).scale(1.0));
        }
}

TEST_CASE("discrete CPT rows are distributions and samples stay in range") {
    Rng rng(3, 0);
    DagState g = dag_from_edges(3, {{0, 2}, {1, 2}});
    auto bn = sample_discrete_bn(g, 3, rng);
    CHECK(bn.cpt[2].size() == 27);
    for (auto& t : bn.cpt)
        for (std::size_t r = 0; r < t.size() / 3; ++r) CHECK(t[3 * r] + t[3 * r + 1] + t[3 * r + 2] == doctest::Approx(1.0));
    auto ds = ancestral_sample(bn, 500, rng);
    CHECK_NOTHROW(ds.check());
    CHECK(parent_row(bn, 2, {2, 1, 0}) == 7);
}

TEST_CASE("CSV round-trip keeps values and the intervention mask") {
    Rng rng(4, 0);
    auto bn = sample_lingauss_bn(sample_er_dag(4, 1.0, rng), rng);
    auto ds = ancestral_sample(bn, 20, rng);
    ds.intervened.assign(std::size_t(ds.n) * ds.d, 0);
    ds.intervened[5] = 1;
    auto path = tmp("gfn_data_test.csv");
    write_csv(path, ds);
    auto back = read_csv(path, Dataset::Kind::continuous);
    CHECK(back.n == ds.n);
    CHECK(back.d == ds.d);
    CHECK(back.values == ds.values);
    CHECK(back.clamped(1, 1));
    CHECK_FALSE(back.clamped(1, 2));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".mask");
}

TEST_CASE("malformed CSV cells are reported with their position") {
    auto path = tmp("gfn_bad.csv");
    {
        std::ofstream f(path);
        f << "a,b\n1,2\n3,x\n";
    }
    try {
        read_csv(path, Dataset::Kind::continuous);
        FAIL("expected a parse error");
    } catch (const CsvError& e) {
        CHECK(e.row == 3);
        CHECK(e.col == 2);
    }
    {
        std::ofstream f(path);
        f << "a,b\n1\n";
    }
    CHECK_THROWS_AS(read_csv(path, Dataset::Kind::continuous), CsvError);
    std::filesystem::remove(path);
}

TEST_CASE("categorical files infer the arity") {
    auto path = tmp("gfn_cat.csv");
    {
        std::ofstream f(path);
        f << "a,b\n0,2\n1,0\n";
    }
    auto ds = read_csv(path, Dataset::Kind::categorical);
    CHECK(ds.K == 3);
    std::filesystem::remove(path);
}

TEST_CASE("metadata round-trip") {
    auto path = tmp("gfn_meta.txt");
    write_metadata(path, {{"seed", "7"}, {"graph", "0->1"}});
    auto kv = read_metadata(path);
    CHECK(kv.at("seed") == "7");
    CHECK(kv.at("graph") == "0->1");
    std::filesystem::remove(path);
}

}
