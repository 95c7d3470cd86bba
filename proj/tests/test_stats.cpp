#include <cmath>

#include "doctest.h"
#include "gfn/stats.hpp"

using namespace gfn;

TEST_SUITE("stats") {

TEST_CASE("chi-square with two degrees of freedom") {
    auto r = chi_square_test({10, 20, 30}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(r.statistic == doctest::Approx(10.0));
    CHECK(r.p_value == doctest::Approx(std::exp(-5.0)).epsilon(1e-10));
}

// reference values from mpmath at 30 digits
TEST_CASE("paired t-test") {
    auto r = paired_t_test({2, 4, 6, 8}, {1, 2, 3, 4});
    CHECK(r.statistic == doctest::Approx(3.8729833462074168852).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(0.030466291662170991253).epsilon(1e-10));
    CHECK(paired_t_test({1, 2}, {1, 2}).p_value == 1.0);
    CHECK_THROWS(paired_t_test({1}, {2}));
}

TEST_CASE("Pearson correlation") {
    CHECK(pearson_r({1, 2, 3, 4, 5}, {2, 1, 4, 3, 6}) == doctest::Approx(0.82199493652678644446).epsilon(1e-12));
}

}
