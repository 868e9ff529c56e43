#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "weakcal/metrics.hpp"
#include "weakcal/rng.hpp"

using namespace weakcal;

namespace {

ResidualTable random_table(int m, int K, Rng& rng) {
    ResidualTable t(m, K, "test");
    for (double& v : t.moments) v = (rng.uniform() - 0.5) * 0.2;
    for (double& v : t.active_mass) v = rng.uniform();
    return t;
}

}  // namespace

TEST_CASE("ece anchors") {
    ResidualTable t(0, 3);
    t.moment(0, 1) = 0.01;
    t.moment(0, 2) = -0.02;
    CHECK(ece(t) == doctest::Approx(0.03).epsilon(1e-15));

    ResidualTable zero(2, 5);
    CHECK(ece(zero) == 0.0);
}

TEST_CASE("max_ece anchor and exclusion") {
    ResidualTable t(2, 2);
    t.moment(1, 1) = 0.02;
    t.moment(2, 1) = 0.04;
    t.moment(2, 2) = -0.02;
    const std::vector<double> masses = {0.5, 0.5};
    const auto r = max_ece(t, masses);
    CHECK(r.value == doctest::Approx(0.12).epsilon(1e-12));
    CHECK(r.group == 2);

    CHECK_THROWS(max_ece(t, masses, 0.6));  // both groups excluded
}

TEST_CASE("max_ece ignores the population row") {
    ResidualTable t(1, 2);
    t.moment(0, 1) = 0.9;
    t.moment(1, 1) = 0.01;
    const std::vector<double> masses = {1.0};
    CHECK(max_ece(t, masses).value == doctest::Approx(0.01));
}

TEST_CASE("mc anchors and tie-break") {
    ResidualTable t(1, 2);
    t.moment(0, 1) = 0.01;
    t.moment(0, 2) = -0.02;
    t.moment(1, 1) = 0.005;
    t.moment(1, 2) = 0.03;
    const auto r = mc(t);
    CHECK(r.value == doctest::Approx(0.03));
    CHECK(r.group == 1);
    CHECK(r.bin == 2);

    ResidualTable zero(2, 4);
    const auto z = mc(zero);
    CHECK(z.value == 0.0);
    CHECK(z.group == 0);
    CHECK(z.bin == 1);
}

TEST_CASE("mc bounds relative to the table") {
    Rng rng(41);
    const auto t = random_table(3, 10, rng);
    const auto r = mc(t);
    double total = 0.0;
    for (double v : t.moments) total += std::abs(v);
    CHECK(r.value <= total);
    for (int b = 1; b <= t.K; ++b) CHECK(r.value >= std::abs(t.moment(0, b)));
}

TEST_CASE("max_ece arg-group invariant under uniform mass scaling") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        const auto t = random_table(5, 8, rng);
        std::vector<double> masses(5);
        for (double& v : masses) v = 0.05 + rng.uniform();
        const double mu_min = 0.04;
        const auto base = max_ece(t, masses, mu_min);
        for (double c : {0.5, 2.0, 13.0}) {
            std::vector<double> scaled = masses;
            for (double& v : scaled) v *= c;
            CHECK(max_ece(t, scaled, mu_min * c).group == base.group);
        }
    }
}

TEST_CASE("coarsening never increases ece") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = random_table(0, 10, rng);
        ResidualTable coarse(0, 5);
        for (int b = 1; b <= 5; ++b)
            coarse.moment(0, b) = t.moment(0, 2 * b - 1) + t.moment(0, 2 * b);
        CHECK(ece(coarse) <= ece(t) + 1e-15);
    }
}

TEST_CASE("metrics match brute force on random tables") {
    Rng rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 2 + static_cast<int>(rng.index(5));
        const int K = 2 + static_cast<int>(rng.index(9));
        const auto t = random_table(m, K, rng);
        std::vector<double> masses(static_cast<std::size_t>(m));
        for (double& v : masses) v = 0.01 + rng.uniform();

        double bf_ece = 0.0;
        for (int b = 1; b <= K; ++b) bf_ece += std::abs(t.moment(0, b));
        CHECK(ece(t) == doctest::Approx(bf_ece).epsilon(1e-13));

        double bf_max = -1.0;
        int bf_g = 0;
        for (int g = 1; g <= m; ++g) {
            double row = 0.0;
            for (int b = 1; b <= K; ++b) row += std::abs(t.moment(g, b));
            row /= masses[static_cast<std::size_t>(g) - 1];
            if (row > bf_max) {
                bf_max = row;
                bf_g = g;
            }
        }
        const auto me = max_ece(t, masses);
        CHECK(me.value == doctest::Approx(bf_max).epsilon(1e-13));
        CHECK(me.group == bf_g);

        double bf_mc = -1.0;
        for (double v : t.moments) bf_mc = std::max(bf_mc, std::abs(v));
        CHECK(mc(t).value == doctest::Approx(bf_mc).epsilon(1e-13));
    }
}

TEST_CASE("metric_report wiring") {
    Rng rng(45);
    const auto t = random_table(3, 6, rng);
    const std::vector<double> masses = {0.4, 0.3, 0.3};
    const auto rep = metric_report(t, masses, 0.1);
    CHECK(rep.regime == "test");
    CHECK(rep.ece == ece(t));
    CHECK(rep.mc.value == mc(t).value);
    CHECK(rep.mu_min == 0.1);
}
